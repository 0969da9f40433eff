#include <gtest/gtest.h>

#include <cmath>

#include "snapspec/erra.hpp"
#include "snapspec/errors.hpp"
#include "snapspec/gradcheck.hpp"
#include "snapspec/unfolding.hpp"
#include "test_support.hpp"

using namespace snapspec;
using namespace snapspec::erra;
namespace t = snapspec::testing;

namespace {

ErraConfig toy(std::size_t bands, std::size_t channels, std::size_t reduction = 2, std::size_t queries = 3) {
  ErraConfig c;
  c.bands = bands;
  c.channels = channels;
  c.reduction = reduction;
  c.queries = queries;
  return c;
}

double row_entropy_max(const TensorD& a) {
  const std::size_t c = a.dim(0);
  double best = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    double h = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = a.at(i * c + j);
      if (p > 0) h -= p * std::log(p);
    }
    best = std::max(best, h);
  }
  return best;
}

// Layer-formula parameter count.
std::size_t conv_n(std::size_t i, std::size_t o, std::size_t k, bool b) { return i * o * k * k + (b ? o : 0); }
std::size_t lin_n(std::size_t i, std::size_t o, bool b) { return i * o + (b ? o : 0); }
std::size_t block_n(std::size_t c, bool with_lrpl, const ErraConfig& cfg) {
  const bool b = cfg.bias;
  const std::size_t sspl = 4 * conv_n(c, c, 1, b) + conv_n(c, c, 3, b) + 1;
  const std::size_t ffn = conv_n(c, 2 * c, 1, b) + conv_n(2 * c, c, 1, b);
  const std::size_t lrpl = with_lrpl ? lin_n(c, c / cfg.reduction, b) + lin_n(c / cfg.reduction, c, b) : 0;
  return 4 * c + sspl + ffn + lrpl;
}
std::size_t unet_n(const ErraConfig& cfg) {
  const std::size_t c = cfg.channels, h = c / 2, L = cfg.bands;
  const bool b = cfg.bias;
  const std::size_t aft = conv_n(c, h, 3, b) + conv_n(2 * c, h, 3, b) + c * 25 + (b ? c : 0) +  // depthwise 5x5
                          conv_n(c, h, 1, b) + conv_n(h, c, 3, b) + conv_n(h, 2 * c, 3, b) +
                          conv_n(2 * c, c, 1, b) + conv_n(c, c, 1, b) + conv_n(4 * c, 2 * c, 1, b) +
                          conv_n(2 * c, 2 * c, 1, b);
  return conv_n(L, c, 3, b) + block_n(c, true, cfg) + conv_n(c, 2 * c, 3, b) + block_n(2 * c, true, cfg) +
         conv_n(2 * c, 4 * c, 3, b) + block_n(4 * c, true, cfg) + aft + conv_n(4 * c, 2 * c, 3, b) +
         conv_n(4 * c, 2 * c, 1, b) + block_n(2 * c, false, cfg) + conv_n(2 * c, c, 3, b) +
         conv_n(2 * c, c, 1, b) + block_n(c, false, cfg) + conv_n(c, L, 3, b);
}

TensorD frozen(const TensorD& x) { return TensorD(x.shape(), std::vector<double>(x.data().begin(), x.data().end())); }

}  // namespace

TEST(Erra, ConfigValidation) {
  EXPECT_NO_THROW(validate(toy(8, 8)));
  EXPECT_THROW(validate(toy(8, 7, 7)), std::invalid_argument);
  EXPECT_THROW(validate(toy(8, 8, 3)), std::invalid_argument);
  EXPECT_THROW(validate(toy(8, 8, 2, 0)), std::invalid_argument);
}

TEST(Erra, SsplAttentionRowsAndTemperature) {
  ParameterSet<double> ps;
  Builder<double> b(ps, 1, Init::kAllRandom);
  auto s = Sspl<double>::create(b, "s", 6, true);
  const auto x = t::random_tensor({6, 5, 7}, 2);
  const auto a = s.attention(x);
  ASSERT_EQ(a.shape(), (Shape{6, 6}));
  for (std::size_t i = 0; i < 6; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_GE(a.at(i * 6 + j), 0.0);
      row += a.at(i * 6 + j);
    }
    EXPECT_NEAR(row, 1.0, 1e-6);
  }
  EXPECT_EQ(s.attention(t::random_tensor({6, 3, 2}, 3)).shape(), (Shape{6, 6}));
  EXPECT_GT(s.alpha().item(), 0.0);
  const double before = row_entropy_max(a);
  // doubling alpha: alpha_raw <- softplus^-1(2 softplus(alpha_raw))
  const double alpha2 = 2.0 * s.alpha().item();
  s.alpha_raw.mutable_data()[0] = alpha2 + std::log(-std::expm1(-alpha2));
  EXPECT_NEAR(s.alpha().item(), alpha2, 1e-9);
  EXPECT_GT(row_entropy_max(s.attention(x)), before);
  EXPECT_EQ(s(x).shape(), x.shape());
}

TEST(Erra, LrplAttentionProperties) {
  ParameterSet<double> ps;
  Builder<double> b(ps, 4, Init::kAllRandom);
  auto cfg = toy(4, 8, 2, 5);
  auto priors = LowRankPriors<double>::create(b, cfg);
  auto l = Lrpl<double>::create(b, "l", 8, 2, true);
  const auto x = t::random_tensor({8, 4, 4}, 5);
  const auto f = l.attention(x, priors.query[0]);
  ASSERT_EQ(f.shape(), (Shape{1, 5}));
  double sum = 0.0;
  for (double v : f.data()) {
    EXPECT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);

  std::vector<double> cst(8 * 16);
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t p = 0; p < 16; ++p) cst[c * 16 + p] = 0.1 * (c + 1);
  const auto out = l(TensorD({8, 4, 4}, cst), priors.query[0]);
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t p = 1; p < 16; ++p) EXPECT_DOUBLE_EQ(out.at(c * 16 + p), out.at(c * 16));
}

TEST(Erra, LrplSingleQueryIsExpandOfQuery) {
  ParameterSet<double> ps;
  Builder<double> b(ps, 6, Init::kAllRandom);
  auto cfg = toy(4, 8, 2, 1);
  auto priors = LowRankPriors<double>::create(b, cfg);
  auto l = Lrpl<double>::create(b, "l", 8, 2, true);
  const auto x = t::random_tensor({8, 3, 3}, 7);
  const auto f = l.attention(x, priors.query[0]);
  ASSERT_EQ(f.numel(), 1u);
  EXPECT_EQ(f.item(), 1.0);
  const auto scale = l.expand(priors.query[0]);  // [1, C]
  const auto out = l(x, priors.query[0]);
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t p = 0; p < 9; ++p) EXPECT_NEAR(out.at(c * 9 + p), x.at(c * 9 + p) * scale.at(c), 1e-12);
}

TEST(Erra, FeatureTransferShapesAndZeroInputs) {
  ParameterSet<double> ps;
  Builder<double> b(ps, 8, Init::kAllRandom);
  auto aft = FeatureTransfer<double>::create(b, "aft", 6, false);
  typename FeatureTransfer<double>::Intermediates tr;
  auto [o1, o2] = aft(t::random_tensor({6, 8, 12}, 1), t::random_tensor({12, 4, 6}, 2), &tr);
  EXPECT_EQ(o1.shape(), (Shape{6, 8, 12}));
  EXPECT_EQ(o2.shape(), (Shape{12, 4, 6}));
  EXPECT_EQ(tr.re1.shape(), (Shape{3, 4, 6}));
  EXPECT_EQ(tr.re2.shape(), (Shape{3, 4, 6}));
  auto [z1, z2] = aft(TensorD::zeros({6, 8, 12}), TensorD::zeros({12, 4, 6}), &tr);
  for (double v : tr.exc.data()) EXPECT_EQ(v, 0.0);
  for (double v : tr.coe.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(aft(t::random_tensor({6, 8, 12}, 1), t::random_tensor({12, 4, 5}, 2)), std::exception);
}

TEST(Erra, FeatureTransferGradientReachesBothInputs) {
  ParameterSet<double> ps;
  Builder<double> b(ps, 9, Init::kAllRandom);
  auto aft = FeatureTransfer<double>::create(b, "aft", 4, true);
  TensorD e1 = t::random_tensor({4, 4, 4}, 3), e2 = t::random_tensor({8, 2, 2}, 4);
  e1.set_requires_grad(true);
  e2.set_requires_grad(true);
  t::weighted_sum(aft(e1, e2).first, 5).backward();
  double n1 = 0.0, n2 = 0.0;
  for (double g : e1.grad()) n1 += g * g;
  for (double g : e2.grad()) n2 += g * g;
  EXPECT_GT(n1, 0.0);
  EXPECT_GT(n2, 0.0);
  const double err = grad_check([&] { return t::weighted_sum(aft(e1, e2).first, 5); }, {e1, e2}).max_rel_error;
  EXPECT_LT(err, 1e-4);
}

TEST(Erra, BlockIsIdentityAtInit) {
  ParameterSet<double> ps;
  Builder<double> b(ps, 10, Init::kStandard);
  auto cfg = toy(4, 8);
  auto priors = LowRankPriors<double>::create(b, cfg);
  auto block = PriorBlock<double>::create(b, "blk", 8, 0, true, cfg);
  const auto x = t::random_tensor({8, 4, 4}, 11);
  const auto y = block(x, priors);
  ASSERT_EQ(y.shape(), x.shape());
  // LRPL rescales by expand(.) which starts at zero; every other branch ends in a zero projection.
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.at(i), x.at(i), 1e-12);
}

TEST(Erra, BlockGradientCheck) {
  ParameterSet<double> ps;
  Builder<double> b(ps, 12, Init::kAllRandom);
  auto cfg = toy(4, 4, 2, 3);
  auto priors = LowRankPriors<double>::create(b, cfg);
  auto block = PriorBlock<double>::create(b, "blk", 4, 0, true, cfg);
  TensorD x = t::random_tensor({4, 8, 8}, 13);
  x.set_requires_grad(true);
  auto inputs = ps.tensors();
  inputs.push_back(x);
  const auto res = grad_check([&] { return t::weighted_sum(block(x, priors), 14); }, inputs);
  EXPECT_LT(res.max_rel_error, 1e-4) << "tensor " << res.worst_tensor << " index " << res.worst_index
                                      << " analytic " << res.worst_analytic << " numeric " << res.worst_numeric;
}

TEST(Erra, UnetShapeAndIdentityAtInit) {
  ParameterSet<float> ps;
  Builder<float> b(ps, 1, Init::kStandard);
  auto cfg = toy(8, 8, 4, 8);
  auto priors = LowRankPriors<float>::create(b, cfg);
  auto net = ProximalUNet<float>::create(b, "", cfg);
  Rng rng(2);
  std::vector<float> d(8 * 32 * 32);
  for (auto& v : d) v = static_cast<float>(rng.uniform());
  const TensorF r({8, 32, 32}, d);
  const auto out = net(r, priors);
  ASSERT_EQ(out.shape(), r.shape());
  EXPECT_TRUE(out.all_finite());
  for (std::size_t i = 0; i < r.numel(); ++i) EXPECT_EQ(out.at(i), r.at(i));
  EXPECT_THROW(net(TensorF::zeros({8, 30, 32}), priors), ShapeError);
  EXPECT_THROW(net(TensorF::zeros({7, 32, 32}), priors), ShapeError);
}

TEST(Erra, ShapePreservationOverRandomValidShapes) {
  ParameterSet<double> ps;
  Builder<double> b(ps, 3, Init::kAllRandom);
  auto cfg = toy(3, 4, 2, 2);
  auto priors = LowRankPriors<double>::create(b, cfg);
  auto net = ProximalUNet<double>::create(b, "", cfg);
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t h = 4 * (1 + rng.below(3)), w = 4 * (1 + rng.below(3));
    const auto out = net(t::random_tensor({3, h, w}, 20 + trial), priors);
    EXPECT_EQ(out.shape(), (Shape{3, h, w}));
    EXPECT_TRUE(out.all_finite());
  }
}

TEST(Erra, ParameterCountMatchesLayerFormulas) {
  for (bool share : {true, false}) {
    UnfoldingConfig uc;
    uc.stages = 3;
    uc.share_params = share;
    auto cfg = toy(8, 8, 4, 8);
    UnfoldingModel<float> m(uc, cfg, 1);
    const std::size_t c = 8;
    const std::size_t priors = 8 * (c / 4) + 8 * (2 * c / 4) + 8 * (4 * c / 4);
    EXPECT_EQ(m.parameters().scalar_count(), 3 + priors + (share ? 1 : 3) * unet_n(cfg));
  }
  auto nobias = toy(4, 4, 2, 2);
  nobias.bias = false;
  UnfoldingModel<float> m({1, 1.0, true, ProxKind::kErra, 0.0}, nobias, 1);
  EXPECT_EQ(m.parameters().scalar_count(), 1 + 2 * 2 + 2 * 4 + 2 * 8 + unet_n(nobias));
}

TEST(Erra, InitModesDrawIdenticalStreams) {
  auto cfg = toy(4, 4, 2, 2);
  UnfoldingModel<double> a({2, 1.0, true, ProxKind::kErra, 0.0}, cfg, 9, Init::kStandard);
  UnfoldingModel<double> r({2, 1.0, true, ProxKind::kErra, 0.0}, cfg, 9, Init::kAllRandom);
  const auto& q1 = a.parameters().get("prox.in_proj.weight");
  const auto& q2 = r.parameters().get("prox.in_proj.weight");
  EXPECT_TRUE(std::equal(q1.data().begin(), q1.data().end(), q2.data().begin()));
  for (double v : a.parameters().get("prox.out_proj.weight").data()) EXPECT_EQ(v, 0.0);
}

TEST(Erra, FullNetworkGradientCheck) {
  auto cfg = toy(4, 4, 2, 2);
  UnfoldingModel<double> m({2, 0.5, true, ProxKind::kErra, 0.0}, cfg, 21, Init::kAllRandom);
  const auto x0 = t::random_tensor({4, 8, 8}, 22, 0.0, 1.0);
  const auto y = t::random_tensor({8, 8}, 23, 0.0, 2.0);
  const auto theta = t::random_tensor({4, 8, 8}, 24, 0.05, 0.95);
  const auto& p = m.parameters();
  std::vector<TensorD> probe{m.rho_raw(0), m.rho_raw(1), m.priors().query[0], m.priors().query[1],
                             m.priors().query[2], p.get("prox.in_proj.weight"),
                             p.get("prox.enc1.sspl.alpha"), p.get("prox.aft.dconv.weight"),
                             p.get("prox.bottleneck.lrpl.squeeze.weight"), p.get("prox.dec1.norm1.gamma"),
                             p.get("prox.up2.weight"), p.get("prox.out_proj.bias")};
  const auto res = grad_check([&] { return t::weighted_sum(m.forward(x0, y, theta), 25); }, probe);
  EXPECT_LT(res.max_rel_error, 1e-3) << "tensor " << res.worst_tensor << " index " << res.worst_index;
}

TEST(Erra, SharedPriorGradientIsSumOverStages) {
  auto cfg = toy(4, 4, 2, 2);
  UnfoldingModel<double> m({2, 0.5, true, ProxKind::kErra, 0.0}, cfg, 31, Init::kAllRandom);
  const auto x0 = t::random_tensor({4, 8, 8}, 32, 0.0, 1.0);
  const auto y = t::random_tensor({8, 8}, 33, 0.0, 2.0);
  const auto theta = t::random_tensor({4, 8, 8}, 34, 0.05, 0.95);
  m.parameters().zero_grad();
  t::weighted_sum(m.forward(x0, y, theta), 35).backward();

  std::vector<LowRankPriors<double>> copies(2, m.priors());
  for (auto& c : copies)
    for (auto& q : c.query) {
      q = frozen(q);
      q.set_requires_grad(true);
    }
  t::weighted_sum(m.forward_with_priors(x0, y, theta, copies), 35).backward();
  for (std::size_t level = 0; level < 3; ++level) {
    const auto shared = m.priors().query[level].grad();
    const auto g0 = copies[0].query[level].grad(), g1 = copies[1].query[level].grad();
    double norm = 0.0;
    for (std::size_t i = 0; i < shared.size(); ++i) {
      EXPECT_NEAR(shared[i], g0[i] + g1[i], 1e-10 * std::max(1.0, std::abs(shared[i])));
      norm += g0[i] * g0[i];
    }
    EXPECT_GT(norm, 0.0);
  }
  EXPECT_THROW(m.forward_with_priors(x0, y, theta, {copies[0]}), std::invalid_argument);
}
