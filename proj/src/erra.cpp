#include "snapspec/erra.hpp"

#include <cmath>
#include <stdexcept>

#include "snapspec/errors.hpp"

namespace snapspec::erra {

using namespace snapspec::op;

namespace {

// Scales each row of a [C, N] matrix to unit L2 norm.
template <typename T>
Tensor<T> unit_rows(const Tensor<T>& m) {
  Tensor<T> norm = sqrt(add_scalar(sum_axis(mul(m, m), 1), T(1e-12)));
  return mul(m, reciprocal(reshape(norm, {m.dim(0), 1})));
}

}  // namespace

void validate(const ErraConfig& cfg) {
  if (cfg.bands == 0) throw std::invalid_argument("erra: bands must be positive");
  if (cfg.channels == 0 || cfg.channels % 2 != 0) {
    throw std::invalid_argument("erra: channels must be a positive even number");
  }
  if (cfg.reduction == 0 || cfg.channels % cfg.reduction != 0) {
    throw std::invalid_argument("erra: reduction " + std::to_string(cfg.reduction) +
                                " does not divide channels " + std::to_string(cfg.channels));
  }
  if (cfg.queries == 0) throw std::invalid_argument("erra: queries must be positive");
}

template <typename T>
Tensor<T> Builder<T>::uniform(const std::string& name, Shape shape, std::size_t fan_in, bool zero) {
  const std::size_t n = shape_numel(shape);
  std::vector<T> data(n, T(0));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  // Both init modes consume the same draws.
  for (auto& v : data) v = static_cast<T>(rng_.uniform(-bound, bound));
  if (zero && init_ == Init::kStandard) std::fill(data.begin(), data.end(), T(0));
  return params_.add(name, Tensor<T>(std::move(shape), std::move(data)));
}

template <typename T>
Tensor<T> Builder<T>::constant(const std::string& name, Shape shape, T value) {
  const std::size_t n = shape_numel(shape);
  std::vector<T> data(n, value);
  if (init_ == Init::kAllRandom) {
    for (auto& v : data) v = static_cast<T>(value + rng_.uniform(-0.25, 0.25));
  }
  return params_.add(name, Tensor<T>(std::move(shape), std::move(data)));
}

template <typename T>
Conv<T> Conv<T>::create(Builder<T>& b, const std::string& name, std::size_t in, std::size_t out,
                        std::size_t kernel, std::size_t stride, bool has_bias, bool zero) {
  Conv c;
  const std::size_t fan_in = in * kernel * kernel;
  c.weight = b.uniform(name + ".weight", {out, in, kernel, kernel}, fan_in, zero);
  if (has_bias) c.bias = b.uniform(name + ".bias", {out}, fan_in, zero);
  c.stride = stride;
  c.padding = kernel / 2;
  return c;
}

template <typename T>
Conv<T> Conv<T>::create_depthwise(Builder<T>& b, const std::string& name, std::size_t channels,
                                  std::size_t kernel, bool has_bias) {
  Conv c;
  const std::size_t fan_in = kernel * kernel;
  c.weight = b.uniform(name + ".weight", {channels, 1, kernel, kernel}, fan_in);
  if (has_bias) c.bias = b.uniform(name + ".bias", {channels}, fan_in);
  c.padding = kernel / 2;
  c.depthwise = true;
  return c;
}

template <typename T>
Tensor<T> Conv<T>::operator()(const Tensor<T>& x) const {
  if (depthwise) return depthwise_conv2d(x, weight, bias, padding);
  return conv2d(x, weight, bias, Conv2dOptions{stride, padding, 1});
}

template <typename T>
UpConv<T> UpConv<T>::create(Builder<T>& b, const std::string& name, std::size_t in,
                            std::size_t out, bool has_bias) {
  UpConv u;
  const std::size_t fan_in = in * 9;
  u.weight = b.uniform(name + ".weight", {in, out, 3, 3}, fan_in);
  if (has_bias) u.bias = b.uniform(name + ".bias", {out}, fan_in);
  return u;
}

template <typename T>
Tensor<T> UpConv<T>::operator()(const Tensor<T>& x) const {
  return conv_transpose2d(x, weight, bias, 2, 1, 1);
}

template <typename T>
Linear<T> Linear<T>::create(Builder<T>& b, const std::string& name, std::size_t in,
                            std::size_t out, bool has_bias, bool zero) {
  Linear l;
  l.weight = b.uniform(name + ".weight", {in, out}, in, zero);
  if (has_bias) l.bias = b.uniform(name + ".bias", {1, out}, in, zero);
  return l;
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

template <typename T>
ChannelNorm<T> ChannelNorm<T>::create(Builder<T>& b, const std::string& name, std::size_t channels) {
  ChannelNorm n;
  n.gamma = b.constant(name + ".gamma", {channels, 1, 1}, T(1));
  n.beta = b.constant(name + ".beta", {channels, 1, 1}, T(0));
  return n;
}

template <typename T>
Tensor<T> ChannelNorm<T>::operator()(const Tensor<T>& x) const {
  return add(mul(layernorm(x, 0), gamma), beta);
}

template <typename T>
Sspl<T> Sspl<T>::create(Builder<T>& b, const std::string& name, std::size_t channels, bool has_bias) {
  Sspl s;
  s.q = Conv<T>::create(b, name + ".q", channels, channels, 1, 1, has_bias);
  s.k = Conv<T>::create(b, name + ".k", channels, channels, 1, 1, has_bias);
  s.v = Conv<T>::create(b, name + ".v", channels, channels, 1, 1, has_bias);
  s.out_proj = Conv<T>::create(b, name + ".out_proj", channels, channels, 1, 1, has_bias, true);
  s.spatial = Conv<T>::create(b, name + ".spatial", channels, channels, 3, 1, has_bias, true);
  // softplus^{-1}(sqrt(C))
  const double a = std::sqrt(static_cast<double>(channels));
  s.alpha_raw = b.constant(name + ".alpha", {1}, static_cast<T>(a + std::log(-std::expm1(-a))));
  return s;
}

template <typename T>
Tensor<T> Sspl<T>::alpha() const {
  return softplus(alpha_raw);
}

template <typename T>
Tensor<T> Sspl<T>::attention(const Tensor<T>& x) const {
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor<T> qm = unit_rows(reshape(q(x), {c, hw}));
  Tensor<T> km = unit_rows(reshape(k(x), {c, hw}));
  Tensor<T> logits = mul(matmul(km, transpose(qm)), reciprocal(alpha()));
  return softmax(logits, 1);
}

template <typename T>
Tensor<T> Sspl<T>::operator()(const Tensor<T>& x) const {
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor<T> a = attention(x);
  Tensor<T> vm = reshape(v(x), {c, hw});
  // Row-major V (HW x C) times A, written channel-first: A^T V^T.
  Tensor<T> att = reshape(matmul(transpose(a), vm), x.shape());
  return add(out_proj(att), gelu(spatial(x)));
}

template <typename T>
LowRankPriors<T> LowRankPriors<T>::create(Builder<T>& b, const ErraConfig& cfg) {
  LowRankPriors p;
  for (std::size_t level = 0; level < 3; ++level) {
    const std::size_t reduced = (cfg.channels << level) / cfg.reduction;
    p.reduced[level] = reduced;
    p.query[level] = b.uniform("prior.level" + std::to_string(level + 1) + ".query",
                               {cfg.queries, reduced}, reduced);
  }
  return p;
}

template <typename T>
Lrpl<T> Lrpl<T>::create(Builder<T>& b, const std::string& name, std::size_t channels,
                        std::size_t reduction, bool has_bias) {
  if (reduction == 0 || channels % reduction != 0) {
    throw ShapeError("lrpl: reduction " + std::to_string(reduction) + " does not divide " +
                     std::to_string(channels));
  }
  Lrpl l;
  l.reduced = channels / reduction;
  l.squeeze = Linear<T>::create(b, name + ".squeeze", channels, l.reduced, has_bias);
  l.expand = Linear<T>::create(b, name + ".expand", l.reduced, channels, has_bias, true);
  return l;
}

template <typename T>
Tensor<T> Lrpl<T>::attention(const Tensor<T>& x, const Tensor<T>& query) const {
  if (query.rank() != 2 || query.dim(1) != reduced) {
    throw ShapeError("lrpl: query prior must be [m, " + std::to_string(reduced) + "], got " +
                     shape_str(query.shape()));
  }
  Tensor<T> lc = reshape(global_avgpool(x), {1, x.dim(0)});
  Tensor<T> lk = squeeze(lc);
  const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(reduced)));
  return softmax(scale(matmul(lk, transpose(query)), inv), 1);
}

template <typename T>
Tensor<T> Lrpl<T>::operator()(const Tensor<T>& x, const Tensor<T>& query) const {
  Tensor<T> f = attention(x, query);
  Tensor<T> e = expand(matmul(f, query));
  return mul(x, reshape(e, {x.dim(0), 1, 1}));
}

template <typename T>
FeedForward<T> FeedForward<T>::create(Builder<T>& b, const std::string& name, std::size_t channels,
                                      bool has_bias) {
  FeedForward f;
  f.expand = Conv<T>::create(b, name + ".expand", channels, 2 * channels, 1, 1, has_bias);
  f.project = Conv<T>::create(b, name + ".project", 2 * channels, channels, 1, 1, has_bias, true);
  return f;
}

template <typename T>
Tensor<T> FeedForward<T>::operator()(const Tensor<T>& x) const {
  return project(gelu(expand(x)));
}

template <typename T>
PriorBlock<T> PriorBlock<T>::create(Builder<T>& b, const std::string& name, std::size_t channels,
                                    std::size_t level, bool with_lrpl, const ErraConfig& cfg) {
  PriorBlock p;
  p.level = level;
  p.norm1 = ChannelNorm<T>::create(b, name + ".norm1", channels);
  p.sspl = Sspl<T>::create(b, name + ".sspl", channels, cfg.bias);
  if (with_lrpl) p.lrpl = Lrpl<T>::create(b, name + ".lrpl", channels, cfg.reduction, cfg.bias);
  p.norm2 = ChannelNorm<T>::create(b, name + ".norm2", channels);
  p.ffn = FeedForward<T>::create(b, name + ".ffn", channels, cfg.bias);
  return p;
}

template <typename T>
Tensor<T> PriorBlock<T>::operator()(const Tensor<T>& x, const LowRankPriors<T>& priors) const {
  Tensor<T> n = norm1(x);
  Tensor<T> x1 = add(x, sspl(n));
  if (lrpl) x1 = add(x1, (*lrpl)(n, priors.query.at(level)));
  return add(x1, ffn(norm2(x1)));
}

template <typename T>
Fusion<T> Fusion<T>::create(Builder<T>& b, const std::string& name, std::size_t in,
                            std::size_t out, bool has_bias) {
  Fusion f;
  f.first = Conv<T>::create(b, name + ".first", in, out, 1, 1, has_bias);
  f.second = Conv<T>::create(b, name + ".second", out, out, 1, 1, has_bias);
  return f;
}

template <typename T>
Tensor<T> Fusion<T>::operator()(const Tensor<T>& a, const Tensor<T>& b) const {
  return second(gelu(first(concat(a, b))));
}

template <typename T>
FeatureTransfer<T> FeatureTransfer<T>::create(Builder<T>& b, const std::string& name,
                                              std::size_t channels, bool has_bias) {
  if (channels == 0 || channels % 2 != 0) throw ShapeError("aft: channels must be even");
  const std::size_t c = channels, h = channels / 2;
  FeatureTransfer f;
  f.reduce1 = Conv<T>::create(b, name + ".reduce1", c, h, 3, 2, has_bias);
  f.reduce2 = Conv<T>::create(b, name + ".reduce2", 2 * c, h, 3, 1, has_bias);
  f.dconv = Conv<T>::create_depthwise(b, name + ".dconv", c, 5, has_bias);
  f.atten_proj = Conv<T>::create(b, name + ".atten_proj", c, h, 1, 1, has_bias);
  f.restore1 = Conv<T>::create(b, name + ".restore1", h, c, 3, 1, has_bias);
  f.restore2 = Conv<T>::create(b, name + ".restore2", h, 2 * c, 3, 1, has_bias);
  f.fusion1 = Fusion<T>::create(b, name + ".fusion1", 2 * c, c, has_bias);
  f.fusion2 = Fusion<T>::create(b, name + ".fusion2", 4 * c, 2 * c, has_bias);
  return f;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> FeatureTransfer<T>::operator()(const Tensor<T>& e1,
                                                                const Tensor<T>& e2,
                                                                Intermediates* trace) const {
  if (e1.rank() != 3 || e2.rank() != 3) throw ShapeError("aft: expected [C,H,W] inputs");
  const std::size_t c = reduce1.weight.dim(1);
  if (e1.dim(0) != c || e2.dim(0) != 2 * c || e1.dim(1) != 2 * e2.dim(1) ||
      e1.dim(2) != 2 * e2.dim(2)) {
    throw ShapeError("aft: encoder features " + shape_str(e1.shape()) + " and " +
                     shape_str(e2.shape()) + " are not [C,H,W] / [2C,H/2,W/2] with C=" +
                     std::to_string(c));
  }
  Tensor<T> re1 = reduce1(e1);
  Tensor<T> re2 = reduce2(e2);
  Tensor<T> exc = mul(re1, re2);
  Tensor<T> coe = add(re1, re2);
  Tensor<T> atten = atten_proj(dconv(concat(exc, coe)));
  Tensor<T> con1 = upsample_nearest2x(restore1(mul(atten, re1)));
  Tensor<T> con2 = restore2(mul(atten, re2));
  if (trace) *trace = Intermediates{re1, re2, exc, coe, atten};
  return {fusion1(e1, con1), fusion2(e2, con2)};
}

template <typename T>
ProximalUNet<T> ProximalUNet<T>::create(Builder<T>& b, const std::string& name,
                                        const ErraConfig& cfg) {
  validate(cfg);
  const std::size_t c = cfg.channels;
  const bool bias = cfg.bias;
  ProximalUNet u;
  u.cfg = cfg;
  const std::string p = name.empty() ? std::string() : name + ".";
  u.in_proj = Conv<T>::create(b, p + "in_proj", cfg.bands, c, 3, 1, bias);
  u.enc1 = PriorBlock<T>::create(b, p + "enc1", c, 0, true, cfg);
  u.down1 = Conv<T>::create(b, p + "down1", c, 2 * c, 3, 1, bias);
  u.enc2 = PriorBlock<T>::create(b, p + "enc2", 2 * c, 1, true, cfg);
  u.down2 = Conv<T>::create(b, p + "down2", 2 * c, 4 * c, 3, 1, bias);
  u.bottleneck = PriorBlock<T>::create(b, p + "bottleneck", 4 * c, 2, true, cfg);
  u.aft = FeatureTransfer<T>::create(b, p + "aft", c, bias);
  u.up2 = UpConv<T>::create(b, p + "up2", 4 * c, 2 * c, bias);
  u.dec_fuse2 = Conv<T>::create(b, p + "dec_fuse2", 4 * c, 2 * c, 1, 1, bias);
  u.dec2 = PriorBlock<T>::create(b, p + "dec2", 2 * c, 1, false, cfg);
  u.up1 = UpConv<T>::create(b, p + "up1", 2 * c, c, bias);
  u.dec_fuse1 = Conv<T>::create(b, p + "dec_fuse1", 2 * c, c, 1, 1, bias);
  u.dec1 = PriorBlock<T>::create(b, p + "dec1", c, 0, false, cfg);
  u.out_proj = Conv<T>::create(b, p + "out_proj", c, cfg.bands, 3, 1, bias, true);
  return u;
}

template <typename T>
Tensor<T> ProximalUNet<T>::operator()(const Tensor<T>& r, const LowRankPriors<T>& priors) const {
  if (r.rank() != 3 || r.dim(0) != cfg.bands) {
    throw ShapeError("prox: expected [" + std::to_string(cfg.bands) + ",H,W], got " +
                     shape_str(r.shape()));
  }
  if (r.dim(1) % 4 != 0 || r.dim(2) % 4 != 0) {
    throw ShapeError("prox: spatial extent " + std::to_string(r.dim(1)) + "x" +
                     std::to_string(r.dim(2)) + " is not divisible by 4");
  }
  Tensor<T> e1 = enc1(in_proj(r), priors);
  Tensor<T> e2 = enc2(down1(maxpool2d(e1)), priors);
  Tensor<T> bott = bottleneck(down2(maxpool2d(e2)), priors);
  auto [o1, o2] = aft(e1, e2);
  Tensor<T> d2 = dec2(dec_fuse2(concat(up2(bott), o2)), priors);
  Tensor<T> d1 = dec1(dec_fuse1(concat(up1(d2), o1)), priors);
  return add(r, out_proj(d1));
}

#define SNAPSPEC_ERRA_INSTANTIATE(T) \
  template class Builder<T>;         \
  template struct Conv<T>;           \
  template struct UpConv<T>;         \
  template struct Linear<T>;         \
  template struct ChannelNorm<T>;    \
  template struct Sspl<T>;           \
  template struct LowRankPriors<T>;  \
  template struct Lrpl<T>;           \
  template struct FeedForward<T>;    \
  template struct PriorBlock<T>;     \
  template struct Fusion<T>;         \
  template struct FeatureTransfer<T>; \
  template struct ProximalUNet<T>;

SNAPSPEC_ERRA_INSTANTIATE(float)
SNAPSPEC_ERRA_INSTANTIATE(double)

}  // namespace snapspec::erra
