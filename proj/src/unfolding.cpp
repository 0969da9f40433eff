#include "snapspec/unfolding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "snapspec/errors.hpp"
#include "snapspec/metrics.hpp"

namespace snapspec {

std::string to_string(ProxKind kind) {
  return kind == ProxKind::kErra ? "erra" : "classical_soft_threshold";
}

ProxKind parse_prox_kind(const std::string& text) {
  if (text == "erra") return ProxKind::kErra;
  if (text == "classical_soft_threshold" || text == "classical") return ProxKind::kSoftThreshold;
  throw std::invalid_argument("unknown prox kind '" + text + "'");
}

void UnfoldingConfig::validate() const {
  if (stages == 0) throw std::invalid_argument("unfolding: K must be >= 1");
  if (!std::isfinite(rho_init) || rho_init < 0.0 || (prox == ProxKind::kErra && rho_init == 0.0)) {
    throw std::invalid_argument("unfolding: rho_init must be positive");
  }
  if (!(threshold >= 0.0)) throw std::invalid_argument("unfolding: threshold must be >= 0");
}

namespace {

void check_pair(const HyperCube& x, const Measurement& y, const FilterArray& phi, const char* op) {
  if (x.height != phi.height || x.width != phi.width || y.height != phi.height ||
      y.width != phi.width || x.bands != phi.bands() || x.data.size() != x.height * x.width * x.bands ||
      y.y.size() != y.height * y.width) {
    throw ShapeError(std::string(op) + ": cube " + std::to_string(x.height) + "x" +
                     std::to_string(x.width) + "x" + std::to_string(x.bands) + ", measurement " +
                     std::to_string(y.height) + "x" + std::to_string(y.width) + " and filter array " +
                     std::to_string(phi.height) + "x" + std::to_string(phi.width) + "x" +
                     std::to_string(phi.bands()) + " disagree");
  }
}

double soft(double v, double t) {
  const double m = std::abs(v) - t;
  return m > 0.0 ? std::copysign(m, v) : 0.0;
}

}  // namespace

HyperCube gradient_step(const HyperCube& x, const Measurement& y, const FilterArray& phi, double rho) {
  check_pair(x, y, phi, "gradient_step");
  if (!std::isfinite(rho)) throw std::invalid_argument("gradient_step: rho must be finite");
  HyperCube r = x;
  const std::size_t b = x.bands;
  for (std::size_t p = 0; p < y.y.size(); ++p) {
    double pred = 0.0;
    for (std::size_t l = 0; l < b; ++l) pred += phi.mosaic[p * b + l] * x.data[p * b + l];
    const double res = pred - y.y[p];
    for (std::size_t l = 0; l < b; ++l) r.data[p * b + l] -= rho * phi.mosaic[p * b + l] * res;
  }
  return r;
}

HyperCube prox_soft_threshold(const HyperCube& r, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("prox_soft_threshold: t must be >= 0");
  HyperCube x = r;
  for (auto& v : x.data) v = soft(v, t);
  return x;
}

double ista_objective(const HyperCube& x, const Measurement& y, const FilterArray& phi, double lambda) {
  double l1 = 0.0;
  for (double v : x.data) l1 += std::abs(v);
  return fidelity(x, y, phi) + lambda * l1;
}

UnfoldingResult run_unfolding(const Measurement& y, const FilterArray& phi, const UnfoldingConfig& config,
                              bool keep_stages) {
  config.validate();
  UnfoldingResult out;
  HyperCube x = init_estimate(y, phi);
  for (std::size_t k = 0; k < config.stages; ++k) {
    HyperCube r = gradient_step(x, y, phi, config.rho_init);
    x = prox_soft_threshold(r, config.threshold);
    if (!x.all_finite()) {
      throw NumericError("unfolding: non-finite estimate at stage " + std::to_string(k + 1));
    }
    out.stage_fidelity.push_back(fidelity(x, y, phi));
    if (keep_stages) out.stages.push_back(StageState{x, std::move(r), k + 1});
  }
  out.estimate = std::move(x);
  return out;
}

DenseIstaResult ista_dense(const std::vector<double>& a, std::size_t m, std::size_t n,
                           const std::vector<double>& b, double lambda, double rho,
                           std::size_t iterations, double tol) {
  if (a.size() != m * n || b.size() != m) throw ShapeError("ista_dense: A must be m x n and b length m");
  DenseIstaResult res;
  res.x.assign(n, 0.0);
  std::vector<double> resid(m), g(n);
  auto objective = [&](const std::vector<double>& x) {
    double f = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double s = -b[i];
      for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * x[j];
      f += 0.5 * s * s;
    }
    for (double v : x) f += lambda * std::abs(v);
    return f;
  };
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = -b[i];
      for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * res.x[j];
      resid[i] = s;
    }
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[j] += a[i * n + j] * resid[i];
    }
    double change = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double next = soft(res.x[j] - rho * g[j], rho * lambda);
      change = std::max(change, std::abs(next - res.x[j]));
      res.x[j] = next;
    }
    res.objective.push_back(objective(res.x));
    res.iterations = it + 1;
    if (tol > 0.0 && change < tol) break;
  }
  return res;
}

double spectral_norm_sq(const std::vector<double>& a, std::size_t m, std::size_t n,
                        std::size_t iterations) {
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n))), av(m), w(n);
  double lambda = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * v[j];
      av[i] = s;
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) w[j] += a[i * n + j] * av[i];
    }
    double norm = 0.0;
    for (double e : w) norm += e * e;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    lambda = norm;
    for (std::size_t j = 0; j < n; ++j) v[j] = w[j] / norm;
  }
  return lambda;
}

template <typename T>
Tensor<T> cube_to_tensor(const HyperCube& cube) {
  const std::size_t h = cube.height, w = cube.width, b = cube.bands;
  std::vector<T> data(b * h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t l = 0; l < b; ++l) data[l * h * w + p] = static_cast<T>(cube.data[p * b + l]);
  }
  return Tensor<T>({b, h, w}, std::move(data));
}

template <typename T>
HyperCube tensor_to_cube(const Tensor<T>& t, const std::vector<double>& grid) {
  if (t.rank() != 3 || t.dim(0) != grid.size()) {
    throw ShapeError("tensor_to_cube: expected [" + std::to_string(grid.size()) + ",H,W], got " +
                     shape_str(t.shape()));
  }
  const std::size_t b = t.dim(0), h = t.dim(1), w = t.dim(2);
  HyperCube cube(h, w, grid);
  const auto d = t.data();
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t l = 0; l < b; ++l) cube.data[p * b + l] = static_cast<double>(d[l * h * w + p]);
  }
  return cube;
}

template <typename T>
Tensor<T> mosaic_tensor(const FilterArray& phi) {
  const std::size_t h = phi.height, w = phi.width, b = phi.bands();
  std::vector<T> data(b * h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t l = 0; l < b; ++l) data[l * h * w + p] = static_cast<T>(phi.mosaic[p * b + l]);
  }
  return Tensor<T>({b, h, w}, std::move(data));
}

template <typename T>
Tensor<T> measurement_tensor(const Measurement& y) {
  std::vector<T> data(y.y.begin(), y.y.end());
  return Tensor<T>({y.height, y.width}, std::move(data));
}

namespace {

double inverse_softplus(double v) { return v + std::log(-std::expm1(-v)); }

std::string stage_prefix(std::size_t k) { return "stage" + std::to_string(k + 1); }

}  // namespace

template <typename T>
UnfoldingModel<T>::UnfoldingModel(const UnfoldingConfig& config, const erra::ErraConfig& net,
                                  std::uint64_t seed, erra::Init init)
    : config_(config), net_(net), params_(std::make_unique<ParameterSet<T>>()) {
  config_.prox = ProxKind::kErra;
  config_.validate();
  erra::validate(net_);
  erra::Builder<T> b(*params_, seed, init);
  const T raw = static_cast<T>(inverse_softplus(config_.rho_init));
  for (std::size_t k = 0; k < config_.stages; ++k) {
    rho_raw_.push_back(params_->add(stage_prefix(k) + ".rho", Tensor<T>({1}, {raw})));
  }
  priors_ = erra::LowRankPriors<T>::create(b, net_);
  if (config_.share_params) {
    prox_.push_back(erra::ProximalUNet<T>::create(b, "prox", net_));
  } else {
    for (std::size_t k = 0; k < config_.stages; ++k) {
      prox_.push_back(erra::ProximalUNet<T>::create(b, stage_prefix(k) + ".prox", net_));
    }
  }
}

template <typename T>
UnfoldingModel<T> UnfoldingModel<T>::from_checkpoint(const std::filesystem::path& path) {
  const auto entries = read_checkpoint<T>(path);
  std::map<std::string, Shape> shapes;
  for (const auto& e : entries) shapes[e.name] = e.tensor.shape();
  UnfoldingConfig cfg;
  cfg.stages = 0;
  while (shapes.count(stage_prefix(cfg.stages) + ".rho")) ++cfg.stages;
  if (cfg.stages == 0) throw FormatError(path.string() + ": checkpoint has no stage1.rho entry");
  cfg.share_params = shapes.count("prox.in_proj.weight") > 0;
  const std::string p = cfg.share_params ? "prox." : "stage1.prox.";
  const auto in_proj = shapes.find(p + "in_proj.weight");
  const auto query = shapes.find("prior.level1.query");
  if (in_proj == shapes.end() || query == shapes.end() || in_proj->second.size() != 4 ||
      query->second.size() != 2 || query->second[1] == 0) {
    throw FormatError(path.string() + ": checkpoint does not describe an unfolding model");
  }
  erra::ErraConfig net;
  net.channels = in_proj->second[0];
  net.bands = in_proj->second[1];
  net.queries = query->second[0];
  net.reduction = net.channels / query->second[1];
  net.bias = shapes.count(p + "in_proj.bias") > 0;
  UnfoldingModel model(cfg, net, 0);
  load_checkpoint(*model.params_, path);
  return model;
}

template <typename T>
const erra::ProximalUNet<T>& UnfoldingModel<T>::prox(std::size_t stage) const {
  if (stage >= config_.stages) throw std::out_of_range("unfolding: stage index out of range");
  return prox_[config_.share_params ? 0 : stage];
}

template <typename T>
Tensor<T> UnfoldingModel<T>::rho(std::size_t stage) const {
  return op::softplus(rho_raw_.at(stage));
}

template <typename T>
Tensor<T> UnfoldingModel<T>::forward(const Tensor<T>& x0, const Tensor<T>& y, const Tensor<T>& theta,
                                     std::vector<Tensor<T>>* stages) const {
  return forward_with_priors(x0, y, theta, std::vector<erra::LowRankPriors<T>>(config_.stages, priors_),
                             stages);
}

template <typename T>
Tensor<T> UnfoldingModel<T>::forward_with_priors(const Tensor<T>& x0, const Tensor<T>& y,
                                                 const Tensor<T>& theta,
                                                 const std::vector<erra::LowRankPriors<T>>& per_stage,
                                                 std::vector<Tensor<T>>* stages) const {
  if (per_stage.size() != config_.stages) {
    throw std::invalid_argument("unfolding: need one prior set per stage");
  }
  if (x0.shape() != theta.shape() || x0.rank() != 3 || y.rank() != 2 || y.dim(0) != x0.dim(1) ||
      y.dim(1) != x0.dim(2)) {
    throw ShapeError("unfolding: x0 " + shape_str(x0.shape()) + ", y " + shape_str(y.shape()) +
                     ", theta " + shape_str(theta.shape()) + " disagree");
  }
  using namespace op;
  Tensor<T> x = x0;
  for (std::size_t k = 0; k < config_.stages; ++k) {
    Tensor<T> residual = sub(sum_axis(mul(theta, x), 0), y);
    Tensor<T> r = sub(x, mul(mul(theta, residual), rho(k)));
    x = prox(k)(r, per_stage[k]);
    if (stages) stages->push_back(x);
  }
  return x;
}

template <typename T>
UnfoldingResult UnfoldingModel<T>::reconstruct(const Measurement& y, const FilterArray& phi,
                                               bool keep_stages) const {
  NoGradGuard guard;
  const HyperCube x0 = init_estimate(y, phi);
  std::vector<Tensor<T>> iterates;
  forward(cube_to_tensor<T>(x0), measurement_tensor<T>(y), mosaic_tensor<T>(phi), &iterates);
  UnfoldingResult out;
  for (std::size_t k = 0; k < iterates.size(); ++k) {
    if (!iterates[k].all_finite()) {
      throw NumericError("unfolding: non-finite estimate at stage " + std::to_string(k + 1));
    }
    HyperCube xk = tensor_to_cube(iterates[k], phi.grid);
    out.stage_fidelity.push_back(fidelity(xk, y, phi));
    if (keep_stages) out.stages.push_back(StageState{xk, HyperCube{}, k + 1});
    if (k + 1 == iterates.size()) out.estimate = std::move(xk);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, std::string>> UnfoldingModel<T>::describe() const {
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  return {
      {"stages", std::to_string(config_.stages)},
      {"rho_init", num(config_.rho_init)},
      {"share_params", config_.share_params ? "true" : "false"},
      {"prox", to_string(config_.prox)},
      {"bands", std::to_string(net_.bands)},
      {"channels", std::to_string(net_.channels)},
      {"reduction", std::to_string(net_.reduction)},
      {"queries", std::to_string(net_.queries)},
      {"bias", net_.bias ? "true" : "false"},
      {"parameter_count", std::to_string(params_->scalar_count())},
  };
}

HyperCube augment_scene(const HyperCube& scene, std::size_t crop_side, std::uint64_t seed) {
  Rng rng(seed);
  const std::uint64_t dy = rng.next(), dx = rng.next();
  const int turns = static_cast<int>(rng.below(4));
  const bool flip = rng.below(2) == 1;
  HyperCube out = scene;
  if (crop_side > scene.height || crop_side > scene.width) {
    throw ShapeError("augment: crop " + std::to_string(crop_side) + " exceeds scene " +
                     std::to_string(scene.height) + "x" + std::to_string(scene.width));
  }
  if (crop_side > 0 && (crop_side < scene.height || crop_side < scene.width)) {
    out = crop(scene, dy % (scene.height - crop_side + 1), dx % (scene.width - crop_side + 1),
               crop_side, crop_side);
  }
  return rotate_flip(out, turns, flip);
}

template <typename T>
TrainReport train(UnfoldingModel<T>& model, const std::vector<HyperCube>& scenes,
                  const FilterArray& phi, const TrainOptions& options) {
  if (scenes.empty()) throw std::invalid_argument("train: dataset is empty");
  typename Adam<T>::Options adam_opt;
  adam_opt.lr = options.lr;
  adam_opt.clip_norm = options.clip_norm;
  Adam<T> optimizer(model.parameters().tensors(), adam_opt);
  TrainReport report;
  std::vector<std::size_t> order(scenes.size());
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng(derive_seed(options.seed, epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0, max_norm = 0.0;
    for (std::size_t idx : order) {
      const std::uint64_t sample_seed = rng.next();
      HyperCube truth = options.augment ? augment_scene(scenes[idx], options.crop, sample_seed)
                        : options.crop > 0 ? crop(scenes[idx], 0, 0, options.crop, options.crop)
                                           : scenes[idx];
      const FilterArray local = (truth.height == phi.height && truth.width == phi.width)
                                    ? phi
                                    : retile(phi, truth.height, truth.width);
      const Measurement meas = encode(truth, local, options.noise_sigma, derive_seed(sample_seed, 1));
      const HyperCube x0 = init_estimate(meas, local);
      Tensor<T> estimate = model.forward(cube_to_tensor<T>(x0), measurement_tensor<T>(meas),
                                         mosaic_tensor<T>(local));
      Tensor<T> loss = op::mse(estimate, cube_to_tensor<T>(truth));
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw NumericError("train: loss became non-finite at epoch " + std::to_string(epoch + 1) +
                           ", scene " + std::to_string(idx));
      }
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      max_norm = std::max(max_norm, optimizer.last_grad_norm());
      ++report.steps;
      total += value;
    }
    report.epoch_loss.push_back(total / static_cast<double>(scenes.size()));
    report.epoch_max_grad_norm.push_back(max_norm);
    if (options.loss_csv) write_loss_csv(report.epoch_loss, *options.loss_csv);
    if (options.on_epoch) options.on_epoch(epoch + 1, report.epoch_loss.back());
  }
  return report;
}

void write_loss_csv(const std::vector<double>& epoch_loss, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "epoch,loss\n" << std::setprecision(9);
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) os << e + 1 << ',' << epoch_loss[e] << '\n';
}

void write_stage_csv(const UnfoldingResult& result, const std::filesystem::path& path,
                     const HyperCube* truth) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const bool quality = truth && result.stages.size() == result.stage_fidelity.size();
  os << (quality ? "stage,fidelity,psnr_db,ssim\n" : "stage,fidelity\n") << std::setprecision(9);
  for (std::size_t k = 0; k < result.stage_fidelity.size(); ++k) {
    os << k + 1 << ',' << result.stage_fidelity[k];
    if (quality) {
      const auto& x = result.stages[k].x;
      os << ',' << std::min(psnr(x, *truth), kPsnrCapDb) << ',' << ssim(x, *truth);
    }
    os << '\n';
  }
}

#define SNAPSPEC_UNFOLDING_INSTANTIATE(T)                                                     \
  template Tensor<T> cube_to_tensor<T>(const HyperCube&);                                     \
  template HyperCube tensor_to_cube<T>(const Tensor<T>&, const std::vector<double>&);         \
  template Tensor<T> mosaic_tensor<T>(const FilterArray&);                                    \
  template Tensor<T> measurement_tensor<T>(const Measurement&);                               \
  template class UnfoldingModel<T>;                                                           \
  template TrainReport train<T>(UnfoldingModel<T>&, const std::vector<HyperCube>&,            \
                                const FilterArray&, const TrainOptions&);

SNAPSPEC_UNFOLDING_INSTANTIATE(float)
SNAPSPEC_UNFOLDING_INSTANTIATE(double)

}  // namespace snapspec
