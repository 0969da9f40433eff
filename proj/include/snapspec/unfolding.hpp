#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "snapspec/erra.hpp"
#include "snapspec/imaging.hpp"

// K-stage ISTA unfolding: r = x - rho * Phi^T(Phi x - y), x = prox(r).
namespace snapspec {

enum class ProxKind { kSoftThreshold, kErra };

std::string to_string(ProxKind kind);
ProxKind parse_prox_kind(const std::string& text);

struct UnfoldingConfig {
  std::size_t stages = 9;  // K
  double rho_init = 1.0;
  bool share_params = true;
  ProxKind prox = ProxKind::kErra;
  double threshold = 0.0;  // soft-threshold level t, classical mode only

  // Throws std::invalid_argument unless K >= 1 and rho_init > 0 (rho_init >= 0 for classical).
  void validate() const;
};

struct StageState {
  HyperCube x, r;
  std::size_t stage_index = 0;
};

struct UnfoldingResult {
  HyperCube estimate;
  std::vector<double> stage_fidelity;  // 0.5 ||y - Phi x^(k)||^2 for k = 1..K
  std::vector<StageState> stages;      // filled only when requested
};

HyperCube gradient_step(const HyperCube& x, const Measurement& y, const FilterArray& phi, double rho);
// sign(r) * max(|r| - t, 0), element-wise.
HyperCube prox_soft_threshold(const HyperCube& r, double t);
// 0.5 ||y - Phi x||^2 + lambda ||x||_1.
double ista_objective(const HyperCube& x, const Measurement& y, const FilterArray& phi, double lambda);

// Classical mode: the soft-threshold prox with t = config.threshold and a fixed step rho_init.
// Throws NumericError naming the stage when an iterate goes non-finite.
UnfoldingResult run_unfolding(const Measurement& y, const FilterArray& phi, const UnfoldingConfig& config,
                              bool keep_stages = false);

// Dense ISTA on min 0.5 ||A x - b||^2 + lambda ||x||_1, A row-major m x n.
struct DenseIstaResult {
  std::vector<double> x;
  std::vector<double> objective;  // after each iteration
  std::size_t iterations = 0;
};
DenseIstaResult ista_dense(const std::vector<double>& a, std::size_t m, std::size_t n,
                           const std::vector<double>& b, double lambda, double rho,
                           std::size_t iterations, double tol = 0.0);
// Largest eigenvalue of A^T A by power iteration.
double spectral_norm_sq(const std::vector<double>& a, std::size_t m, std::size_t n,
                        std::size_t iterations = 500);

// Cube <-> channel-first tensor [bands, H, W].
template <typename T> Tensor<T> cube_to_tensor(const HyperCube& cube);
template <typename T> HyperCube tensor_to_cube(const Tensor<T>& t, const std::vector<double>& grid);
template <typename T> Tensor<T> mosaic_tensor(const FilterArray& phi);
template <typename T> Tensor<T> measurement_tensor(const Measurement& y);

// Learned unfolding network with an ERRA proximal operator. Each stage owns a
// positive step size rho_k = softplus(rho_raw_k); the proximal network is one
// shared instance (share_params) or one per stage. The low-rank query priors
// exist once per model.
template <typename T>
class UnfoldingModel {
 public:
  UnfoldingModel(const UnfoldingConfig& config, const erra::ErraConfig& net, std::uint64_t seed,
                 erra::Init init = erra::Init::kStandard);

  // Rebuilds the architecture from checkpoint tensor shapes and loads the weights.
  static UnfoldingModel from_checkpoint(const std::filesystem::path& path);

  const UnfoldingConfig& config() const { return config_; }
  const erra::ErraConfig& net_config() const { return net_; }
  std::size_t stages() const { return config_.stages; }
  ParameterSet<T>& parameters() { return *params_; }
  const ParameterSet<T>& parameters() const { return *params_; }
  const erra::LowRankPriors<T>& priors() const { return priors_; }
  const erra::ProximalUNet<T>& prox(std::size_t stage) const;
  const Tensor<T>& rho_raw(std::size_t stage) const { return rho_raw_.at(stage); }
  Tensor<T> rho(std::size_t stage) const;

  // x0, theta: [bands, H, W]; y: [H, W]. Returns x^(K); `stages` receives x^(1..K).
  Tensor<T> forward(const Tensor<T>& x0, const Tensor<T>& y, const Tensor<T>& theta,
                    std::vector<Tensor<T>>* stages = nullptr) const;
  // Same, with an explicit prior set per stage instead of the shared one.
  Tensor<T> forward_with_priors(const Tensor<T>& x0, const Tensor<T>& y, const Tensor<T>& theta,
                                const std::vector<erra::LowRankPriors<T>>& per_stage,
                                std::vector<Tensor<T>>* stages = nullptr) const;

  // Inference on cubes (no graph). Throws NumericError naming the stage on non-finite output.
  UnfoldingResult reconstruct(const Measurement& y, const FilterArray& phi, bool keep_stages = false) const;

  // Architecture and unfolding settings as key=value pairs.
  std::vector<std::pair<std::string, std::string>> describe() const;

 private:
  UnfoldingConfig config_;
  erra::ErraConfig net_;
  std::unique_ptr<ParameterSet<T>> params_;
  erra::LowRankPriors<T> priors_;
  std::vector<erra::ProximalUNet<T>> prox_;
  std::vector<Tensor<T>> rho_raw_;
};

struct TrainOptions {
  std::size_t epochs = 50;
  double lr = 2e-4;
  std::uint64_t seed = 0;
  bool augment = true;
  std::size_t crop = 0;  // square crop side; 0 keeps the full scene
  double noise_sigma = 0.0;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
  std::optional<std::filesystem::path> loss_csv;  // "epoch,loss"
  std::function<void(std::size_t epoch, double loss)> on_epoch;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean per-sample MSE of each epoch
  std::vector<double> epoch_max_grad_norm;  // largest unclipped gradient norm of each epoch
  std::size_t steps = 0;
};

// Seeded augmentation of one training scene: random crop, quarter-turn and flip.
HyperCube augment_scene(const HyperCube& scene, std::size_t crop, std::uint64_t seed);

// Minimises the MSE between the unfolded estimate and ground truth with Adam
// at batch size 1. Measurements are re-simulated from each augmented scene.
// Throws NumericError (with epoch and sample) if the loss goes non-finite.
template <typename T>
TrainReport train(UnfoldingModel<T>& model, const std::vector<HyperCube>& scenes,
                  const FilterArray& phi, const TrainOptions& options);

void write_loss_csv(const std::vector<double>& epoch_loss, const std::filesystem::path& path);
// "stage,fidelity[,psnr_db,ssim]" rows.
void write_stage_csv(const UnfoldingResult& result, const std::filesystem::path& path,
                     const HyperCube* truth = nullptr);

extern template class UnfoldingModel<float>;
extern template class UnfoldingModel<double>;

}  // namespace snapspec
