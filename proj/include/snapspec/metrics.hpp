#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "snapspec/imaging.hpp"

namespace snapspec {

// PSNR values written to CSV are capped here; exact matches report +inf in memory.
inline constexpr double kPsnrCapDb = 100.0;

// 10 log10(max^2 / MSE) with the MSE taken over every element of the cube.
double psnr(std::span<const double> x, std::span<const double> ref, double max_val = 1.0);
double psnr(const HyperCube& x, const HyperCube& ref, double max_val = 1.0);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Gaussian-window SSIM of one band over the valid window positions.
double ssim_plane(std::span<const double> x, std::span<const double> ref, std::size_t height,
                  std::size_t width, const SsimOptions& opt = {});
// Mean over bands of the per-band SSIM.
double ssim(const HyperCube& x, const HyperCube& ref, const SsimOptions& opt = {});

struct SceneQuality {
  std::string scene_id;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct QualityReport {
  std::vector<SceneQuality> per_scene;
  double average_psnr_db = 0.0;
  double average_ssim = 0.0;
};

struct ScenePair {
  std::string scene_id;
  HyperCube estimate;
  HyperCube truth;
};

QualityReport evaluate(const std::vector<ScenePair>& pairs);
// CSV schema: scene_id,psnr_db,ssim; rows in input order; a final "average" row.
void write_report(const QualityReport& report, const std::filesystem::path& path);
QualityReport read_report(const std::filesystem::path& path);

}  // namespace snapspec
