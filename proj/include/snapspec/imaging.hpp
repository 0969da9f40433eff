#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "snapspec/selection.hpp"

namespace snapspec {

// Scene radiance X, H x W x bands, band-interleaved-by-pixel (band index fastest).
struct HyperCube {
  std::size_t height = 0, width = 0, bands = 0;
  std::vector<double> grid;
  std::vector<double> data;

  HyperCube() = default;
  HyperCube(std::size_t h, std::size_t w, std::vector<double> wavelength_grid, double fill = 0.0);

  std::size_t index(std::size_t h, std::size_t w, std::size_t l) const {
    return (h * width + w) * bands + l;
  }
  double& at(std::size_t h, std::size_t w, std::size_t l) { return data[index(h, w, l)]; }
  double at(std::size_t h, std::size_t w, std::size_t l) const { return data[index(h, w, l)]; }
  bool all_finite() const;
};

// s x s basic filter array tiled periodically over the sensor.
struct FilterArray {
  std::size_t period = 3;
  std::size_t height = 0, width = 0;
  std::vector<double> grid;
  std::vector<double> theta;   // (s*s) x bands basis spectra
  std::vector<double> mosaic;  // H x W x bands

  std::size_t bands() const { return grid.size(); }
  double at(std::size_t h, std::size_t w, std::size_t l) const {
    return mosaic[(h * width + w) * bands() + l];
  }
  // Largest per-pixel spectral energy sum_l theta^2: the Lipschitz constant of the data term.
  double lipschitz() const;
};

struct Measurement {
  std::size_t height = 0, width = 0;
  std::vector<double> y;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

// Tiles the selected spectra: pixel (h, w) sees theta[(h mod s) * s + (w mod s)].
FilterArray build_mosaic(const MetasurfaceDataset& theta, std::size_t height, std::size_t width,
                         std::size_t period);
FilterArray build_mosaic(const SelectionResult& selection, std::size_t height, std::size_t width,
                         std::size_t period);
// Same basic array tiled over a different sensor size.
FilterArray retile(const FilterArray& phi, std::size_t height, std::size_t width);

// y[h,w] = sum_l mosaic[h,w,l] * x[h,w,l] + n[h,w], n ~ N(0, sigma^2) from Rng(seed).
Measurement encode(const HyperCube& x, const FilterArray& phi, double sigma = 0.0,
                   std::uint64_t seed = 0);
// out[h,w,l] = mosaic[h,w,l] * y[h,w].
HyperCube adjoint(const Measurement& y, const FilterArray& phi);
// Per-pixel minimum-norm inverse: mosaic * y / max(sum_l mosaic^2, 1e-8).
HyperCube init_estimate(const Measurement& y, const FilterArray& phi);

// Data-fidelity 0.5 * ||y - encode(x)||^2.
double fidelity(const HyperCube& x, const Measurement& y, const FilterArray& phi);

// HSC1: "HSC1", u32 H, W, bands, then f32 values in band-fastest order.
void save_cube(const HyperCube& cube, const std::filesystem::path& path);
HyperCube load_cube(const std::filesystem::path& path);
// MSR1: "MSR1", u32 H, W, f32 data, f32 sigma, u64 seed.
void save_measurement(const Measurement& m, const std::filesystem::path& path);
Measurement load_measurement(const std::filesystem::path& path);

struct SceneOptions {
  std::size_t height = 32, width = 32, bands = 8;
  std::size_t min_endmembers = 3, max_endmembers = 6;
};

// Synthetic scene: smooth endmember spectra mixed by smooth spatial abundance
// maps under a smooth illumination field; values in [0, 1].
HyperCube generate_scene(const SceneOptions& options, std::uint64_t seed);

// Square-grid augmentation: quarter-turn rotation then optional horizontal flip.
HyperCube rotate_flip(const HyperCube& cube, int quarter_turns, bool flip);
HyperCube crop(const HyperCube& cube, std::size_t top, std::size_t left, std::size_t height,
               std::size_t width);

}  // namespace snapspec
