#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace snapspec {

// Uniform SWIR wavelength grid in nm, endpoints included.
std::vector<double> uniform_grid(std::size_t bands, double lo_nm = 1000.0, double hi_nm = 2500.0);

struct SpectrumConstraints {
  double g_max = 0.08;  // largest allowed |T[k+1] - T[k]|
  double r_min = 0.3;   // smallest allowed max(T) - min(T)
};

struct TransmissionSpectrum {
  std::vector<double> grid;
  std::vector<float> values;
};

// Returns a description of the first violated invariant, or nullopt when valid.
std::optional<std::string> validate_spectrum(std::span<const float> values,
                                             std::span<const double> grid,
                                             const SpectrumConstraints& constraints);

// N candidate transmission spectra on one grid; the rows of the selection matrix.
struct MetasurfaceDataset {
  std::vector<double> grid;
  std::vector<float> values;  // N x bands, row-major
  std::string provenance;

  std::size_t size() const { return grid.empty() ? 0 : values.size() / grid.size(); }
  std::size_t bands() const { return grid.size(); }
  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * bands(), bands()};
  }
  TransmissionSpectrum spectrum(std::size_t i) const;
  // Throws std::invalid_argument naming the first invalid row.
  void validate(const SpectrumConstraints& constraints) const;
};

struct SyntheticSpectraOptions {
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::size_t bands = 300;
  SpectrumConstraints constraints{};
  std::size_t min_lobes = 2;
  std::size_t max_lobes = 8;
  // Candidates drawn per spectrum before giving up with RejectionBudgetError.
  std::size_t max_attempts = 1000;
};

// Synthetic stand-in for simulated nanopillar responses: each candidate is a
// clipped sum of random Gaussian lobes mapped into [0.05, 0.95]; candidates
// violating the gradient threshold or the range floor are redrawn. Spectrum i
// draws from its own stream derived from (seed, i).
MetasurfaceDataset generate_synthetic(const SyntheticSpectraOptions& options);

struct CorrelationStats {
  std::vector<double> mu;     // per-row mean
  std::vector<double> sigma;  // per-row population standard deviation
  std::vector<double> cov;    // N x N population covariance
  std::vector<double> p;      // N x N Pearson coefficients
  std::size_t n = 0;

  double pearson(std::size_t i, std::size_t j) const { return p[i * n + j]; }
};

// Population (divide-by-bands) statistics. Throws DegenerateSpectrumError for a
// zero-variance row.
CorrelationStats pearson_stats(const MetasurfaceDataset& dataset);
CorrelationStats pearson_stats(std::span<const float> rows, std::size_t bands);

// SPC1: "SPC1", u32 N, u32 bands, bands x f64 grid, N x bands f32 values, little-endian.
void save_spectra(const MetasurfaceDataset& dataset, const std::filesystem::path& path);
MetasurfaceDataset load_spectra(const std::filesystem::path& path);
// As above, additionally rejecting files whose grid differs from `expected_grid`.
MetasurfaceDataset load_spectra(const std::filesystem::path& path,
                                std::span<const double> expected_grid);

// One row per spectrum; header row holds the wavelengths.
void export_spectra_csv(const MetasurfaceDataset& dataset, const std::filesystem::path& path);

}  // namespace snapspec
