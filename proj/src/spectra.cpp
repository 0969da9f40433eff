#include "snapspec/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "snapspec/binary_io.hpp"
#include "snapspec/errors.hpp"
#include "snapspec/rng.hpp"

namespace snapspec {

std::vector<double> uniform_grid(std::size_t bands, double lo_nm, double hi_nm) {
  if (bands < 2) throw std::invalid_argument("wavelength grid needs at least 2 bands");
  std::vector<double> grid(bands);
  const double step = (hi_nm - lo_nm) / static_cast<double>(bands - 1);
  for (std::size_t i = 0; i < bands; ++i) grid[i] = lo_nm + step * static_cast<double>(i);
  grid.back() = hi_nm;
  return grid;
}

std::optional<std::string> validate_spectrum(std::span<const float> values,
                                             std::span<const double> grid,
                                             const SpectrumConstraints& constraints) {
  if (values.size() != grid.size()) return "length does not match grid";
  if (values.empty()) return "empty spectrum";
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) return "grid is not strictly increasing";
  }
  float lo = values[0], hi = values[0];
  for (std::size_t k = 0; k < values.size(); ++k) {
    const float v = values[k];
    if (!(v >= 0.0f && v <= 1.0f)) return "transmittance outside [0,1] at band " + std::to_string(k);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    if (k > 0 && std::abs(static_cast<double>(v) - values[k - 1]) > constraints.g_max) {
      return "gradient threshold exceeded at band " + std::to_string(k);
    }
  }
  if (static_cast<double>(hi) - lo < constraints.r_min) return "peak-to-valley range below floor";
  return std::nullopt;
}

TransmissionSpectrum MetasurfaceDataset::spectrum(std::size_t i) const {
  auto r = row(i);
  return {grid, std::vector<float>(r.begin(), r.end())};
}

void MetasurfaceDataset::validate(const SpectrumConstraints& constraints) const {
  if (grid.empty() || values.size() % grid.size() != 0) {
    throw std::invalid_argument("dataset values do not tile the grid");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (auto err = validate_spectrum(row(i), grid, constraints)) {
      throw std::invalid_argument("spectrum " + std::to_string(i) + ": " + *err);
    }
  }
}

namespace {

std::vector<float> draw_candidate(Rng& rng, std::span<const double> grid,
                                  const SyntheticSpectraOptions& opt) {
  const double lo = grid.front(), hi = grid.back(), span = hi - lo;
  const std::size_t lobes =
      opt.min_lobes + static_cast<std::size_t>(rng.below(opt.max_lobes - opt.min_lobes + 1));
  std::vector<double> acc(grid.size(), 0.0);
  for (std::size_t l = 0; l < lobes; ++l) {
    const double center = rng.uniform(lo - 0.1 * span, hi + 0.1 * span);
    const double width = rng.uniform(0.02, 0.2) * span;
    const double amp = rng.uniform(0.15, 1.0);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double z = (grid[k] - center) / width;
      acc[k] += amp * std::exp(-0.5 * z * z);
    }
  }
  std::vector<float> out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    out[k] = static_cast<float>(0.05 + 0.9 * std::clamp(acc[k], 0.0, 1.0));
  }
  return out;
}

}  // namespace

MetasurfaceDataset generate_synthetic(const SyntheticSpectraOptions& opt) {
  if (opt.count == 0) throw std::invalid_argument("generate_synthetic: count must be >= 1");
  if (!(opt.constraints.g_max > 0.0 && opt.constraints.g_max <= 1.0)) {
    throw std::invalid_argument("generate_synthetic: g_max must lie in (0, 1]");
  }
  if (opt.min_lobes == 0 || opt.max_lobes < opt.min_lobes) {
    throw std::invalid_argument("generate_synthetic: invalid lobe count range");
  }
  MetasurfaceDataset ds;
  ds.grid = uniform_grid(opt.bands);
  ds.values.reserve(opt.count * opt.bands);
  for (std::size_t i = 0; i < opt.count; ++i) {
    Rng rng(derive_seed(opt.seed, i));
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < opt.max_attempts && !accepted; ++attempt) {
      auto candidate = draw_candidate(rng, ds.grid, opt);
      if (!validate_spectrum(candidate, ds.grid, opt.constraints)) {
        ds.values.insert(ds.values.end(), candidate.begin(), candidate.end());
        accepted = true;
      }
    }
    if (!accepted) {
      throw RejectionBudgetError("generate_synthetic: spectrum " + std::to_string(i) +
                                 " rejected " + std::to_string(opt.max_attempts) +
                                 " times; g_max=" + std::to_string(opt.constraints.g_max) +
                                 " cannot admit r_min=" + std::to_string(opt.constraints.r_min));
    }
  }
  std::ostringstream prov;
  prov << "synthetic seed=" << opt.seed << " n=" << opt.count << " bands=" << opt.bands
       << " gmax=" << opt.constraints.g_max << " rmin=" << opt.constraints.r_min
       << " lobes=" << opt.min_lobes << "-" << opt.max_lobes;
  ds.provenance = prov.str();
  return ds;
}

CorrelationStats pearson_stats(std::span<const float> rows, std::size_t bands) {
  if (bands == 0 || rows.size() % bands != 0) {
    throw std::invalid_argument("pearson_stats: rows do not tile the band count");
  }
  const std::size_t n = rows.size() / bands;
  const double lambda = static_cast<double>(bands);
  CorrelationStats s;
  s.n = n;
  s.mu.resize(n);
  s.sigma.resize(n);
  std::vector<double> centered(rows.size());
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < bands; ++k) acc += rows[i * bands + k];
    s.mu[i] = acc / lambda;
    double var = 0.0;
    for (std::size_t k = 0; k < bands; ++k) {
      const double d = rows[i * bands + k] - s.mu[i];
      centered[i * bands + k] = d;
      var += d * d;
    }
    s.sigma[i] = std::sqrt(var / lambda);
    if (!(s.sigma[i] > 0.0)) {
      throw DegenerateSpectrumError(i, "pearson_stats: spectrum " + std::to_string(i) +
                                           " has zero variance");
    }
  }
  s.cov.assign(n * n, 0.0);
  s.p.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ci = centered.data() + i * bands;
    for (std::size_t j = i; j < n; ++j) {
      const double* cj = centered.data() + j * bands;
      double acc = 0.0;
      for (std::size_t k = 0; k < bands; ++k) acc += ci[k] * cj[k];
      const double cov = acc / lambda;
      const double p = cov / (s.sigma[i] * s.sigma[j]);
      s.cov[i * n + j] = s.cov[j * n + i] = cov;
      s.p[i * n + j] = s.p[j * n + i] = p;
    }
  }
  return s;
}

CorrelationStats pearson_stats(const MetasurfaceDataset& dataset) {
  return pearson_stats(dataset.values, dataset.bands());
}

void save_spectra(const MetasurfaceDataset& dataset, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  binio::write_magic(os, "SPC1");
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.size()));
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.bands()));
  for (double g : dataset.grid) binio::write_f64(os, g);
  for (float v : dataset.values) binio::write_f32(os, v);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

MetasurfaceDataset load_spectra(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open spectra file: " + path.string());
  binio::expect_magic(is, "SPC1");
  const auto n = binio::read<std::uint32_t>(is, "spectrum count");
  const auto bands = binio::read<std::uint32_t>(is, "band count");
  if (n == 0 || bands == 0) throw FormatError("SPC1 header declares an empty dataset");
  MetasurfaceDataset ds;
  ds.grid.resize(bands);
  for (auto& g : ds.grid) g = binio::read_f64(is, "wavelength grid");
  for (std::size_t k = 1; k < ds.grid.size(); ++k) {
    if (!(ds.grid[k] > ds.grid[k - 1])) throw FormatError("SPC1 grid is not strictly increasing");
  }
  ds.values.resize(static_cast<std::size_t>(n) * bands);
  for (auto& v : ds.values) v = binio::read_f32(is, "transmittance values");
  binio::expect_eof(is);
  ds.provenance = "file " + path.string();
  return ds;
}

MetasurfaceDataset load_spectra(const std::filesystem::path& path,
                                std::span<const double> expected_grid) {
  auto ds = load_spectra(path);
  if (!std::equal(ds.grid.begin(), ds.grid.end(), expected_grid.begin(), expected_grid.end())) {
    throw FormatError("SPC1 grid mismatch in " + path.string() + ": file has " +
                      std::to_string(ds.grid.size()) + " bands, expected " +
                      std::to_string(expected_grid.size()));
  }
  return ds;
}

void export_spectra_csv(const MetasurfaceDataset& dataset, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.precision(17);
  for (std::size_t k = 0; k < dataset.bands(); ++k) os << (k ? "," : "") << dataset.grid[k];
  os << '\n';
  os.precision(9);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto r = dataset.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << r[k];
    os << '\n';
  }
}

}  // namespace snapspec
