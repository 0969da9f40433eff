#include "snapspec/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "snapspec/binary_io.hpp"
#include "snapspec/errors.hpp"
#include "snapspec/rng.hpp"

namespace snapspec {

HyperCube::HyperCube(std::size_t h, std::size_t w, std::vector<double> wavelength_grid, double fill)
    : height(h), width(w), bands(wavelength_grid.size()), grid(std::move(wavelength_grid)) {
  if (h == 0 || w == 0 || bands == 0) throw ShapeError("HyperCube dimensions must be positive");
  data.assign(h * w * bands, fill);
}

bool HyperCube::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

double FilterArray::lipschitz() const {
  double best = 0.0;
  const std::size_t b = bands();
  for (std::size_t p = 0; p < height * width; ++p) {
    double acc = 0.0;
    for (std::size_t l = 0; l < b; ++l) acc += mosaic[p * b + l] * mosaic[p * b + l];
    best = std::max(best, acc);
  }
  return best;
}

namespace {

FilterArray tile(std::vector<double> grid, std::vector<double> theta, std::size_t height,
                 std::size_t width, std::size_t period) {
  if (period == 0) throw std::invalid_argument("build_mosaic: period must be positive");
  const std::size_t b = grid.size();
  if (b == 0 || theta.size() != period * period * b) {
    throw std::invalid_argument("build_mosaic: need s*s=" + std::to_string(period * period) +
                                " spectra, got " + std::to_string(b ? theta.size() / b : 0));
  }
  if (height == 0 || width == 0 || height % period != 0 || width % period != 0) {
    throw ShapeError("build_mosaic: " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by the mosaic period " + std::to_string(period));
  }
  for (double v : theta) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("build_mosaic: transmittance outside [0,1]");
  }
  FilterArray fa;
  fa.period = period;
  fa.height = height;
  fa.width = width;
  fa.grid = std::move(grid);
  fa.theta = std::move(theta);
  fa.mosaic.resize(height * width * b);
  for (std::size_t h = 0; h < height; ++h) {
    for (std::size_t w = 0; w < width; ++w) {
      const std::size_t f = (h % period) * period + (w % period);
      std::copy_n(fa.theta.begin() + static_cast<std::ptrdiff_t>(f * b), b,
                  fa.mosaic.begin() + static_cast<std::ptrdiff_t>((h * width + w) * b));
    }
  }
  return fa;
}

}  // namespace

FilterArray build_mosaic(const MetasurfaceDataset& theta, std::size_t height, std::size_t width,
                         std::size_t period) {
  return tile(theta.grid, std::vector<double>(theta.values.begin(), theta.values.end()), height,
              width, period);
}

FilterArray retile(const FilterArray& phi, std::size_t height, std::size_t width) {
  return tile(phi.grid, phi.theta, height, width, phi.period);
}

FilterArray build_mosaic(const SelectionResult& selection, std::size_t height, std::size_t width,
                         std::size_t period) {
  return build_mosaic(selection.theta, height, width, period);
}

namespace {

void check_grid(const std::vector<double>& a, const std::vector<double>& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": grid mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + " bands)");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > 1e-6 * std::max(1.0, std::abs(a[i]))) {
      throw ShapeError(std::string(op) + ": grid mismatch at band " + std::to_string(i));
    }
  }
}

void check_spatial(std::size_t h, std::size_t w, const FilterArray& phi, const char* op) {
  if (h != phi.height || w != phi.width) {
    throw ShapeError(std::string(op) + ": spatial size " + std::to_string(h) + "x" +
                     std::to_string(w) + " does not match filter array " +
                     std::to_string(phi.height) + "x" + std::to_string(phi.width));
  }
}

}  // namespace

Measurement encode(const HyperCube& x, const FilterArray& phi, double sigma, std::uint64_t seed) {
  check_grid(x.grid, phi.grid, "encode");
  check_spatial(x.height, x.width, phi, "encode");
  if (!(sigma >= 0.0)) throw std::invalid_argument("encode: sigma must be >= 0");
  Measurement m;
  m.height = x.height;
  m.width = x.width;
  m.noise_sigma = sigma;
  m.seed = seed;
  m.y.assign(x.height * x.width, 0.0);
  const std::size_t b = x.bands;
  for (std::size_t p = 0; p < m.y.size(); ++p) {
    double acc = 0.0;
    for (std::size_t l = 0; l < b; ++l) acc += phi.mosaic[p * b + l] * x.data[p * b + l];
    m.y[p] = acc;
  }
  if (sigma > 0.0) {
    Rng rng(seed);
    for (auto& v : m.y) v += sigma * rng.normal();
  }
  return m;
}

HyperCube adjoint(const Measurement& y, const FilterArray& phi) {
  check_spatial(y.height, y.width, phi, "adjoint");
  HyperCube out(y.height, y.width, phi.grid);
  const std::size_t b = phi.bands();
  for (std::size_t p = 0; p < y.y.size(); ++p) {
    for (std::size_t l = 0; l < b; ++l) out.data[p * b + l] = phi.mosaic[p * b + l] * y.y[p];
  }
  return out;
}

HyperCube init_estimate(const Measurement& y, const FilterArray& phi) {
  check_spatial(y.height, y.width, phi, "init_estimate");
  HyperCube out(y.height, y.width, phi.grid);
  const std::size_t b = phi.bands();
  for (std::size_t p = 0; p < y.y.size(); ++p) {
    double energy = 0.0;
    for (std::size_t l = 0; l < b; ++l) energy += phi.mosaic[p * b + l] * phi.mosaic[p * b + l];
    const double scale = y.y[p] / std::max(energy, 1e-8);
    for (std::size_t l = 0; l < b; ++l) out.data[p * b + l] = phi.mosaic[p * b + l] * scale;
  }
  return out;
}

double fidelity(const HyperCube& x, const Measurement& y, const FilterArray& phi) {
  const auto pred = encode(x, phi, 0.0, 0);
  double acc = 0.0;
  for (std::size_t p = 0; p < pred.y.size(); ++p) {
    const double d = y.y[p] - pred.y[p];
    acc += d * d;
  }
  return 0.5 * acc;
}

void save_cube(const HyperCube& cube, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  binio::write_magic(os, "HSC1");
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(cube.height));
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(cube.width));
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(cube.bands));
  for (double v : cube.data) binio::write_f32(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

HyperCube load_cube(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open cube file: " + path.string());
  binio::expect_magic(is, "HSC1");
  const auto h = binio::read<std::uint32_t>(is, "height");
  const auto w = binio::read<std::uint32_t>(is, "width");
  const auto b = binio::read<std::uint32_t>(is, "bands");
  if (h == 0 || w == 0 || b < 2) throw FormatError("HSC1 header declares an empty cube");
  HyperCube cube(h, w, uniform_grid(b));
  for (auto& v : cube.data) v = binio::read_f32(is, "cube values");
  binio::expect_eof(is);
  if (!cube.all_finite()) throw FormatError("HSC1 contains non-finite values: " + path.string());
  return cube;
}

void save_measurement(const Measurement& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  binio::write_magic(os, "MSR1");
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(m.height));
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(m.width));
  for (double v : m.y) binio::write_f32(os, static_cast<float>(v));
  binio::write_f32(os, static_cast<float>(m.noise_sigma));
  binio::write<std::uint64_t>(os, m.seed);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Measurement load_measurement(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open measurement file: " + path.string());
  binio::expect_magic(is, "MSR1");
  Measurement m;
  m.height = binio::read<std::uint32_t>(is, "height");
  m.width = binio::read<std::uint32_t>(is, "width");
  if (m.height == 0 || m.width == 0) throw FormatError("MSR1 header declares an empty image");
  m.y.resize(m.height * m.width);
  for (auto& v : m.y) v = binio::read_f32(is, "measurement values");
  m.noise_sigma = binio::read_f32(is, "sigma");
  m.seed = binio::read<std::uint64_t>(is, "seed");
  binio::expect_eof(is);
  for (double v : m.y) {
    if (!std::isfinite(v)) throw FormatError("MSR1 contains non-finite values: " + path.string());
  }
  return m;
}

namespace {

// Sum of a few isotropic Gaussian bumps plus an offset, sampled on the grid.
std::vector<double> smooth_field(Rng& rng, std::size_t h, std::size_t w, std::size_t bumps) {
  std::vector<double> f(h * w, rng.uniform(-0.5, 0.5));
  const double size = static_cast<double>(std::max(h, w));
  for (std::size_t b = 0; b < bumps; ++b) {
    const double cy = rng.uniform(-0.1, 1.1) * static_cast<double>(h);
    const double cx = rng.uniform(-0.1, 1.1) * static_cast<double>(w);
    const double s = rng.uniform(0.12, 0.4) * size;
    const double a = rng.uniform(-1.0, 1.0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = (static_cast<double>(y) - cy) / s, dx = (static_cast<double>(x) - cx) / s;
        f[y * w + x] += a * std::exp(-0.5 * (dy * dy + dx * dx));
      }
    }
  }
  return f;
}

}  // namespace

HyperCube generate_scene(const SceneOptions& opt, std::uint64_t seed) {
  if (opt.min_endmembers == 0 || opt.max_endmembers < opt.min_endmembers) {
    throw std::invalid_argument("generate_scene: invalid endmember range");
  }
  Rng rng(seed);
  HyperCube cube(opt.height, opt.width, uniform_grid(opt.bands));
  const std::size_t e_count =
      opt.min_endmembers + rng.below(opt.max_endmembers - opt.min_endmembers + 1);
  const double lo = cube.grid.front(), span = cube.grid.back() - lo;

  std::vector<std::vector<double>> endmembers(e_count, std::vector<double>(opt.bands));
  for (auto& e : endmembers) {
    const double base = rng.uniform(0.05, 0.3);
    std::fill(e.begin(), e.end(), base);
    const std::size_t lobes = 1 + rng.below(3);
    for (std::size_t l = 0; l < lobes; ++l) {
      const double c = lo + rng.uniform(-0.1, 1.1) * span;
      const double wdt = rng.uniform(0.15, 0.5) * span;
      const double a = rng.uniform(0.2, 0.7);
      for (std::size_t k = 0; k < opt.bands; ++k) {
        const double z = (cube.grid[k] - c) / wdt;
        e[k] += a * std::exp(-0.5 * z * z);
      }
    }
    for (auto& v : e) v = std::min(v, 1.0);
  }

  const std::size_t pixels = opt.height * opt.width;
  std::vector<std::vector<double>> logits;
  for (std::size_t e = 0; e < e_count; ++e) logits.push_back(smooth_field(rng, opt.height, opt.width, 3));
  auto illum = smooth_field(rng, opt.height, opt.width, 2);
  const double sharp = 4.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    double mx = -1e300;
    for (std::size_t e = 0; e < e_count; ++e) mx = std::max(mx, sharp * logits[e][p]);
    std::vector<double> ab(e_count);
    double denom = 0.0;
    for (std::size_t e = 0; e < e_count; ++e) {
      ab[e] = std::exp(sharp * logits[e][p] - mx);
      denom += ab[e];
    }
    const double gain = 0.6 + 0.4 / (1.0 + std::exp(-2.0 * illum[p]));
    for (std::size_t k = 0; k < opt.bands; ++k) {
      double v = 0.0;
      for (std::size_t e = 0; e < e_count; ++e) v += ab[e] / denom * endmembers[e][k];
      cube.data[p * opt.bands + k] = std::clamp(gain * v, 0.0, 1.0);
    }
  }
  return cube;
}

HyperCube rotate_flip(const HyperCube& cube, int quarter_turns, bool flip) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  const bool swap = q % 2 == 1;
  const std::size_t oh = swap ? cube.width : cube.height;
  const std::size_t ow = swap ? cube.height : cube.width;
  HyperCube out(oh, ow, cube.grid);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const std::size_t xx = flip ? ow - 1 - x : x;
      // Source pixel for a counter-clockwise rotation by q quarter turns.
      std::size_t sy = 0, sx = 0;
      switch (q) {
        case 0: sy = y; sx = xx; break;
        case 1: sy = xx; sx = cube.width - 1 - y; break;
        case 2: sy = cube.height - 1 - y; sx = cube.width - 1 - xx; break;
        default: sy = cube.height - 1 - xx; sx = y; break;
      }
      std::copy_n(cube.data.begin() + static_cast<std::ptrdiff_t>(cube.index(sy, sx, 0)), cube.bands,
                  out.data.begin() + static_cast<std::ptrdiff_t>(out.index(y, x, 0)));
    }
  }
  return out;
}

HyperCube crop(const HyperCube& cube, std::size_t top, std::size_t left, std::size_t height,
               std::size_t width) {
  if (top + height > cube.height || left + width > cube.width) {
    throw ShapeError("crop window exceeds cube bounds");
  }
  HyperCube out(height, width, cube.grid);
  for (std::size_t y = 0; y < height; ++y) {
    std::copy_n(cube.data.begin() + static_cast<std::ptrdiff_t>(cube.index(top + y, left, 0)),
                width * cube.bands, out.data.begin() + static_cast<std::ptrdiff_t>(out.index(y, 0, 0)));
  }
  return out;
}

}  // namespace snapspec
