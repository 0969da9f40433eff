#include "snapspec/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "snapspec/errors.hpp"

namespace snapspec {

double psnr(std::span<const double> x, std::span<const double> ref, double max_val) {
  if (x.size() != ref.size() || x.empty()) throw ShapeError("psnr: shape mismatch");
  if (!(max_val > 0.0)) throw std::invalid_argument("psnr: max_val must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - ref[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double psnr(const HyperCube& x, const HyperCube& ref, double max_val) {
  if (x.height != ref.height || x.width != ref.width || x.bands != ref.bands) {
    throw ShapeError("psnr: cube shapes differ");
  }
  return psnr(x.data, ref.data, max_val);
}

namespace {

std::vector<double> gaussian_kernel(std::size_t n, double sigma) {
  std::vector<double> k(n);
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - c;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

// Valid-mode separable filtering: (h - n + 1) x (w - n + 1) output.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * img[y * w + x + i];
      tmp[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim_plane(std::span<const double> x, std::span<const double> ref, std::size_t height,
                  std::size_t width, const SsimOptions& opt) {
  if (x.size() != height * width || ref.size() != height * width) {
    throw ShapeError("ssim: plane size mismatch");
  }
  if (height < opt.window || width < opt.window) {
    throw ShapeError("ssim: image " + std::to_string(height) + "x" + std::to_string(width) +
                     " is smaller than the " + std::to_string(opt.window) + "x" +
                     std::to_string(opt.window) + " window");
  }
  const auto k = gaussian_kernel(opt.window, opt.sigma);
  const std::size_t n = height * width;
  std::vector<double> a(x.begin(), x.end()), b(ref.begin(), ref.end());
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, height, width, k);
  const auto mu_b = filter_valid(b, height, width, k);
  const auto s_aa = filter_valid(aa, height, width, k);
  const auto s_bb = filter_valid(bb, height, width, k);
  const auto s_ab = filter_valid(ab, height, width, k);
  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = s_aa[i] - mu_a[i] * mu_a[i];
    const double vb = s_bb[i] - mu_b[i] * mu_b[i];
    const double cov = s_ab[i] - mu_a[i] * mu_b[i];
    total += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double ssim(const HyperCube& x, const HyperCube& ref, const SsimOptions& opt) {
  if (x.height != ref.height || x.width != ref.width || x.bands != ref.bands) {
    throw ShapeError("ssim: cube shapes differ");
  }
  const std::size_t plane = x.height * x.width;
  std::vector<double> a(plane), b(plane);
  double total = 0.0;
  for (std::size_t l = 0; l < x.bands; ++l) {
    for (std::size_t p = 0; p < plane; ++p) {
      a[p] = x.data[p * x.bands + l];
      b[p] = ref.data[p * x.bands + l];
    }
    total += ssim_plane(a, b, x.height, x.width, opt);
  }
  return total / static_cast<double>(x.bands);
}

QualityReport evaluate(const std::vector<ScenePair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: no scene pairs");
  QualityReport r;
  for (const auto& p : pairs) {
    const double db = std::min(psnr(p.estimate, p.truth), kPsnrCapDb);
    r.per_scene.push_back({p.scene_id, db, ssim(p.estimate, p.truth)});
    r.average_psnr_db += db;
    r.average_ssim += r.per_scene.back().ssim;
  }
  r.average_psnr_db /= static_cast<double>(pairs.size());
  r.average_ssim /= static_cast<double>(pairs.size());
  return r;
}

void write_report(const QualityReport& report, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.precision(17);
  os << "scene_id,psnr_db,ssim\n";
  for (const auto& s : report.per_scene) os << s.scene_id << ',' << s.psnr_db << ',' << s.ssim << '\n';
  os << "average," << report.average_psnr_db << ',' << report.average_ssim << '\n';
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

QualityReport read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "scene_id,psnr_db,ssim") {
    throw FormatError("unexpected report header in " + path.string());
  }
  QualityReport r;
  bool saw_average = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, a, b;
    if (!std::getline(ss, id, ',') || !std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
      throw FormatError("malformed report row: " + line);
    }
    if (id == "average") {
      r.average_psnr_db = std::stod(a);
      r.average_ssim = std::stod(b);
      saw_average = true;
    } else {
      r.per_scene.push_back({id, std::stod(a), std::stod(b)});
    }
  }
  if (!saw_average) throw FormatError("report has no average row: " + path.string());
  return r;
}

}  // namespace snapspec
