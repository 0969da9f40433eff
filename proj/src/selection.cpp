#include "snapspec/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "snapspec/errors.hpp"
#include "snapspec/rng.hpp"

namespace snapspec {

SelectionResult make_selection(const MetasurfaceDataset& dataset, const CorrelationStats& stats,
                               std::vector<std::size_t> indices) {
  SelectionResult r;
  const std::size_t k = indices.size();
  r.theta.grid = dataset.grid;
  r.theta.values.reserve(k * dataset.bands());
  for (auto i : indices) {
    auto row = dataset.row(i);
    r.theta.values.insert(r.theta.values.end(), row.begin(), row.end());
  }
  r.theta.provenance = "selection from " + dataset.provenance;
  r.pairwise.assign(k * k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      r.pairwise[a * k + b] = a == b ? 1.0 : std::abs(stats.pearson(indices[a], indices[b]));
      if (a != b) r.max_offdiag = std::max(r.max_offdiag, r.pairwise[a * k + b]);
    }
  }
  r.indices = std::move(indices);
  return r;
}

double max_abs_offdiag(const CorrelationStats& stats, std::span<const std::size_t> subset) {
  double m = 0.0;
  for (std::size_t a = 0; a < subset.size(); ++a) {
    for (std::size_t b = a + 1; b < subset.size(); ++b) {
      m = std::max(m, std::abs(stats.pearson(subset[a], subset[b])));
    }
  }
  return m;
}

SelectionResult select_fps(const MetasurfaceDataset& dataset, std::size_t k, bool use_abs) {
  if (k > dataset.size()) {
    throw std::invalid_argument("select_fps: k=" + std::to_string(k) + " exceeds N=" +
                                std::to_string(dataset.size()));
  }
  return select_fps(dataset, pearson_stats(dataset), k, use_abs);
}

SelectionResult select_fps(const MetasurfaceDataset& dataset, const CorrelationStats& stats,
                           std::size_t k, bool use_abs) {
  const std::size_t n = stats.n;
  if (k == 0) throw std::invalid_argument("select_fps: k must be >= 1");
  if (k > n) {
    throw std::invalid_argument("select_fps: k=" + std::to_string(k) + " exceeds N=" +
                                std::to_string(n));
  }
  // Reference row: smallest mean |p| to the other rows.
  std::size_t index = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) acc += std::abs(stats.pearson(i, j));
    }
    const double mean = n > 1 ? acc / static_cast<double>(n - 1) : 0.0;
    if (mean < best) {
      best = mean;
      index = i;
    }
  }

  std::vector<std::size_t> picked{index};
  std::vector<bool> taken(n, false);
  taken[index] = true;
  std::vector<double> d(n, -std::numeric_limits<double>::infinity());
  while (picked.size() < k) {
    for (std::size_t j = 0; j < n; ++j) {
      const double p = stats.pearson(index, j);
      d[j] = std::max(d[j], use_abs ? std::abs(p) : p);
    }
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (!taken[j] && (next == n || d[j] < d[next])) next = j;
    }
    index = next;
    taken[index] = true;
    picked.push_back(index);
  }
  return make_selection(dataset, stats, std::move(picked));
}

namespace {

std::vector<double> normalized_inner_products(const MetasurfaceDataset& ds) {
  const std::size_t n = ds.size(), bands = ds.bands();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (float v : ds.row(i)) acc += static_cast<double>(v) * v;
    norms[i] = std::sqrt(acc);
  }
  std::vector<double> g(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double acc = 0.0;
      const float* a = ds.values.data() + i * bands;
      const float* b = ds.values.data() + j * bands;
      for (std::size_t t = 0; t < bands; ++t) acc += static_cast<double>(a[t]) * b[t];
      const double denom = norms[i] * norms[j];
      g[i * n + j] = g[j * n + i] = denom > 0.0 ? acc / denom : 0.0;
    }
  }
  return g;
}

}  // namespace

SelectionResult select_innerproduct_baseline(const MetasurfaceDataset& dataset, std::size_t k,
                                             const InnerProductOptions& opt) {
  const std::size_t n = dataset.size();
  if (k == 0 || k > n) {
    throw std::invalid_argument("select_innerproduct_baseline: need 1 <= k <= N");
  }
  if (!(opt.tau > 0.0 && opt.tau <= 1.0)) {
    throw std::invalid_argument("select_innerproduct_baseline: tau must lie in (0, 1]");
  }
  const auto stats = pearson_stats(dataset);
  const auto g = normalized_inner_products(dataset);
  Rng rng(opt.seed);

  // Partial Fisher-Yates for the initial members.
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + rng.below(n - i)]);
  }
  std::vector<std::size_t> members(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<bool> in_set(n, false);
  for (auto m : members) in_set[m] = true;

  auto worst_member = [&](double* worst_value) {
    std::size_t worst = k;
    double wv = -1.0;
    for (std::size_t a = 0; a < k; ++a) {
      double mx = -1.0;
      for (std::size_t b = 0; b < k; ++b) {
        if (a != b) mx = std::max(mx, g[members[a] * n + members[b]]);
      }
      if (mx > wv) {
        wv = mx;
        worst = a;
      }
    }
    *worst_value = wv;
    return worst;
  };

  std::vector<std::size_t> best_members = members;
  double best_score = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::size_t iter = 0;
  for (;; ++iter) {
    double score = 0.0;
    const std::size_t worst = worst_member(&score);
    if (score < best_score) {
      best_score = score;
      best_members = members;
    }
    if (score <= opt.tau) {
      converged = true;
      break;
    }
    if (iter >= opt.max_iterations || k == n) break;
    std::size_t candidate = rng.below(n);
    while (in_set[candidate]) candidate = rng.below(n);
    in_set[members[worst]] = false;
    members[worst] = candidate;
    in_set[candidate] = true;
  }
  auto result = make_selection(dataset, stats, converged ? members : best_members);
  result.converged = converged;
  result.iterations = iter;
  return result;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  long double r = 1.0L;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * static_cast<long double>(n - k + i) / i;
  return static_cast<std::uint64_t>(std::llround(r));
}

SelectionResult brute_force_oracle(const MetasurfaceDataset& dataset, std::size_t k,
                                   std::uint64_t budget) {
  const std::size_t n = dataset.size();
  if (k == 0 || k > n) throw std::invalid_argument("brute_force_oracle: need 1 <= k <= N");
  if (binomial(n, k) > budget) {
    throw std::length_error("brute_force_oracle: C(" + std::to_string(n) + "," +
                            std::to_string(k) + ") exceeds budget " + std::to_string(budget));
  }
  const auto stats = pearson_stats(dataset);
  std::vector<std::size_t> combo(k);
  std::iota(combo.begin(), combo.end(), 0);
  std::vector<std::size_t> best = combo;
  double best_score = std::numeric_limits<double>::infinity();
  for (;;) {
    const double score = max_abs_offdiag(stats, combo);
    if (score < best_score) {
      best_score = score;
      best = combo;
    }
    // Advance to the next combination in lexicographic order.
    std::size_t i = k;
    while (i > 0 && combo[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++combo[i - 1];
    for (std::size_t j = i; j < k; ++j) combo[j] = combo[j - 1] + 1;
  }
  return make_selection(dataset, stats, std::move(best));
}

void correlation_report(const SelectionResult& result, const std::filesystem::path& matrix_csv,
                        const std::filesystem::path& spectra_csv) {
  const std::size_t k = result.k();
  {
    std::ofstream os(matrix_csv);
    if (!os) throw std::runtime_error("cannot open for writing: " + matrix_csv.string());
    os << "index";
    for (auto i : result.indices) os << ',' << i;
    os << '\n';
    os.precision(17);
    for (std::size_t a = 0; a < k; ++a) {
      os << result.indices[a];
      for (std::size_t b = 0; b < k; ++b) os << ',' << result.pairwise[a * k + b];
      os << '\n';
    }
    if (!os) throw std::runtime_error("write failed: " + matrix_csv.string());
  }
  export_spectra_csv(result.theta, spectra_csv);
}

std::vector<double> read_matrix_csv(const std::filesystem::path& path, std::size_t* dim) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  std::getline(is, line);  // header
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // row label
    while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
    ++rows;
  }
  if (rows * rows != values.size()) throw FormatError("matrix CSV is not square: " + path.string());
  if (dim) *dim = rows;
  return values;
}

std::filesystem::path indices_sidecar(const std::filesystem::path& spc_path) {
  auto p = spc_path;
  p.replace_extension(".indices.csv");
  return p;
}

void save_selection(const SelectionResult& result, const std::filesystem::path& spc_path) {
  save_spectra(result.theta, spc_path);
  std::ofstream os(indices_sidecar(spc_path));
  if (!os) throw std::runtime_error("cannot write indices sidecar for " + spc_path.string());
  os << "position,index\n";
  for (std::size_t i = 0; i < result.indices.size(); ++i) os << i << ',' << result.indices[i] << '\n';
}

std::vector<std::size_t> read_indices_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<std::size_t> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("malformed indices CSV: " + path.string());
    out.push_back(std::stoull(line.substr(comma + 1)));
  }
  return out;
}

}  // namespace snapspec
