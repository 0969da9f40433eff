#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "snapspec/spectra.hpp"

namespace snapspec {

struct SelectionResult {
  std::vector<std::size_t> indices;  // distinct rows of the source dataset, in selection order
  MetasurfaceDataset theta;          // the selected rows, copied verbatim
  std::vector<double> pairwise;      // k x k |Pearson| matrix
  double max_offdiag = 0.0;
  bool converged = true;             // only meaningful for the iterative baseline
  std::size_t iterations = 0;

  std::size_t k() const { return indices.size(); }
};

// Builds theta, the |Pearson| matrix and max_offdiag for a given index list.
SelectionResult make_selection(const MetasurfaceDataset& dataset, const CorrelationStats& stats,
                               std::vector<std::size_t> indices);

// Greedy minimum-correlation selection modelled on farthest point sampling.
//
// The seed row minimises its mean |p| to all other rows. A running score
// d (initialised to -inf) is raised to c[last, j] after every pick, where c is
// |p| (use_abs) or the raw coefficient, and the next row is the argmin of d;
// ties go to the smallest index. Rows already picked are not eligible again.
SelectionResult select_fps(const MetasurfaceDataset& dataset, std::size_t k, bool use_abs = true);
SelectionResult select_fps(const MetasurfaceDataset& dataset, const CorrelationStats& stats,
                           std::size_t k, bool use_abs = true);

struct InnerProductOptions {
  double tau = 0.9;               // upper threshold on normalised inner products
  std::uint64_t seed = 0;
  std::size_t max_iterations = 1000;
};

// Threshold-replacement baseline using normalised inner products of the raw
// responses: start from k random rows and replace members whose largest
// normalised inner product with another member exceeds tau by random fresh
// rows. Returns the best set seen; converged is false when the cap is hit.
SelectionResult select_innerproduct_baseline(const MetasurfaceDataset& dataset, std::size_t k,
                                             const InnerProductOptions& options);

// Exhaustive min-max |p| over all k-subsets (lexicographically first optimum).
// Throws std::length_error when C(N, k) exceeds `budget`.
SelectionResult brute_force_oracle(const MetasurfaceDataset& dataset, std::size_t k,
                                   std::uint64_t budget = 1'000'000);

// Max over i != j of |p| for an arbitrary subset.
double max_abs_offdiag(const CorrelationStats& stats, std::span<const std::size_t> subset);

std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

// Writes the k x k |Pearson| matrix (header row and first column are dataset
// indices) and the selected spectra CSV.
void correlation_report(const SelectionResult& result, const std::filesystem::path& matrix_csv,
                        const std::filesystem::path& spectra_csv);
std::vector<double> read_matrix_csv(const std::filesystem::path& path, std::size_t* dim = nullptr);

// SPC1 file of the theta rows plus "<stem>.indices.csv" next to it.
void save_selection(const SelectionResult& result, const std::filesystem::path& spc_path);
std::filesystem::path indices_sidecar(const std::filesystem::path& spc_path);
std::vector<std::size_t> read_indices_csv(const std::filesystem::path& path);

}  // namespace snapspec
