#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "snapspec/tensor.hpp"

namespace snapspec {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

// Ordered registry of named learnable tensors. Names are unique; registering
// the same tensor object twice under one name is how cross-stage sharing is
// expressed (the registry keeps a single entry).
template <typename T>
class ParameterSet {
 public:
  // Registers a new leaf tensor; throws std::invalid_argument on duplicate names.
  Tensor<T> add(const std::string& name, Tensor<T> tensor);
  const std::vector<Parameter<T>>& items() const { return items_; }
  std::vector<Tensor<T>> tensors() const;
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter<T>> items_;
};

// ERP1 checkpoint: "ERP1", u32 count, then per parameter u16 name length,
// UTF-8 name, u8 rank, u32 dims[rank], f32 values; little-endian.
template <typename T>
void save_checkpoint(const ParameterSet<T>& params, const std::filesystem::path& path);
// Reads an ERP1 file into (name, tensor) pairs in file order.
template <typename T>
std::vector<Parameter<T>> read_checkpoint(const std::filesystem::path& path);
// Copies checkpoint values into an existing registry; names and shapes must match exactly.
template <typename T>
void load_checkpoint(ParameterSet<T>& params, const std::filesystem::path& path);

// Adam-style optimiser with per-parameter first/second moment estimates.
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // rescale the joint gradient to this L2 norm when exceeded; 0 disables
  };

  Adam(std::vector<Tensor<T>> params, Options opt);
  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }
  // L2 norm of all gradients seen by the last step(), before clipping.
  double last_grad_norm() const { return last_norm_; }

 private:
  std::vector<Tensor<T>> params_;
  Options opt_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
  double last_norm_ = 0.0;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace snapspec
