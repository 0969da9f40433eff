#include "snapspec/parameters.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "snapspec/binary_io.hpp"
#include "snapspec/errors.hpp"

namespace snapspec {

template <typename T>
Tensor<T> ParameterSet<T>::add(const std::string& name, Tensor<T> tensor) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  tensor.set_requires_grad(true);
  items_.push_back({name, tensor});
  return tensor;
}

template <typename T>
std::vector<Tensor<T>> ParameterSet<T>::tensors() const {
  std::vector<Tensor<T>> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(p.tensor);
  return out;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return p.tensor;
  }
  throw std::out_of_range("unknown parameter: " + name);
}

template <typename T>
bool ParameterSet<T>::contains(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return true;
  }
  return false;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

template <typename T>
void save_checkpoint(const ParameterSet<T>& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  binio::write_magic(os, "ERP1");
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params.items()) {
    if (p.name.size() > 0xFFFF) throw std::invalid_argument("parameter name too long: " + p.name);
    binio::write<std::uint16_t>(os, static_cast<std::uint16_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    binio::write<std::uint8_t>(os, static_cast<std::uint8_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (T v : p.tensor.data()) binio::write_f32(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

template <typename T>
std::vector<Parameter<T>> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  binio::expect_magic(is, "ERP1");
  const auto count = binio::read<std::uint32_t>(is, "parameter count");
  std::vector<Parameter<T>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = binio::read<std::uint16_t>(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("truncated file while reading parameter name");
    const auto rank = binio::read<std::uint8_t>(is, "rank");
    if (rank == 0) throw FormatError("parameter " + name + " has rank 0");
    Shape shape(rank);
    for (auto& d : shape) {
      d = binio::read<std::uint32_t>(is, "dimension");
      if (d == 0) throw FormatError("parameter " + name + " has a zero dimension");
    }
    std::vector<T> data(shape_numel(shape));
    for (auto& v : data) v = static_cast<T>(binio::read_f32(is, "parameter values"));
    out.push_back({name, Tensor<T>(shape, std::move(data), true)});
  }
  binio::expect_eof(is);
  return out;
}

template <typename T>
void load_checkpoint(ParameterSet<T>& params, const std::filesystem::path& path) {
  auto loaded = read_checkpoint<T>(path);
  if (loaded.size() != params.size()) {
    throw FormatError("checkpoint has " + std::to_string(loaded.size()) + " parameters, model has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const auto& target = params.items()[i];
    if (loaded[i].name != target.name || loaded[i].tensor.shape() != target.tensor.shape()) {
      throw FormatError("checkpoint parameter " + loaded[i].name + " " +
                        shape_str(loaded[i].tensor.shape()) + " does not match model parameter " +
                        target.name + " " + shape_str(target.tensor.shape()));
    }
    auto dst = Tensor<T>(target.tensor).mutable_data();
    auto src = loaded[i].tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, Options opt) : params_(std::move(params)), opt_(opt) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  double sq = 0.0;
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * g;
  }
  last_norm_ = std::sqrt(sq);
  const double scale = (opt_.clip_norm > 0.0 && last_norm_ > opt_.clip_norm) ? opt_.clip_norm / last_norm_ : 1.0;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (!params_[k].has_grad()) continue;
    const auto g = params_[k].grad();
    auto x = params_[k].mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = scale * g[i];
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      x[i] = static_cast<T>(x[i] - opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Adam<float>;
template class Adam<double>;
template void save_checkpoint(const ParameterSet<float>&, const std::filesystem::path&);
template void save_checkpoint(const ParameterSet<double>&, const std::filesystem::path&);
template std::vector<Parameter<float>> read_checkpoint(const std::filesystem::path&);
template std::vector<Parameter<double>> read_checkpoint(const std::filesystem::path&);
template void load_checkpoint(ParameterSet<float>&, const std::filesystem::path&);
template void load_checkpoint(ParameterSet<double>&, const std::filesystem::path&);

}  // namespace snapspec
