#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "snapspec/ops.hpp"
#include "snapspec/parameters.hpp"
#include "snapspec/rng.hpp"

// Proximal mapping network: a three-level U-shaped stack of spatial-spectral /
// low-rank prior blocks with adaptive feature transfer from encoder to decoder.
// Feature maps are [C, H, W].
namespace snapspec::erra {

struct ErraConfig {
  std::size_t bands = 8;      // spectral bands of the cube entering/leaving the network
  std::size_t channels = 32;  // C, feature width of the first level
  std::size_t reduction = 4;  // r, low-rank squeeze ratio
  std::size_t queries = 8;    // m, query tokens in the low-rank prior
  bool bias = true;           // convolutions/linears carry a bias term
};

enum class Init {
  // Centered uniform fan-in scaling; branch output projections start at zero so
  // an untrained block is the identity.
  kStandard,
  // Every weight random (including the usually-zero projections); used by gradient checks.
  kAllRandom,
};

// Handles the naming/initialisation of parameters created by one network.
template <typename T>
class Builder {
 public:
  Builder(ParameterSet<T>& params, std::uint64_t seed, Init init) : params_(params), rng_(seed), init_(init) {}

  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)), or zeros when `zero` and init is kStandard.
  Tensor<T> uniform(const std::string& name, Shape shape, std::size_t fan_in, bool zero = false);
  Tensor<T> constant(const std::string& name, Shape shape, T value);
  Init init() const { return init_; }
  ParameterSet<T>& params() { return params_; }

 private:
  ParameterSet<T>& params_;
  Rng rng_;
  Init init_;
};

template <typename T>
struct Conv {
  Tensor<T> weight, bias;
  std::size_t stride = 1, padding = 0;
  bool depthwise = false;

  static Conv create(Builder<T>& b, const std::string& name, std::size_t in, std::size_t out,
                     std::size_t kernel, std::size_t stride, bool has_bias, bool zero = false);
  static Conv create_depthwise(Builder<T>& b, const std::string& name, std::size_t channels,
                               std::size_t kernel, bool has_bias);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

// 3x3 transposed convolution, stride 2: doubles the spatial extent.
template <typename T>
struct UpConv {
  Tensor<T> weight, bias;
  static UpConv create(Builder<T>& b, const std::string& name, std::size_t in, std::size_t out,
                       bool has_bias);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

// Row-vector linear map: [1, in] -> [1, out].
template <typename T>
struct Linear {
  Tensor<T> weight, bias;  // [in, out], [1, out]
  static Linear create(Builder<T>& b, const std::string& name, std::size_t in, std::size_t out,
                       bool has_bias, bool zero = false);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

// Channel layer norm with per-channel affine.
template <typename T>
struct ChannelNorm {
  Tensor<T> gamma, beta;  // [C, 1, 1]
  static ChannelNorm create(Builder<T>& b, const std::string& name, std::size_t channels);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

// Spatial-spectral prior learning: transposed (C x C) self-attention
// V * softmax(KQ / alpha) projected by W_p, plus a 3x3 conv + GELU spatial branch.
// Q and K are scaled to unit length over the spatial axis before the product.
template <typename T>
struct Sspl {
  Conv<T> q, k, v, out_proj, spatial;
  Tensor<T> alpha_raw;  // alpha = softplus(alpha_raw)

  static Sspl create(Builder<T>& b, const std::string& name, std::size_t channels, bool has_bias);
  Tensor<T> alpha() const;
  // Row-normalised C x C attention map.
  Tensor<T> attention(const Tensor<T>& x) const;
  Tensor<T> operator()(const Tensor<T>& x) const;
};

// One learnable query prior Q (m x C/r) per U-Net level, shared by every
// unfolding stage of a model.
template <typename T>
struct LowRankPriors {
  std::array<Tensor<T>, 3> query;
  std::array<std::size_t, 3> reduced{};

  static LowRankPriors create(Builder<T>& b, const ErraConfig& cfg);
};

// Low-rank prior learning: squeeze the pooled channel descriptor to rank C/r,
// attend over the shared query prior, expand and rescale the input channels.
template <typename T>
struct Lrpl {
  Linear<T> squeeze, expand;
  std::size_t reduced = 0;

  static Lrpl create(Builder<T>& b, const std::string& name, std::size_t channels,
                     std::size_t reduction, bool has_bias);
  // F_atten in [1, m].
  Tensor<T> attention(const Tensor<T>& x, const Tensor<T>& query) const;
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& query) const;
};

// 1x1 conv (C -> 2C), GELU, 1x1 conv back to C.
template <typename T>
struct FeedForward {
  Conv<T> expand, project;
  static FeedForward create(Builder<T>& b, const std::string& name, std::size_t channels, bool has_bias);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

// x1 = x + sspl(LN(x)) + lrpl(LN(x)); out = x1 + FFN(LN(x1)). Decoder blocks omit lrpl.
template <typename T>
struct PriorBlock {
  ChannelNorm<T> norm1, norm2;
  Sspl<T> sspl;
  std::optional<Lrpl<T>> lrpl;
  FeedForward<T> ffn;
  std::size_t level = 0;

  static PriorBlock create(Builder<T>& b, const std::string& name, std::size_t channels,
                           std::size_t level, bool with_lrpl, const ErraConfig& cfg);
  Tensor<T> operator()(const Tensor<T>& x, const LowRankPriors<T>& priors) const;
};

// concat -> 1x1 conv -> GELU -> 1x1 conv.
template <typename T>
struct Fusion {
  Conv<T> first, second;
  static Fusion create(Builder<T>& b, const std::string& name, std::size_t in, std::size_t out,
                       bool has_bias);
  Tensor<T> operator()(const Tensor<T>& a, const Tensor<T>& b) const;
};

// Adaptive feature transfer between the two encoder levels and the decoder.
template <typename T>
struct FeatureTransfer {
  Conv<T> reduce1, reduce2, dconv, atten_proj, restore1, restore2;
  Fusion<T> fusion1, fusion2;

  struct Intermediates {
    Tensor<T> re1, re2, exc, coe, atten;
  };

  static FeatureTransfer create(Builder<T>& b, const std::string& name, std::size_t channels,
                                bool has_bias);
  // e1: [C, H, W], e2: [2C, H/2, W/2] -> (E_out1 [C, H, W], E_out2 [2C, H/2, W/2]).
  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& e1, const Tensor<T>& e2,
                                             Intermediates* trace = nullptr) const;
};

template <typename T>
struct ProximalUNet {
  ErraConfig cfg;
  Conv<T> in_proj, down1, down2, dec_fuse2, dec_fuse1, out_proj;
  UpConv<T> up2, up1;
  PriorBlock<T> enc1, enc2, bottleneck, dec2, dec1;
  FeatureTransfer<T> aft;

  static ProximalUNet create(Builder<T>& b, const std::string& name, const ErraConfig& cfg);
  // r: [bands, H, W] with H, W divisible by 4. Returns r + network(r).
  Tensor<T> operator()(const Tensor<T>& r, const LowRankPriors<T>& priors) const;
};

// Ensures channel/reduction settings are consistent; throws std::invalid_argument.
void validate(const ErraConfig& cfg);

#define SNAPSPEC_ERRA_EXTERN(T)                \
  extern template class Builder<T>;            \
  extern template struct Conv<T>;              \
  extern template struct UpConv<T>;            \
  extern template struct Linear<T>;            \
  extern template struct ChannelNorm<T>;       \
  extern template struct Sspl<T>;              \
  extern template struct LowRankPriors<T>;     \
  extern template struct Lrpl<T>;              \
  extern template struct FeedForward<T>;       \
  extern template struct PriorBlock<T>;        \
  extern template struct Fusion<T>;            \
  extern template struct FeatureTransfer<T>;   \
  extern template struct ProximalUNet<T>;
SNAPSPEC_ERRA_EXTERN(float)
SNAPSPEC_ERRA_EXTERN(double)
#undef SNAPSPEC_ERRA_EXTERN

}  // namespace snapspec::erra
