#include <algorithm>
#include <limits>

#include "snapspec/errors.hpp"
#include "snapspec/ops.hpp"

namespace snapspec::op {

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  if (stride == 0 || kernel == 0) throw ShapeError("conv: stride and kernel must be positive");
  const std::size_t padded = in + 2 * padding;
  if (padded < kernel) {
    throw ShapeError("conv: window " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                       std::size_t padding, std::size_t output_padding) {
  const std::size_t full = (in - 1) * stride + kernel + output_padding;
  if (stride == 0 || output_padding >= stride || full <= 2 * padding) {
    throw ShapeError("conv_transpose: invalid geometry for input extent " + std::to_string(in));
  }
  return full - 2 * padding;
}

namespace {

// For a strided window relation big = small * stride + tap - padding, returns
// the half-open range of `small` indices whose `big` index lies in [0, big_extent).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t small_extent,
                                                       std::size_t big_extent, std::size_t stride,
                                                       std::size_t tap, std::size_t padding) {
  std::size_t lo = 0;
  if (padding > tap) lo = (padding - tap + stride - 1) / stride;
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(big_extent) - 1 +
                             static_cast<std::ptrdiff_t>(padding) - static_cast<std::ptrdiff_t>(tap);
  if (top < 0) return {0, 0};
  const std::size_t hi = std::min(small_extent, static_cast<std::size_t>(top) / stride + 1);
  return {lo, std::max(lo, hi)};
}

// Core of both conv2d and conv_transpose2d. For every (small-plane pixel, tap),
// big[(sy*stride + ky - pad), (sx*stride + kx - pad)] pairs with small[sy, sx].
// kind selects which accumulation to perform.
enum class Pass { kSmallFromBig, kBigFromSmall, kWeight };

template <typename T>
void strided_pair_loop(Pass pass, const T* big, T* big_out, std::size_t big_h, std::size_t big_w,
                       const T* small, T* small_out, std::size_t small_h, std::size_t small_w,
                       std::size_t stride, std::size_t pad, std::size_t ky, std::size_t kx, T w,
                       T* w_out) {
  const auto [y0, y1] = valid_range(small_h, big_h, stride, ky, pad);
  const auto [x0, x1] = valid_range(small_w, big_w, stride, kx, pad);
  if (x0 >= x1) return;
  T acc = T(0);
  for (std::size_t sy = y0; sy < y1; ++sy) {
    const std::size_t by = sy * stride + ky - pad;
    const std::size_t bx0 = x0 * stride + kx - pad;
    const std::size_t srow = sy * small_w;
    const std::size_t brow = by * big_w;
    switch (pass) {
      case Pass::kSmallFromBig:
        if (stride == 1) {
          T* dst = small_out + srow + x0;
          const T* src = big + brow + bx0;
          for (std::size_t i = 0, n = x1 - x0; i < n; ++i) dst[i] += w * src[i];
        } else {
          for (std::size_t sx = x0; sx < x1; ++sx) {
            small_out[srow + sx] += w * big[brow + sx * stride + kx - pad];
          }
        }
        break;
      case Pass::kBigFromSmall:
        if (stride == 1) {
          T* dst = big_out + brow + bx0;
          const T* src = small + srow + x0;
          for (std::size_t i = 0, n = x1 - x0; i < n; ++i) dst[i] += w * src[i];
        } else {
          for (std::size_t sx = x0; sx < x1; ++sx) {
            big_out[brow + sx * stride + kx - pad] += w * small[srow + sx];
          }
        }
        break;
      case Pass::kWeight:
        for (std::size_t sx = x0; sx < x1; ++sx) {
          acc += small[srow + sx] * big[brow + sx * stride + kx - pad];
        }
        break;
    }
  }
  if (pass == Pass::kWeight) *w_out += acc;
}

void check_rank3(const Shape& s, const char* name) {
  if (s.size() != 3) throw ShapeError(std::string(name) + ": expected [C,H,W], got " + shape_str(s));
}

template <typename T>
void check_bias(const Tensor<T>& bias, std::size_t channels, const char* name) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels)) {
    throw ShapeError(std::string(name) + ": bias must have shape [" + std::to_string(channels) +
                     "], got " + shape_str(bias.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions opt) {
  check_rank3(x.shape(), "conv2d");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw ShapeError("conv2d: weight must be [Cout, Cin/groups, k, k], got " +
                     shape_str(weight.shape()));
  }
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = weight.dim(0), cin_g = weight.dim(1), k = weight.dim(2);
  const std::size_t groups = opt.groups;
  if (groups == 0 || cin % groups != 0 || cout % groups != 0 || cin / groups != cin_g) {
    throw ShapeError("conv2d: channel/group mismatch between input " + shape_str(x.shape()) +
                     " and weight " + shape_str(weight.shape()));
  }
  check_bias(bias, cout, "conv2d");
  const std::size_t ho = conv_output_size(h, k, opt.stride, opt.padding);
  const std::size_t wo = conv_output_size(w, k, opt.stride, opt.padding);
  const std::size_t cout_g = cout / groups;
  const std::size_t in_plane = h * w, out_plane = ho * wo;

  std::vector<T> out(cout * out_plane, T(0));
  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  for (std::size_t co = 0; co < cout; ++co) {
    T* dst = out.data() + co * out_plane;
    if (bias.defined()) std::fill(dst, dst + out_plane, bias.data()[co]);
    const std::size_t g = co / cout_g;
    for (std::size_t cg = 0; cg < cin_g; ++cg) {
      const T* src = xd + (g * cin_g + cg) * in_plane;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const T wv = wd[((co * cin_g + cg) * k + ky) * k + kx];
          strided_pair_loop<T>(Pass::kSmallFromBig, src, nullptr, h, w, nullptr, dst, ho, wo,
                               opt.stride, opt.padding, ky, kx, wv, nullptr);
        }
      }
    }
  }

  auto xn = x.node(), wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return make_result<T>(
      {cout, ho, wo}, std::move(out), {x, weight, bias},
      [=](TensorNode<T>& self) {
        const T* g = self.grad.data();
        T* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        T* gw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
        for (std::size_t co = 0; co < cout; ++co) {
          const T* gplane = g + co * out_plane;
          if (bn && bn->requires_grad) {
            T acc = T(0);
            for (std::size_t i = 0; i < out_plane; ++i) acc += gplane[i];
            bn->grad_buffer()[co] += acc;
          }
          const std::size_t grp = co / cout_g;
          for (std::size_t cg = 0; cg < cin_g; ++cg) {
            const std::size_t ci = grp * cin_g + cg;
            const T* src = xn->data.data() + ci * in_plane;
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::size_t widx = ((co * cin_g + cg) * k + ky) * k + kx;
                if (gx) {
                  strided_pair_loop<T>(Pass::kBigFromSmall, nullptr, gx + ci * in_plane, h, w,
                                       gplane, nullptr, ho, wo, opt.stride, opt.padding, ky, kx,
                                       wn->data[widx], nullptr);
                }
                if (gw) {
                  strided_pair_loop<T>(Pass::kWeight, src, nullptr, h, w, gplane, nullptr, ho, wo,
                                       opt.stride, opt.padding, ky, kx, T(0), gw + widx);
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t padding) {
  check_rank3(x.shape(), "depthwise_conv2d");
  return conv2d(x, weight, bias, Conv2dOptions{1, padding, x.dim(0)});
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride, std::size_t padding, std::size_t output_padding) {
  check_rank3(x.shape(), "conv_transpose2d");
  if (weight.rank() != 4 || weight.dim(0) != x.dim(0) || weight.dim(2) != weight.dim(3)) {
    throw ShapeError("conv_transpose2d: weight must be [Cin, Cout, k, k] matching input " +
                     shape_str(x.shape()) + ", got " + shape_str(weight.shape()));
  }
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = weight.dim(1), k = weight.dim(2);
  check_bias(bias, cout, "conv_transpose2d");
  const std::size_t ho = conv_transpose_output_size(h, k, stride, padding, output_padding);
  const std::size_t wo = conv_transpose_output_size(w, k, stride, padding, output_padding);
  const std::size_t in_plane = h * w, out_plane = ho * wo;

  std::vector<T> out(cout * out_plane, T(0));
  for (std::size_t co = 0; co < cout; ++co) {
    if (bias.defined()) {
      std::fill(out.begin() + co * out_plane, out.begin() + (co + 1) * out_plane, bias.data()[co]);
    }
  }
  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const T* src = xd + ci * in_plane;
    for (std::size_t co = 0; co < cout; ++co) {
      T* dst = out.data() + co * out_plane;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const T wv = wd[((ci * cout + co) * k + ky) * k + kx];
          strided_pair_loop<T>(Pass::kBigFromSmall, nullptr, dst, ho, wo, src, nullptr, h, w,
                               stride, padding, ky, kx, wv, nullptr);
        }
      }
    }
  }

  auto xn = x.node(), wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return make_result<T>(
      {cout, ho, wo}, std::move(out), {x, weight, bias},
      [=](TensorNode<T>& self) {
        const T* g = self.grad.data();
        if (bn && bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::size_t co = 0; co < cout; ++co) {
            T acc = T(0);
            for (std::size_t i = 0; i < out_plane; ++i) acc += g[co * out_plane + i];
            gb[co] += acc;
          }
        }
        T* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        T* gw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const T* src = xn->data.data() + ci * in_plane;
          for (std::size_t co = 0; co < cout; ++co) {
            const T* gplane = g + co * out_plane;
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::size_t widx = ((ci * cout + co) * k + ky) * k + kx;
                if (gx) {
                  strided_pair_loop<T>(Pass::kSmallFromBig, gplane, nullptr, ho, wo, nullptr,
                                       gx + ci * in_plane, h, w, stride, padding, ky, kx,
                                       wn->data[widx], nullptr);
                }
                if (gw) {
                  strided_pair_loop<T>(Pass::kWeight, gplane, nullptr, ho, wo, src, nullptr, h, w,
                                       stride, padding, ky, kx, T(0), gw + widx);
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t window, std::size_t stride) {
  check_rank3(x.shape(), "maxpool2d");
  if (window == 0 || stride == 0) throw ShapeError("maxpool2d: empty window");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  // Right/bottom zero padding up to a whole number of windows.
  auto extent = [&](std::size_t n) {
    std::size_t padded = std::max(n, window);
    if ((padded - window) % stride != 0) padded += stride - (padded - window) % stride;
    return (padded - window) / stride + 1;
  };
  const std::size_t ho = extent(h), wo = extent(w);
  constexpr std::size_t kPad = std::numeric_limits<std::size_t>::max();
  auto argmax = std::make_shared<std::vector<std::size_t>>(c * ho * wo);
  std::vector<T> out(c * ho * wo);
  const T* xd = x.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        T best = T(0);
        std::size_t best_idx = kPad;
        bool first = true;
        for (std::size_t wy = 0; wy < window; ++wy) {
          for (std::size_t wx = 0; wx < window; ++wx) {
            const std::size_t iy = oy * stride + wy, ix = ox * stride + wx;
            const bool inside = iy < h && ix < w;
            const std::size_t idx = inside ? (ch * h + iy) * w + ix : kPad;
            const T v = inside ? xd[idx] : T(0);
            if (first || v > best) {
              best = v;
              best_idx = idx;
              first = false;
            }
          }
        }
        const std::size_t o = (ch * ho + oy) * wo + ox;
        out[o] = best;
        (*argmax)[o] = best_idx;
      }
    }
  }
  auto xn = x.node();
  return make_result<T>({c, ho, wo}, std::move(out), {x}, [xn, argmax](TensorNode<T>& self) {
    auto& gx = xn->grad_buffer();
    for (std::size_t o = 0; o < self.grad.size(); ++o) {
      if ((*argmax)[o] != kPad) gx[(*argmax)[o]] += self.grad[o];
    }
  });
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  check_rank3(x.shape(), "upsample_nearest2x");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<T> out(c * 4 * h * w);
  const T* xd = x.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) {
        out[(ch * 2 * h + y) * 2 * w + xx] = xd[(ch * h + y / 2) * w + xx / 2];
      }
    }
  }
  auto xn = x.node();
  return make_result<T>({c, 2 * h, 2 * w}, std::move(out), {x}, [=](TensorNode<T>& self) {
    auto& gx = xn->grad_buffer();
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < 2 * h; ++y) {
        for (std::size_t xx = 0; xx < 2 * w; ++xx) {
          gx[(ch * h + y / 2) * w + xx / 2] += self.grad[(ch * 2 * h + y) * 2 * w + xx];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> global_avgpool(const Tensor<T>& x) {
  check_rank3(x.shape(), "global_avgpool");
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  std::vector<T> out(c, T(0));
  const T* xd = x.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    T acc = T(0);
    for (std::size_t i = 0; i < plane; ++i) acc += xd[ch * plane + i];
    out[ch] = acc / static_cast<T>(plane);
  }
  auto xn = x.node();
  return make_result<T>({c, 1, 1}, std::move(out), {x}, [=](TensorNode<T>& self) {
    auto& gx = xn->grad_buffer();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T g = self.grad[ch] / static_cast<T>(plane);
      for (std::size_t i = 0; i < plane; ++i) gx[ch * plane + i] += g;
    }
  });
}

#define SNAPSPEC_INSTANTIATE_CONV(T)                                                               \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions);  \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                      std::size_t);                                                \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                      std::size_t, std::size_t, std::size_t);                      \
  template Tensor<T> maxpool2d(const Tensor<T>&, std::size_t, std::size_t);                        \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                         \
  template Tensor<T> global_avgpool(const Tensor<T>&);

SNAPSPEC_INSTANTIATE_CONV(float)
SNAPSPEC_INSTANTIATE_CONV(double)

}  // namespace snapspec::op
