#include <cmath>
#include <numbers>

#include "snapspec/errors.hpp"
#include "snapspec/ops.hpp"

namespace snapspec::op {

namespace {

// Maps each output element to the flat element of each operand.
struct Broadcast {
  Shape out;
  bool same = false;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

bool broadcastable_to(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  const std::size_t off = big.size() - small.size();
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[i] != big[off + i] && small[i] != 1) return false;
  }
  return true;
}

std::vector<std::size_t> index_map(const Shape& small, const Shape& big) {
  const std::size_t n = shape_numel(big);
  std::vector<std::size_t> map(n);
  const std::size_t rank = big.size();
  const std::size_t off = rank - small.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = small.size(); i-- > 0;) {
    stride[off + i] = small[i] == 1 ? 0 : s;
    s *= small[i];
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t flat = 0;
  for (std::size_t o = 0; o < n; ++o) {
    map[o] = flat;
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < big[ax]) {
        flat += stride[ax];
        break;
      }
      flat -= stride[ax] * (big[ax] - 1);
      idx[ax] = 0;
    }
  }
  return map;
}

Broadcast plan(const Shape& a, const Shape& b, const char* name) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  if (broadcastable_to(b, a)) {
    p.out = a;
  } else if (broadcastable_to(a, b)) {
    p.out = b;
  } else {
    throw ShapeError(std::string(name) + ": incompatible shapes " + shape_str(a) + " and " +
                     shape_str(b));
  }
  p.a_index = a == p.out ? std::vector<std::size_t>{} : index_map(a, p.out);
  p.b_index = b == p.out ? std::vector<std::size_t>{} : index_map(b, p.out);
  return p;
}

inline std::size_t ai(const Broadcast& p, std::size_t o) { return p.a_index.empty() ? o : p.a_index[o]; }
inline std::size_t bi(const Broadcast& p, std::size_t o) { return p.b_index.empty() ? o : p.b_index[o]; }

enum class Binary { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Binary kind, const char* name) {
  auto p = std::make_shared<Broadcast>(plan(a.shape(), b.shape(), name));
  const std::size_t n = shape_numel(p->out);
  std::vector<T> out(n);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t o = 0; o < n; ++o) {
    const T x = ad[ai(*p, o)];
    const T y = bd[bi(*p, o)];
    out[o] = kind == Binary::kAdd ? x + y : kind == Binary::kSub ? x - y : x * y;
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(p->out, std::move(out), {a, b}, [p, an, bn, kind](TensorNode<T>& self) {
    const auto& g = self.grad;
    if (an->requires_grad) {
      auto& ga = an->grad_buffer();
      for (std::size_t o = 0; o < g.size(); ++o) {
        const T f = kind == Binary::kMul ? bn->data[bi(*p, o)] : T(1);
        ga[ai(*p, o)] += g[o] * f;
      }
    }
    if (bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (std::size_t o = 0; o < g.size(); ++o) {
        const T f = kind == Binary::kMul ? an->data[ai(*p, o)] : kind == Binary::kSub ? T(-1) : T(1);
        gb[bi(*p, o)] += g[o] * f;
      }
    }
  });
}

// Decomposes a shape around one axis into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* name) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(name) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::kAdd, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::kSub, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::kMul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  auto an = a.node();
  return make_result<T>(a.shape(), std::move(out), {a}, [an, s](TensorNode<T>& self) {
    auto& ga = an->grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * self.grad[i];
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += s;
  auto an = a.node();
  return make_result<T>(a.shape(), std::move(out), {a},
                        [an](TensorNode<T>& self) { an->accumulate(self.grad); });
}

template <typename T>
Tensor<T> reciprocal(const Tensor<T>& a) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = T(1) / v;
  auto an = a.node();
  return make_result<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& self) {
    auto& ga = an->grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] -= self.grad[i] * self.data[i] * self.data[i];
  });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) {
    if (v < T(0)) throw NumericError("sqrt: negative input");
    v = std::sqrt(v);
  }
  auto an = a.node();
  return make_result<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& self) {
    auto& ga = an->grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] / (T(2) * self.data[i]);
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.data()) acc += v;
  auto an = a.node();
  return make_result<T>({1}, {acc}, {a}, [an](TensorNode<T>& self) {
    auto& ga = an->grad_buffer();
    for (auto& g : ga) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, std::size_t axis) {
  const auto sp = split_axis(a.shape(), axis, "sum_axis");
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis) out_shape.push_back(a.shape()[i]);
  }
  if (out_shape.empty()) out_shape = {1};
  std::vector<T> out(sp.outer * sp.inner, T(0));
  auto ad = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t e = 0; e < sp.extent; ++e) {
      const T* src = ad.data() + (o * sp.extent + e) * sp.inner;
      T* dst = out.data() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  auto an = a.node();
  return make_result<T>(out_shape, std::move(out), {a}, [an, sp](TensorNode<T>& self) {
    auto& ga = an->grad_buffer();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t e = 0; e < sp.extent; ++e) {
        T* dst = ga.data() + (o * sp.extent + e) * sp.inner;
        const T* src = self.grad.data() + o * sp.inner;
        for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto d = sub(a, b);
  return mean(mul(d, d));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  auto an = a.node();
  return make_result<T>(std::move(shape), std::move(out), {a},
                        [an](TensorNode<T>& self) { an->accumulate(self.grad); });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<T> out(a.numel());
  auto ad = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = ad[r * cols + c];
  }
  auto an = a.node();
  return make_result<T>({cols, rows}, std::move(out), {a}, [an, rows, cols](TensorNode<T>& self) {
    auto& ga = an->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += self.grad[c * rows + r];
    }
  });
}

namespace {
// c[M,P] += a[M,N] * b[N,P], ikj loop order.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const T av = a[i * n + k];
      const T* brow = b + k * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}
}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: dimension mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
  std::vector<T> out(m * p, T(0));
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, n, p);
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>({m, p}, std::move(out), {a, b}, [an, bn, m, n, p](TensorNode<T>& self) {
    const T* g = self.grad.data();
    if (an->requires_grad) {
      // dA[i,k] = sum_j g[i,j] * B[k,j]
      auto& ga = an->grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
          T acc = T(0);
          const T* brow = bn->data.data() + k * p;
          const T* grow = g + i * p;
          for (std::size_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
          ga[i * n + k] += acc;
        }
      }
    }
    if (bn->requires_grad) {
      // dB[k,j] = sum_i A[i,k] * g[i,j]
      auto& gb = bn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
          const T av = an->data[i * n + k];
          T* dst = gb.data() + k * p;
          const T* grow = g + i * p;
          for (std::size_t j = 0; j < p; ++j) dst[j] += av * grow[j];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank()) throw ShapeError("concat: rank mismatch");
  for (std::size_t i = 1; i < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ShapeError("concat: trailing shapes differ " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
  }
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<T> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(std::move(shape), std::move(out), {a, b}, [an, bn](TensorNode<T>& self) {
    const std::size_t na = an->data.size();
    an->accumulate(std::span<const T>(self.grad.data(), na));
    bn->accumulate(std::span<const T>(self.grad.data() + na, bn->data.size()));
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto sp = split_axis(x.shape(), axis, "softmax");
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      T mx = xd[base];
      for (std::size_t e = 1; e < sp.extent; ++e) mx = std::max(mx, xd[base + e * sp.inner]);
      T denom = T(0);
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const T v = std::exp(xd[base + e * sp.inner] - mx);
        out[base + e * sp.inner] = v;
        denom += v;
      }
      for (std::size_t e = 0; e < sp.extent; ++e) out[base + e * sp.inner] /= denom;
    }
  }
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {x}, [xn, sp](TensorNode<T>& self) {
    auto& gx = xn->grad_buffer();
    const auto& y = self.data;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.extent * sp.inner + i;
        T dot = T(0);
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t k = base + e * sp.inner;
          dot += g[k] * y[k];
        }
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t k = base + e * sp.inner;
          gx[k] += y[k] * (g[k] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, std::size_t axis, T eps) {
  const auto sp = split_axis(x.shape(), axis, "layernorm");
  std::vector<T> out(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(sp.outer * sp.inner);
  auto xd = x.data();
  const T n = static_cast<T>(sp.extent);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      T mu = T(0);
      for (std::size_t e = 0; e < sp.extent; ++e) mu += xd[base + e * sp.inner];
      mu /= n;
      T var = T(0);
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const T d = xd[base + e * sp.inner] - mu;
        var += d * d;
      }
      var /= n;
      const T is = T(1) / std::sqrt(var + eps);
      (*inv_std)[o * sp.inner + i] = is;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        out[base + e * sp.inner] = (xd[base + e * sp.inner] - mu) * is;
      }
    }
  }
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {x}, [xn, sp, inv_std, n](TensorNode<T>& self) {
    auto& gx = xn->grad_buffer();
    const auto& y = self.data;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.extent * sp.inner + i;
        T gmean = T(0), gymean = T(0);
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t k = base + e * sp.inner;
          gmean += g[k];
          gymean += g[k] * y[k];
        }
        gmean /= n;
        gymean /= n;
        const T is = (*inv_std)[o * sp.inner + i];
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t k = base + e * sp.inner;
          gx[k] += is * (g[k] - gmean - y[k] * gymean);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto xd = x.data();
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = T(0.5) * xd[i] * (T(1) + std::erf(xd[i] * inv_sqrt2));
  }
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {x}, [xn, inv_sqrt2](TensorNode<T>& self) {
    auto& gx = xn->grad_buffer();
    const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T v = xn->data[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      gx[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xd[i];
    out[i] = v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {x}, [xn](TensorNode<T>& self) {
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T sig = T(1) / (T(1) + std::exp(-xn->data[i]));
      gx[i] += self.grad[i] * sig;
    }
  });
}

#define SNAPSPEC_INSTANTIATE_BASIC(T)                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> scale(const Tensor<T>&, T);                                   \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                              \
  template Tensor<T> reciprocal(const Tensor<T>&);                                 \
  template Tensor<T> sqrt(const Tensor<T>&);                                       \
  template Tensor<T> sum(const Tensor<T>&);                                        \
  template Tensor<T> mean(const Tensor<T>&);                                       \
  template Tensor<T> sum_axis(const Tensor<T>&, std::size_t);                      \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                             \
  template Tensor<T> transpose(const Tensor<T>&);                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> concat(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                       \
  template Tensor<T> layernorm(const Tensor<T>&, std::size_t, T);                  \
  template Tensor<T> gelu(const Tensor<T>&);                                       \
  template Tensor<T> softplus(const Tensor<T>&);

SNAPSPEC_INSTANTIATE_BASIC(float)
SNAPSPEC_INSTANTIATE_BASIC(double)

}  // namespace snapspec::op
