#include "hdcam/ops.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "hdcam/kernels.hpp"

namespace hdcam::ops {
namespace {

namespace kn = hdcam::kernels;

template <typename T>
bool want_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const Tensor<T>* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

template <typename T>
void finite_check(const char* op, const Tensor<T>& t) {
  if (!check_finite_enabled()) return;
  const T* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(p[i]))
      throw NumericsError(std::string(op) + " produced a non-finite value at flat index " +
                          std::to_string(i));
}

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
}

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("add", a, b);
  Tensor<T> out(a.shape());
  kn::add(a.data(), b.data(), out.data(), static_cast<size_t>(a.numel()));
  finite_check("add", out);
  if (want_grad<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([a = a, b = b, out]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      const size_t n = static_cast<size_t>(out.numel());
      if (a.requires_grad()) kn::axpy(T(1), g, a.grad(), n);
      if (b.requires_grad()) kn::axpy(T(1), g, b.grad(), n);
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  kn::mul(a.data(), b.data(), out.data(), static_cast<size_t>(a.numel()));
  finite_check("mul", out);
  if (want_grad<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([a = a, b = b, out]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      const size_t n = static_cast<size_t>(out.numel());
      if (a.requires_grad()) kn::vmac(g, b.data(), a.grad(), n);
      if (b.requires_grad()) kn::vmac(g, a.data(), b.grad(), n);
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T constant) {
  Tensor<T> out(a.shape());
  kn::scale(a.data(), constant, out.data(), static_cast<size_t>(a.numel()));
  finite_check("scale", out);
  if (want_grad<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([a = a, out, constant]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      kn::axpy(constant, g, a.grad(), static_cast<size_t>(out.numel()));
    });
  }
  return out;
}

template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& gain) {
  const int64_t c = x.dim(-1);
  if (gain.rank() != 1 || gain.dim(0) != c)
    throw ConfigError("channel_scale: gain " + shape_str(gain.shape()) +
                      " does not match channels " + std::to_string(c));
  Tensor<T> out(x.shape());
  const int64_t rows = x.numel() / c;
  for (int64_t r = 0; r < rows; ++r)
    kn::mul(x.data() + r * c, gain.data(), out.data() + r * c, static_cast<size_t>(c));
  finite_check("channel_scale", out);
  if (want_grad<T>({&x, &gain})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([x = x, gain = gain, out, rows, c]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      for (int64_t r = 0; r < rows; ++r) {
        if (x.requires_grad())
          kn::vmac(g + r * c, gain.data(), x.grad() + r * c, static_cast<size_t>(c));
        if (gain.requires_grad())
          kn::vmac(g + r * c, x.data() + r * c, gain.grad(), static_cast<size_t>(c));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ConfigError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  const size_t m = static_cast<size_t>(a.dim(0));
  const size_t k = static_cast<size_t>(a.dim(1));
  const size_t n = static_cast<size_t>(b.dim(1));
  Tensor<T> out({a.dim(0), b.dim(1)});
  kn::gemm_nn(a.data(), b.data(), out.data(), m, k, n);
  finite_check("matmul", out);
  if (want_grad<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([a = a, b = b, out, m, k, n]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      if (a.requires_grad()) kn::gemm_nt(g, b.data(), a.grad(), m, n, k, true);
      if (b.requires_grad()) kn::gemm_tn(a.data(), g, b.grad(), k, m, n, true);
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2)
    throw ConfigError("transpose: expected rank-2 tensor, got " + shape_str(a.shape()));
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor<T> out({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
  if (want_grad<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([a = a, out, m, n]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      T* ga = a.grad();
      for (int64_t j = 0; j < n; ++j)
        for (int64_t i = 0; i < m; ++i) ga[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2 || x.dim(-1) != weight.dim(0))
    throw ConfigError("linear: input channels " + std::to_string(x.dim(-1)) +
                      " do not match weight " + shape_str(weight.shape()));
  const size_t cin = static_cast<size_t>(weight.dim(0));
  const size_t cout = static_cast<size_t>(weight.dim(1));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(1)))
    throw ConfigError("linear: bias " + shape_str(bias.shape()) + " does not match " +
                      std::to_string(cout) + " outputs");
  Shape out_shape = x.shape();
  out_shape.back() = weight.dim(1);
  Tensor<T> out(out_shape);
  const size_t rows = static_cast<size_t>(x.numel()) / cin;
  kn::gemm_nn(x.data(), weight.data(), out.data(), rows, cin, cout);
  if (bias.defined())
    for (size_t r = 0; r < rows; ++r)
      kn::add(out.data() + r * cout, bias.data(), out.data() + r * cout, cout);
  finite_check("linear", out);
  if (want_grad<T>({&x, &weight, &bias})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([x = x, weight = weight, bias = bias, out, rows, cin, cout]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      if (x.requires_grad()) kn::gemm_nt(g, weight.data(), x.grad(), rows, cout, cin, true);
      if (weight.requires_grad())
        kn::gemm_tn(x.data(), g, weight.grad(), cin, rows, cout, true);
      if (bias.defined() && bias.requires_grad())
        for (size_t r = 0; r < rows; ++r) kn::axpy(T(1), g + r * cout, bias.grad(), cout);
    });
  }
  return out;
}

namespace {

struct ConvDims {
  int64_t batch, len, cin, cout, lout;
  int64_t k, cgi, cgo;  // kernel, in/out channels per group
  int groups, stride, padding;
  bool batched;
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                   int padding, int groups) {
  if (x.rank() != 2 && x.rank() != 3)
    throw ConfigError("conv1d: input must be [L,C] or [B,L,C], got " + shape_str(x.shape()));
  if (w.rank() != 3)
    throw ConfigError("conv1d: weight must be [K, Cin/groups, Cout], got " +
                      shape_str(w.shape()));
  ConvDims d;
  d.batched = x.rank() == 3;
  d.batch = d.batched ? x.dim(0) : 1;
  d.len = x.dim(-2);
  d.cin = x.dim(-1);
  d.k = w.dim(0);
  d.cout = w.dim(2);
  d.groups = groups;
  d.stride = stride;
  d.padding = padding;
  if (stride < 1) throw ConfigError("conv1d: stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw ConfigError("conv1d: padding must be >= 0");
  if (d.k < 1) throw ConfigError("conv1d: kernel size must be >= 1");
  if (groups < 1 || d.cin % groups != 0 || d.cout % groups != 0)
    throw ConfigError("conv1d: channels in=" + std::to_string(d.cin) +
                      " out=" + std::to_string(d.cout) + " not divisible by groups=" +
                      std::to_string(groups));
  d.cgi = d.cin / groups;
  d.cgo = d.cout / groups;
  if (w.dim(1) != d.cgi)
    throw ConfigError("conv1d: weight " + shape_str(w.shape()) + " expects Cin/groups=" +
                      std::to_string(w.dim(1)) + " but input has " + std::to_string(d.cgi));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != d.cout))
    throw ConfigError("conv1d: bias " + shape_str(b.shape()) + " does not match Cout=" +
                      std::to_string(d.cout));
  const int64_t span = d.len + 2 * padding - d.k;
  if (span < 0)
    throw ConfigError("conv1d: kernel K=" + std::to_string(d.k) + " exceeds padded length " +
                      std::to_string(d.len + 2 * padding));
  d.lout = span / stride + 1;
  return d;
}

// Patch fast path (stride == K, no padding, dense): each output position reads
// a disjoint contiguous [K*Cin] slice, so the conv is one GEMM per sample.
template <typename T>
void conv_patch_fwd(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
  const size_t kcin = static_cast<size_t>(d.k * d.cin);
  const size_t cout = static_cast<size_t>(d.cout);
  const size_t lout = static_cast<size_t>(d.lout);
  for (int64_t bi = 0; bi < d.batch; ++bi) {
    const T* xb = x + bi * d.len * d.cin;
    T* yb = y + bi * d.lout * d.cout;
    kn::gemm_nn(xb, w, yb, lout, kcin, cout);
    if (b != nullptr)
      for (size_t r = 0; r < lout; ++r) kn::add(yb + r * cout, b, yb + r * cout, cout);
  }
}

template <typename T>
void dwconv_fwd(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
  const size_t c = static_cast<size_t>(d.cin);
  for (int64_t bi = 0; bi < d.batch; ++bi) {
    const T* xb = x + bi * d.len * d.cin;
    T* yb = y + bi * d.lout * d.cout;
    for (int64_t lo = 0; lo < d.lout; ++lo) {
      T* row = yb + lo * d.cout;
      if (b != nullptr)
        std::memcpy(row, b, c * sizeof(T));
      for (int64_t k = 0; k < d.k; ++k) {
        const int64_t li = lo * d.stride + k - d.padding;
        if (li < 0 || li >= d.len) continue;
        kn::vmac(w + k * d.cin, xb + li * d.cin, row, c);
      }
    }
  }
}

template <typename T>
void generic_fwd(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
  for (int64_t bi = 0; bi < d.batch; ++bi) {
    const T* xb = x + bi * d.len * d.cin;
    T* yb = y + bi * d.lout * d.cout;
    for (int64_t lo = 0; lo < d.lout; ++lo) {
      T* row = yb + lo * d.cout;
      if (b != nullptr)
        std::memcpy(row, b, static_cast<size_t>(d.cout) * sizeof(T));
      for (int64_t k = 0; k < d.k; ++k) {
        const int64_t li = lo * d.stride + k - d.padding;
        if (li < 0 || li >= d.len) continue;
        const T* xrow = xb + li * d.cin;
        for (int64_t g = 0; g < d.groups; ++g)
          for (int64_t ci = 0; ci < d.cgi; ++ci)
            kn::axpy(xrow[g * d.cgi + ci], w + (k * d.cgi + ci) * d.cout + g * d.cgo,
                     row + g * d.cgo, static_cast<size_t>(d.cgo));
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding, int groups) {
  const ConvDims d = conv_dims(x, weight, bias, stride, padding, groups);
  Shape out_shape = d.batched ? Shape{d.batch, d.lout, d.cout} : Shape{d.lout, d.cout};
  Tensor<T> out(out_shape);
  const T* bptr = bias.defined() ? bias.data() : nullptr;

  const bool patch = groups == 1 && padding == 0 && stride == d.k;
  const bool depthwise = groups == d.cin && groups == d.cout;
  if (patch)
    conv_patch_fwd(d, x.data(), weight.data(), bptr, out.data());
  else if (depthwise)
    dwconv_fwd(d, x.data(), weight.data(), bptr, out.data());
  else
    generic_fwd(d, x.data(), weight.data(), bptr, out.data());
  finite_check("conv1d", out);

  if (want_grad<T>({&x, &weight, &bias})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([x = x, weight = weight, bias = bias, out, d, patch, depthwise]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      const size_t kcin = static_cast<size_t>(d.k * d.cin);
      const size_t cout = static_cast<size_t>(d.cout);
      T* dx = x.requires_grad() ? x.grad() : nullptr;
      T* dw = weight.requires_grad() ? weight.grad() : nullptr;
      T* db = bias.defined() && bias.requires_grad() ? bias.grad() : nullptr;
      if (db != nullptr) {
        const int64_t rows = d.batch * d.lout;
        for (int64_t r = 0; r < rows; ++r) kn::axpy(T(1), g + r * d.cout, db, cout);
      }
      if (patch) {
        for (int64_t bi = 0; bi < d.batch; ++bi) {
          const T* gb = g + bi * d.lout * d.cout;
          if (dx != nullptr)
            kn::gemm_nt(gb, weight.data(), dx + bi * d.len * d.cin,
                        static_cast<size_t>(d.lout), cout, kcin, true);
          if (dw != nullptr)
            kn::gemm_tn(x.data() + bi * d.len * d.cin, gb, dw,
                        kcin, static_cast<size_t>(d.lout), cout, true);
        }
        return;
      }
      if (depthwise) {
        const size_t c = static_cast<size_t>(d.cin);
        for (int64_t bi = 0; bi < d.batch; ++bi) {
          const T* xb = x.data() + bi * d.len * d.cin;
          const T* gb = g + bi * d.lout * d.cout;
          T* dxb = dx != nullptr ? dx + bi * d.len * d.cin : nullptr;
          for (int64_t lo = 0; lo < d.lout; ++lo) {
            const T* grow = gb + lo * d.cout;
            for (int64_t k = 0; k < d.k; ++k) {
              const int64_t li = lo * d.stride + k - d.padding;
              if (li < 0 || li >= d.len) continue;
              if (dxb != nullptr) kn::vmac(weight.data() + k * d.cin, grow, dxb + li * d.cin, c);
              if (dw != nullptr) kn::vmac(xb + li * d.cin, grow, dw + k * d.cin, c);
            }
          }
        }
        return;
      }
      for (int64_t bi = 0; bi < d.batch; ++bi) {
        const T* xb = x.data() + bi * d.len * d.cin;
        const T* gb = g + bi * d.lout * d.cout;
        T* dxb = dx != nullptr ? dx + bi * d.len * d.cin : nullptr;
        for (int64_t lo = 0; lo < d.lout; ++lo) {
          const T* grow = gb + lo * d.cout;
          for (int64_t k = 0; k < d.k; ++k) {
            const int64_t li = lo * d.stride + k - d.padding;
            if (li < 0 || li >= d.len) continue;
            for (int64_t gi = 0; gi < d.groups; ++gi)
              for (int64_t ci = 0; ci < d.cgi; ++ci) {
                const T* wrow = weight.data() + (k * d.cgi + ci) * d.cout + gi * d.cgo;
                if (dxb != nullptr)
                  dxb[li * d.cin + gi * d.cgi + ci] +=
                      kn::dot(wrow, grow + gi * d.cgo, static_cast<size_t>(d.cgo));
                if (dw != nullptr)
                  kn::axpy(xb[li * d.cin + gi * d.cgi + ci], grow + gi * d.cgo,
                           dw + (k * d.cgi + ci) * d.cout + gi * d.cgo,
                           static_cast<size_t>(d.cgo));
              }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps) {
  const int64_t c = x.dim(-1);
  if (c == 0) throw ConfigError("layer_norm: zero channels");
  if (gamma.defined() && (gamma.rank() != 1 || gamma.dim(0) != c))
    throw ConfigError("layer_norm: gamma " + shape_str(gamma.shape()) +
                      " does not match channels " + std::to_string(c));
  if (beta.defined() && (beta.rank() != 1 || beta.dim(0) != c))
    throw ConfigError("layer_norm: beta " + shape_str(beta.shape()) +
                      " does not match channels " + std::to_string(c));
  const int64_t rows = x.numel() / c;
  Tensor<T> out(x.shape());

  // xhat and 1/sigma are saved for the backward rule.
  auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(x.numel()));
  auto inv_sigma = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));

  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * c;
    T* hr = xhat->data() + r * c;
    const T mean = kn::sum(xr, static_cast<size_t>(c)) / static_cast<T>(c);
    T var = 0;
    for (int64_t i = 0; i < c; ++i) {
      const T d = xr[i] - mean;
      hr[i] = d;
      var += d * d;
    }
    var /= static_cast<T>(c);
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_sigma)[static_cast<size_t>(r)] = inv;
    T* yr = out.data() + r * c;
    for (int64_t i = 0; i < c; ++i) {
      hr[i] *= inv;
      yr[i] = hr[i];
    }
    if (gamma.defined()) kn::mul(yr, gamma.data(), yr, static_cast<size_t>(c));
    if (beta.defined()) kn::add(yr, beta.data(), yr, static_cast<size_t>(c));
  }
  finite_check("layer_norm", out);

  if (want_grad<T>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([x = x, gamma = gamma, beta = beta, out, xhat, inv_sigma, rows, c]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      std::vector<T> gdy(static_cast<size_t>(c));
      for (int64_t r = 0; r < rows; ++r) {
        const T* gr = g + r * c;
        const T* hr = xhat->data() + r * c;
        if (gamma.defined() && gamma.requires_grad())
          kn::vmac(gr, hr, gamma.grad(), static_cast<size_t>(c));
        if (beta.defined() && beta.requires_grad())
          kn::axpy(T(1), gr, beta.grad(), static_cast<size_t>(c));
        if (!x.requires_grad()) continue;
        if (gamma.defined())
          kn::mul(gr, gamma.data(), gdy.data(), static_cast<size_t>(c));
        else
          std::memcpy(gdy.data(), gr, static_cast<size_t>(c) * sizeof(T));
        const T m1 = kn::sum(gdy.data(), static_cast<size_t>(c)) / static_cast<T>(c);
        const T m2 = kn::dot(gdy.data(), hr, static_cast<size_t>(c)) / static_cast<T>(c);
        const T inv = (*inv_sigma)[static_cast<size_t>(r)];
        T* dxr = x.grad() + r * c;
        for (int64_t i = 0; i < c; ++i) dxr[i] += inv * (gdy[i] - m1 - hr[i] * m2);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const int64_t n = x.numel();
  auto cdf = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
  const T* xp = x.data();
  T* yp = out.data();
  for (int64_t i = 0; i < n; ++i) {
    const T c = T(0.5) * (T(1) + std::erf(xp[i] / static_cast<T>(kSqrt2)));
    (*cdf)[static_cast<size_t>(i)] = c;
    yp[i] = xp[i] * c;
  }
  finite_check("gelu", out);
  if (want_grad<T>({&x})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([x = x, out, cdf, n]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      T* dx = x.grad();
      const T* xp2 = x.data();
      for (int64_t i = 0; i < n; ++i) {
        const T pdf = static_cast<T>(kInvSqrt2Pi) * std::exp(T(-0.5) * xp2[i] * xp2[i]);
        dx[i] += g[i] * ((*cdf)[static_cast<size_t>(i)] + xp2[i] * pdf);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const int64_t n = x.dim(-1);
  if (n < 1) throw ConfigError("softmax: empty last axis");
  const int64_t rows = x.numel() / n;
  Tensor<T> out(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * n;
    T* yr = out.data() + r * n;
    T mx = xr[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, xr[i]);
    T s = 0;
    for (int64_t i = 0; i < n; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      s += yr[i];
    }
    const T inv = T(1) / s;
    for (int64_t i = 0; i < n; ++i) yr[i] *= inv;
  }
  finite_check("softmax", out);
  if (want_grad<T>({&x})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([x = x, out, rows, n]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      for (int64_t r = 0; r < rows; ++r) {
        const T* yr = out.data() + r * n;
        const T* gr = g + r * n;
        const T dot = kn::dot(gr, yr, static_cast<size_t>(n));
        T* dxr = x.grad() + r * n;
        for (int64_t i = 0; i < n; ++i) dxr[i] += yr[i] * (gr[i] - dot);
      }
    });
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, int s) {
  const int64_t c = x.dim(-1);
  if (s < 1 || c % s != 0)
    throw ConfigError("split_channels: C=" + std::to_string(c) +
                      " is not divisible by s=" + std::to_string(s));
  const int64_t cs = c / s;
  const int64_t rows = x.numel() / c;
  std::vector<Tensor<T>> parts;
  parts.reserve(static_cast<size_t>(s));
  const bool grad = want_grad<T>({&x});
  for (int i = 0; i < s; ++i) {
    Shape shp = x.shape();
    shp.back() = cs;
    Tensor<T> part(shp);
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(part.data() + r * cs, x.data() + r * c + i * cs,
                  static_cast<size_t>(cs) * sizeof(T));
    if (grad) {
      part.set_requires_grad(true);
      const int64_t off = static_cast<int64_t>(i) * cs;
      Tape<T>::active()->record([x = x, part, rows, c, cs, off]() mutable {
        const T* g = part.grad_data();
        if (g == nullptr) return;
        T* dx = x.grad();
        for (int64_t r = 0; r < rows; ++r)
          kn::axpy(T(1), g + r * cs, dx + r * c + off, static_cast<size_t>(cs));
      });
    }
    parts.push_back(std::move(part));
  }
  return parts;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ConfigError("concat_channels: no parts");
  Shape lead = parts[0].shape();
  lead.pop_back();
  int64_t total = 0;
  for (const auto& p : parts) {
    Shape pl = p.shape();
    const int64_t pc = pl.back();
    pl.pop_back();
    if (pl != lead)
      throw ConfigError("concat_channels: mismatched leading shape " + shape_str(p.shape()));
    total += pc;
  }
  Shape out_shape = parts[0].shape();
  out_shape.back() = total;
  Tensor<T> out(out_shape);
  const int64_t rows = out.numel() / total;
  int64_t off = 0;
  bool grad = false;
  for (const auto& p : parts)
    if (p.requires_grad()) grad = true;
  grad = grad && Tape<T>::active() != nullptr;
  for (const auto& p : parts) {
    const int64_t pc = p.dim(-1);
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(out.data() + r * total + off, p.data() + r * pc,
                  static_cast<size_t>(pc) * sizeof(T));
    if (grad && p.requires_grad()) {
      Tensor<T> pin = p;
      const int64_t o = off;
      Tape<T>::active()->record([pin, out, rows, total, pc, o]() mutable {
        const T* g = out.grad_data();
        if (g == nullptr) return;
        T* dp = pin.grad();
        for (int64_t r = 0; r < rows; ++r)
          kn::axpy(T(1), g + r * total + o, dp + r * pc, static_cast<size_t>(pc));
      });
    }
    off += pc;
  }
  if (grad) out.set_requires_grad(true);
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() < 2)
    throw ConfigError("global_avg_pool: expected [..., L, C], got " + shape_str(x.shape()));
  const int64_t c = x.dim(-1);
  const int64_t l = x.dim(-2);
  Shape out_shape(x.shape().begin(), x.shape().end() - 2);
  out_shape.push_back(c);
  Tensor<T> out(out_shape);
  const int64_t groups = x.numel() / (l * c);
  const T inv = T(1) / static_cast<T>(l);
  for (int64_t gidx = 0; gidx < groups; ++gidx) {
    T* yr = out.data() + gidx * c;
    const T* xg = x.data() + gidx * l * c;
    for (int64_t li = 0; li < l; ++li) kn::axpy(inv, xg + li * c, yr, static_cast<size_t>(c));
  }
  finite_check("global_avg_pool", out);
  if (want_grad<T>({&x})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([x = x, out, groups, l, c, inv]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      T* dx = x.grad();
      for (int64_t gidx = 0; gidx < groups; ++gidx)
        for (int64_t li = 0; li < l; ++li)
          kn::axpy(inv, g + gidx * c, dx + (gidx * l + li) * c, static_cast<size_t>(c));
    });
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw ConfigError("cross_entropy: logits must be [batch, classes], got " +
                      shape_str(logits.shape()));
  const int64_t batch = logits.dim(0);
  const int64_t classes = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != batch)
    throw DataError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                    std::to_string(batch));
  for (int64_t i = 0; i < batch; ++i)
    if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= classes)
      throw DataError("cross_entropy: label " + std::to_string(labels[static_cast<size_t>(i)]) +
                      " out of range [0," + std::to_string(classes) + ") at index " +
                      std::to_string(i));

  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(logits.numel()));
  T total = 0;
  for (int64_t i = 0; i < batch; ++i) {
    const T* row = logits.data() + i * classes;
    T mx = row[0];
    for (int64_t jc = 1; jc < classes; ++jc) mx = std::max(mx, row[jc]);
    T s = 0;
    T* pr = probs->data() + i * classes;
    for (int64_t jc = 0; jc < classes; ++jc) {
      pr[jc] = std::exp(row[jc] - mx);
      s += pr[jc];
    }
    const T lse = mx + std::log(s);
    const T invs = T(1) / s;
    for (int64_t jc = 0; jc < classes; ++jc) pr[jc] *= invs;
    total += lse - row[labels[static_cast<size_t>(i)]];
  }
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(batch));
  finite_check("cross_entropy", out);
  if (want_grad<T>({&logits})) {
    out.set_requires_grad(true);
    std::vector<int> lbl = labels;
    Tape<T>::active()->record([logits = logits, out, probs, lbl, batch, classes]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      const T gup = g[0] / static_cast<T>(batch);
      T* dl = logits.grad();
      for (int64_t i = 0; i < batch; ++i) {
        const T* pr = probs->data() + i * classes;
        T* dr = dl + i * classes;
        for (int64_t jc = 0; jc < classes; ++jc) dr[jc] += gup * pr[jc];
        dr[lbl[static_cast<size_t>(i)]] -= gup;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::scalar(kn::sum(x.data(), static_cast<size_t>(x.numel())));
  finite_check("sum", out);
  if (want_grad<T>({&x})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([x = x, out]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      T* dx = x.grad();
      for (int64_t i = 0; i < x.numel(); ++i) dx[i] += g[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               int heads, Tensor<T>* probs_out) {
  check_same_shape("scaled_dot_attention", q, k);
  check_same_shape("scaled_dot_attention", q, v);
  if (q.rank() != 2 && q.rank() != 3)
    throw ConfigError("scaled_dot_attention: expected [L,C] or [B,L,C], got " +
                      shape_str(q.shape()));
  const int64_t c = q.dim(-1);
  if (heads < 1 || c % heads != 0)
    throw ConfigError("scaled_dot_attention: C=" + std::to_string(c) +
                      " not divisible by heads=" + std::to_string(heads));
  const int64_t batch = q.rank() == 3 ? q.dim(0) : 1;
  const int64_t len = q.dim(-2);
  const int64_t d = c / heads;
  const T att_scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(d)));

  Tensor<T> out(q.shape());
  auto probs = std::make_shared<std::vector<T>>(
      static_cast<size_t>(batch * heads * len * len));

  std::vector<T> qh(static_cast<size_t>(len * d)), kh(qh.size()), vh(qh.size()),
      oh(qh.size());
  for (int64_t bi = 0; bi < batch; ++bi) {
    const T* qb = q.data() + bi * len * c;
    const T* kb = k.data() + bi * len * c;
    const T* vb = v.data() + bi * len * c;
    T* ob = out.data() + bi * len * c;
    for (int64_t h = 0; h < heads; ++h) {
      const int64_t off = h * d;
      for (int64_t li = 0; li < len; ++li) {
        std::memcpy(qh.data() + li * d, qb + li * c + off, static_cast<size_t>(d) * sizeof(T));
        std::memcpy(kh.data() + li * d, kb + li * c + off, static_cast<size_t>(d) * sizeof(T));
        std::memcpy(vh.data() + li * d, vb + li * c + off, static_cast<size_t>(d) * sizeof(T));
      }
      T* p = probs->data() + (bi * heads + h) * len * len;
      kn::gemm_nt(qh.data(), kh.data(), p, static_cast<size_t>(len), static_cast<size_t>(d),
                  static_cast<size_t>(len));
      kn::scale(p, att_scale, p, static_cast<size_t>(len * len));
      for (int64_t r = 0; r < len; ++r) {
        T* row = p + r * len;
        T mx = row[0];
        for (int64_t i = 1; i < len; ++i) mx = std::max(mx, row[i]);
        T s = 0;
        for (int64_t i = 0; i < len; ++i) {
          row[i] = std::exp(row[i] - mx);
          s += row[i];
        }
        kn::scale(row, T(1) / s, row, static_cast<size_t>(len));
      }
      kn::gemm_nn(p, vh.data(), oh.data(), static_cast<size_t>(len),
                  static_cast<size_t>(len), static_cast<size_t>(d));
      for (int64_t li = 0; li < len; ++li)
        std::memcpy(ob + li * c + off, oh.data() + li * d, static_cast<size_t>(d) * sizeof(T));
    }
  }
  finite_check("scaled_dot_attention", out);

  if (probs_out != nullptr) {
    Shape pshape = q.rank() == 3 ? Shape{batch, heads, len, len} : Shape{heads, len, len};
    *probs_out = Tensor<T>(pshape, std::vector<T>(*probs));
  }

  if (want_grad<T>({&q, &k, &v})) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([q = q, k = k, v = v, out, probs, batch, heads, len, d, c,
                               att_scale]() mutable {
      const T* g = out.grad_data();
      if (g == nullptr) return;
      std::vector<T> qh(static_cast<size_t>(len * d)), kh(qh.size()), vh(qh.size()),
          goh(qh.size()), tmp(qh.size());
      std::vector<T> dp(static_cast<size_t>(len * len));
      T* dq = q.requires_grad() ? q.grad() : nullptr;
      T* dk = k.requires_grad() ? k.grad() : nullptr;
      T* dv = v.requires_grad() ? v.grad() : nullptr;
      for (int64_t bi = 0; bi < batch; ++bi) {
        const T* qb = q.data() + bi * len * c;
        const T* kb = k.data() + bi * len * c;
        const T* vb = v.data() + bi * len * c;
        const T* gb = g + bi * len * c;
        for (int64_t h = 0; h < heads; ++h) {
          const int64_t off = h * d;
          for (int64_t li = 0; li < len; ++li) {
            std::memcpy(qh.data() + li * d, qb + li * c + off,
                        static_cast<size_t>(d) * sizeof(T));
            std::memcpy(kh.data() + li * d, kb + li * c + off,
                        static_cast<size_t>(d) * sizeof(T));
            std::memcpy(vh.data() + li * d, vb + li * c + off,
                        static_cast<size_t>(d) * sizeof(T));
            std::memcpy(goh.data() + li * d, gb + li * c + off,
                        static_cast<size_t>(d) * sizeof(T));
          }
          const T* p = probs->data() + (bi * heads + h) * len * len;
          // dV = P^T dO
          if (dv != nullptr) {
            kn::gemm_tn(p, goh.data(), tmp.data(), static_cast<size_t>(len),
                        static_cast<size_t>(len), static_cast<size_t>(d));
            for (int64_t li = 0; li < len; ++li)
              kn::axpy(T(1), tmp.data() + li * d, dv + (bi * len + li) * c + off,
                       static_cast<size_t>(d));
          }
          if (dq == nullptr && dk == nullptr) continue;
          // dP = dO V^T, then dS = P .* (dP - rowsum(dP .* P)), scaled.
          kn::gemm_nt(goh.data(), vh.data(), dp.data(), static_cast<size_t>(len),
                      static_cast<size_t>(d), static_cast<size_t>(len));
          for (int64_t r = 0; r < len; ++r) {
            T* dpr = dp.data() + r * len;
            const T* pr = p + r * len;
            const T rowdot = kn::dot(dpr, pr, static_cast<size_t>(len));
            for (int64_t i = 0; i < len; ++i)
              dpr[i] = pr[i] * (dpr[i] - rowdot) * att_scale;
          }
          if (dq != nullptr) {
            kn::gemm_nn(dp.data(), kh.data(), tmp.data(), static_cast<size_t>(len),
                        static_cast<size_t>(len), static_cast<size_t>(d));
            for (int64_t li = 0; li < len; ++li)
              kn::axpy(T(1), tmp.data() + li * d, dq + (bi * len + li) * c + off,
                       static_cast<size_t>(d));
          }
          if (dk != nullptr) {
            kn::gemm_tn(dp.data(), qh.data(), tmp.data(), static_cast<size_t>(len),
                        static_cast<size_t>(len), static_cast<size_t>(d));
            for (int64_t li = 0; li < len; ++li)
              kn::axpy(T(1), tmp.data() + li * d, dk + (bi * len + li) * c + off,
                       static_cast<size_t>(d));
          }
        }
      }
    });
  }
  return out;
}

// Instantiation for float/double is forced through odr-use at static-init
// time; plain explicit instantiation of templates holding std::function-
// wrapped local lambdas trips gcc PR 51048.
namespace {

const void* volatile g_instantiation_sink;

template <typename T>
void force_instantiation() {
  using TT = Tensor<T>;
  auto sink = [](auto* fn) { g_instantiation_sink = reinterpret_cast<const void*>(fn); };
  sink(static_cast<TT (*)(const TT&, const TT&)>(&add<T>));
  sink(static_cast<TT (*)(const TT&, const TT&)>(&mul<T>));
  sink(static_cast<TT (*)(const TT&, T)>(&scale<T>));
  sink(static_cast<TT (*)(const TT&, const TT&)>(&channel_scale<T>));
  sink(static_cast<TT (*)(const TT&, const TT&)>(&matmul<T>));
  sink(static_cast<TT (*)(const TT&)>(&transpose<T>));
  sink(static_cast<TT (*)(const TT&, const TT&, const TT&)>(&linear<T>));
  sink(static_cast<TT (*)(const TT&, const TT&, const TT&, int, int, int)>(&conv1d<T>));
  sink(static_cast<TT (*)(const TT&, const TT&, const TT&, T)>(&layer_norm<T>));
  sink(static_cast<TT (*)(const TT&)>(&gelu<T>));
  sink(static_cast<TT (*)(const TT&)>(&softmax<T>));
  sink(static_cast<std::vector<TT> (*)(const TT&, int)>(&split_channels<T>));
  sink(static_cast<TT (*)(const std::vector<TT>&)>(&concat_channels<T>));
  sink(static_cast<TT (*)(const TT&)>(&global_avg_pool<T>));
  sink(static_cast<TT (*)(const TT&, const std::vector<int>&)>(&cross_entropy<T>));
  sink(static_cast<TT (*)(const TT&)>(&sum<T>));
  sink(static_cast<TT (*)(const TT&, const TT&, const TT&, int, TT*)>(
      &scaled_dot_attention<T>));
}

const bool g_forced = (force_instantiation<float>(), force_instantiation<double>(), true);

}  // namespace

}  // namespace hdcam::ops
