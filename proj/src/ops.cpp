#include "onetracker/ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace onetracker::ops {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

/// Marks `out` as recorded: parents keep the inputs alive, `fn` accumulates
/// out->grad into the inputs' grads.
void attach(Tensor& out, const std::vector<Tensor>& inputs, std::function<void()> fn) {
  TensorNode* n = out.node();
  n->requires_grad = true;
  n->parents.reserve(inputs.size());
  for (const Tensor& t : inputs) n->parents.push_back(t.node_ptr());
  n->backprop = std::move(fn);
}

bool any_grad(const std::vector<Tensor>& ts) {
  for (const Tensor& t : ts)
    if (t.requires_grad()) return true;
  return false;
}

/// dfa/dfb take (a_i, b_i, out_i) and return the local partial.
template <typename F, typename Da, typename Db>
Tensor binary_ew(const char* op, const Tensor& a, const Tensor& b, F f, Da dfa, Db dfb) {
  check_same_shape(op, a, b);
  const size_t n = a.data().size();
  std::vector<double> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = f(a.at(static_cast<int64_t>(i)), b.at(static_cast<int64_t>(i)));
  Tensor out(a.shape(), std::move(v));
  if (any_grad({a, b})) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    attach(out, {a, b}, [on, an, bn, dfa, dfb] {
      const size_t m = on->value.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < m; ++i)
          an->grad[i] += on->grad[i] * dfa(an->value[i], bn->value[i], on->value[i]);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < m; ++i)
          bn->grad[i] += on->grad[i] * dfb(an->value[i], bn->value[i], on->value[i]);
      }
    });
  }
  return out;
}

/// df takes (a_i, out_i).
template <typename F, typename Df>
Tensor unary_ew(const Tensor& a, F f, Df df) {
  const size_t n = a.data().size();
  std::vector<double> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = f(a.at(static_cast<int64_t>(i)));
  Tensor out(a.shape(), std::move(v));
  if (a.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    attach(out, {a}, [on, an, df] {
      an->ensure_grad();
      const size_t m = on->value.size();
      for (size_t i = 0; i < m; ++i) an->grad[i] += on->grad[i] * df(an->value[i], on->value[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_ew(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_ew(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor relu(const Tensor& a) {
  return unary_ew(a, [](double x) { return x > 0 ? x : 0.0; },
                  [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary_ew(a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
                  [](double x, double) {
                    const double phi = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                    return cdf + x * phi;
                  });
}

Tensor sigmoid(const Tensor& a) {
  return unary_ew(a,
                  [](double x) {
                    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                    const double e = std::exp(x);
                    return e / (1.0 + e);
                  },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& a) {
  return unary_ew(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary_ew(a, [](double x) { return std::fabs(x); },
                  [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor powi(const Tensor& a, int exponent) {
  if (exponent < 0) throw ValidationError("powi: negative exponent " + std::to_string(exponent));
  auto ipow = [](double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
  };
  return unary_ew(a, [exponent, ipow](double x) { return ipow(x, exponent); },
                  [exponent, ipow](double x, double) {
                    return exponent == 0 ? 0.0 : exponent * ipow(x, exponent - 1);
                  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ValidationError("matmul: expected rank-2 operands, got " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw ValidationError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
  }
  std::vector<double> v(static_cast<size_t>(m * n), 0.0);
  {
    const auto av = a.data();
    const auto bv = b.data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t p = 0; p < k; ++p) {
        const double aip = av[static_cast<size_t>(i * k + p)];
        if (aip == 0.0) continue;
        const size_t boff = static_cast<size_t>(p * n);
        const size_t ooff = static_cast<size_t>(i * n);
        for (int64_t j = 0; j < n; ++j) v[ooff + static_cast<size_t>(j)] += aip * bv[boff + static_cast<size_t>(j)];
      }
  }
  Tensor out({m, n}, std::move(v));
  if (any_grad({a, b})) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    attach(out, {a, b}, [on, an, bn, m, k, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        // dA = g . B^T
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) {
            const double g = on->grad[static_cast<size_t>(i * n + j)];
            if (g == 0.0) continue;
            for (int64_t p = 0; p < k; ++p)
              an->grad[static_cast<size_t>(i * k + p)] += g * bn->value[static_cast<size_t>(p * n + j)];
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // dB = A^T . g
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            const double av = an->value[static_cast<size_t>(i * k + p)];
            if (av == 0.0) continue;
            for (int64_t j = 0; j < n; ++j)
              bn->grad[static_cast<size_t>(p * n + j)] += av * on->grad[static_cast<size_t>(i * n + j)];
          }
      }
    });
  }
  return out;
}

Tensor transpose_last2(const Tensor& a) {
  if (a.rank() < 2) throw ValidationError("transpose_last2: rank must be >= 2, got " + shape_str(a.shape()));
  const int r = a.rank();
  const int64_t rows = a.dim(r - 2), cols = a.dim(r - 1);
  const int64_t batch = a.numel() / (rows * cols);
  Shape os = a.shape();
  std::swap(os[static_cast<size_t>(r - 2)], os[static_cast<size_t>(r - 1)]);
  std::vector<double> v(static_cast<size_t>(a.numel()));
  const auto av = a.data();
  for (int64_t b = 0; b < batch; ++b) {
    const size_t base = static_cast<size_t>(b * rows * cols);
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j)
        v[base + static_cast<size_t>(j * rows + i)] = av[base + static_cast<size_t>(i * cols + j)];
  }
  Tensor out(std::move(os), std::move(v));
  if (a.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    attach(out, {a}, [on, an, batch, rows, cols] {
      an->ensure_grad();
      for (int64_t b = 0; b < batch; ++b) {
        const size_t base = static_cast<size_t>(b * rows * cols);
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < cols; ++j)
            an->grad[base + static_cast<size_t>(i * cols + j)] +=
                on->grad[base + static_cast<size_t>(j * rows + i)];
      }
    });
  }
  return out;
}

Tensor softmax_lastdim(const Tensor& a) {
  if (a.rank() < 1) throw ValidationError("softmax_lastdim: empty shape");
  const int64_t cols = a.dim(a.rank() - 1);
  const int64_t rows = a.numel() / cols;
  std::vector<double> v(static_cast<size_t>(a.numel()));
  const auto av = a.data();
  for (int64_t r = 0; r < rows; ++r) {
    const size_t off = static_cast<size_t>(r * cols);
    double mx = av[off];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, av[off + static_cast<size_t>(j)]);
    double denom = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      const double e = std::exp(av[off + static_cast<size_t>(j)] - mx);
      v[off + static_cast<size_t>(j)] = e;
      denom += e;
    }
    for (int64_t j = 0; j < cols; ++j) v[off + static_cast<size_t>(j)] /= denom;
  }
  Tensor out(a.shape(), std::move(v));
  if (a.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    attach(out, {a}, [on, an, rows, cols] {
      an->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        const size_t off = static_cast<size_t>(r * cols);
        double dot = 0.0;
        for (int64_t j = 0; j < cols; ++j) dot += on->grad[off + static_cast<size_t>(j)] * on->value[off + static_cast<size_t>(j)];
        for (int64_t j = 0; j < cols; ++j)
          an->grad[off + static_cast<size_t>(j)] +=
              on->value[off + static_cast<size_t>(j)] * (on->grad[off + static_cast<size_t>(j)] - dot);
      }
    });
  }
  return out;
}

Tensor layernorm_lastdim(const Tensor& a, double eps) {
  if (a.rank() < 1) throw ValidationError("layernorm_lastdim: empty shape");
  const int64_t cols = a.dim(a.rank() - 1);
  const int64_t rows = a.numel() / cols;
  std::vector<double> v(static_cast<size_t>(a.numel()));
  std::vector<double> inv_std(static_cast<size_t>(rows));
  const auto av = a.data();
  for (int64_t r = 0; r < rows; ++r) {
    const size_t off = static_cast<size_t>(r * cols);
    double mean = 0.0;
    for (int64_t j = 0; j < cols; ++j) mean += av[off + static_cast<size_t>(j)];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      const double d = av[off + static_cast<size_t>(j)] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = inv;
    for (int64_t j = 0; j < cols; ++j) v[off + static_cast<size_t>(j)] = (av[off + static_cast<size_t>(j)] - mean) * inv;
  }
  Tensor out(a.shape(), std::move(v));
  if (a.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    attach(out, {a}, [on, an, rows, cols, inv_std = std::move(inv_std)] {
      an->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        const size_t off = static_cast<size_t>(r * cols);
        double gmean = 0.0, gymean = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
          gmean += on->grad[off + static_cast<size_t>(j)];
          gymean += on->grad[off + static_cast<size_t>(j)] * on->value[off + static_cast<size_t>(j)];
        }
        gmean /= static_cast<double>(cols);
        gymean /= static_cast<double>(cols);
        const double inv = inv_std[static_cast<size_t>(r)];
        for (int64_t j = 0; j < cols; ++j) {
          const size_t idx = off + static_cast<size_t>(j);
          an->grad[idx] += inv * (on->grad[idx] - gmean - on->value[idx] * gymean);
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ValidationError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  if (a.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    attach(out, {a}, [on, an] {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor concat_firstdim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValidationError("concat_firstdim: no inputs");
  const Shape& s0 = parts[0].shape();
  int64_t total0 = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != parts[0].rank())
      throw ValidationError("concat_firstdim: rank mismatch " + shape_str(p.shape()) + " vs " + shape_str(s0));
    for (int d = 1; d < p.rank(); ++d)
      if (p.dim(d) != parts[0].dim(d))
        throw ValidationError("concat_firstdim: trailing extents differ, " + shape_str(p.shape()) +
                              " vs " + shape_str(s0));
    total0 += p.dim(0);
  }
  Shape os = s0;
  os[0] = total0;
  std::vector<double> v;
  v.reserve(static_cast<size_t>(shape_numel(os)));
  for (const Tensor& p : parts) v.insert(v.end(), p.data().begin(), p.data().end());
  Tensor out(std::move(os), std::move(v));
  if (any_grad(parts)) {
    TensorNode* on = out.node();
    std::vector<TensorNode*> pn;
    for (const Tensor& p : parts) pn.push_back(p.node());
    attach(out, parts, [on, pn] {
      size_t off = 0;
      for (TensorNode* p : pn) {
        const size_t len = p->value.size();
        if (p->requires_grad) {
          p->ensure_grad();
          for (size_t i = 0; i < len; ++i) p->grad[i] += on->grad[off + i];
        }
        off += len;
      }
    });
  }
  return out;
}

Tensor slice_firstdim(const Tensor& a, int64_t start, int64_t length) {
  if (a.rank() < 1) throw ValidationError("slice_firstdim: empty shape");
  if (start < 0 || length <= 0 || start + length > a.dim(0)) {
    throw ValidationError("slice_firstdim: range [" + std::to_string(start) + "," +
                          std::to_string(start + length) + ") out of bounds for " + shape_str(a.shape()));
  }
  const int64_t rowsz = a.numel() / a.dim(0);
  Shape os = a.shape();
  os[0] = length;
  std::vector<double> v(a.data().begin() + start * rowsz, a.data().begin() + (start + length) * rowsz);
  Tensor out(std::move(os), std::move(v));
  if (a.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    attach(out, {a}, [on, an, start, rowsz] {
      an->ensure_grad();
      const size_t base = static_cast<size_t>(start * rowsz);
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[base + i] += on->grad[i];
    });
  }
  return out;
}

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValidationError("concat_lastdim: no inputs");
  const int rank = parts[0].rank();
  int64_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank)
      throw ValidationError("concat_lastdim: rank mismatch " + shape_str(p.shape()));
    for (int d = 0; d + 1 < rank; ++d)
      if (p.dim(d) != parts[0].dim(d))
        throw ValidationError("concat_lastdim: leading extents differ, " + shape_str(p.shape()) +
                              " vs " + shape_str(parts[0].shape()));
    total += p.dim(rank - 1);
  }
  const int64_t rows = parts[0].numel() / parts[0].dim(rank - 1);
  Shape os = parts[0].shape();
  os[static_cast<size_t>(rank - 1)] = total;
  std::vector<double> v(static_cast<size_t>(rows * total));
  int64_t coff = 0;
  for (const Tensor& p : parts) {
    const int64_t c = p.dim(rank - 1);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < c; ++j)
        v[static_cast<size_t>(r * total + coff + j)] = p.at(r * c + j);
    coff += c;
  }
  Tensor out(std::move(os), std::move(v));
  if (any_grad(parts)) {
    TensorNode* on = out.node();
    std::vector<TensorNode*> pn;
    std::vector<int64_t> widths;
    for (const Tensor& p : parts) {
      pn.push_back(p.node());
      widths.push_back(p.dim(rank - 1));
    }
    attach(out, parts, [on, pn, widths, rows, total] {
      int64_t off = 0;
      for (size_t k = 0; k < pn.size(); ++k) {
        const int64_t c = widths[k];
        if (pn[k]->requires_grad) {
          pn[k]->ensure_grad();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < c; ++j)
              pn[k]->grad[static_cast<size_t>(r * c + j)] += on->grad[static_cast<size_t>(r * total + off + j)];
        }
        off += c;
      }
    });
  }
  return out;
}

Tensor slice_lastdim(const Tensor& a, int64_t start, int64_t length) {
  const int rank = a.rank();
  if (rank < 1) throw ValidationError("slice_lastdim: empty shape");
  const int64_t cols = a.dim(rank - 1);
  if (start < 0 || length <= 0 || start + length > cols) {
    throw ValidationError("slice_lastdim: range [" + std::to_string(start) + "," +
                          std::to_string(start + length) + ") out of bounds for " + shape_str(a.shape()));
  }
  const int64_t rows = a.numel() / cols;
  Shape os = a.shape();
  os[static_cast<size_t>(rank - 1)] = length;
  std::vector<double> v(static_cast<size_t>(rows * length));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < length; ++j) v[static_cast<size_t>(r * length + j)] = a.at(r * cols + start + j);
  Tensor out(std::move(os), std::move(v));
  if (a.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    attach(out, {a}, [on, an, rows, cols, start, length] {
      an->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < length; ++j)
          an->grad[static_cast<size_t>(r * cols + start + j)] += on->grad[static_cast<size_t>(r * length + j)];
    });
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              int64_t stride, int64_t padding) {
  if (input.rank() != 3 || weight.rank() != 4) {
    throw ValidationError("conv2d: expected input (C,H,W) and weight (O,C,kh,kw), got " +
                          shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  }
  const int64_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const int64_t O = weight.dim(0), Cw = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (C != Cw) {
    throw ValidationError("conv2d: channel mismatch, input " + shape_str(input.shape()) +
                          " vs weight " + shape_str(weight.shape()));
  }
  if (stride < 1 || padding < 0 || kh > H + 2 * padding || kw > W + 2 * padding) {
    throw ValidationError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                          " does not fit input " + shape_str(input.shape()) + " with stride " +
                          std::to_string(stride) + " pad " + std::to_string(padding));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != O)) {
    throw ValidationError("conv2d: bias shape " + shape_str(bias->shape()) + " does not match O=" +
                          std::to_string(O));
  }
  const int64_t Ho = (H + 2 * padding - kh) / stride + 1;
  const int64_t Wo = (W + 2 * padding - kw) / stride + 1;
  std::vector<double> v(static_cast<size_t>(O * Ho * Wo), 0.0);
  const auto in = input.data();
  const auto wv = weight.data();
  for (int64_t o = 0; o < O; ++o) {
    const double b = bias ? bias->at(o) : 0.0;
    for (int64_t i = 0; i < Ho; ++i)
      for (int64_t j = 0; j < Wo; ++j) {
        double acc = b;
        for (int64_t c = 0; c < C; ++c)
          for (int64_t u = 0; u < kh; ++u) {
            const int64_t y = i * stride - padding + u;
            if (y < 0 || y >= H) continue;
            for (int64_t x0 = 0; x0 < kw; ++x0) {
              const int64_t x = j * stride - padding + x0;
              if (x < 0 || x >= W) continue;
              acc += in[static_cast<size_t>((c * H + y) * W + x)] *
                     wv[static_cast<size_t>(((o * C + c) * kh + u) * kw + x0)];
            }
          }
        v[static_cast<size_t>((o * Ho + i) * Wo + j)] = acc;
      }
  }
  Tensor out({O, Ho, Wo}, std::move(v));
  std::vector<Tensor> inputs = {input, weight};
  if (bias) inputs.push_back(*bias);
  if (any_grad(inputs)) {
    TensorNode* on = out.node();
    TensorNode* xn = input.node();
    TensorNode* wn = weight.node();
    TensorNode* bn = bias ? bias->node() : nullptr;
    attach(out, inputs, [on, xn, wn, bn, C, H, W, O, kh, kw, Ho, Wo, stride, padding] {
      if (xn->requires_grad) xn->ensure_grad();
      if (wn->requires_grad) wn->ensure_grad();
      if (bn && bn->requires_grad) bn->ensure_grad();
      for (int64_t o = 0; o < O; ++o)
        for (int64_t i = 0; i < Ho; ++i)
          for (int64_t j = 0; j < Wo; ++j) {
            const double g = on->grad[static_cast<size_t>((o * Ho + i) * Wo + j)];
            if (g == 0.0) continue;
            if (bn && bn->requires_grad) bn->grad[static_cast<size_t>(o)] += g;
            for (int64_t c = 0; c < C; ++c)
              for (int64_t u = 0; u < kh; ++u) {
                const int64_t y = i * stride - padding + u;
                if (y < 0 || y >= H) continue;
                for (int64_t x0 = 0; x0 < kw; ++x0) {
                  const int64_t x = j * stride - padding + x0;
                  if (x < 0 || x >= W) continue;
                  const size_t xi = static_cast<size_t>((c * H + y) * W + x);
                  const size_t wi = static_cast<size_t>(((o * C + c) * kh + u) * kw + x0);
                  if (xn->requires_grad) xn->grad[xi] += g * wn->value[wi];
                  if (wn->requires_grad) wn->grad[wi] += g * xn->value[xi];
                }
              }
          }
    });
  }
  return out;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight,
                        const std::optional<Tensor>& bias, int64_t kernel) {
  if (input.rank() != 3 || weight.rank() != 4) {
    throw ValidationError("conv_transpose2d: expected input (C,H,W) and weight (C,O,k,k), got " +
                          shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  }
  const int64_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  if (weight.dim(0) != C || weight.dim(2) != kernel || weight.dim(3) != kernel) {
    throw ValidationError("conv_transpose2d: weight " + shape_str(weight.shape()) +
                          " incompatible with input " + shape_str(input.shape()) + " kernel " +
                          std::to_string(kernel));
  }
  const int64_t O = weight.dim(1);
  const int64_t Ho = H * kernel, Wo = W * kernel;
  std::vector<double> v(static_cast<size_t>(O * Ho * Wo), 0.0);
  const auto in = input.data();
  const auto wv = weight.data();
  if (bias) {
    for (int64_t o = 0; o < O; ++o)
      std::fill(v.begin() + o * Ho * Wo, v.begin() + (o + 1) * Ho * Wo, bias->at(o));
  }
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < H; ++i)
      for (int64_t j = 0; j < W; ++j) {
        const double x = in[static_cast<size_t>((c * H + i) * W + j)];
        if (x == 0.0) continue;
        for (int64_t o = 0; o < O; ++o)
          for (int64_t u = 0; u < kernel; ++u)
            for (int64_t t = 0; t < kernel; ++t)
              v[static_cast<size_t>((o * Ho + i * kernel + u) * Wo + j * kernel + t)] +=
                  x * wv[static_cast<size_t>(((c * O + o) * kernel + u) * kernel + t)];
      }
  Tensor out({O, Ho, Wo}, std::move(v));
  std::vector<Tensor> inputs = {input, weight};
  if (bias) inputs.push_back(*bias);
  if (any_grad(inputs)) {
    TensorNode* on = out.node();
    TensorNode* xn = input.node();
    TensorNode* wn = weight.node();
    TensorNode* bn = bias ? bias->node() : nullptr;
    attach(out, inputs, [on, xn, wn, bn, C, H, W, O, kernel, Ho, Wo] {
      if (xn->requires_grad) xn->ensure_grad();
      if (wn->requires_grad) wn->ensure_grad();
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t o = 0; o < O; ++o) {
          double s = 0.0;
          for (int64_t i = 0; i < Ho * Wo; ++i) s += on->grad[static_cast<size_t>(o * Ho * Wo + i)];
          bn->grad[static_cast<size_t>(o)] += s;
        }
      }
      for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < H; ++i)
          for (int64_t j = 0; j < W; ++j) {
            const size_t xi = static_cast<size_t>((c * H + i) * W + j);
            for (int64_t o = 0; o < O; ++o)
              for (int64_t u = 0; u < kernel; ++u)
                for (int64_t t = 0; t < kernel; ++t) {
                  const double g =
                      on->grad[static_cast<size_t>((o * Ho + i * kernel + u) * Wo + j * kernel + t)];
                  if (g == 0.0) continue;
                  const size_t wi = static_cast<size_t>(((c * O + o) * kernel + u) * kernel + t);
                  if (xn->requires_grad) xn->grad[xi] += g * wn->value[wi];
                  if (wn->requires_grad) wn->grad[wi] += g * xn->value[xi];
                }
          }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  Tensor out({1}, {s});
  if (a.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    attach(out, {a}, [on, an] {
      an->ensure_grad();
      for (double& g : an->grad) g += on->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  const double n = static_cast<double>(a.numel());
  Tensor out({1}, {s / n});
  if (a.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    attach(out, {a}, [on, an, n] {
      an->ensure_grad();
      for (double& g : an->grad) g += on->grad[0] / n;
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  if (v.rank() != 1) throw ValidationError("add_rowvec: vector must be rank 1, got " + shape_str(v.shape()));
  const int64_t cols = v.dim(0);
  if (m.rank() < 1 || m.dim(m.rank() - 1) != cols || m.numel() % cols != 0) {
    throw ValidationError("add_rowvec: last extent of " + shape_str(m.shape()) + " must equal " +
                          std::to_string(cols));
  }
  const int64_t rows = m.numel() / cols;
  std::vector<double> out_v(static_cast<size_t>(m.numel()));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < cols; ++j) out_v[static_cast<size_t>(r * cols + j)] = m.at(r * cols + j) + v.at(j);
  Tensor out(m.shape(), std::move(out_v));
  if (any_grad({m, v})) {
    TensorNode* on = out.node();
    TensorNode* mn = m.node();
    TensorNode* vn = v.node();
    attach(out, {m, v}, [on, mn, vn, rows, cols] {
      if (mn->requires_grad) {
        mn->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) mn->grad[i] += on->grad[i];
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < cols; ++j) vn->grad[static_cast<size_t>(j)] += on->grad[static_cast<size_t>(r * cols + j)];
      }
    });
  }
  return out;
}

Tensor mul_rowvec(const Tensor& m, const Tensor& v) {
  if (v.rank() != 1) throw ValidationError("mul_rowvec: vector must be rank 1, got " + shape_str(v.shape()));
  const int64_t cols = v.dim(0);
  if (m.rank() < 1 || m.dim(m.rank() - 1) != cols || m.numel() % cols != 0) {
    throw ValidationError("mul_rowvec: last extent of " + shape_str(m.shape()) + " must equal " +
                          std::to_string(cols));
  }
  const int64_t rows = m.numel() / cols;
  std::vector<double> out_v(static_cast<size_t>(m.numel()));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < cols; ++j) out_v[static_cast<size_t>(r * cols + j)] = m.at(r * cols + j) * v.at(j);
  Tensor out(m.shape(), std::move(out_v));
  if (any_grad({m, v})) {
    TensorNode* on = out.node();
    TensorNode* mn = m.node();
    TensorNode* vn = v.node();
    attach(out, {m, v}, [on, mn, vn, rows, cols] {
      if (mn->requires_grad) {
        mn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < cols; ++j)
            mn->grad[static_cast<size_t>(r * cols + j)] +=
                on->grad[static_cast<size_t>(r * cols + j)] * vn->value[static_cast<size_t>(j)];
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < cols; ++j)
            vn->grad[static_cast<size_t>(j)] +=
                on->grad[static_cast<size_t>(r * cols + j)] * mn->value[static_cast<size_t>(r * cols + j)];
      }
    });
  }
  return out;
}

Tensor patchify(const Tensor& image, int64_t patch) {
  if (image.rank() != 3 || image.dim(1) != image.dim(2)) {
    throw ValidationError("patchify: expected square (C,S,S) image, got " + shape_str(image.shape()));
  }
  const int64_t C = image.dim(0), S = image.dim(1);
  if (patch <= 0 || S % patch != 0) {
    throw ValidationError("patchify: size " + std::to_string(S) + " not divisible by patch " +
                          std::to_string(patch));
  }
  const int64_t g = S / patch;
  const int64_t N = g * g;
  const int64_t F = C * patch * patch;
  std::vector<double> v(static_cast<size_t>(N * F));
  const auto in = image.data();
  for (int64_t pi = 0; pi < g; ++pi)
    for (int64_t pj = 0; pj < g; ++pj) {
      const int64_t n = pi * g + pj;
      for (int64_t c = 0; c < C; ++c)
        for (int64_t u = 0; u < patch; ++u)
          for (int64_t t = 0; t < patch; ++t)
            v[static_cast<size_t>(n * F + (c * patch + u) * patch + t)] =
                in[static_cast<size_t>((c * S + pi * patch + u) * S + pj * patch + t)];
    }
  Tensor out({N, F}, std::move(v));
  if (image.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = image.node();
    attach(out, {image}, [on, an, C, S, patch, g] {
      an->ensure_grad();
      const int64_t F = C * patch * patch;
      for (int64_t pi = 0; pi < g; ++pi)
        for (int64_t pj = 0; pj < g; ++pj) {
          const int64_t n = pi * g + pj;
          for (int64_t c = 0; c < C; ++c)
            for (int64_t u = 0; u < patch; ++u)
              for (int64_t t = 0; t < patch; ++t)
                an->grad[static_cast<size_t>((c * S + pi * patch + u) * S + pj * patch + t)] +=
                    on->grad[static_cast<size_t>(n * F + (c * patch + u) * patch + t)];
        }
    });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids) {
  if (table.rank() != 2) throw ValidationError("embedding_lookup: table must be (V,D), got " + shape_str(table.shape()));
  if (ids.empty()) throw ValidationError("embedding_lookup: empty id sequence");
  const int64_t V = table.dim(0), D = table.dim(1);
  for (int64_t id : ids) {
    if (id < 0 || id >= V)
      throw ValidationError("embedding_lookup: id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(V));
  }
  const int64_t L = static_cast<int64_t>(ids.size());
  std::vector<double> v(static_cast<size_t>(L * D));
  for (int64_t l = 0; l < L; ++l)
    for (int64_t j = 0; j < D; ++j) v[static_cast<size_t>(l * D + j)] = table.at(ids[static_cast<size_t>(l)] * D + j);
  Tensor out({L, D}, std::move(v));
  if (table.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* tn = table.node();
    attach(out, {table}, [on, tn, ids, D] {
      tn->ensure_grad();
      for (size_t l = 0; l < ids.size(); ++l)
        for (int64_t j = 0; j < D; ++j)
          tn->grad[static_cast<size_t>(ids[l] * D + j)] += on->grad[l * static_cast<size_t>(D) + static_cast<size_t>(j)];
    });
  }
  return out;
}

Tensor reduce_max_axis(const Tensor& a, int axis) {
  if (a.rank() != 2) throw ValidationError("reduce_max_axis: expected rank-2 input, got " + shape_str(a.shape()));
  if (axis != 0 && axis != 1) throw ValidationError("reduce_max_axis: axis must be 0 or 1");
  const int64_t R = a.dim(0), C = a.dim(1);
  const int64_t n = axis == 0 ? C : R;
  std::vector<double> v(static_cast<size_t>(n));
  std::vector<int64_t> arg(static_cast<size_t>(n));
  if (axis == 0) {
    for (int64_t c = 0; c < C; ++c) {
      double best = a.at(c);
      int64_t bi = 0;
      for (int64_t r = 1; r < R; ++r) {
        const double x = a.at(r * C + c);
        if (x > best) {
          best = x;
          bi = r;
        }
      }
      v[static_cast<size_t>(c)] = best;
      arg[static_cast<size_t>(c)] = bi;
    }
  } else {
    for (int64_t r = 0; r < R; ++r) {
      double best = a.at(r * C);
      int64_t bi = 0;
      for (int64_t c = 1; c < C; ++c) {
        const double x = a.at(r * C + c);
        if (x > best) {
          best = x;
          bi = c;
        }
      }
      v[static_cast<size_t>(r)] = best;
      arg[static_cast<size_t>(r)] = bi;
    }
  }
  Tensor out({n}, std::move(v));
  if (a.requires_grad()) {
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    attach(out, {a}, [on, an, arg = std::move(arg), axis, C] {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) {
        const int64_t idx = axis == 0 ? arg[i] * C + static_cast<int64_t>(i)
                                      : static_cast<int64_t>(i) * C + arg[i];
        an->grad[static_cast<size_t>(idx)] += on->grad[i];
      }
    });
  }
  return out;
}

namespace {
const std::map<std::string, OpKind>& kind_table() {
  static const std::map<std::string, OpKind> t = {
      {"matmul", OpKind::Matmul},
      {"add", OpKind::Add},
      {"sub", OpKind::Sub},
      {"mul", OpKind::Mul},
      {"div", OpKind::Div},
      {"minimum", OpKind::Minimum},
      {"maximum", OpKind::Maximum},
      {"relu", OpKind::Relu},
      {"gelu", OpKind::Gelu},
      {"sigmoid", OpKind::Sigmoid},
      {"log", OpKind::Log},
      {"abs", OpKind::Abs},
      {"powi", OpKind::Powi},
      {"softmax_lastdim", OpKind::SoftmaxLastdim},
      {"layernorm_lastdim", OpKind::LayernormLastdim},
      {"reshape", OpKind::Reshape},
      {"concat_firstdim", OpKind::ConcatFirstdim},
      {"slice_firstdim", OpKind::SliceFirstdim},
      {"concat_lastdim", OpKind::ConcatLastdim},
      {"slice_lastdim", OpKind::SliceLastdim},
      {"conv2d", OpKind::Conv2d},
      {"conv_transpose2d", OpKind::ConvTranspose2d},
      {"sum", OpKind::Sum},
      {"mean", OpKind::Mean},
      {"transpose_last2", OpKind::TransposeLast2},
      {"add_scalar", OpKind::AddScalar},
      {"mul_scalar", OpKind::MulScalar},
      {"add_rowvec", OpKind::AddRowvec},
      {"mul_rowvec", OpKind::MulRowvec},
      {"patchify", OpKind::Patchify},
      {"embedding_lookup", OpKind::EmbeddingLookup},
      {"reduce_max_axis", OpKind::ReduceMaxAxis},
  };
  return t;
}

void expect_inputs(OpKind kind, const std::vector<Tensor>& in, size_t n) {
  if (in.size() != n) {
    throw ValidationError(std::string("op '") + op_kind_name(kind) + "' expects " +
                          std::to_string(n) + " inputs, got " + std::to_string(in.size()));
  }
}
}  // namespace

OpKind op_kind_from_string(const std::string& name) {
  auto it = kind_table().find(name);
  if (it == kind_table().end()) throw ValidationError("unknown op kind '" + name + "'");
  return it->second;
}

const char* op_kind_name(OpKind kind) {
  for (const auto& [name, k] : kind_table())
    if (k == kind) return name.c_str();
  return "?";
}

Tensor forward_op(OpKind kind, const std::vector<Tensor>& in, const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::Matmul:
      expect_inputs(kind, in, 2);
      return matmul(in[0], in[1]);
    case OpKind::Add:
      expect_inputs(kind, in, 2);
      return add(in[0], in[1]);
    case OpKind::Sub:
      expect_inputs(kind, in, 2);
      return sub(in[0], in[1]);
    case OpKind::Mul:
      expect_inputs(kind, in, 2);
      return mul(in[0], in[1]);
    case OpKind::Div:
      expect_inputs(kind, in, 2);
      return div(in[0], in[1]);
    case OpKind::Minimum:
      expect_inputs(kind, in, 2);
      return minimum(in[0], in[1]);
    case OpKind::Maximum:
      expect_inputs(kind, in, 2);
      return maximum(in[0], in[1]);
    case OpKind::Relu:
      expect_inputs(kind, in, 1);
      return relu(in[0]);
    case OpKind::Gelu:
      expect_inputs(kind, in, 1);
      return gelu(in[0]);
    case OpKind::Sigmoid:
      expect_inputs(kind, in, 1);
      return sigmoid(in[0]);
    case OpKind::Log:
      expect_inputs(kind, in, 1);
      return log(in[0]);
    case OpKind::Abs:
      expect_inputs(kind, in, 1);
      return abs(in[0]);
    case OpKind::Powi:
      expect_inputs(kind, in, 1);
      return powi(in[0], attrs.exponent);
    case OpKind::SoftmaxLastdim:
      expect_inputs(kind, in, 1);
      return softmax_lastdim(in[0]);
    case OpKind::LayernormLastdim:
      expect_inputs(kind, in, 1);
      return layernorm_lastdim(in[0], attrs.eps);
    case OpKind::Reshape:
      expect_inputs(kind, in, 1);
      return reshape(in[0], attrs.shape);
    case OpKind::ConcatFirstdim:
      return concat_firstdim(in);
    case OpKind::SliceFirstdim:
      expect_inputs(kind, in, 1);
      return slice_firstdim(in[0], attrs.start, attrs.length);
    case OpKind::ConcatLastdim:
      return concat_lastdim(in);
    case OpKind::SliceLastdim:
      expect_inputs(kind, in, 1);
      return slice_lastdim(in[0], attrs.start, attrs.length);
    case OpKind::Conv2d:
      if (in.size() == 2) return conv2d(in[0], in[1], std::nullopt, attrs.stride, attrs.padding);
      expect_inputs(kind, in, 3);
      return conv2d(in[0], in[1], in[2], attrs.stride, attrs.padding);
    case OpKind::ConvTranspose2d:
      if (in.size() == 2) return conv_transpose2d(in[0], in[1], std::nullopt, attrs.kernel);
      expect_inputs(kind, in, 3);
      return conv_transpose2d(in[0], in[1], in[2], attrs.kernel);
    case OpKind::Sum:
      expect_inputs(kind, in, 1);
      return sum(in[0]);
    case OpKind::Mean:
      expect_inputs(kind, in, 1);
      return mean(in[0]);
    case OpKind::TransposeLast2:
      expect_inputs(kind, in, 1);
      return transpose_last2(in[0]);
    case OpKind::AddScalar:
      expect_inputs(kind, in, 1);
      return add_scalar(in[0], attrs.scalar);
    case OpKind::MulScalar:
      expect_inputs(kind, in, 1);
      return mul_scalar(in[0], attrs.scalar);
    case OpKind::AddRowvec:
      expect_inputs(kind, in, 2);
      return add_rowvec(in[0], in[1]);
    case OpKind::MulRowvec:
      expect_inputs(kind, in, 2);
      return mul_rowvec(in[0], in[1]);
    case OpKind::Patchify:
      expect_inputs(kind, in, 1);
      return patchify(in[0], attrs.patch);
    case OpKind::EmbeddingLookup:
      expect_inputs(kind, in, 1);
      return embedding_lookup(in[0], attrs.ids);
    case OpKind::ReduceMaxAxis:
      expect_inputs(kind, in, 1);
      return reduce_max_axis(in[0], attrs.axis);
  }
  throw ValidationError("unknown op kind");
}

}  // namespace onetracker::ops
