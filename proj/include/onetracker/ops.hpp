#pragma once

#include <optional>
#include <string>
#include <vector>

#include "onetracker/tensor.hpp"

namespace onetracker::ops {

// Elementwise, same shape unless noted.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);  // ties go to a
Tensor maximum(const Tensor& a, const Tensor& b);  // ties go to a
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

// (R, C) matrix combined with a length-C row vector, broadcast over rows.
Tensor add_rowvec(const Tensor& m, const Tensor& v);
Tensor mul_rowvec(const Tensor& m, const Tensor& v);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor powi(const Tensor& a, int exponent);  // exponent >= 0

Tensor matmul(const Tensor& a, const Tensor& b);        // (m,k) x (k,n)
Tensor transpose_last2(const Tensor& a);                // rank >= 2
Tensor softmax_lastdim(const Tensor& a);
Tensor layernorm_lastdim(const Tensor& a, double eps = 1e-5);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_firstdim(const std::vector<Tensor>& parts);
Tensor slice_firstdim(const Tensor& a, int64_t start, int64_t length);
Tensor concat_lastdim(const std::vector<Tensor>& parts);
Tensor slice_lastdim(const Tensor& a, int64_t start, int64_t length);

/// Input (C,H,W), weight (O,C,kh,kw), optional bias (O). Output spatial size
/// floor((H + 2*pad - kh)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              int64_t stride = 1, int64_t padding = 0);

/// Non-overlapping upsampling transpose conv: stride == kernel, no padding.
/// Input (C,H,W), weight (C,O,k,k), optional bias (O) -> (O, H*k, W*k).
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight,
                        const std::optional<Tensor>& bias, int64_t kernel);

Tensor sum(const Tensor& a);   // -> shape {1}
Tensor mean(const Tensor& a);  // -> shape {1}

/// (C,S,S) image -> (N, C*p*p) row-major patch matrix, N = (S/p)^2.
Tensor patchify(const Tensor& image, int64_t patch);

/// Row gather from (V,D) table; gradient scatter-adds into the table.
Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids);

/// Max-reduce a (R,C) matrix. axis 0 -> (C), axis 1 -> (R). Gradient flows to
/// the first maximal element along the reduced axis.
Tensor reduce_max_axis(const Tensor& a, int axis);

/// Uniform dispatch over the primitive set, mainly for table-driven tests.
enum class OpKind {
  Matmul,
  Add,
  Sub,
  Mul,
  Div,
  Minimum,
  Maximum,
  Relu,
  Gelu,
  Sigmoid,
  Log,
  Abs,
  Powi,
  SoftmaxLastdim,
  LayernormLastdim,
  Reshape,
  ConcatFirstdim,
  SliceFirstdim,
  ConcatLastdim,
  SliceLastdim,
  Conv2d,
  ConvTranspose2d,
  Sum,
  Mean,
  TransposeLast2,
  AddScalar,
  MulScalar,
  AddRowvec,
  MulRowvec,
  Patchify,
  EmbeddingLookup,
  ReduceMaxAxis,
};

struct OpAttrs {
  double scalar = 0.0;
  int64_t start = 0;
  int64_t length = 0;
  int64_t stride = 1;
  int64_t padding = 0;
  int64_t kernel = 0;
  int exponent = 1;
  int axis = 0;
  double eps = 1e-5;
  int64_t patch = 1;
  Shape shape;
  std::vector<int64_t> ids;
};

OpKind op_kind_from_string(const std::string& name);
const char* op_kind_name(OpKind kind);
Tensor forward_op(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs = {});

}  // namespace onetracker::ops
