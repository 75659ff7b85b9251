#include "onetracker/nn.hpp"

#include <cmath>

namespace onetracker::nn {

namespace O = onetracker::ops;

Tensor uniform_init(Shape shape, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

Tensor embed_init(Shape shape, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.uniform(-0.02, 0.02);
  return Tensor(std::move(shape), std::move(v));
}

void set_frozen(Parameter& p, bool frozen) {
  p.frozen = frozen;
  p.tensor.set_requires_grad(!frozen);
  if (frozen) p.tensor.zero_grad();
}

Adapter::Adapter(const std::string& name, int64_t in, int64_t out, int64_t rank, double scale,
                 Rng& rng)
    : down(uniform_init({in, rank}, in, rng), name + ".down"),
      up(Tensor::zeros({rank, out}), name + ".up"),
      scale(scale),
      rank(rank) {
  const int64_t cap = std::min(in, out);
  if (rank <= 0 || rank > cap) {
    throw ValidationError("adapter '" + name + "': rank " + std::to_string(rank) +
                          " exceeds min(d,k)=" + std::to_string(cap));
  }
}

Tensor Adapter::forward(const Tensor& x) const {
  Tensor h = O::relu(O::matmul(x, down.tensor));
  return O::mul_scalar(O::matmul(h, up.tensor), scale);
}

void Adapter::collect(std::vector<Parameter*>& out) {
  out.push_back(&down);
  out.push_back(&up);
}

Linear::Linear(const std::string& name, int64_t in, int64_t out, Rng& rng, bool with_bias)
    : weight(uniform_init({in, out}, in, rng), name + ".weight"),
      has_bias(with_bias) {
  if (with_bias) bias = Parameter(Tensor::zeros({out}), name + ".bias");
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = O::matmul(x, weight.tensor);
  if (has_bias) y = O::add_rowvec(y, bias.tensor);
  if (adapter) y = O::add(y, adapter->forward(x));
  return y;
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
  if (adapter) adapter->collect(out);
}

LayerNorm::LayerNorm(const std::string& name, int64_t dim)
    : gamma(Tensor::full({dim}, 1.0), name + ".gamma"),
      beta(Tensor::zeros({dim}), name + ".beta") {}

Tensor LayerNorm::forward(const Tensor& x) const {
  Tensor n = O::layernorm_lastdim(x, eps);
  return O::add_rowvec(O::mul_rowvec(n, gamma.tensor), beta.tensor);
}

void LayerNorm::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

Conv2dLayer::Conv2dLayer(const std::string& name, int64_t in_ch, int64_t out_ch, int64_t kernel,
                         int64_t stride, int64_t padding, Rng& rng)
    : weight(uniform_init({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng),
             name + ".weight"),
      bias(Tensor::zeros({out_ch}), name + ".bias"),
      stride(stride),
      padding(padding) {}

Tensor Conv2dLayer::forward(const Tensor& x) const {
  return O::conv2d(x, weight.tensor, bias.tensor, stride, padding);
}

void Conv2dLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

ConvTranspose2dLayer::ConvTranspose2dLayer(const std::string& name, int64_t in_ch, int64_t out_ch,
                                           int64_t kernel, Rng& rng)
    : weight(uniform_init({in_ch, out_ch, kernel, kernel}, in_ch * kernel * kernel, rng),
             name + ".weight"),
      bias(Tensor::zeros({out_ch}), name + ".bias"),
      kernel(kernel) {}

Tensor ConvTranspose2dLayer::forward(const Tensor& x) const {
  return O::conv_transpose2d(x, weight.tensor, bias.tensor, kernel);
}

void ConvTranspose2dLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

}  // namespace onetracker::nn
