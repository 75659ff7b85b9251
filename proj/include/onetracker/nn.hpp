#pragma once

#include <optional>
#include <string>
#include <vector>

#include "onetracker/ops.hpp"
#include "onetracker/optim.hpp"
#include "onetracker/rng.hpp"

namespace onetracker::nn {

/// Fan-in scaled uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor uniform_init(Shape shape, int64_t fan_in, Rng& rng);
/// Small uniform init in [-0.02, 0.02] (positional/prompt embeddings).
Tensor embed_init(Shape shape, Rng& rng);

void set_frozen(Parameter& p, bool frozen);

/// Bottleneck residual adapter: y += s * relu(x @ down) @ up.  `up` starts at
/// zero so an adapted linear is exactly its base at init.
struct Adapter {
  Parameter down;  // (in, r)
  Parameter up;    // (r, out)
  double scale = 0.1;
  int64_t rank = 0;

  Adapter() = default;
  Adapter(const std::string& name, int64_t in, int64_t out, int64_t rank, double scale, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(std::vector<Parameter*>& out);
};

/// Dense layer over row-token matrices: (N, in) -> (N, out).
struct Linear {
  Parameter weight;  // (in, out)
  Parameter bias;    // (out)
  bool has_bias = true;
  std::optional<Adapter> adapter;

  Linear() = default;
  Linear(const std::string& name, int64_t in, int64_t out, Rng& rng, bool with_bias = true);
  Tensor forward(const Tensor& x) const;
  int64_t in_features() const { return weight.tensor.dim(0); }
  int64_t out_features() const { return weight.tensor.dim(1); }
  void collect(std::vector<Parameter*>& out);
};

struct LayerNorm {
  Parameter gamma;  // (D)
  Parameter beta;   // (D)
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int64_t dim);
  Tensor forward(const Tensor& x) const;
  void collect(std::vector<Parameter*>& out);
};

struct Conv2dLayer {
  Parameter weight;  // (O, C, k, k)
  Parameter bias;    // (O)
  int64_t stride = 1;
  int64_t padding = 0;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int64_t in_ch, int64_t out_ch, int64_t kernel,
              int64_t stride, int64_t padding, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(std::vector<Parameter*>& out);
};

struct ConvTranspose2dLayer {
  Parameter weight;  // (C, O, k, k)
  Parameter bias;    // (O)
  int64_t kernel = 1;

  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(const std::string& name, int64_t in_ch, int64_t out_ch, int64_t kernel,
                       Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(std::vector<Parameter*>& out);
};

}  // namespace onetracker::nn
