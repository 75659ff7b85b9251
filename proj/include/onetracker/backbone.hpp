#pragma once

#include <functional>
#include <vector>

#include "onetracker/nn.hpp"

namespace onetracker {

struct BackboneConfig {
  int64_t dim = 768;
  int64_t depth = 12;
  int64_t heads = 12;
  int64_t patch_size = 16;
  int64_t template_size = 192;
  int64_t search_size = 384;
  double mlp_ratio = 4.0;

  void validate() const;
  int64_t grid_template() const { return template_size / patch_size; }
  int64_t grid_search() const { return search_size / patch_size; }
  int64_t n_template() const { return grid_template() * grid_template(); }
  int64_t n_search() const { return grid_search() * grid_search(); }
  int64_t mlp_hidden() const {
    return static_cast<int64_t>(mlp_ratio * static_cast<double>(dim) + 0.5);
  }
};

/// Token matrix plus the template/search partition it carries through the
/// encoder: rows [0, n_z) are template tokens, rows [n_z, n_z+n_s) search.
struct TokenState {
  Tensor tokens;
  int64_t n_z = 0;
  int64_t n_s = 0;
  int layer_index = 0;
};

/// Per-layer callback: receives H^l and the 0-based layer index, returns the
/// (same-shape) tokens the layer should actually consume.
using PromptHook = std::function<Tensor(const Tensor&, int)>;

/// Learned linear projection of non-overlapping patches; positional
/// embeddings are added by the caller.
struct PatchProj {
  nn::Linear proj;
  int64_t channels = 0;
  int64_t patch = 0;

  PatchProj() = default;
  PatchProj(const std::string& name, int64_t channels, int64_t patch, int64_t dim, Rng& rng);
  /// (C, S, S) -> (N, D), N = (S/patch)^2, row-major patch order.
  Tensor forward(const Tensor& image) const;
  void collect(std::vector<Parameter*>& out);
};

/// Pre-norm transformer block: H += Attn(LN(H)); H += FFN(LN(H)).
struct EncoderLayer {
  nn::LayerNorm ln1, ln2;
  nn::Linear wq, wk, wv, wo;
  nn::Linear fc1, fc2;
  int64_t dim = 0;
  int64_t heads = 0;

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, int64_t dim, int64_t heads, int64_t hidden, Rng& rng);
  Tensor forward(const Tensor& h) const;
  void collect(std::vector<Parameter*>& out);
};

/// Runs H^0 = [template; search] through the layer stack.  When a hook is
/// installed it is consulted before every layer; a wrong-shape return aborts
/// with the layer index.
TokenState encode(const std::vector<EncoderLayer>& layers, const Tensor& template_tokens,
                  const Tensor& search_tokens, const PromptHook& hook = nullptr);

}  // namespace onetracker
