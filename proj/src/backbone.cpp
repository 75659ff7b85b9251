#include "onetracker/backbone.hpp"

#include <cmath>

namespace onetracker {

namespace O = onetracker::ops;

void BackboneConfig::validate() const {
  if (dim <= 0 || depth <= 0 || heads <= 0) {
    throw ValidationError("backbone config: dim/depth/heads must be positive");
  }
  if (dim % heads != 0) {
    throw ValidationError("backbone config: dim " + std::to_string(dim) +
                          " not divisible by heads " + std::to_string(heads));
  }
  if (patch_size <= 0 || template_size % patch_size != 0 || search_size % patch_size != 0) {
    throw ValidationError("backbone config: template/search sizes must be divisible by patch_size " +
                          std::to_string(patch_size));
  }
  if (mlp_ratio <= 0) throw ValidationError("backbone config: mlp_ratio must be positive");
}

PatchProj::PatchProj(const std::string& name, int64_t channels, int64_t patch, int64_t dim,
                     Rng& rng)
    : proj(name + ".proj", channels * patch * patch, dim, rng), channels(channels), patch(patch) {}

Tensor PatchProj::forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != channels) {
    throw ValidationError("patch_embed: expected (" + std::to_string(channels) +
                          ", S, S) image, got " + shape_str(image.shape()));
  }
  return proj.forward(O::patchify(image, patch));
}

void PatchProj::collect(std::vector<Parameter*>& out) { proj.collect(out); }

EncoderLayer::EncoderLayer(const std::string& name, int64_t dim, int64_t heads, int64_t hidden,
                           Rng& rng)
    : ln1(name + ".ln1", dim),
      ln2(name + ".ln2", dim),
      wq(name + ".wq", dim, dim, rng),
      wk(name + ".wk", dim, dim, rng),
      wv(name + ".wv", dim, dim, rng),
      wo(name + ".wo", dim, dim, rng),
      fc1(name + ".fc1", dim, hidden, rng),
      fc2(name + ".fc2", hidden, dim, rng),
      dim(dim),
      heads(heads) {
  if (dim % heads != 0) {
    throw ValidationError("encoder layer '" + name + "': dim " + std::to_string(dim) +
                          " not divisible by heads " + std::to_string(heads));
  }
}

Tensor EncoderLayer::forward(const Tensor& h) const {
  if (h.rank() != 2 || h.dim(1) != dim) {
    throw ValidationError("encoder_layer: expected (N, " + std::to_string(dim) + ") tokens, got " +
                          shape_str(h.shape()));
  }
  const int64_t dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor x = ln1.forward(h);
  Tensor q = wq.forward(x);
  Tensor k = wk.forward(x);
  Tensor v = wv.forward(x);
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int64_t hd = 0; hd < heads; ++hd) {
    Tensor qh = O::slice_lastdim(q, hd * dh, dh);
    Tensor kh = O::slice_lastdim(k, hd * dh, dh);
    Tensor vh = O::slice_lastdim(v, hd * dh, dh);
    Tensor attn = O::softmax_lastdim(O::mul_scalar(O::matmul(qh, O::transpose_last2(kh)), scale));
    head_outs.push_back(O::matmul(attn, vh));
  }
  Tensor merged = heads == 1 ? head_outs[0] : O::concat_lastdim(head_outs);
  Tensor h1 = O::add(h, wo.forward(merged));

  Tensor y = ln2.forward(h1);
  return O::add(h1, fc2.forward(O::gelu(fc1.forward(y))));
}

void EncoderLayer::collect(std::vector<Parameter*>& out) {
  ln1.collect(out);
  ln2.collect(out);
  wq.collect(out);
  wk.collect(out);
  wv.collect(out);
  wo.collect(out);
  fc1.collect(out);
  fc2.collect(out);
}

TokenState encode(const std::vector<EncoderLayer>& layers, const Tensor& template_tokens,
                  const Tensor& search_tokens, const PromptHook& hook) {
  if (template_tokens.rank() != 2 || search_tokens.rank() != 2 ||
      template_tokens.dim(1) != search_tokens.dim(1)) {
    throw ValidationError("encode: token dims differ, " + shape_str(template_tokens.shape()) +
                          " vs " + shape_str(search_tokens.shape()));
  }
  TokenState state;
  state.n_z = template_tokens.dim(0);
  state.n_s = search_tokens.dim(0);
  state.tokens = O::concat_firstdim({template_tokens, search_tokens});
  const Shape expected = state.tokens.shape();
  for (size_t l = 0; l < layers.size(); ++l) {
    if (hook) {
      Tensor hooked = hook(state.tokens, static_cast<int>(l));
      if (hooked.shape() != expected) {
        throw ValidationError("prompt hook at layer " + std::to_string(l) + " returned shape " +
                              shape_str(hooked.shape()) + ", expected " + shape_str(expected));
      }
      state.tokens = hooked;
    }
    state.tokens = layers[l].forward(state.tokens);
    if (state.tokens.shape() != expected) {
      throw std::runtime_error("encode: layer " + std::to_string(l) + " broke shape invariance");
    }
    state.layer_index = static_cast<int>(l) + 1;
  }
  return state;
}

}  // namespace onetracker
