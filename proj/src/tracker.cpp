#include "onetracker/tracker.hpp"

namespace onetracker {

namespace O = onetracker::ops;

FoundationTracker::FoundationTracker(BackboneConfig cfg_in, uint64_t seed) : cfg(cfg_in) {
  cfg.validate();
  Rng rng(Rng::derive(seed, 0x464f554e44ull));  // foundation stream
  rgb_proj = PatchProj("backbone.rgb", 3, cfg.patch_size, cfg.dim, rng);
  pos_template = Parameter(nn::embed_init({cfg.n_template(), cfg.dim}, rng), "backbone.pos_template");
  pos_search = Parameter(nn::embed_init({cfg.n_search(), cfg.dim}, rng), "backbone.pos_search");
  layers.reserve(static_cast<size_t>(cfg.depth));
  for (int64_t l = 0; l < cfg.depth; ++l) {
    layers.emplace_back("backbone.layer" + std::to_string(l), cfg.dim, cfg.heads, cfg.mlp_hidden(),
                        rng);
  }
  box_head = BoxHead("box_head", cfg.dim, rng);
  seg_head = SegHead("seg_head", cfg.dim, cfg.patch_size, rng);
}

Tensor FoundationTracker::embed_template(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(1) != cfg.template_size || image.dim(2) != cfg.template_size) {
    throw ValidationError("embed_template: expected (3, " + std::to_string(cfg.template_size) +
                          ", " + std::to_string(cfg.template_size) + "), got " +
                          shape_str(image.shape()));
  }
  return O::add(rgb_proj.forward(image), pos_template.tensor);
}

Tensor FoundationTracker::embed_search(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(1) != cfg.search_size || image.dim(2) != cfg.search_size) {
    throw ValidationError("embed_search: expected (3, " + std::to_string(cfg.search_size) + ", " +
                          std::to_string(cfg.search_size) + "), got " + shape_str(image.shape()));
  }
  return O::add(rgb_proj.forward(image), pos_search.tensor);
}

TokenState FoundationTracker::encode_pair(const Tensor& template_img, const Tensor& search_img,
                                          const PromptHook& hook) const {
  return encode(layers, embed_template(template_img), embed_search(search_img), hook);
}

TokenState FoundationTracker::encode_mask_layout(const Tensor& initial_img, const Tensor& prev_img,
                                                 const Tensor& current_img,
                                                 const PromptHook& hook) const {
  Tensor z0 = embed_search(initial_img);
  Tensor zp = embed_search(prev_img);
  Tensor templates = O::concat_firstdim({z0, zp});
  return encode(layers, templates, embed_search(current_img), hook);
}

Tensor FoundationTracker::search_tokens(const TokenState& state) const {
  return O::slice_firstdim(state.tokens, state.n_z, state.n_s);
}

void FoundationTracker::collect(std::vector<Parameter*>& out) {
  rgb_proj.collect(out);
  out.push_back(&pos_template);
  out.push_back(&pos_search);
  for (auto& l : layers) l.collect(out);
  box_head.collect(out);
  seg_head.collect(out);
}

std::vector<Parameter*> FoundationTracker::parameters() {
  std::vector<Parameter*> out;
  collect(out);
  return out;
}

void FoundationTracker::freeze_all() {
  for (Parameter* p : parameters()) nn::set_frozen(*p, true);
}

int64_t FoundationTracker::param_count() {
  int64_t n = 0;
  for (Parameter* p : parameters()) n += p->tensor.numel();
  return n;
}

}  // namespace onetracker
