#pragma once

#include "onetracker/heads.hpp"

namespace onetracker {

/// Stage-1 model: RGB patch embedding with separate template/search
/// positional tables, the transformer encoder, and the box/seg heads.
struct FoundationTracker {
  BackboneConfig cfg;
  PatchProj rgb_proj;
  Parameter pos_template;  // (n_template, D)
  Parameter pos_search;    // (n_search, D)
  std::vector<EncoderLayer> layers;
  BoxHead box_head;
  SegHead seg_head;

  FoundationTracker(BackboneConfig cfg, uint64_t seed);

  /// RGB (3, template_size, template_size) -> (n_template, D) with pos added.
  Tensor embed_template(const Tensor& image) const;
  /// RGB (3, search_size, search_size) -> (n_search, D) with pos added.
  Tensor embed_search(const Tensor& image) const;

  /// Standard crop protocol: one template, one search frame.
  TokenState encode_pair(const Tensor& template_img, const Tensor& search_img,
                         const PromptHook& hook = nullptr) const;
  /// Full-frame mask protocol: [initial frame, previous frame, current frame]
  /// all at search resolution; the first two act as templates.
  TokenState encode_mask_layout(const Tensor& initial_img, const Tensor& prev_img,
                                const Tensor& current_img, const PromptHook& hook = nullptr) const;

  /// The search-token block of an encoded state.
  Tensor search_tokens(const TokenState& state) const;

  void collect(std::vector<Parameter*>& out);
  std::vector<Parameter*> parameters();
  void freeze_all();
  int64_t param_count();
};

}  // namespace onetracker
