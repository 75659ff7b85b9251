#pragma once

#include <optional>

#include "onetracker/backbone.hpp"

namespace onetracker {

/// Axis-aligned box in normalized search-crop coordinates.
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;
  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
};

/// Center-probability, sub-cell offset, and size maps over the G x G patch
/// grid of the search region.  All three are post-sigmoid.
struct BoxMaps {
  Tensor score;   // (1, G, G)
  Tensor offset;  // (2, G, G), channel 0 = x, channel 1 = y
  Tensor size;    // (2, G, G), channel 0 = w, channel 1 = h
  int64_t grid = 0;
};

/// Three conv stacks (3x3 -> ReLU -> 1x1) emitting score/offset/size maps.
struct BoxHead {
  nn::Conv2dLayer score_c1, score_c2;
  nn::Conv2dLayer offset_c1, offset_c2;
  nn::Conv2dLayer size_c1, size_c2;
  int64_t dim = 0;

  BoxHead() = default;
  BoxHead(const std::string& name, int64_t dim, Rng& rng);
  BoxMaps forward(const Tensor& search_tokens) const;
  void collect(std::vector<Parameter*>& out);
};

/// Transpose-conv upsampling stages (kernel == stride, factors of the patch
/// size) followed by a 1x1 conv to per-pixel mask logits.
struct SegHead {
  std::vector<nn::ConvTranspose2dLayer> stages;
  nn::Conv2dLayer out_conv;
  int64_t dim = 0;
  int64_t patch = 0;

  SegHead() = default;
  SegHead(const std::string& name, int64_t dim, int64_t patch, Rng& rng);
  /// (N_s, D) -> (S, S) logits, S = G * patch.
  Tensor forward(const Tensor& search_tokens) const;
  void collect(std::vector<Parameter*>& out);
};

/// Argmax decode with optional multiplicative penalty window; ties go to the
/// smallest row-major cell index.  Returns the box and the raw peak score.
std::pair<Box, double> decode_box(const BoxMaps& maps,
                                  const std::optional<Tensor>& penalty = std::nullopt);

/// Reshapes a row-major token grid (N, D) into a (D, G, G) feature map.
Tensor tokens_to_grid(const Tensor& tokens);

}  // namespace onetracker
