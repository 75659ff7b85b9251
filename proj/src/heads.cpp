#include "onetracker/heads.hpp"

#include <cmath>

namespace onetracker {

namespace O = onetracker::ops;

namespace {
int64_t grid_from_tokens(const Tensor& tokens, const char* who) {
  if (tokens.rank() != 2) {
    throw ValidationError(std::string(who) + ": expected (N, D) tokens, got " +
                          shape_str(tokens.shape()));
  }
  const int64_t n = tokens.dim(0);
  const int64_t g = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (g * g != n) {
    throw ValidationError(std::string(who) + ": token count " + std::to_string(n) +
                          " is not a perfect square");
  }
  return g;
}
}  // namespace

Tensor tokens_to_grid(const Tensor& tokens) {
  const int64_t g = grid_from_tokens(tokens, "tokens_to_grid");
  const int64_t d = tokens.dim(1);
  return O::reshape(O::transpose_last2(tokens), {d, g, g});
}

BoxHead::BoxHead(const std::string& name, int64_t dim, Rng& rng) : dim(dim) {
  const int64_t mid = std::max<int64_t>(8, dim / 2);
  score_c1 = nn::Conv2dLayer(name + ".score.c1", dim, mid, 3, 1, 1, rng);
  score_c2 = nn::Conv2dLayer(name + ".score.c2", mid, 1, 1, 1, 0, rng);
  offset_c1 = nn::Conv2dLayer(name + ".offset.c1", dim, mid, 3, 1, 1, rng);
  offset_c2 = nn::Conv2dLayer(name + ".offset.c2", mid, 2, 1, 1, 0, rng);
  size_c1 = nn::Conv2dLayer(name + ".size.c1", dim, mid, 3, 1, 1, rng);
  size_c2 = nn::Conv2dLayer(name + ".size.c2", mid, 2, 1, 1, 0, rng);
}

BoxMaps BoxHead::forward(const Tensor& search_tokens) const {
  const int64_t g = grid_from_tokens(search_tokens, "box_head");
  Tensor feat = tokens_to_grid(search_tokens);
  BoxMaps maps;
  maps.grid = g;
  maps.score = O::sigmoid(score_c2.forward(O::relu(score_c1.forward(feat))));
  maps.offset = O::sigmoid(offset_c2.forward(O::relu(offset_c1.forward(feat))));
  maps.size = O::sigmoid(size_c2.forward(O::relu(size_c1.forward(feat))));
  return maps;
}

void BoxHead::collect(std::vector<Parameter*>& out) {
  score_c1.collect(out);
  score_c2.collect(out);
  offset_c1.collect(out);
  offset_c2.collect(out);
  size_c1.collect(out);
  size_c2.collect(out);
}

SegHead::SegHead(const std::string& name, int64_t dim, int64_t patch, Rng& rng)
    : dim(dim), patch(patch) {
  if (patch <= 0 || (patch & (patch - 1)) != 0) {
    throw ValidationError("seg_head: patch size " + std::to_string(patch) +
                          " must be a power of two");
  }
  int64_t ch = dim;
  int64_t remaining = patch;
  int stage = 0;
  while (remaining > 1) {
    const int64_t f = std::min<int64_t>(4, remaining);
    const int64_t out_ch = std::max<int64_t>(4, ch / 2);
    stages.emplace_back(name + ".up" + std::to_string(stage), ch, out_ch, f, rng);
    ch = out_ch;
    remaining /= f;
    ++stage;
  }
  out_conv = nn::Conv2dLayer(name + ".out", ch, 1, 1, 1, 0, rng);
}

Tensor SegHead::forward(const Tensor& search_tokens) const {
  const int64_t g = grid_from_tokens(search_tokens, "seg_head");
  Tensor feat = tokens_to_grid(search_tokens);
  for (const auto& st : stages) feat = O::relu(st.forward(feat));
  Tensor logits = out_conv.forward(feat);  // (1, S, S)
  const int64_t s = g * patch;
  return O::reshape(logits, {s, s});
}

void SegHead::collect(std::vector<Parameter*>& out) {
  for (auto& st : stages) st.collect(out);
  out_conv.collect(out);
}

std::pair<Box, double> decode_box(const BoxMaps& maps, const std::optional<Tensor>& penalty) {
  const int64_t g = maps.grid;
  if (penalty && (penalty->rank() != 2 || penalty->dim(0) != g || penalty->dim(1) != g)) {
    throw ValidationError("decode_box: penalty shape " + shape_str(penalty->shape()) +
                          " does not match grid " + std::to_string(g));
  }
  int64_t best = 0;
  double best_val = -1.0;
  for (int64_t i = 0; i < g * g; ++i) {
    double v = maps.score.at(i);
    if (penalty) v *= penalty->at(i);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  const int64_t ci = best / g, cj = best % g;
  Box box;
  box.cx = (static_cast<double>(cj) + maps.offset.at(0 * g * g + best)) / static_cast<double>(g);
  box.cy = (static_cast<double>(ci) + maps.offset.at(1 * g * g + best)) / static_cast<double>(g);
  box.w = maps.size.at(0 * g * g + best);
  box.h = maps.size.at(1 * g * g + best);
  return {box, maps.score.at(best)};
}

}  // namespace onetracker
