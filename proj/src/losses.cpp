#include "onetracker/losses.hpp"

#include <algorithm>
#include <cmath>

namespace onetracker {

namespace O = onetracker::ops;

namespace {
constexpr double kScoreClamp = 1e-6;

Tensor clamp01(const Tensor& p) {
  Tensor lo = Tensor::full(p.shape(), kScoreClamp);
  Tensor hi = Tensor::full(p.shape(), 1.0 - kScoreClamp);
  return O::minimum(O::maximum(p, lo), hi);
}

int64_t clamp_cell(double v, int64_t g) {
  return std::min<int64_t>(g - 1, std::max<int64_t>(0, static_cast<int64_t>(std::floor(v))));
}
}  // namespace

Tensor make_heatmap_target(const Box& gt, int64_t grid) {
  if (grid <= 0) throw ValidationError("make_heatmap_target: grid must be positive");
  if (gt.w <= 0 || gt.h <= 0) {
    throw ValidationError("make_heatmap_target: degenerate ground-truth box");
  }
  const int64_t ci = clamp_cell(gt.cy * static_cast<double>(grid), grid);
  const int64_t cj = clamp_cell(gt.cx * static_cast<double>(grid), grid);
  const double sigma =
      std::max(1.0, 0.5 * std::sqrt(gt.w * gt.h) * static_cast<double>(grid));
  std::vector<double> v(static_cast<size_t>(grid * grid), 0.0);
  const double cut2 = 9.0 * sigma * sigma;  // 3-sigma radius
  for (int64_t i = 0; i < grid; ++i) {
    for (int64_t j = 0; j < grid; ++j) {
      const double d2 = static_cast<double>((i - ci) * (i - ci) + (j - cj) * (j - cj));
      if (d2 > cut2) continue;
      v[static_cast<size_t>(i * grid + j)] = std::exp(-d2 / (2.0 * sigma * sigma));
    }
  }
  v[static_cast<size_t>(ci * grid + cj)] = 1.0;
  return Tensor({grid, grid}, std::move(v));
}

Tensor weighted_focal(const Tensor& score, const Tensor& target, int alpha, int beta) {
  if (score.numel() != target.numel()) {
    throw ValidationError("weighted_focal: score " + shape_str(score.shape()) +
                          " does not match target " + shape_str(target.shape()));
  }
  int64_t n_pos = 0;
  std::vector<double> pos_v(static_cast<size_t>(target.numel()));
  for (int64_t i = 0; i < target.numel(); ++i) {
    const bool pos = target.at(i) == 1.0;
    pos_v[static_cast<size_t>(i)] = pos ? 1.0 : 0.0;
    if (pos) ++n_pos;
  }
  if (n_pos == 0) throw ValidationError("weighted_focal: empty positive set");
  Tensor pos_mask(target.shape(), std::move(pos_v));
  Tensor neg_mask = O::add_scalar(O::mul_scalar(pos_mask, -1.0), 1.0);

  Tensor p = clamp01(O::reshape(score, target.shape()));
  Tensor one_minus_p = O::add_scalar(O::mul_scalar(p, -1.0), 1.0);
  Tensor one_minus_y = O::add_scalar(O::mul_scalar(target.detached_copy(), -1.0), 1.0);

  Tensor pos_term = O::mul(pos_mask, O::mul(O::powi(one_minus_p, alpha), O::log(p)));
  Tensor neg_term = O::mul(
      neg_mask, O::mul(O::powi(one_minus_y, beta), O::mul(O::powi(p, alpha), O::log(one_minus_p))));
  Tensor total = O::sum(O::add(pos_term, neg_term));
  return O::mul_scalar(total, -1.0 / static_cast<double>(n_pos));
}

double giou_value(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  const double cw = std::max(a.x1(), b.x1()) - std::min(a.x0(), b.x0());
  const double ch = std::max(a.y1(), b.y1()) - std::min(a.y0(), b.y0());
  const double enclosing = cw * ch;
  return inter / uni - (enclosing - uni) / enclosing;
}

Tensor corners_from_cxcywh(const Tensor& cx, const Tensor& cy, const Tensor& w, const Tensor& h) {
  Tensor hw = O::mul_scalar(w, 0.5);
  Tensor hh = O::mul_scalar(h, 0.5);
  return O::concat_firstdim({O::sub(cx, hw), O::sub(cy, hh), O::add(cx, hw), O::add(cy, hh)});
}

namespace {
Tensor coord(const Tensor& t, int64_t i) { return O::slice_firstdim(t, i, 1); }
}  // namespace

Tensor giou_loss(const Tensor& pred_corners, const Tensor& gt_corners) {
  if (pred_corners.shape() != Shape{4} || gt_corners.shape() != Shape{4}) {
    throw ValidationError("giou_loss: expected (4,) corner tensors, got " +
                          shape_str(pred_corners.shape()) + " and " + shape_str(gt_corners.shape()));
  }
  if (gt_corners.at(2) <= gt_corners.at(0) || gt_corners.at(3) <= gt_corners.at(1)) {
    throw ValidationError("giou_loss: degenerate ground-truth box");
  }
  Tensor ax0 = coord(pred_corners, 0), ay0 = coord(pred_corners, 1);
  Tensor ax1 = coord(pred_corners, 2), ay1 = coord(pred_corners, 3);
  Tensor bx0 = coord(gt_corners, 0), by0 = coord(gt_corners, 1);
  Tensor bx1 = coord(gt_corners, 2), by1 = coord(gt_corners, 3);

  Tensor iw = O::relu(O::sub(O::minimum(ax1, bx1), O::maximum(ax0, bx0)));
  Tensor ih = O::relu(O::sub(O::minimum(ay1, by1), O::maximum(ay0, by0)));
  Tensor inter = O::mul(iw, ih);
  Tensor area_a = O::mul(O::sub(ax1, ax0), O::sub(ay1, ay0));
  Tensor area_b = O::mul(O::sub(bx1, bx0), O::sub(by1, by0));
  Tensor uni = O::sub(O::add(area_a, area_b), inter);
  Tensor cw = O::sub(O::maximum(ax1, bx1), O::minimum(ax0, bx0));
  Tensor ch = O::sub(O::maximum(ay1, by1), O::minimum(ay0, by0));
  Tensor enclosing = O::mul(cw, ch);
  Tensor giou = O::sub(O::div(inter, uni), O::div(O::sub(enclosing, uni), enclosing));
  return O::reshape(O::add_scalar(O::mul_scalar(giou, -1.0), 1.0), {1});
}

Tensor l1_box_loss(const Tensor& pred_cxcywh, const Tensor& gt_cxcywh) {
  if (pred_cxcywh.shape() != Shape{4} || gt_cxcywh.shape() != Shape{4}) {
    throw ValidationError("l1_box_loss: expected (4,) tensors, got " +
                          shape_str(pred_cxcywh.shape()) + " and " + shape_str(gt_cxcywh.shape()));
  }
  return O::mean(O::abs(O::sub(pred_cxcywh, gt_cxcywh)));
}

Tensor dice(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ValidationError("dice: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
  Tensor num = O::mul_scalar(O::sum(O::mul(a, b)), 2.0);
  Tensor den = O::add(O::sum(O::powi(a, 2)), O::sum(O::powi(b, 2)));
  return O::add_scalar(O::mul_scalar(O::div(num, den), -1.0), 1.0);
}

Tensor boxinst_projection_loss(const Tensor& mask_logits, const Box& gt_box) {
  if (mask_logits.rank() != 2) {
    throw ValidationError("boxinst_projection_loss: expected (S, S) logits, got " +
                          shape_str(mask_logits.shape()));
  }
  const int64_t rows = mask_logits.dim(0), cols = mask_logits.dim(1);
  const int64_t j0 = clamp_cell(gt_box.x0() * static_cast<double>(cols), cols);
  const int64_t j1 = std::min<int64_t>(
      cols - 1, std::max<int64_t>(0, static_cast<int64_t>(std::ceil(gt_box.x1() * cols)) - 1));
  const int64_t i0 = clamp_cell(gt_box.y0() * static_cast<double>(rows), rows);
  const int64_t i1 = std::min<int64_t>(
      rows - 1, std::max<int64_t>(0, static_cast<int64_t>(std::ceil(gt_box.y1() * rows)) - 1));
  if (gt_box.w <= 0 || gt_box.h <= 0 || j1 < j0 || i1 < i0) {
    throw ValidationError("boxinst_projection_loss: empty ground-truth box");
  }
  std::vector<double> xv(static_cast<size_t>(cols), 0.0);
  for (int64_t j = j0; j <= j1; ++j) xv[static_cast<size_t>(j)] = 1.0;
  std::vector<double> yv(static_cast<size_t>(rows), 0.0);
  for (int64_t i = i0; i <= i1; ++i) yv[static_cast<size_t>(i)] = 1.0;
  Tensor x_ind({cols}, std::move(xv));
  Tensor y_ind({rows}, std::move(yv));

  Tensor m = O::sigmoid(mask_logits);
  Tensor x_proj = O::reduce_max_axis(m, 0);  // per-column max
  Tensor y_proj = O::reduce_max_axis(m, 1);  // per-row max
  return O::add(dice(x_proj, x_ind), dice(y_proj, y_ind));
}

Tensor mask_bce_dice_loss(const Tensor& mask_logits, const Tensor& gt_mask) {
  if (mask_logits.shape() != gt_mask.shape()) {
    throw ValidationError("mask_bce_dice_loss: logits " + shape_str(mask_logits.shape()) +
                          " do not match mask " + shape_str(gt_mask.shape()));
  }
  Tensor p = clamp01(O::sigmoid(mask_logits));
  Tensor one_minus_p = O::add_scalar(O::mul_scalar(p, -1.0), 1.0);
  Tensor y = gt_mask.detached_copy();
  Tensor one_minus_y = O::add_scalar(O::mul_scalar(y, -1.0), 1.0);
  Tensor bce = O::mul_scalar(
      O::mean(O::add(O::mul(y, O::log(p)), O::mul(one_minus_y, O::log(one_minus_p)))), -1.0);
  return O::add(bce, dice(p, y));
}

Tensor stage_loss(const StageLossInputs& inputs, const LossWeights& weights, int stage,
                  std::optional<Modality> task) {
  if (stage != 1 && stage != 2) throw ValidationError("stage_loss: stage must be 1 or 2");
  if (stage == 2 && !task) throw ValidationError("stage_loss: stage 2 requires a task");
  if (weights.lambda_iou < 0 || weights.lambda_l1 < 0 || weights.lambda_mask < 0) {
    throw ValidationError("stage_loss: loss weights must be non-negative");
  }
  const std::string where =
      "stage " + std::to_string(stage) + (task ? std::string(" task ") + modality_name(*task) : "");
  if (!inputs.cls) throw ValidationError("stage_loss: missing cls component for " + where);
  if (!inputs.iou) throw ValidationError("stage_loss: missing iou component for " + where);
  if (!inputs.l1) throw ValidationError("stage_loss: missing l1 component for " + where);
  if (!inputs.mask) throw ValidationError("stage_loss: missing mask component for " + where);
  Tensor total = O::add(*inputs.cls, O::mul_scalar(*inputs.iou, weights.lambda_iou));
  total = O::add(total, O::mul_scalar(*inputs.l1, weights.lambda_l1));
  return O::add(total, O::mul_scalar(*inputs.mask, weights.lambda_mask));
}

}  // namespace onetracker
