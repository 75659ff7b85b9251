#pragma once

#include "onetracker/peft.hpp"

namespace onetracker {

struct LossWeights {
  double lambda_iou = 2.0;
  double lambda_l1 = 5.0;
  double lambda_mask = 1.0;
};

/// Gaussian-splat classification target over the G x G grid: the cell holding
/// the box center is exactly 1, sigma = max(1, 0.5 * sqrt(w*h) * G) cells,
/// zero outside a 3-sigma radius.
Tensor make_heatmap_target(const Box& gt, int64_t grid);

/// CornerNet-style weighted focal loss.  `score` must match the target's
/// element count; values are clamped to [1e-6, 1-1e-6] before logs.
Tensor weighted_focal(const Tensor& score, const Tensor& target, int alpha = 2, int beta = 4);

/// Plain scalar GIoU of two boxes (no autodiff).
double giou_value(const Box& a, const Box& b);

/// Stacks four scalar tensors (cx, cy, w, h) into (4,) corner form
/// [x0, y0, x1, y1] for giou_loss.
Tensor corners_from_cxcywh(const Tensor& cx, const Tensor& cy, const Tensor& w, const Tensor& h);

/// 1 - GIoU on (4,) corner tensors [x0, y0, x1, y1]; differentiable.
Tensor giou_loss(const Tensor& pred_corners, const Tensor& gt_corners);

/// Mean absolute difference over (cx, cy, w, h); inputs are (4,) tensors.
Tensor l1_box_loss(const Tensor& pred_cxcywh, const Tensor& gt_cxcywh);

/// Dice distance 1 - 2*sum(ab) / (sum(a^2) + sum(b^2)) over same-shape tensors.
Tensor dice(const Tensor& a, const Tensor& b);

/// BoxInst projection term: Dice between the mask's axis max-projections and
/// the box's column/row indicators.  `gt_box` is in normalized crop coords.
Tensor boxinst_projection_loss(const Tensor& mask_logits, const Box& gt_box);

/// Supervised mask loss for task M stage 2: BCE + Dice, equal weights.
Tensor mask_bce_dice_loss(const Tensor& mask_logits, const Tensor& gt_mask);

/// Per-sample loss components; absent entries trip validation in stage_loss.
struct StageLossInputs {
  std::optional<Tensor> cls;
  std::optional<Tensor> iou;
  std::optional<Tensor> l1;
  std::optional<Tensor> mask;
};

/// Weighted sum cls + li*iou + ll*l1 + lm*mask.  `task` is empty for stage 1;
/// stage 2 requires it.  Missing components name themselves in the error.
Tensor stage_loss(const StageLossInputs& inputs, const LossWeights& weights, int stage,
                  std::optional<Modality> task);

}  // namespace onetracker
