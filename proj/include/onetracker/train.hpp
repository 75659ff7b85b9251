#pragma once

#include <iosfwd>

#include "onetracker/checkpoint.hpp"
#include "onetracker/config.hpp"
#include "onetracker/metrics.hpp"

namespace onetracker {

/// One crop-protocol training example (stage 1, and stage 2 for N/D/T/E).
struct CropSample {
  Tensor tmpl;    // (3, template_size, template_size)
  Tensor search;  // (3, search_size, search_size)
  Box gt_crop;    // normalized search-crop coordinates
  PromptPayload payload;
};

/// One full-frame mask-protocol example (stage 2, task M).
struct MaskSample {
  Tensor z0, zprev, cur;  // (3, S, S) at search resolution
  PromptPayload payload;  // {initial mask, previous mask} at search resolution
  Tensor mask_target;     // (S, S), binary
  Box gt_crop;            // normalized full-frame coordinates
};

CropSample make_crop_sample(const Clip& clip, int64_t t, Task task, const TrackerConfig& cfg,
                            Rng& rng);
MaskSample make_mask_sample(const Clip& clip, int64_t t, const BackboneConfig& backbone);

/// Differentiable per-sample loss from encoded search tokens: focal heatmap
/// term, GIoU + L1 at the ground-truth center cell, and the mask term
/// (BoxInst projection, or BCE+Dice when `mask_target` is given).
Tensor sample_loss(const FoundationTracker& ft, const Tensor& search_tokens, const Box& gt_crop,
                   const LossWeights& weights, int stage, std::optional<Modality> task,
                   const Tensor* mask_target = nullptr);

struct TrainReport {
  std::vector<double> losses;
  double first_loss = 0.0;
  double last_loss = 0.0;
};

/// Stage-1 training; logs one line per step, aborts on non-finite loss.
TrainReport pretrain_foundation(FoundationTracker& ft, const std::vector<Clip>& clips,
                                const TrackerConfig& cfg, std::ostream& log);

struct FinetuneReport {
  TrainReport train;
  Census census;
};

/// Stage-2 training of the prompt parts; audits that every frozen parameter
/// is bit-identical afterwards and prints the trainable census.
FinetuneReport finetune_prompt(PromptTracker& pt, const std::vector<Clip>& clips,
                               const TrackerConfig& cfg, std::ostream& log);

EvalMetrics evaluate_clips(const TrackerHandle& handle, const std::vector<Clip>& clips, Task task,
                           const TrackOptions& opts = {});

}  // namespace onetracker
