#pragma once

#include <optional>
#include <string>
#include <vector>

#include "onetracker/inference.hpp"

namespace onetracker {

// Intersection-over-union of two center-format boxes (pixel units).
double box_iou(const Box& a, const Box& b);
double box_iou(const BoxI& a, const BoxI& b);

// Euclidean distance between box centers, in pixels / in ground-truth box units.
double center_error(const Box& pred, const Box& gt);
double norm_center_error(const Box& pred, const Box& gt);

// Mean over the 51 thresholds {0, 1/50, ..., 1} of the fraction of frames
// with IoU >= threshold.
double success_auc(const std::vector<double>& ious);

// Binary mask overlap; two empty masks count as a perfect match.
double mask_iou(const Tensor& pred, const Tensor& gt);

// Boundary F-measure with 1-px dilation matching. Boundary pixels are mask
// pixels with a background 4-neighbour (or touching the image edge).
double boundary_f(const Tensor& pred, const Tensor& gt);

/// Per-frame measurements pooled across clips; merging is order-independent.
struct MetricAccumulator {
  std::vector<double> ious;
  std::vector<double> center_errors;
  std::vector<double> norm_errors;
  std::vector<double> mask_j;
  std::vector<double> mask_f;

  void add_box_frame(const Box& pred, const BoxI& gt);
  void add_mask_frame(const Tensor& pred_mask, const Tensor& gt_mask);
  void merge(const MetricAccumulator& other);
};

struct EvalMetrics {
  double auc = 0.0;
  double precision = 0.0;
  double precision_norm = 0.0;
  double mean_iou = 0.0;
  int64_t frames = 0;
  std::optional<double> j;
  std::optional<double> f;
  std::optional<double> jf;
};

EvalMetrics compute_metrics(const MetricAccumulator& acc);

// Scores frames 1..L-1 of a tracked clip (frame 0 is initialization).
void accumulate_clip(MetricAccumulator& acc, const TrackResult& result, const Clip& clip,
                     Task task);

std::string metrics_table(const EvalMetrics& m);
// One "key=value" per line, values printed with six decimals.
std::string metrics_keyvalues(const EvalMetrics& m);

}  // namespace onetracker
