#pragma once

#include "onetracker/data.hpp"
#include "onetracker/losses.hpp"

namespace onetracker {

/// Maps a task to its prompt modality; Task::RGB has none and throws.
Modality task_modality(Task t);

/// w[i] = 0.5 * (1 - cos(2*pi*i / (n-1))); requires n >= 2.
Tensor hanning_window(int64_t n);
/// Outer product of hanning_window(n) with itself, shape (n, n).
Tensor hanning_penalty_2d(int64_t n);

/// Affine record of a square crop window: frame = window origin + crop
/// fraction * side.  Exactly invertible for box mapping.
struct CropAffine {
  double x0 = 0, y0 = 0, side = 1;
};

struct CropResult {
  Tensor image;  // (C, out, out)
  CropAffine affine;
};

/// Square window of side factor * sqrt(w*h) centered on the box, bilinearly
/// resampled to out_size with zero padding outside the frame.
CropResult crop_region(const Tensor& frame, const Box& center_box_px, double factor,
                       int64_t out_size);

/// Plain bilinear resize of a (C, H, W) image to (C, out, out).
Tensor resize_bilinear(const Tensor& img, int64_t out_size);

/// Box in normalized crop coordinates -> frame pixels (center form).
Box crop_to_frame(const Box& crop_box, const CropAffine& affine);
/// Box in frame pixels -> normalized crop coordinates.
Box frame_to_crop(const Box& frame_box, const CropAffine& affine);

struct TrackOptions {
  double template_factor = 2.0;
  double search_factor = 4.0;
  bool hanning = true;
};

struct FramePrediction {
  Box box;  // frame pixels, center form
  double score = 0;
  std::optional<Tensor> mask;  // (1, S, S) probability map at frame resolution
  bool empty_prev_mask = false;
};

struct TrackResult {
  std::vector<FramePrediction> frames;
  double seconds = 0;
};

/// A model to track with: a bare foundation (task RGB) or a prompt tracker.
struct TrackerHandle {
  FoundationTracker* foundation = nullptr;
  const PromptTracker* prompt = nullptr;

  TrackerHandle() = default;
  explicit TrackerHandle(FoundationTracker& f) : foundation(&f) {}
  explicit TrackerHandle(const PromptTracker& p)
      : foundation(p.foundation), prompt(&p) {}
};

/// Crop-protocol tracking for tasks RGB / N / D / T / E.  Frame 0 seeds the
/// template from the ground-truth box; later frames decode with the Hanning
/// penalty and update the search window.
TrackResult track_clip(const TrackerHandle& handle, const Clip& clip, Task task,
                       const TrackOptions& opts = {});

/// Full-frame protocol for task M: templates are the initial and previous
/// frames (with annotation / predicted-mask prompts), no cropping.
TrackResult track_clip_mask(const TrackerHandle& handle, const Clip& clip,
                            const TrackOptions& opts = {});

/// Per-pixel argmax merge of independent per-object mask passes.  Returns one
/// (1, S, S) label map per frame: 0 = background, k+1 = object k.
std::vector<Tensor> merge_object_masks(const std::vector<TrackResult>& per_object,
                                       int64_t frame_size);

}  // namespace onetracker
