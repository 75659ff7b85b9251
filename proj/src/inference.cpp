#include "onetracker/inference.hpp"

#include <chrono>
#include <cmath>

namespace onetracker {

namespace O = onetracker::ops;

Modality task_modality(Task t) {
  switch (t) {
    case Task::N: return Modality::N;
    case Task::M: return Modality::M;
    case Task::D: return Modality::D;
    case Task::T: return Modality::T;
    case Task::E: return Modality::E;
    case Task::RGB: break;
  }
  throw ValidationError("task rgb has no prompt modality");
}

Tensor hanning_window(int64_t n) {
  if (n < 2) throw ValidationError("hanning_window: n must be >= 2, got " + std::to_string(n));
  std::vector<double> v(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    v[static_cast<size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n - 1)));
  }
  return Tensor({n}, std::move(v));
}

Tensor hanning_penalty_2d(int64_t n) {
  Tensor w = hanning_window(n);
  std::vector<double> v(static_cast<size_t>(n * n));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) v[static_cast<size_t>(i * n + j)] = w.at(i) * w.at(j);
  return Tensor({n, n}, std::move(v));
}

namespace {

/// Bilinear sample of channel plane at continuous index coords (zero pad).
double sample(const Tensor& img, int64_t c, double fy, double fx) {
  const int64_t h = img.dim(1), w = img.dim(2);
  const int64_t x0 = static_cast<int64_t>(std::floor(fx));
  const int64_t y0 = static_cast<int64_t>(std::floor(fy));
  const double dx = fx - static_cast<double>(x0);
  const double dy = fy - static_cast<double>(y0);
  auto px = [&](int64_t y, int64_t x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return img.at((c * h + y) * w + x);
  };
  return (1 - dy) * ((1 - dx) * px(y0, x0) + dx * px(y0, x0 + 1)) +
         dy * ((1 - dx) * px(y0 + 1, x0) + dx * px(y0 + 1, x0 + 1));
}

Tensor resample_window(const Tensor& frame, double x0, double y0, double side, int64_t out) {
  const int64_t ch = frame.dim(0);
  std::vector<double> v(static_cast<size_t>(ch * out * out));
  const double step = side / static_cast<double>(out);
  for (int64_t c = 0; c < ch; ++c) {
    for (int64_t i = 0; i < out; ++i) {
      const double fy = y0 + (static_cast<double>(i) + 0.5) * step - 0.5;
      for (int64_t j = 0; j < out; ++j) {
        const double fx = x0 + (static_cast<double>(j) + 0.5) * step - 0.5;
        v[static_cast<size_t>((c * out + i) * out + j)] = sample(frame, c, fy, fx);
      }
    }
  }
  return Tensor({ch, out, out}, std::move(v));
}

}  // namespace

CropResult crop_region(const Tensor& frame, const Box& box, double factor, int64_t out_size) {
  if (frame.rank() != 3) {
    throw ValidationError("crop_region: expected (C, H, W) frame, got " + shape_str(frame.shape()));
  }
  if (factor <= 0) throw ValidationError("crop_region: factor must be positive");
  if (out_size < 1) throw ValidationError("crop_region: out_size must be >= 1");
  if (box.w <= 0 || box.h <= 0) {
    throw ValidationError("crop_region: degenerate box (w=" + std::to_string(box.w) +
                          ", h=" + std::to_string(box.h) + ")");
  }
  const double side = factor * std::sqrt(box.w * box.h);
  CropResult res;
  res.affine = {box.cx - 0.5 * side, box.cy - 0.5 * side, side};
  res.image = resample_window(frame, res.affine.x0, res.affine.y0, side, out_size);
  return res;
}

Tensor resize_bilinear(const Tensor& img, int64_t out_size) {
  if (img.rank() != 3 || img.dim(1) != img.dim(2)) {
    throw ValidationError("resize_bilinear: expected square (C, S, S) image, got " +
                          shape_str(img.shape()));
  }
  return resample_window(img, 0.0, 0.0, static_cast<double>(img.dim(1)), out_size);
}

Box crop_to_frame(const Box& b, const CropAffine& a) {
  return Box{a.x0 + b.cx * a.side, a.y0 + b.cy * a.side, b.w * a.side, b.h * a.side};
}

Box frame_to_crop(const Box& b, const CropAffine& a) {
  return Box{(b.cx - a.x0) / a.side, (b.cy - a.y0) / a.side, b.w / a.side, b.h / a.side};
}

namespace {

Box clamp_to_frame(Box b, int64_t s) {
  const double sd = static_cast<double>(s);
  b.w = std::min(sd, std::max(2.0, b.w));
  b.h = std::min(sd, std::max(2.0, b.h));
  b.cx = std::min(sd, std::max(0.0, b.cx));
  b.cy = std::min(sd, std::max(0.0, b.cy));
  return b;
}

Box center_box(const BoxI& b) {
  return Box{static_cast<double>(b.x) + 0.5 * static_cast<double>(b.w),
             static_cast<double>(b.y) + 0.5 * static_cast<double>(b.h), static_cast<double>(b.w),
             static_cast<double>(b.h)};
}

const std::vector<Tensor>* task_maps(const Clip& clip, Task task) {
  switch (task) {
    case Task::D: return &clip.depth;
    case Task::T: return &clip.thermal;
    case Task::E: return &clip.event;
    default: return nullptr;
  }
}

}  // namespace

TrackResult track_clip(const TrackerHandle& handle, const Clip& clip, Task task,
                       const TrackOptions& opts) {
  const auto t_start = std::chrono::steady_clock::now();
  if (handle.foundation == nullptr) throw ValidationError("track_clip: no model");
  if (task == Task::M) {
    throw ValidationError("track_clip: task rgb_m uses the mask protocol (track_clip_mask)");
  }
  if (task != Task::RGB) {
    if (handle.prompt == nullptr) {
      throw ValidationError(std::string("track_clip: task ") + task_name(task) +
                            " requires a prompt tracker");
    }
    if (handle.prompt->modality != task_modality(task)) {
      throw ValidationError(std::string("track_clip: model modality ") +
                            modality_name(handle.prompt->modality) + " does not match task " +
                            task_name(task));
    }
  }
  if (clip.frames.empty() || clip.boxes.empty()) {
    throw ValidationError("track_clip: clip has no frames or boxes");
  }
  const std::vector<Tensor>* maps = task_maps(clip, task);
  if (maps && static_cast<int64_t>(maps->size()) != clip.length) {
    throw ValidationError(std::string("track_clip: clip is missing ") + task_name(task) +
                          " modality maps");
  }
  if (task == Task::N && clip.text_ids.empty()) {
    throw ValidationError("track_clip: clip has no sentence but task rgb_n requires one");
  }
  const FoundationTracker& ft = *handle.foundation;
  const BackboneConfig& cfg = ft.cfg;

  Box prev = center_box(clip.boxes[0]);
  if (prev.w <= 0 || prev.h <= 0) throw ValidationError("track_clip: degenerate first-frame box");
  const CropResult tmpl = crop_region(clip.frames[0], prev, opts.template_factor, cfg.template_size);
  std::optional<Tensor> tmpl_map;
  if (maps) {
    tmpl_map = crop_region((*maps)[0], prev, opts.template_factor, cfg.template_size).image;
  }
  const Tensor penalty = hanning_penalty_2d(cfg.grid_search());

  TrackResult result;
  result.frames.push_back(FramePrediction{prev, 1.0, std::nullopt, false});
  for (int64_t t = 1; t < clip.length; ++t) {
    const CropResult sc = crop_region(clip.frames[static_cast<size_t>(t)], prev,
                                      opts.search_factor, cfg.search_size);
    TokenState state;
    if (handle.prompt) {
      PromptPayload payload;
      if (task == Task::N) {
        payload.text_ids = clip.text_ids;
      } else {
        payload.template_maps = {*tmpl_map};
        payload.search_map = crop_region((*maps)[static_cast<size_t>(t)], prev,
                                         opts.search_factor, cfg.search_size)
                                 .image;
      }
      state = handle.prompt->encode_pair(tmpl.image, sc.image, payload);
    } else {
      state = ft.encode_pair(tmpl.image, sc.image);
    }
    const BoxMaps bm = ft.box_head.forward(ft.search_tokens(state));
    const auto [crop_box, score] =
        decode_box(bm, opts.hanning ? std::optional<Tensor>(penalty) : std::nullopt);
    Box frame_box = clamp_to_frame(crop_to_frame(crop_box, sc.affine), clip.size);
    result.frames.push_back(FramePrediction{frame_box, score, std::nullopt, false});
    prev = frame_box;
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

namespace {

bool all_zero(const Tensor& t) {
  for (double v : t.data())
    if (v != 0.0) return false;
  return true;
}

Tensor binarize(const Tensor& prob, double thr) {
  std::vector<double> v(prob.data().begin(), prob.data().end());
  for (double& x : v) x = x > thr ? 1.0 : 0.0;
  return Tensor(prob.shape(), std::move(v));
}

}  // namespace

TrackResult track_clip_mask(const TrackerHandle& handle, const Clip& clip,
                            const TrackOptions& opts) {
  (void)opts;  // the mask protocol has no crop factors or penalty
  const auto t_start = std::chrono::steady_clock::now();
  if (handle.foundation == nullptr || handle.prompt == nullptr ||
      handle.prompt->modality != Modality::M) {
    throw ValidationError("track_clip_mask: requires an rgb_m prompt tracker");
  }
  if (static_cast<int64_t>(clip.masks.size()) != clip.length || clip.frames.empty()) {
    throw ValidationError("track_clip_mask: clip is missing mask annotations");
  }
  const FoundationTracker& ft = *handle.foundation;
  const int64_t ss = ft.cfg.search_size;

  const Tensor& mask0 = clip.masks[0];
  auto bbox0 = mask_bbox(mask0);
  if (!bbox0) throw ValidationError("track_clip_mask: empty first-frame mask");

  Tensor frame0_r = resize_bilinear(clip.frames[0], ss);
  Tensor mask0_s = binarize(resize_bilinear(mask0, ss), 0.5);
  Tensor prev_frame_r = frame0_r;
  Tensor prev_mask_s = mask0_s;

  TrackResult result;
  {
    FramePrediction p;
    p.box = center_box(*bbox0);
    p.score = 1.0;
    p.mask = mask0.detached_copy();
    result.frames.push_back(std::move(p));
  }
  Box prev_box = center_box(*bbox0);
  for (int64_t t = 1; t < clip.length; ++t) {
    Tensor cur_r = resize_bilinear(clip.frames[static_cast<size_t>(t)], ss);
    const bool empty_prev = all_zero(prev_mask_s);
    PromptPayload payload;
    payload.template_maps = {mask0_s, prev_mask_s};
    TokenState state = handle.prompt->encode_mask_layout(frame0_r, prev_frame_r, cur_r, payload);
    Tensor logits = ft.seg_head.forward(ft.search_tokens(state));  // (ss, ss)
    Tensor prob_s = O::sigmoid(logits).detached_copy();
    prob_s = O::reshape(prob_s, {1, ss, ss});
    Tensor prob_frame = resize_bilinear(prob_s, clip.size);

    FramePrediction p;
    p.empty_prev_mask = empty_prev;
    double peak = 0.0;
    for (double v : prob_s.data()) peak = std::max(peak, v);
    p.score = peak;
    Tensor bin_frame = binarize(prob_frame, 0.5);
    auto bb = mask_bbox(bin_frame);
    p.box = bb ? center_box(*bb) : prev_box;
    p.mask = prob_frame;
    prev_box = p.box;
    prev_frame_r = std::move(cur_r);
    prev_mask_s = binarize(prob_s, 0.5);
    result.frames.push_back(std::move(p));
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

std::vector<Tensor> merge_object_masks(const std::vector<TrackResult>& per_object,
                                       int64_t frame_size) {
  if (per_object.empty()) throw ValidationError("merge_object_masks: no objects");
  const size_t frames = per_object[0].frames.size();
  for (const TrackResult& r : per_object) {
    if (r.frames.size() != frames) {
      throw ValidationError("merge_object_masks: per-object results differ in frame count");
    }
  }
  std::vector<Tensor> labels;
  labels.reserve(frames);
  const size_t plane = static_cast<size_t>(frame_size * frame_size);
  for (size_t t = 0; t < frames; ++t) {
    std::vector<double> lab(plane, 0.0);
    std::vector<double> best(plane, 0.5);  // below-threshold pixels stay background
    for (size_t k = 0; k < per_object.size(); ++k) {
      const auto& m = per_object[k].frames[t].mask;
      if (!m) continue;
      if (m->numel() != static_cast<int64_t>(plane)) {
        throw ValidationError("merge_object_masks: mask size does not match frame_size");
      }
      for (size_t i = 0; i < plane; ++i) {
        const double v = m->at(static_cast<int64_t>(i));
        if (v > best[i]) {
          best[i] = v;
          lab[i] = static_cast<double>(k + 1);
        }
      }
    }
    labels.emplace_back(Shape{1, frame_size, frame_size}, std::move(lab));
  }
  return labels;
}

}  // namespace onetracker
