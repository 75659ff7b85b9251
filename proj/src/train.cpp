#include "onetracker/train.hpp"

#include <cmath>
#include <cstring>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace onetracker {

namespace O = onetracker::ops;

namespace {

constexpr uint64_t kTrainStream = 0x5452414955ull;

Box frame_box(const BoxI& b) {
  return Box{b.x + 0.5 * b.w, b.y + 0.5 * b.h, static_cast<double>(b.w),
             static_cast<double>(b.h)};
}

Tensor binarize(const Tensor& t, double thr) {
  std::vector<double> v(t.data().begin(), t.data().end());
  for (double& x : v) x = x > thr ? 1.0 : 0.0;
  return Tensor(t.shape(), std::move(v));
}

// Differentiable scalar pick from a (C, G, G) map; returns a (1,) tensor.
Tensor pick(const Tensor& map, int64_t c, int64_t gi, int64_t gj) {
  const int64_t g = map.dim(1);
  Tensor flat = O::reshape(map, {map.dim(0) * g * g});
  return O::slice_firstdim(flat, (c * g + gi) * g + gj, 1);
}

}  // namespace

CropSample make_crop_sample(const Clip& clip, int64_t t, Task task, const TrackerConfig& cfg,
                            Rng& rng) {
  if (t < 1 || t >= clip.length) {
    throw ValidationError("make_crop_sample: frame index " + std::to_string(t) + " out of range");
  }
  const BackboneConfig& bb = cfg.backbone;
  CropSample s;
  const Box b0 = frame_box(clip.boxes[0]);
  const Box bt = frame_box(clip.boxes[static_cast<size_t>(t)]);
  // Jitter the crop center so targets are not always dead-center.
  const double amp = cfg.center_jitter * std::sqrt(bt.w * bt.h);
  const double dx = (2.0 * rng.uniform() - 1.0) * amp;
  const double dy = (2.0 * rng.uniform() - 1.0) * amp;
  const Box window{bt.cx + dx, bt.cy + dy, bt.w, bt.h};

  const CropResult tc = crop_region(clip.frames[0], b0, cfg.template_factor, bb.template_size);
  const CropResult sc =
      crop_region(clip.frames[static_cast<size_t>(t)], window, cfg.search_factor, bb.search_size);
  s.tmpl = tc.image;
  s.search = sc.image;
  s.gt_crop = frame_to_crop(bt, sc.affine);

  switch (task) {
    case Task::RGB:
      break;
    case Task::N:
      s.payload.text_ids = clip.text_ids;
      break;
    case Task::M:
      throw ValidationError("make_crop_sample: task rgb_m trains with the mask protocol");
    case Task::D:
    case Task::T:
    case Task::E: {
      const std::vector<Tensor>& maps = task == Task::D   ? clip.depth
                                        : task == Task::T ? clip.thermal
                                                          : clip.event;
      if (static_cast<int64_t>(maps.size()) != clip.length) {
        throw ValidationError(std::string("make_crop_sample: clip lacks ") + task_name(task) +
                              " maps");
      }
      s.payload.template_maps = {
          crop_region(maps[0], b0, cfg.template_factor, bb.template_size).image};
      s.payload.search_map =
          crop_region(maps[static_cast<size_t>(t)], window, cfg.search_factor, bb.search_size)
              .image;
      break;
    }
  }
  return s;
}

MaskSample make_mask_sample(const Clip& clip, int64_t t, const BackboneConfig& backbone) {
  if (t < 1 || t >= clip.length) {
    throw ValidationError("make_mask_sample: frame index " + std::to_string(t) + " out of range");
  }
  if (static_cast<int64_t>(clip.masks.size()) != clip.length) {
    throw ValidationError("make_mask_sample: clip lacks mask annotations");
  }
  const int64_t ss = backbone.search_size;
  MaskSample s;
  s.z0 = resize_bilinear(clip.frames[0], ss);
  s.zprev = resize_bilinear(clip.frames[static_cast<size_t>(t - 1)], ss);
  s.cur = resize_bilinear(clip.frames[static_cast<size_t>(t)], ss);
  s.payload.template_maps = {binarize(resize_bilinear(clip.masks[0], ss), 0.5),
                             binarize(resize_bilinear(clip.masks[static_cast<size_t>(t - 1)], ss),
                                      0.5)};
  s.mask_target =
      O::reshape(binarize(resize_bilinear(clip.masks[static_cast<size_t>(t)], ss), 0.5), {ss, ss});
  const Box bt = frame_box(clip.boxes[static_cast<size_t>(t)]);
  const double sz = static_cast<double>(clip.size);
  s.gt_crop = Box{bt.cx / sz, bt.cy / sz, bt.w / sz, bt.h / sz};
  return s;
}

Tensor sample_loss(const FoundationTracker& ft, const Tensor& search_tokens, const Box& gt_crop,
                   const LossWeights& weights, int stage, std::optional<Modality> task,
                   const Tensor* mask_target) {
  const BoxMaps maps = ft.box_head.forward(search_tokens);
  const int64_t g = maps.grid;
  auto cell = [&](double c) {
    return std::min(g - 1, std::max<int64_t>(0, static_cast<int64_t>(std::floor(c * g))));
  };
  const int64_t gj = cell(gt_crop.cx);
  const int64_t gi = cell(gt_crop.cy);

  StageLossInputs parts;
  parts.cls = weighted_focal(maps.score, make_heatmap_target(gt_crop, g));

  Tensor cx = O::mul_scalar(O::add_scalar(pick(maps.offset, 0, gi, gj), static_cast<double>(gj)),
                            1.0 / static_cast<double>(g));
  Tensor cy = O::mul_scalar(O::add_scalar(pick(maps.offset, 1, gi, gj), static_cast<double>(gi)),
                            1.0 / static_cast<double>(g));
  Tensor w = pick(maps.size, 0, gi, gj);
  Tensor h = pick(maps.size, 1, gi, gj);
  Tensor gt_corners({4}, {gt_crop.x0(), gt_crop.y0(), gt_crop.x1(), gt_crop.y1()});
  Tensor gt_center({4}, {gt_crop.cx, gt_crop.cy, gt_crop.w, gt_crop.h});
  parts.iou = giou_loss(corners_from_cxcywh(cx, cy, w, h), gt_corners);
  parts.l1 = l1_box_loss(O::concat_firstdim({cx, cy, w, h}), gt_center);

  Tensor seg = ft.seg_head.forward(search_tokens);
  if (mask_target != nullptr) {
    parts.mask = mask_bce_dice_loss(seg, *mask_target);
  } else {
    parts.mask = boxinst_projection_loss(seg, gt_crop);
  }
  return stage_loss(parts, weights, stage, task);
}

namespace {

LossWeights weights_of(const TrackerConfig& cfg) {
  return LossWeights{cfg.lambda_iou, cfg.lambda_l1, cfg.lambda_mask};
}

double run_finite_check(const Tensor& loss, int64_t step) {
  const double v = loss.item();
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "training diverged at step " << step << " (loss is non-finite)";
    throw std::runtime_error(os.str());
  }
  return v;
}

void log_step(std::ostream& log, int64_t step, double v) {
  log << "step " << step << " loss=" << std::fixed << std::setprecision(6) << v << "\n";
}

}  // namespace

TrainReport pretrain_foundation(FoundationTracker& ft, const std::vector<Clip>& clips,
                                const TrackerConfig& cfg, std::ostream& log) {
  if (clips.empty()) throw ValidationError("pretrain_foundation: no clips");
  std::vector<Parameter*> backbone_group, head_group;
  for (Parameter* p : ft.parameters()) {
    (p->name.rfind("backbone.", 0) == 0 ? backbone_group : head_group).push_back(p);
  }
  AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  opt.add_group(backbone_group, cfg.lr_backbone);
  opt.add_group(head_group, cfg.lr_heads);

  Rng rng(Rng::derive(cfg.seed, kTrainStream));
  const LossWeights w = weights_of(cfg);
  TrainReport report;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    opt.zero_grad();
    std::optional<Tensor> total;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      const Clip& clip = clips[rng.uniform_int(static_cast<uint64_t>(clips.size()))];
      const int64_t t = 1 + static_cast<int64_t>(
                                rng.uniform_int(static_cast<uint64_t>(clip.length - 1)));
      CropSample s = make_crop_sample(clip, t, Task::RGB, cfg, rng);
      TokenState st = ft.encode_pair(s.tmpl, s.search);
      Tensor li = sample_loss(ft, ft.search_tokens(st), s.gt_crop, w, 1, std::nullopt);
      total = total ? O::add(*total, li) : li;
    }
    Tensor loss = O::mul_scalar(*total, 1.0 / static_cast<double>(cfg.batch_size));
    const double v = run_finite_check(loss, step);
    backward(loss);
    opt.step();
    report.losses.push_back(v);
    log_step(log, step, v);
  }
  if (!report.losses.empty()) {
    report.first_loss = report.losses.front();
    report.last_loss = report.losses.back();
  }
  return report;
}

namespace {

struct FrozenSnapshot {
  std::vector<const Parameter*> params;
  std::vector<std::vector<double>> values;
};

FrozenSnapshot snapshot_frozen(const std::vector<Parameter*>& all) {
  FrozenSnapshot s;
  for (const Parameter* p : all) {
    if (!p->frozen) continue;
    s.params.push_back(p);
    auto d = p->tensor.data();
    s.values.emplace_back(d.begin(), d.end());
  }
  return s;
}

void audit_frozen(const FrozenSnapshot& snap) {
  for (size_t i = 0; i < snap.params.size(); ++i) {
    auto d = snap.params[i]->tensor.data();
    const auto& ref = snap.values[i];
    if (d.size() != ref.size() ||
        std::memcmp(d.data(), ref.data(), ref.size() * sizeof(double)) != 0) {
      throw std::runtime_error("freeze audit failed: parameter '" + snap.params[i]->name +
                               "' changed during finetuning");
    }
  }
}

}  // namespace

FinetuneReport finetune_prompt(PromptTracker& pt, const std::vector<Clip>& clips,
                               const TrackerConfig& cfg, std::ostream& log) {
  if (clips.empty()) throw ValidationError("finetune_prompt: no clips");
  if (cfg.task == Task::RGB) {
    throw ValidationError("finetune_prompt: config key 'task' must name an rgb_x task");
  }
  FoundationTracker& ft = *pt.foundation;
  const FrozenSnapshot snap = snapshot_frozen(pt.all_parameters());

  AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  opt.add_group(pt.trainable_parameters(), cfg.lr_prompt);

  Rng rng(Rng::derive(cfg.seed, kTrainStream));
  const LossWeights w = weights_of(cfg);
  const Modality task = task_modality(cfg.task);
  TrainReport report;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    opt.zero_grad();
    std::optional<Tensor> total;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      const Clip& clip = clips[rng.uniform_int(static_cast<uint64_t>(clips.size()))];
      const int64_t t = 1 + static_cast<int64_t>(
                                rng.uniform_int(static_cast<uint64_t>(clip.length - 1)));
      Tensor li;
      if (task == Modality::M) {
        MaskSample s = make_mask_sample(clip, t, cfg.backbone);
        TokenState st = pt.encode_mask_layout(s.z0, s.zprev, s.cur, s.payload);
        li = sample_loss(ft, ft.search_tokens(st), s.gt_crop, w, 2, task, &s.mask_target);
      } else {
        CropSample s = make_crop_sample(clip, t, cfg.task, cfg, rng);
        TokenState st = pt.encode_pair(s.tmpl, s.search, s.payload);
        li = sample_loss(ft, ft.search_tokens(st), s.gt_crop, w, 2, task);
      }
      total = total ? O::add(*total, li) : li;
    }
    Tensor loss = O::mul_scalar(*total, 1.0 / static_cast<double>(cfg.batch_size));
    const double v = run_finite_check(loss, step);
    backward(loss);
    opt.step();
    report.losses.push_back(v);
    log_step(log, step, v);
  }
  if (!report.losses.empty()) {
    report.first_loss = report.losses.front();
    report.last_loss = report.losses.back();
  }
  audit_frozen(snap);
  log << "freeze audit: ok (" << snap.params.size() << " frozen parameters)\n";
  FinetuneReport out;
  out.train = std::move(report);
  out.census = pt.census();
  log << out.census.to_string();
  return out;
}

EvalMetrics evaluate_clips(const TrackerHandle& handle, const std::vector<Clip>& clips, Task task,
                           const TrackOptions& opts) {
  if (clips.empty()) throw ValidationError("evaluate_clips: no clips");
  MetricAccumulator acc;
  for (const Clip& clip : clips) {
    const TrackResult r = task == Task::M ? track_clip_mask(handle, clip, opts)
                                          : track_clip(handle, clip, task, opts);
    accumulate_clip(acc, r, clip, task);
  }
  return compute_metrics(acc);
}

}  // namespace onetracker
