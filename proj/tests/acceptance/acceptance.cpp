// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure.  Each criterion builds everything it needs from scratch so the
// checks stay independent.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <vector>

#include "fd_cases.hpp"
#include "onetracker/checkpoint.hpp"
#include "onetracker/train.hpp"

using namespace onetracker;
namespace O = onetracker::ops;
namespace fs = std::filesystem;
using ot_test::rand_tensor;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

BackboneConfig toy_backbone() {
  BackboneConfig cfg;
  cfg.dim = 16;
  cfg.depth = 2;
  cfg.heads = 4;
  cfg.patch_size = 8;
  cfg.template_size = 32;
  cfg.search_size = 64;
  return cfg;
}

PeftConfig toy_peft() {
  PeftConfig p;
  p.rank = 4;
  p.latent = 8;
  return p;
}

TrackerConfig toy_train(uint64_t seed) {
  TrackerConfig cfg;
  cfg.backbone = toy_backbone();
  cfg.rank = 4;
  cfg.prompter_latent = 8;
  cfg.lr_backbone = 2e-3;
  cfg.lr_heads = 4e-3;
  cfg.lr_prompt = 2e-3;
  cfg.batch_size = 4;
  cfg.center_jitter = 0.05;
  cfg.seed = seed;
  cfg.gen.frame_size = 64;
  return cfg;
}

std::vector<Clip> gen_clips(const TrackerConfig& cfg, int64_t n) {
  std::vector<Clip> clips;
  for (int64_t i = 0; i < n; ++i) {
    clips.push_back(generate_clip(cfg.seed + static_cast<uint64_t>(i), cfg.gen));
  }
  return clips;
}

std::string fmt3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

// ---------------------------------------------------------------- criterion 1

Outcome criterion_gradients() {
  Outcome out;
  std::ostringstream why;

  for (const auto& c : ot_test::run_op_gradient_suite(12345)) {
    if (!c.report.ok) {
      out.detail = "op '" + c.name + "' failed: " + c.report.summary();
      return out;
    }
  }

  // full stage-1 loss through the toy foundation
  TrackerConfig cfg = toy_train(5);
  cfg.gen.length = 4;
  Clip clip = generate_clip(50, cfg.gen);
  FoundationTracker ft(toy_backbone(), 5);
  Rng srng(17);
  CropSample s1 = make_crop_sample(clip, 1, Task::RGB, cfg, srng);
  auto stage1 = [&]() {
    TokenState st = ft.encode_pair(s1.tmpl, s1.search);
    return sample_loss(ft, ft.search_tokens(st), s1.gt_crop, LossWeights{}, 1, std::nullopt);
  };
  for (auto [p, n] : std::vector<std::pair<Parameter*, int64_t>>{
           {&ft.layers[0].wq.weight, 10},
           {&ft.layers[1].fc2.weight, 10},
           {&ft.box_head.score_c2.weight, 8},
           {&ft.box_head.size_c2.bias, 2},
           {&ft.pos_search, 8},
           {&ft.rgb_proj.proj.weight, 8}}) {
    auto r = ot_test::param_fd_check(stage1, *p, n);
    if (!r.ok) {
      out.detail = "stage-1 loss vs '" + p->name + "': " + r.summary();
      return out;
    }
  }

  // stage-2 crop-protocol loss through a thermal prompt tracker
  FoundationTracker ft2(toy_backbone(), 5);
  PromptTracker pt(ft2, Modality::T, toy_peft(), 9);
  Rng urng(23);
  for (auto& pr : pt.prompters) {  // break the zero-init so gradients flow
    for (double& v : pr.up.weight.tensor.data_mut()) v = urng.uniform(-0.3, 0.3);
    for (double& v : pr.up.bias.tensor.data_mut()) v = urng.uniform(-0.1, 0.1);
  }
  for (double& v : ft2.layers[0].wq.adapter->up.tensor.data_mut()) v = urng.uniform(-0.3, 0.3);
  Rng srng2(17);
  CropSample s2 = make_crop_sample(clip, 2, Task::T, cfg, srng2);
  auto stage2 = [&]() {
    TokenState st = pt.encode_pair(s2.tmpl, s2.search, s2.payload);
    return sample_loss(*pt.foundation, pt.foundation->search_tokens(st), s2.gt_crop, LossWeights{},
                       2, Modality::T);
  };
  for (auto [p, n] : std::vector<std::pair<Parameter*, int64_t>>{
           {&pt.prompters[0].down_h.weight, 8},
           {&pt.prompters[0].up.weight, 8},
           {&ft2.layers[0].wq.adapter->down, 8},
           {&pt.embed.map_proj->proj.weight, 8}}) {
    auto r = ot_test::param_fd_check(stage2, *p, n);
    if (!r.ok) {
      out.detail = "stage-2 loss vs '" + p->name + "': " + r.summary();
      return out;
    }
  }

  // stage-2 mask-protocol loss (BCE + Dice path) through an M prompt tracker
  FoundationTracker ft3(toy_backbone(), 5);
  PromptTracker ptm(ft3, Modality::M, toy_peft(), 9, /*train_seg_head_stage2=*/true);
  for (auto& pr : ptm.prompters) {
    for (double& v : pr.up.weight.tensor.data_mut()) v = urng.uniform(-0.3, 0.3);
  }
  MaskSample ms = make_mask_sample(clip, 2, toy_backbone());
  auto stage2m = [&]() {
    TokenState st = ptm.encode_mask_layout(ms.z0, ms.zprev, ms.cur, ms.payload);
    return sample_loss(*ptm.foundation, ptm.foundation->search_tokens(st), ms.gt_crop,
                       LossWeights{}, 2, Modality::M, &ms.mask_target);
  };
  for (auto [p, n] : std::vector<std::pair<Parameter*, int64_t>>{
           {&ft3.seg_head.out_conv.weight, 8},
           {&ptm.prompters[1].down_p.weight, 8}}) {
    auto r = ot_test::param_fd_check(stage2m, *p, n);
    if (!r.ok) {
      out.detail = "stage-2 mask loss vs '" + p->name + "': " + r.summary();
      return out;
    }
  }

  out.pass = true;
  out.detail = "ops + stage-1 + stage-2 losses within rel. err 1e-4";
  return out;
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion_init_equivalence() {
  Outcome out;
  const BackboneConfig cfg = toy_backbone();
  double worst = 0.0;
  for (Modality m : {Modality::N, Modality::M, Modality::D, Modality::T, Modality::E}) {
    FoundationTracker ref(cfg, 42);
    FoundationTracker base(cfg, 42);
    PromptTracker pt(base, m, toy_peft(), 1234);
    Rng rng(900 + static_cast<uint64_t>(m));
    for (int trial = 0; trial < 20; ++trial) {
      Tensor diff;
      if (m == Modality::M) {
        Tensor f0 = rand_tensor({3, 64, 64}, rng);
        Tensor f1 = rand_tensor({3, 64, 64}, rng);
        Tensor cur = rand_tensor({3, 64, 64}, rng);
        PromptPayload pay;
        pay.template_maps = {rand_tensor({1, 64, 64}, rng), rand_tensor({1, 64, 64}, rng)};
        diff = O::sub(pt.encode_mask_layout(f0, f1, cur, pay).tokens,
                      ref.encode_mask_layout(f0, f1, cur).tokens);
      } else {
        Tensor z = rand_tensor({3, 32, 32}, rng);
        Tensor s = rand_tensor({3, 64, 64}, rng);
        PromptPayload pay;
        if (m == Modality::N) {
          for (int k = 0; k < 5; ++k) {
            pay.text_ids.push_back(2 + static_cast<int64_t>(rng.uniform(0.0, 61.0)));
          }
        } else {
          pay.template_maps = {rand_tensor({1, 32, 32}, rng)};
          pay.search_map = rand_tensor({1, 64, 64}, rng);
        }
        diff = O::sub(pt.encode_pair(z, s, pay).tokens, ref.encode_pair(z, s).tokens);
      }
      for (double v : diff.data()) worst = std::max(worst, std::abs(v));
      if (worst > 1e-12) {
        out.detail = std::string("modality ") + modality_name(m) + " diverged: max abs diff " +
                     std::to_string(worst);
        return out;
      }
    }
  }
  out.pass = true;
  std::ostringstream os;
  os << "5 modalities x 20 inputs, max abs diff " << std::scientific << std::setprecision(2)
     << worst << " <= 1e-12";
  out.detail = os.str();
  return out;
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion_freeze() {
  Outcome out;
  TrackerConfig cfg = toy_train(21);
  cfg.task = Task::T;
  cfg.steps = 200;
  cfg.gen.length = 5;
  auto clips = gen_clips(cfg, 2);

  FoundationTracker ft(cfg.backbone, cfg.seed);
  std::vector<double> before;
  for (Parameter* p : ft.parameters()) {
    before.insert(before.end(), p->tensor.data().begin(), p->tensor.data().end());
  }
  PromptTracker pt(ft, Modality::T, toy_peft(), 77);
  std::ostringstream sink;
  finetune_prompt(pt, clips, cfg, sink);  // runs its own audit internally

  std::vector<double> after;
  for (Parameter* p : ft.parameters()) {
    if (!p->frozen) continue;  // adapters were injected after the snapshot
    after.insert(after.end(), p->tensor.data().begin(), p->tensor.data().end());
  }
  if (after.size() != before.size()) {
    out.detail = "frozen parameter count changed";
    return out;
  }
  if (std::memcmp(before.data(), after.data(), before.size() * sizeof(double)) != 0) {
    out.detail = "a foundation parameter changed during finetuning";
    return out;
  }
  out.pass = true;
  out.detail = "200 steps, " + std::to_string(before.size()) + " foundation doubles bit-identical";
  return out;
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion_budget() {
  Outcome out;
  BackboneConfig vitb;  // paper defaults: D=768, L=12, patch 16, 192/384
  FoundationTracker ft(vitb, 7);

  uint64_t foundation_bytes = 0;
  {
    Checkpoint snap = snapshot_parameters(ft.parameters());
    foundation_bytes = checkpoint_byte_size(snap);
  }

  PeftConfig pc;  // paper defaults: r=16, m=64, every_k=1
  PromptTracker pt(ft, Modality::T, pc, 11);
  Census c = pt.census();

  const int64_t adapters_formula = ttp_adapter_param_count(12, 768, 3072, 16);
  const int64_t prompters_formula = 12 * cmt_prompter_param_count(768, 64);
  const int64_t embed_formula = 16 * 16 * 768 + 768;  // 1-channel patch proj, pos reused
  if (c.adapters != adapters_formula || c.prompters != prompters_formula ||
      c.prompt_embed != embed_formula) {
    std::ostringstream os;
    os << "census mismatch: adapters " << c.adapters << " vs " << adapters_formula
       << ", prompters " << c.prompters << " vs " << prompters_formula << ", embed "
       << c.prompt_embed << " vs " << embed_formula;
    out.detail = os.str();
    return out;
  }
  const int64_t trainable = c.trainable();
  if (trainable < 2000000 || trainable > 4000000) {
    out.detail = "trainable census " + std::to_string(trainable) + " outside [2.0M, 4.0M]";
    return out;
  }

  Checkpoint delta = snapshot_trainable(pt.all_parameters());
  delta.add_scalar(kFoundationCrcKey, 1.0);
  const uint64_t delta_bytes = checkpoint_byte_size(delta);
  if (delta_bytes * 20 >= foundation_bytes) {
    std::ostringstream os;
    os << "delta " << delta_bytes << " bytes is not < 5% of foundation " << foundation_bytes;
    out.detail = os.str();
    return out;
  }

  out.pass = true;
  std::ostringstream os;
  os << "ViT-B trainable census " << trainable << " in [2.0M, 4.0M]; delta " << delta_bytes
     << " B = " << fmt3(100.0 * double(delta_bytes) / double(foundation_bytes))
     << "% of foundation " << foundation_bytes << " B";
  out.detail = os.str();
  return out;
}

// ---------------------------------------------------------------- criterion 5

Outcome criterion_overfit() {
  Outcome out;
  TrackerConfig cfg = toy_train(7);
  cfg.steps = 1000;
  cfg.gen.length = 4;
  auto clips = gen_clips(cfg, 4);

  std::ostringstream sink;
  FoundationTracker ft(cfg.backbone, cfg.seed);
  TrainReport report = pretrain_foundation(ft, clips, cfg, sink);

  EvalMetrics m = evaluate_clips(TrackerHandle(ft), clips, Task::RGB);
  if (m.mean_iou <= 0.7) {
    out.detail = "mean training IoU " + fmt3(m.mean_iou) + " <= 0.7 after 1000 steps";
    return out;
  }
  if (!(report.first_loss / report.last_loss >= 10.0)) {
    out.detail = "loss decreased only x" + fmt3(report.first_loss / report.last_loss) +
                 " over the run (need >= x10)";
    return out;
  }

  // determinism: a fresh model replays the identical loss prefix
  TrackerConfig short_cfg = cfg;
  short_cfg.steps = 30;
  FoundationTracker ft2(cfg.backbone, cfg.seed);
  std::ostringstream sink2;
  TrainReport replay = pretrain_foundation(ft2, clips, short_cfg, sink2);
  for (size_t i = 0; i < replay.losses.size(); ++i) {
    if (replay.losses[i] != report.losses[i]) {
      out.detail = "rerun diverged at step " + std::to_string(i);
      return out;
    }
  }

  out.pass = true;
  out.detail = "mean training IoU " + fmt3(m.mean_iou) + " > 0.7 in 1000 steps; loss x" +
               fmt3(report.first_loss / report.last_loss) + "; rerun bit-identical";
  return out;
}

// ---------------------------------------------------------------- criterion 6

Outcome directional_gain(Task task, const TrackerConfig& pretrain_cfg,
                         const TrackerConfig& finetune_cfg, int64_t n_clips) {
  Outcome out;
  auto clips = gen_clips(pretrain_cfg, n_clips);

  std::ostringstream sink;
  FoundationTracker ft(pretrain_cfg.backbone, pretrain_cfg.seed);
  pretrain_foundation(ft, clips, pretrain_cfg, sink);
  const double baseline = evaluate_clips(TrackerHandle(ft), clips, Task::RGB).mean_iou;

  PeftConfig pc = toy_peft();
  PromptTracker pt(ft, task_modality(task), pc, pretrain_cfg.seed + 1);
  finetune_prompt(pt, clips, finetune_cfg, sink);
  const double prompted = evaluate_clips(TrackerHandle(pt), clips, task).mean_iou;

  const double gain = prompted - baseline;
  std::ostringstream os;
  os << task_name(task) << " mean IoU " << fmt3(prompted) << " vs frozen rgb " << fmt3(baseline)
     << " (gain " << (gain >= 0 ? "+" : "") << fmt3(gain) << ", need >= +0.05)";
  out.detail = os.str();
  out.pass = gain >= 0.05;
  return out;
}

Outcome criterion_thermal_gain() {
  TrackerConfig pre = toy_train(21);
  pre.steps = 800;
  pre.gen.length = 5;
  pre.gen.rgb_noise = 0.7;  // occluders hide the target in RGB; thermal stays clean
  TrackerConfig fin = pre;
  fin.task = Task::T;
  return directional_gain(Task::T, pre, fin, 6);
}

Outcome criterion_language_gain() {
  TrackerConfig pre = toy_train(33);
  pre.steps = 800;
  pre.gen.length = 6;
  pre.gen.crossing = true;  // distractors share color xor shape and cross the target
  TrackerConfig fin = pre;
  fin.task = Task::N;
  fin.steps = 2000;
  fin.lr_prompt = 5e-3;
  fin.center_jitter = 0.4;  // off-center crops force the prompt to disambiguate
  return directional_gain(Task::N, pre, fin, 6);
}

// ---------------------------------------------------------------- criterion 7

Outcome criterion_metric_oracles() {
  Outcome out;
  if (success_auc(std::vector<double>(8, 1.0)) != 1.0) {
    out.detail = "perfect IoUs did not give AUC exactly 1.0";
    return out;
  }
  const double half = success_auc({1.0, 0.0});
  if (half != 26.0 / 51.0) {
    out.detail = "half/half AUC " + std::to_string(half) + " != 26/51";
    return out;
  }
  if (success_auc({0.0}) != 1.0 / 51.0) {
    out.detail = "all-zero AUC is not exactly 1/51";
    return out;
  }

  GenConfig gen;
  gen.length = 4;
  Clip clip = generate_clip(70, gen);
  TrackResult perfect;
  for (int64_t t = 0; t < clip.length; ++t) {
    FramePrediction f;
    const BoxI& b = clip.boxes[t];
    f.box = Box{b.x + b.w / 2.0, b.y + b.h / 2.0, double(b.w), double(b.h)};
    f.mask = clip.masks[t];
    f.score = 1.0;
    perfect.frames.push_back(f);
  }
  MetricAccumulator acc;
  accumulate_clip(acc, perfect, clip, Task::M);
  EvalMetrics m = compute_metrics(acc);
  if (m.auc != 1.0 || m.precision != 1.0 || !m.j || *m.j != 1.0 || *m.f != 1.0 || *m.jf != 1.0) {
    out.detail = "ground-truth predictions did not score AUC=P=J=F=1 exactly";
    return out;
  }
  out.pass = true;
  out.detail = "perfect=1.0 exact; half/half = 26/51; gt masks J&F = 1.0";
  return out;
}

// ---------------------------------------------------------------- criterion 8

Outcome criterion_inference_invariants() {
  Outcome out;
  Rng rng(81);

  // Hanning penalty argmax is invariant to positive rescaling
  for (int trial = 0; trial < 20; ++trial) {
    BoxMaps maps;
    maps.grid = 8;
    maps.score = rand_tensor({1, 8, 8}, rng, 0.05, 0.95);
    maps.offset = rand_tensor({2, 8, 8}, rng, 0.05, 0.95);
    maps.size = rand_tensor({2, 8, 8}, rng, 0.05, 0.95);
    Tensor pen = hanning_penalty_2d(8);
    auto [b1, s1] = decode_box(maps, pen);
    auto [b2, s2] = decode_box(maps, O::mul_scalar(pen, 1.0 + 40.0 * double(trial + 1)));
    if (b1.cx != b2.cx || b1.cy != b2.cy || b1.w != b2.w || b1.h != b2.h || s1 != s2) {
      out.detail = "hanning argmax moved under positive scaling";
      return out;
    }
  }

  // crop/affine round trip
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    CropAffine a{rng.uniform(-20.0, 60.0), rng.uniform(-20.0, 60.0), rng.uniform(5.0, 200.0)};
    Box fb{rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0), rng.uniform(1.0, 40.0),
           rng.uniform(1.0, 40.0)};
    Box back = crop_to_frame(frame_to_crop(fb, a), a);
    worst = std::max({worst, std::abs(back.cx - fb.cx), std::abs(back.cy - fb.cy),
                      std::abs(back.w - fb.w), std::abs(back.h - fb.h)});
  }
  if (worst > 1e-9) {
    out.detail = "crop round-trip drift " + std::to_string(worst) + " > 1e-9";
    return out;
  }

  // full-pipeline bit determinism
  GenConfig gen;
  gen.length = 5;
  Clip clip = generate_clip(83, gen);
  FoundationTracker ft(toy_backbone(), 9);
  TrackResult r1 = track_clip(TrackerHandle(ft), clip, Task::RGB);
  TrackResult r2 = track_clip(TrackerHandle(ft), clip, Task::RGB);
  for (size_t t = 0; t < r1.frames.size(); ++t) {
    const Box &a = r1.frames[t].box, &b = r2.frames[t].box;
    if (std::memcmp(&a.cx, &b.cx, sizeof(double)) || std::memcmp(&a.cy, &b.cy, sizeof(double)) ||
        std::memcmp(&a.w, &b.w, sizeof(double)) || std::memcmp(&a.h, &b.h, sizeof(double)) ||
        r1.frames[t].score != r2.frames[t].score) {
      out.detail = "two tracking passes differ at frame " + std::to_string(t);
      return out;
    }
  }

  out.pass = true;
  std::ostringstream os;
  os << "hanning scale-invariant; crop round-trip drift " << std::scientific
     << std::setprecision(2) << worst << "; tracking bit-deterministic";
  out.detail = os.str();
  return out;
}

// ---------------------------------------------------------------- criterion 9

Outcome criterion_io() {
  Outcome out;
  fs::path dir = fs::temp_directory_path() / "ot_acceptance_io";
  fs::remove_all(dir);

  GenConfig gen;
  gen.length = 4;
  Clip clip = generate_clip(91, gen);
  save_clip(clip, (dir / "clip").string());
  Clip re = load_clip((dir / "clip").string());
  auto same = [](const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)) == 0;
  };
  for (int64_t t = 0; t < clip.length; ++t) {
    if (re.boxes[t].x != clip.boxes[t].x || re.boxes[t].y != clip.boxes[t].y ||
        re.boxes[t].w != clip.boxes[t].w || re.boxes[t].h != clip.boxes[t].h) {
      out.detail = "box annotations changed in the round trip";
      return out;
    }
    if (!same(re.frames[t], clip.frames[t]) || !same(re.masks[t], clip.masks[t]) ||
        !same(re.thermal[t], clip.thermal[t]) || !same(re.depth[t], clip.depth[t]) ||
        !same(re.event[t], clip.event[t])) {
      out.detail = "image payload changed in the round trip at frame " + std::to_string(t);
      return out;
    }
  }
  if (re.sentence != clip.sentence || re.text_ids != clip.text_ids) {
    out.detail = "language annotation changed in the round trip";
    return out;
  }

  // checkpoint round trip + corruption detection on disk
  FoundationTracker ft(toy_backbone(), 13);
  fs::path ck = dir / "model.otkr";
  save_checkpoint_file(snapshot_parameters(ft.parameters()), ck.string());
  FoundationTracker ft2(toy_backbone(), 14);
  load_into(ft2.parameters(), load_checkpoint_file(ck.string()));
  auto pa = ft.parameters();
  auto pb = ft2.parameters();
  for (size_t i = 0; i < pa.size(); ++i) {
    const auto& da = pa[i]->tensor.data();
    const auto& db = pb[i]->tensor.data();
    if (std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) != 0) {
      out.detail = "checkpoint round trip not bit-exact at '" + pa[i]->name + "'";
      return out;
    }
  }
  {
    std::fstream f(ck, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    char c;
    f.seekg(200);
    f.get(c);
    f.seekp(200);
    f.put(static_cast<char>(c ^ 0x01));
  }
  bool caught = false;
  try {
    load_checkpoint_file(ck.string());
  } catch (const ValidationError& e) {
    caught = std::string(e.what()).find("CRC") != std::string::npos;
  }
  fs::remove_all(dir);
  if (!caught) {
    out.detail = "single-bit corruption was not caught by the CRC";
    return out;
  }

  out.pass = true;
  out.detail = "dataset + checkpoint round trips exact; flipped bit rejected by CRC";
  return out;
}

// --------------------------------------------------------------- criterion 10

Outcome criterion_every_k() {
  Outcome out;
  BackboneConfig cfg = toy_backbone();
  cfg.depth = 12;

  TrackerConfig tc = toy_train(3);
  tc.backbone = cfg;
  tc.task = Task::T;
  tc.steps = 1;
  tc.batch_size = 1;
  tc.gen.length = 3;
  auto clips = gen_clips(tc, 1);

  const int64_t per_prompter = cmt_prompter_param_count(cfg.dim, 8);
  std::vector<int64_t> seen;
  std::ostringstream detail;
  for (auto [k, want_prompters] :
       std::vector<std::pair<int64_t, int64_t>>{{1, 12}, {2, 6}, {3, 4}, {6, 2}, {12, 1}}) {
    FoundationTracker ft(cfg, 3);
    PeftConfig pc = toy_peft();
    pc.every_k = k;
    PromptTracker pt(ft, Modality::T, pc, 5);
    std::ostringstream sink;
    TrackerConfig run = tc;
    run.every_k = k;
    FinetuneReport rep = finetune_prompt(pt, clips, run, sink);
    const Census& c = rep.census;
    if (c.prompters != want_prompters * per_prompter) {
      out.detail = "every_k=" + std::to_string(k) + ": prompter census " +
                   std::to_string(c.prompters) + " != " +
                   std::to_string(want_prompters * per_prompter);
      return out;
    }
    if (c.adapters != ttp_adapter_param_count(12, cfg.dim, cfg.mlp_hidden(), 4)) {
      out.detail = "every_k=" + std::to_string(k) + ": adapter census off";
      return out;
    }
    seen.push_back(c.trainable());
    detail << "k=" << k << ":" << c.trainable() << " ";
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    out.detail = "trainable censuses are not pairwise distinct";
    return out;
  }
  out.pass = true;
  out.detail = "censuses " + detail.str() + "all match the closed form and are distinct";
  return out;
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* label;
    Outcome (*fn)();
    double budget_s;  // 0 = no stated budget
  };
  const std::vector<Entry> entries = {
      {1, "gradient suite", criterion_gradients, 120.0},
      {2, "init equivalence", criterion_init_equivalence, 60.0},
      {3, "freeze invariance", criterion_freeze, 300.0},
      {4, "parameter budget", criterion_budget, 0.0},
      {5, "stage-1 overfit", criterion_overfit, 900.0},
      {6, "stage-2 directional gain (rgb_t)", criterion_thermal_gain, 1200.0},
      {6, "stage-2 directional gain (rgb_n)", criterion_language_gain, 1200.0},
      {7, "metric oracles", criterion_metric_oracles, 0.0},
      {8, "inference invariants", criterion_inference_invariants, 0.0},
      {9, "i/o round trips", criterion_io, 0.0},
      {10, "every-k placement ablation", criterion_every_k, 0.0},
  };

  bool all_pass = true;
  for (const Entry& e : entries) {
    const auto t0 = Clock::now();
    Outcome r;
    try {
      r = e.fn();
    } catch (const std::exception& ex) {
      r.pass = false;
      r.detail = std::string("unexpected exception: ") + ex.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (e.budget_s > 0 && secs > e.budget_s) {
      r.pass = false;
      r.detail += " [over budget: " + fmt3(secs) + "s > " + fmt3(e.budget_s) + "s]";
    }
    std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << e.id << ": " << e.label << " — "
              << r.detail << " (" << fmt3(secs) << "s)" << std::endl;
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}
