#include "onetracker/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "onetracker/train.hpp"

namespace onetracker {

namespace fs = std::filesystem;

namespace {

struct CliArgs {
  std::string config;
  std::string task;
  std::string checkpoint;
  std::string data;
  std::string out_path;
  std::optional<uint64_t> seed;
  std::optional<int64_t> steps;
  std::optional<int64_t> every_k;
};

// File config first, then flag overrides; echoes every accepted key.
TrackerConfig resolve_config(const CliArgs& a, std::ostream& out) {
  TrackerConfig cfg;
  if (!a.config.empty()) cfg = TrackerConfig::from_file(a.config);
  if (a.seed) {
    cfg.seed = *a.seed;
    cfg.accepted.push_back("seed=" + std::to_string(*a.seed) + " (from --seed)");
  }
  if (!a.task.empty()) {
    cfg.task = task_from_string(a.task);
    cfg.accepted.push_back("task=" + a.task + " (from --task)");
  }
  if (a.steps) {
    if (*a.steps < 0) throw ValidationError("--steps must be >= 0");
    cfg.steps = *a.steps;
    cfg.accepted.push_back("steps=" + std::to_string(*a.steps) + " (from --steps)");
  }
  if (a.every_k) {
    if (*a.every_k < 0) throw ValidationError("--every-k must be >= 0");
    cfg.every_k = *a.every_k;
    cfg.accepted.push_back("every_k=" + std::to_string(*a.every_k) + " (from --every-k)");
  }
  cfg.validate();
  out << cfg.echo();
  return cfg;
}

std::string zero4(int64_t i) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

PeftConfig peft_of(const TrackerConfig& cfg) {
  PeftConfig p;
  p.rank = cfg.rank;
  p.adapter_scale = cfg.adapter_scale;
  p.latent = cfg.prompter_latent;
  p.every_k = cfg.every_k;
  return p;
}

TrackOptions track_opts(const TrackerConfig& cfg) {
  TrackOptions o;
  o.template_factor = cfg.template_factor;
  o.search_factor = cfg.search_factor;
  return o;
}

int cmd_gen_data(const CliArgs& a, std::ostream& out) {
  TrackerConfig cfg = resolve_config(a, out);
  fs::create_directories(a.out_path);
  for (int64_t i = 0; i < cfg.gen_clips; ++i) {
    Clip clip = generate_clip(cfg.seed + static_cast<uint64_t>(i), cfg.gen);
    save_clip(clip, (fs::path(a.out_path) / ("clip_" + zero4(i))).string());
  }
  out << "wrote " << cfg.gen_clips << " clips to " << a.out_path << "\n";
  return 0;
}

int cmd_pretrain(const CliArgs& a, std::ostream& out) {
  TrackerConfig cfg = resolve_config(a, out);
  std::vector<Clip> clips = load_dataset(a.data);
  FoundationTracker ft(cfg.backbone, cfg.seed);
  TrainReport report = pretrain_foundation(ft, clips, cfg, out);
  save_checkpoint_file(snapshot_parameters(ft.parameters()), a.out_path);
  out << "saved foundation checkpoint to " << a.out_path << "\n";
  if (!report.losses.empty()) {
    out << "loss first=" << std::fixed << std::setprecision(6) << report.first_loss
        << " last=" << report.last_loss << "\n";
  }
  return 0;
}

int cmd_finetune(const CliArgs& a, std::ostream& out) {
  TrackerConfig cfg = resolve_config(a, out);
  if (cfg.task == Task::RGB) {
    throw ValidationError("--task (or config key 'task') must name an rgb_x task for finetune");
  }
  std::vector<Clip> clips = load_dataset(a.data, cfg.task);
  FoundationTracker ft(cfg.backbone, cfg.seed);
  load_into(ft.parameters(), load_checkpoint_file(a.checkpoint));
  const bool train_seg = cfg.task == Task::M && cfg.train_seg_head_stage2;
  PromptTracker pt(ft, task_modality(cfg.task), peft_of(cfg), cfg.seed, train_seg);
  finetune_prompt(pt, clips, cfg, out);
  Checkpoint delta = snapshot_trainable(pt.all_parameters());
  delta.add_scalar(kFoundationCrcKey, static_cast<double>(checkpoint_stored_crc(a.checkpoint)));
  save_checkpoint_file(delta, a.out_path);
  out << "saved delta checkpoint to " << a.out_path << "\n";
  return 0;
}

/// Rebuilds the model a checkpoint belongs to.  RGB loads a full foundation
/// checkpoint; rgb_x loads the config's foundation checkpoint plus a delta.
struct LoadedModel {
  std::unique_ptr<FoundationTracker> foundation;
  std::unique_ptr<PromptTracker> prompt;

  TrackerHandle handle() const {
    if (prompt) return TrackerHandle(*prompt);
    return TrackerHandle(*foundation);
  }
};

LoadedModel load_model(const TrackerConfig& cfg, const std::string& checkpoint_path) {
  LoadedModel m;
  m.foundation = std::make_unique<FoundationTracker>(cfg.backbone, cfg.seed);
  if (cfg.task == Task::RGB) {
    load_into(m.foundation->parameters(), load_checkpoint_file(checkpoint_path));
    return m;
  }
  if (cfg.foundation_checkpoint.empty()) {
    throw ValidationError(
        "config key 'foundation_checkpoint' is required to load a delta checkpoint for task " +
        std::string(task_name(cfg.task)));
  }
  Checkpoint delta = load_checkpoint_file(checkpoint_path);
  const CheckpointEntry* crc_entry = delta.find(kFoundationCrcKey);
  if (!crc_entry) {
    throw ValidationError("checkpoint '" + checkpoint_path + "' has no " +
                          std::string(kFoundationCrcKey) + " entry; not a delta checkpoint?");
  }
  const uint32_t want = static_cast<uint32_t>(crc_entry->data[0]);
  const uint32_t have = checkpoint_stored_crc(cfg.foundation_checkpoint);
  if (want != have) {
    std::ostringstream os;
    os << "foundation hash mismatch: delta was finetuned against CRC " << want << " but '"
       << cfg.foundation_checkpoint << "' has CRC " << have;
    throw ValidationError(os.str());
  }
  load_into(m.foundation->parameters(), load_checkpoint_file(cfg.foundation_checkpoint));
  const bool train_seg = cfg.task == Task::M && cfg.train_seg_head_stage2;
  m.prompt = std::make_unique<PromptTracker>(*m.foundation, task_modality(cfg.task), peft_of(cfg),
                                             cfg.seed, train_seg);
  load_into(m.prompt->all_parameters(), delta, /*trainable_only=*/true);
  return m;
}

int cmd_eval(const CliArgs& a, std::ostream& out) {
  TrackerConfig cfg = resolve_config(a, out);
  std::vector<Clip> clips = load_dataset(a.data, cfg.task == Task::RGB
                                                     ? std::optional<Task>{}
                                                     : std::optional<Task>{cfg.task});
  LoadedModel m = load_model(cfg, a.checkpoint);
  EvalMetrics metrics = evaluate_clips(m.handle(), clips, cfg.task, track_opts(cfg));
  out << metrics_table(metrics);
  out << metrics_keyvalues(metrics);
  if (!a.out_path.empty()) {
    std::ofstream f(a.out_path);
    if (!f) throw std::runtime_error("cannot open '" + a.out_path + "' for writing");
    f << metrics_keyvalues(metrics);
  }
  return 0;
}

int cmd_track(const CliArgs& a, std::ostream& out) {
  TrackerConfig cfg = resolve_config(a, out);
  std::vector<Clip> clips = load_dataset(a.data, cfg.task == Task::RGB
                                                     ? std::optional<Task>{}
                                                     : std::optional<Task>{cfg.task});
  LoadedModel m = load_model(cfg, a.checkpoint);
  if (!a.out_path.empty()) fs::create_directories(a.out_path);
  for (size_t i = 0; i < clips.size(); ++i) {
    const TrackResult r = cfg.task == Task::M
                              ? track_clip_mask(m.handle(), clips[i], track_opts(cfg))
                              : track_clip(m.handle(), clips[i], cfg.task, track_opts(cfg));
    out << "clip " << i << ": " << r.frames.size() << " frames in " << std::fixed
        << std::setprecision(3) << r.seconds << "s\n";
    if (a.out_path.empty()) continue;
    std::ofstream f(fs::path(a.out_path) / ("clip_" + zero4(static_cast<int64_t>(i)) + ".txt"));
    if (!f) throw std::runtime_error("cannot write track output for clip " + std::to_string(i));
    f << std::fixed << std::setprecision(6);
    for (size_t t = 0; t < r.frames.size(); ++t) {
      const Box& b = r.frames[t].box;
      f << t << " " << b.x0() << " " << b.y0() << " " << b.w << " " << b.h << " "
        << r.frames[t].score << "\n";
    }
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"onetracker: foundation + prompt tracking on synthetic multimodal clips"};
  app.require_subcommand(1);

  CliArgs a;
  auto add_common = [&](CLI::App* cmd, bool need_data, bool need_ckpt, bool need_out) {
    cmd->add_option("--config", a.config, "key=value config file");
    cmd->add_option("--seed", a.seed, "override config seed");
    cmd->add_option("--task", a.task, "rgb, rgb_n, rgb_m, rgb_d, rgb_t or rgb_e");
    cmd->add_option("--steps", a.steps, "override training steps");
    cmd->add_option("--every-k", a.every_k, "prompter placement period");
    auto* data = cmd->add_option("--data", a.data, "dataset directory");
    auto* ckpt = cmd->add_option("--checkpoint", a.checkpoint, "checkpoint path");
    auto* outp = cmd->add_option("--out", a.out_path, "output path");
    if (need_data) data->required();
    if (need_ckpt) ckpt->required();
    if (need_out) outp->required();
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic clip dataset");
  add_common(gen, false, false, true);
  CLI::App* pre = app.add_subcommand("pretrain", "stage-1 foundation training");
  add_common(pre, true, false, true);
  CLI::App* fin = app.add_subcommand("finetune", "stage-2 prompt finetuning");
  add_common(fin, true, true, true);
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(ev, true, true, false);
  CLI::App* tr = app.add_subcommand("track", "run the tracker and dump trajectories");
  add_common(tr, true, true, false);

  // CLI11 wants argv order reversed, without the program name.
  std::vector<std::string> rargs(args.rbegin(), args.rend());
  try {
    app.parse(rargs);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(a, out);
    if (pre->parsed()) return cmd_pretrain(a, out);
    if (fin->parsed()) return cmd_finetune(a, out);
    if (ev->parsed()) return cmd_eval(a, out);
    if (tr->parsed()) return cmd_track(a, out);
    err << "error: no subcommand given\n";
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace onetracker
