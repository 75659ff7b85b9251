#pragma once

#include <string>
#include <vector>

#include "onetracker/backbone.hpp"
#include "onetracker/data.hpp"

namespace onetracker {

/// Run configuration, filled from `key=value` text files ('#' comments).
/// Unknown keys are rejected so typos never fall through to defaults.
struct TrackerConfig {
  BackboneConfig backbone;

  // prompt-tuning knobs
  int64_t rank = 16;
  double adapter_scale = 0.1;
  int64_t prompter_latent = 64;
  int64_t every_k = 1;

  // loss weights
  double lambda_iou = 2.0;
  double lambda_l1 = 5.0;
  double lambda_mask = 1.0;

  // optimization
  double lr_backbone = 4e-5;
  double lr_heads = 4e-4;
  double lr_prompt = 4e-5;
  double weight_decay = 1e-4;
  int64_t steps = 500;
  int64_t batch_size = 1;

  uint64_t seed = 1;
  Task task = Task::RGB;
  std::string foundation_checkpoint;
  bool train_seg_head_stage2 = true;

  // inference
  double template_factor = 2.0;
  double search_factor = 4.0;
  double center_jitter = 0.1;

  // data generation
  GenConfig gen;
  int64_t gen_clips = 4;

  std::vector<std::string> accepted;  // "key=value" lines actually parsed

  static TrackerConfig from_file(const std::string& path);
  // `where` is "path:line" for error messages.
  void apply(const std::string& key, const std::string& value, const std::string& where);
  void validate() const;
  std::string echo() const;
};

}  // namespace onetracker
