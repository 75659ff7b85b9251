#pragma once

#include <optional>
#include <string>
#include <vector>

#include "onetracker/tensor.hpp"

namespace onetracker {

/// Tracking task: RGB-only or RGB plus one prompt modality.
enum class Task { RGB, N, M, D, T, E };

Task task_from_string(const std::string& s);  // "rgb", "rgb_n", ..., "rgb_e"
const char* task_name(Task t);

/// Integer pixel box, top-left anchored (the boxes.txt convention).
struct BoxI {
  int64_t x = 0, y = 0, w = 0, h = 0;
};

/// One synthetic multimodal sequence.  Images are float tensors in [0,1],
/// already quantized to 8-bit levels.
struct Clip {
  int64_t size = 0;    // frame side S
  int64_t length = 0;  // frame count
  uint64_t seed = 0;
  std::vector<Tensor> frames;   // (3, S, S)
  std::vector<BoxI> boxes;      // per frame
  std::vector<Tensor> masks;    // (1, S, S), values 0/1
  std::vector<Tensor> depth;    // (1, S, S)
  std::vector<Tensor> thermal;  // (1, S, S)
  std::vector<Tensor> event;    // (1, S, S)
  std::string sentence;
  std::vector<int64_t> text_ids;
};

struct GenConfig {
  int64_t frame_size = 64;
  int64_t length = 8;
  int64_t distractors = 2;
  double rgb_noise = 0.0;  // 0 = clean; >0 draws occluders over the target
  bool crossing = false;   // aim distractors through the target's path
  int64_t min_size = 10;
  int64_t max_size = 20;
  double max_speed = 3.0;

  void validate() const;
};

/// Fixed 64-word vocabulary; id 0 = <pad>, id 1 = <unk>.
const std::vector<std::string>& vocab();
int64_t vocab_id(const std::string& word);
constexpr int64_t kPadId = 0;
constexpr int64_t kUnkId = 1;
constexpr int64_t kMaxTextLen = 16;

/// Lowercases, strips punctuation, maps through vocab (unknown -> <unk>),
/// truncates to 16 ids; an empty sentence yields a single <unk>.
std::vector<int64_t> tokenize(const std::string& sentence);

/// Deterministic in (seed, cfg): colored rectangle/ellipse target plus
/// distractors that share color or shape (never both) over a textured static
/// background, with per-frame depth/thermal/event maps and a descriptive
/// sentence.
Clip generate_clip(uint64_t seed, const GenConfig& cfg);

/// Bounding rectangle of the nonzero region of a (1, S, S) mask.
std::optional<BoxI> mask_bbox(const Tensor& mask);

void save_clip(const Clip& clip, const std::string& dir);
/// Loads a clip directory; when `required` names a modality, the matching
/// payload must be present and well formed.
Clip load_clip(const std::string& dir, std::optional<Task> required = std::nullopt);
/// Loads every clip subdirectory (sorted by name) under `dir`.
std::vector<Clip> load_dataset(const std::string& dir, std::optional<Task> required = std::nullopt);

// 8-bit binary PPM/PGM I/O; values map as byte = round(v * 255).
void write_ppm(const std::string& path, const Tensor& img);  // (3, H, W)
Tensor read_ppm(const std::string& path);
void write_pgm(const std::string& path, const Tensor& img);  // (1, H, W)
Tensor read_pgm(const std::string& path);

}  // namespace onetracker
