#include "onetracker/config.hpp"

#include <fstream>
#include <sstream>

namespace onetracker {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& where, const std::string& key,
                            const std::string& value) {
  throw ValidationError(where + ": invalid value '" + value + "' for config key '" + key + "'");
}

int64_t to_i64(const std::string& where, const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    int64_t x = std::stoll(v, &used);
    if (used != v.size()) bad_value(where, key, v);
    return x;
  } catch (const ValidationError&) {
    throw;
  } catch (...) {
    bad_value(where, key, v);
  }
}

uint64_t to_u64(const std::string& where, const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    uint64_t x = std::stoull(v, &used);
    if (used != v.size() || v.find('-') != std::string::npos) bad_value(where, key, v);
    return x;
  } catch (const ValidationError&) {
    throw;
  } catch (...) {
    bad_value(where, key, v);
  }
}

double to_f64(const std::string& where, const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) bad_value(where, key, v);
    return x;
  } catch (const ValidationError&) {
    throw;
  } catch (...) {
    bad_value(where, key, v);
  }
}

bool to_bool(const std::string& where, const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(where, key, v);
}

}  // namespace

void TrackerConfig::apply(const std::string& key, const std::string& value,
                          const std::string& where) {
  if (key == "dim") backbone.dim = to_i64(where, key, value);
  else if (key == "depth") backbone.depth = to_i64(where, key, value);
  else if (key == "heads") backbone.heads = to_i64(where, key, value);
  else if (key == "patch_size") backbone.patch_size = to_i64(where, key, value);
  else if (key == "template_size") backbone.template_size = to_i64(where, key, value);
  else if (key == "search_size") backbone.search_size = to_i64(where, key, value);
  else if (key == "mlp_ratio") backbone.mlp_ratio = to_f64(where, key, value);
  else if (key == "rank") rank = to_i64(where, key, value);
  else if (key == "adapter_scale") adapter_scale = to_f64(where, key, value);
  else if (key == "prompter_latent") prompter_latent = to_i64(where, key, value);
  else if (key == "every_k") every_k = to_i64(where, key, value);
  else if (key == "lambda_iou") lambda_iou = to_f64(where, key, value);
  else if (key == "lambda_l1") lambda_l1 = to_f64(where, key, value);
  else if (key == "lambda_mask") lambda_mask = to_f64(where, key, value);
  else if (key == "lr_backbone") lr_backbone = to_f64(where, key, value);
  else if (key == "lr_heads") lr_heads = to_f64(where, key, value);
  else if (key == "lr_prompt") lr_prompt = to_f64(where, key, value);
  else if (key == "weight_decay") weight_decay = to_f64(where, key, value);
  else if (key == "steps") steps = to_i64(where, key, value);
  else if (key == "batch_size") batch_size = to_i64(where, key, value);
  else if (key == "seed") seed = to_u64(where, key, value);
  else if (key == "task") task = task_from_string(value);
  else if (key == "foundation_checkpoint") foundation_checkpoint = value;
  else if (key == "train_seg_head_stage2") train_seg_head_stage2 = to_bool(where, key, value);
  else if (key == "template_factor") template_factor = to_f64(where, key, value);
  else if (key == "search_factor") search_factor = to_f64(where, key, value);
  else if (key == "center_jitter") center_jitter = to_f64(where, key, value);
  else if (key == "gen_frame_size") gen.frame_size = to_i64(where, key, value);
  else if (key == "gen_length") gen.length = to_i64(where, key, value);
  else if (key == "gen_clips") gen_clips = to_i64(where, key, value);
  else if (key == "gen_distractors") gen.distractors = to_i64(where, key, value);
  else if (key == "gen_rgb_noise") gen.rgb_noise = to_f64(where, key, value);
  else if (key == "gen_crossing") gen.crossing = to_bool(where, key, value);
  else if (key == "gen_min_size") gen.min_size = to_i64(where, key, value);
  else if (key == "gen_max_size") gen.max_size = to_i64(where, key, value);
  else if (key == "gen_max_speed") gen.max_speed = to_f64(where, key, value);
  else throw ValidationError(where + ": unknown config key '" + key + "'");
  accepted.push_back(key + "=" + value);
}

TrackerConfig TrackerConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("config: cannot open '" + path + "'");
  TrackerConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(where + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError(where + ": empty config key");
    cfg.apply(key, value, where);
  }
  cfg.validate();
  return cfg;
}

void TrackerConfig::validate() const {
  backbone.validate();
  gen.validate();
  if (rank < 1) throw ValidationError("config key 'rank' must be >= 1");
  if (prompter_latent < 1) throw ValidationError("config key 'prompter_latent' must be >= 1");
  if (every_k < 0) throw ValidationError("config key 'every_k' must be >= 0");
  if (lambda_iou < 0 || lambda_l1 < 0 || lambda_mask < 0) {
    throw ValidationError("config keys 'lambda_*' must be non-negative");
  }
  if (steps < 0) throw ValidationError("config key 'steps' must be >= 0");
  if (batch_size < 1) throw ValidationError("config key 'batch_size' must be >= 1");
  if (gen_clips < 1) throw ValidationError("config key 'gen_clips' must be >= 1");
  if (template_factor <= 0 || search_factor <= 0) {
    throw ValidationError("config keys 'template_factor'/'search_factor' must be positive");
  }
  if (center_jitter < 0) throw ValidationError("config key 'center_jitter' must be >= 0");
}

std::string TrackerConfig::echo() const {
  std::ostringstream os;
  for (const std::string& kv : accepted) os << "config " << kv << "\n";
  return os.str();
}

}  // namespace onetracker
