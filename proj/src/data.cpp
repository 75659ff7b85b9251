#include "onetracker/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "onetracker/rng.hpp"

namespace fs = std::filesystem;

namespace onetracker {

Task task_from_string(const std::string& s) {
  static const std::map<std::string, Task> table = {
      {"rgb", Task::RGB}, {"rgb_n", Task::N}, {"rgb_m", Task::M},
      {"rgb_d", Task::D}, {"rgb_t", Task::T}, {"rgb_e", Task::E},
  };
  auto it = table.find(s);
  if (it == table.end()) {
    throw ValidationError("unknown task '" + s +
                          "' (expected rgb, rgb_n, rgb_m, rgb_d, rgb_t or rgb_e)");
  }
  return it->second;
}

const char* task_name(Task t) {
  switch (t) {
    case Task::RGB: return "rgb";
    case Task::N: return "rgb_n";
    case Task::M: return "rgb_m";
    case Task::D: return "rgb_d";
    case Task::T: return "rgb_t";
    case Task::E: return "rgb_e";
  }
  return "?";
}

void GenConfig::validate() const {
  if (frame_size < 16) throw ValidationError("gen config: frame_size must be >= 16");
  if (length < 1) throw ValidationError("gen config: length must be >= 1");
  if (distractors < 0) throw ValidationError("gen config: distractors must be >= 0");
  if (min_size < 4 || max_size < min_size || max_size > frame_size / 2) {
    throw ValidationError("gen config: need 4 <= min_size <= max_size <= frame_size/2");
  }
  if (max_speed < 0) throw ValidationError("gen config: max_speed must be >= 0");
  if (rgb_noise < 0 || rgb_noise > 1) throw ValidationError("gen config: rgb_noise must be in [0,1]");
}

const std::vector<std::string>& vocab() {
  static const std::vector<std::string> words = {
      "<pad>",   "<unk>",   "red",    "green",  "blue",   "yellow",  "magenta", "cyan",
      "orange",  "purple",  "rectangle", "ellipse", "square", "left",  "right",   "up",
      "down",    "still",   "track",  "the",    "moving", "a",       "an",      "object",
      "target",  "follow",  "locate", "find",   "watch",  "toward",  "fast",    "slow",
      "small",   "large",   "bright", "dark",   "zero",   "one",     "two",     "three",
      "four",    "five",    "six",    "seven",  "eight",  "nine",    "gray",    "black",
      "white",   "pink",    "brown",  "shape",  "box",    "region",  "area",    "scene",
      "frame",   "video",   "image",  "pixel",  "top",    "bottom",  "center",  "corner",
  };
  return words;
}

int64_t vocab_id(const std::string& word) {
  const auto& v = vocab();
  for (size_t i = 0; i < v.size(); ++i) {
    if (v[i] == word) return static_cast<int64_t>(i);
  }
  return kUnkId;
}

std::vector<int64_t> tokenize(const std::string& sentence) {
  std::vector<int64_t> ids;
  std::string word;
  auto flush = [&] {
    if (!word.empty() && static_cast<int64_t>(ids.size()) < kMaxTextLen) {
      ids.push_back(vocab_id(word));
    }
    word.clear();
  };
  for (char raw : sentence) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      flush();
    }
    // punctuation is dropped
  }
  flush();
  if (ids.empty()) ids.push_back(kUnkId);
  return ids;
}

namespace {

struct Color {
  const char* name;
  double r, g, b;
};

const std::vector<Color>& palette() {
  static const std::vector<Color> colors = {
      {"red", 0.85, 0.10, 0.10},    {"green", 0.10, 0.75, 0.15}, {"blue", 0.12, 0.25, 0.90},
      {"yellow", 0.92, 0.88, 0.10}, {"magenta", 0.88, 0.12, 0.85}, {"cyan", 0.10, 0.85, 0.88},
      {"orange", 0.95, 0.55, 0.08}, {"purple", 0.55, 0.15, 0.80},
  };
  return colors;
}

struct ObjState {
  double cx, cy, w, h, vx, vy;
  int shape;  // 0 = rectangle, 1 = ellipse
  int color;
};

double q8(double v) {
  const double c = std::min(1.0, std::max(0.0, v));
  return std::round(c * 255.0) / 255.0;
}

void quantize(std::vector<double>& v) {
  for (double& x : v) x = q8(x);
}

bool inside_shape(const ObjState& o, int64_t x, int64_t y) {
  const double px = static_cast<double>(x) + 0.5;
  const double py = static_cast<double>(y) + 0.5;
  if (o.shape == 0) {
    return std::fabs(px - o.cx) <= 0.5 * o.w && std::fabs(py - o.cy) <= 0.5 * o.h;
  }
  const double dx = (px - o.cx) / (0.5 * o.w);
  const double dy = (py - o.cy) / (0.5 * o.h);
  return dx * dx + dy * dy <= 1.0;
}

void fill_shape(std::vector<double>& img, int64_t s, const ObjState& o, double r, double g,
                double b) {
  const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(o.cx - 0.5 * o.w)));
  const int64_t x1 = std::min<int64_t>(s - 1, static_cast<int64_t>(std::ceil(o.cx + 0.5 * o.w)));
  const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(o.cy - 0.5 * o.h)));
  const int64_t y1 = std::min<int64_t>(s - 1, static_cast<int64_t>(std::ceil(o.cy + 0.5 * o.h)));
  for (int64_t y = y0; y <= y1; ++y) {
    for (int64_t x = x0; x <= x1; ++x) {
      if (!inside_shape(o, x, y)) continue;
      img[static_cast<size_t>((0 * s + y) * s + x)] = r;
      img[static_cast<size_t>((1 * s + y) * s + x)] = g;
      img[static_cast<size_t>((2 * s + y) * s + x)] = b;
    }
  }
}

void fill_shape_gray(std::vector<double>& img, int64_t s, const ObjState& o, double v) {
  const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(o.cx - 0.5 * o.w)));
  const int64_t x1 = std::min<int64_t>(s - 1, static_cast<int64_t>(std::ceil(o.cx + 0.5 * o.w)));
  const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(o.cy - 0.5 * o.h)));
  const int64_t y1 = std::min<int64_t>(s - 1, static_cast<int64_t>(std::ceil(o.cy + 0.5 * o.h)));
  for (int64_t y = y0; y <= y1; ++y) {
    for (int64_t x = x0; x <= x1; ++x) {
      if (inside_shape(o, x, y)) img[static_cast<size_t>(y * s + x)] = v;
    }
  }
}

void clamp_center(ObjState& o, int64_t s) {
  o.cx = std::min(static_cast<double>(s) - 0.5 * o.w, std::max(0.5 * o.w, o.cx));
  o.cy = std::min(static_cast<double>(s) - 0.5 * o.h, std::max(0.5 * o.h, o.cy));
}

}  // namespace

std::optional<BoxI> mask_bbox(const Tensor& mask) {
  if (mask.rank() != 3 || mask.dim(0) != 1) {
    throw ValidationError("mask_bbox: expected (1, S, S) mask, got " + shape_str(mask.shape()));
  }
  const int64_t h = mask.dim(1), w = mask.dim(2);
  int64_t x0 = w, y0 = h, x1 = -1, y1 = -1;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      if (mask.at(y * w + x) <= 0.5) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  return BoxI{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

Clip generate_clip(uint64_t seed, const GenConfig& cfg) {
  cfg.validate();
  Rng rng(Rng::derive(seed, 0x47454e44ull));  // generation stream
  const int64_t s = cfg.frame_size;
  const size_t plane = static_cast<size_t>(s * s);

  // Static textured background: coarse 8x8 color blocks plus fine gray noise.
  std::vector<double> bg(3 * plane);
  const int64_t blocks = (s + 7) / 8;
  std::vector<double> block_col(static_cast<size_t>(blocks * blocks) * 3);
  for (double& v : block_col) v = rng.uniform(0.2, 0.55);
  for (int64_t y = 0; y < s; ++y) {
    for (int64_t x = 0; x < s; ++x) {
      const size_t b = static_cast<size_t>((y / 8) * blocks + (x / 8));
      const double fine = rng.uniform(-0.05, 0.05);
      for (int64_t c = 0; c < 3; ++c) {
        bg[static_cast<size_t>(c) * plane + static_cast<size_t>(y * s + x)] =
            block_col[b * 3 + static_cast<size_t>(c)] + fine;
      }
    }
  }

  // Target.
  ObjState target;
  target.color = static_cast<int>(rng.uniform_int(static_cast<int64_t>(palette().size())));
  target.shape = static_cast<int>(rng.uniform_int(2));
  target.w = rng.uniform(static_cast<double>(cfg.min_size), static_cast<double>(cfg.max_size));
  target.h = rng.uniform(static_cast<double>(cfg.min_size), static_cast<double>(cfg.max_size));
  target.cx = rng.uniform(0.5 * target.w, static_cast<double>(s) - 0.5 * target.w);
  target.cy = rng.uniform(0.5 * target.h, static_cast<double>(s) - 0.5 * target.h);
  target.vx = rng.uniform(-cfg.max_speed, cfg.max_speed);
  target.vy = rng.uniform(-cfg.max_speed, cfg.max_speed);

  const char* direction;
  if (cfg.max_speed == 0 || (target.vx == 0 && target.vy == 0)) {
    direction = "still";
  } else if (std::fabs(target.vx) >= std::fabs(target.vy)) {
    direction = target.vx >= 0 ? "right" : "left";
  } else {
    direction = target.vy >= 0 ? "down" : "up";
  }

  // Distractors: share the target's color or its shape, never both.
  std::vector<ObjState> distractors;
  const double mid_t = 0.5 * static_cast<double>(cfg.length - 1);
  for (int64_t k = 0; k < cfg.distractors; ++k) {
    ObjState d;
    const bool share_color = rng.uniform() < 0.5;
    if (share_color) {
      d.color = target.color;
      d.shape = 1 - target.shape;
    } else {
      d.color = static_cast<int>(
          (target.color + 1 + rng.uniform_int(static_cast<int64_t>(palette().size()) - 1)) %
          static_cast<int64_t>(palette().size()));
      d.shape = target.shape;
    }
    d.w = rng.uniform(static_cast<double>(cfg.min_size), static_cast<double>(cfg.max_size));
    d.h = rng.uniform(static_cast<double>(cfg.min_size), static_cast<double>(cfg.max_size));
    d.cx = rng.uniform(0.5 * d.w, static_cast<double>(s) - 0.5 * d.w);
    d.cy = rng.uniform(0.5 * d.h, static_cast<double>(s) - 0.5 * d.h);
    if (cfg.crossing && cfg.length > 1) {
      // Aim through the target's mid-clip position.
      const double tx = target.cx + target.vx * mid_t;
      const double ty = target.cy + target.vy * mid_t;
      d.vx = (tx - d.cx) / std::max(1.0, mid_t);
      d.vy = (ty - d.cy) / std::max(1.0, mid_t);
    } else {
      d.vx = rng.uniform(-cfg.max_speed, cfg.max_speed);
      d.vy = rng.uniform(-cfg.max_speed, cfg.max_speed);
    }
    distractors.push_back(d);
  }

  Clip clip;
  clip.size = s;
  clip.length = cfg.length;
  clip.seed = seed;
  {
    std::ostringstream os;
    os << "track the " << palette()[static_cast<size_t>(target.color)].name << " "
       << (target.shape == 0 ? "rectangle" : "ellipse") << " moving " << direction;
    clip.sentence = os.str();
  }
  clip.text_ids = tokenize(clip.sentence);

  const double jitter = cfg.max_speed > 0 ? 0.3 : 0.0;
  std::vector<double> prev_gray;
  for (int64_t t = 0; t < cfg.length; ++t) {
    if (t > 0) {
      target.cx += target.vx + rng.uniform(-jitter, jitter);
      target.cy += target.vy + rng.uniform(-jitter, jitter);
      clamp_center(target, s);
      for (ObjState& d : distractors) {
        d.cx += d.vx + rng.uniform(-jitter, jitter);
        d.cy += d.vy + rng.uniform(-jitter, jitter);
        clamp_center(d, s);
      }
    }

    // RGB: background, distractors, target on top, then occluders.
    std::vector<double> rgb = bg;
    for (const ObjState& d : distractors) {
      const Color& c = palette()[static_cast<size_t>(d.color)];
      fill_shape(rgb, s, d, c.r, c.g, c.b);
    }
    const Color& tc = palette()[static_cast<size_t>(target.color)];
    fill_shape(rgb, s, target, tc.r, tc.g, tc.b);
    if (cfg.rgb_noise > 0) {
      const int64_t n_occ = 1 + static_cast<int64_t>(std::floor(cfg.rgb_noise * 3.0));
      for (int64_t k = 0; k < n_occ; ++k) {
        ObjState occ;
        occ.shape = 0;
        occ.cx = target.cx + rng.uniform(-0.4, 0.4) * target.w;
        occ.cy = target.cy + rng.uniform(-0.4, 0.4) * target.h;
        occ.w = std::max(2.0, target.w * cfg.rgb_noise * rng.uniform(0.5, 1.1));
        occ.h = std::max(2.0, target.h * cfg.rgb_noise * rng.uniform(0.5, 1.1));
        const double r = rng.uniform(0.0, 1.0), g = rng.uniform(0.0, 1.0),
                     b = rng.uniform(0.0, 1.0);
        fill_shape(rgb, s, occ, r, g, b);
      }
    }
    quantize(rgb);

    // Mask and box from target geometry only.
    std::vector<double> mask(plane, 0.0);
    fill_shape_gray(mask, s, target, 1.0);
    Tensor mask_t({1, s, s}, std::move(mask));
    auto bbox = mask_bbox(mask_t);
    if (!bbox) throw std::runtime_error("generate_clip: target mask unexpectedly empty");

    // Thermal: hot target on a cold scene (distractors stay cold).
    std::vector<double> thermal(plane, 0.05);
    fill_shape_gray(thermal, s, target, 0.95);
    quantize(thermal);

    // Depth: intensity shrinks with object size.
    std::vector<double> depth(plane, 0.05);
    for (const ObjState& d : distractors) {
      fill_shape_gray(depth, s, d, std::min(1.0, 8.0 / std::sqrt(d.w * d.h)));
    }
    fill_shape_gray(depth, s, target, std::min(1.0, 8.0 / std::sqrt(target.w * target.h)));
    quantize(depth);

    // Event: absolute temporal difference of grayscale frames.
    std::vector<double> gray(plane);
    for (size_t i = 0; i < plane; ++i) {
      gray[i] = (rgb[i] + rgb[plane + i] + rgb[2 * plane + i]) / 3.0;
    }
    std::vector<double> event(plane, 0.0);
    if (t > 0) {
      for (size_t i = 0; i < plane; ++i) event[i] = std::fabs(gray[i] - prev_gray[i]);
      quantize(event);
    }
    prev_gray = std::move(gray);

    clip.frames.emplace_back(Shape{3, s, s}, std::move(rgb));
    clip.masks.push_back(std::move(mask_t));
    clip.boxes.push_back(*bbox);
    clip.thermal.emplace_back(Shape{1, s, s}, std::move(thermal));
    clip.depth.emplace_back(Shape{1, s, s}, std::move(depth));
    clip.event.emplace_back(Shape{1, s, s}, std::move(event));
  }
  return clip;
}

namespace {

std::string frame_name(int64_t i, const char* ext) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << i << "." << ext;
  return os.str();
}

void write_pnm(const std::string& path, const Tensor& img, int64_t channels, const char* magic) {
  if (img.rank() != 3 || img.dim(0) != channels) {
    throw ValidationError(std::string("write_") + (channels == 3 ? "ppm" : "pgm") +
                          ": expected (" + std::to_string(channels) + ", H, W), got " +
                          shape_str(img.shape()));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  const int64_t h = img.dim(1), w = img.dim(2);
  f << magic << "\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(w * channels));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t c = 0; c < channels; ++c) {
        const double v = img.at((c * h + y) * w + x);
        row[static_cast<size_t>(x * channels + c)] =
            static_cast<unsigned char>(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
      }
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error("short write to '" + path + "'");
}

Tensor read_pnm(const std::string& path, int64_t channels, const char* magic) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open '" + path + "'");
  std::string m;
  f >> m;
  if (m != magic) {
    throw ValidationError(path + ": bad magic '" + m + "', expected '" + magic + "'");
  }
  int64_t w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0) throw ValidationError(path + ": malformed header");
  if (maxval != 255) throw ValidationError(path + ": unsupported maxval " + std::to_string(maxval));
  f.get();  // single whitespace separating header from payload
  std::vector<unsigned char> buf(static_cast<size_t>(w * h * channels));
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (f.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw ValidationError(path + ": truncated pixel payload");
  }
  std::vector<double> v(buf.size());
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t c = 0; c < channels; ++c) {
        v[static_cast<size_t>((c * h + y) * w + x)] =
            static_cast<double>(buf[static_cast<size_t>((y * w + x) * channels + c)]) / 255.0;
      }
    }
  }
  return Tensor({channels, h, w}, std::move(v));
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& img) { write_pnm(path, img, 3, "P6"); }
Tensor read_ppm(const std::string& path) { return read_pnm(path, 3, "P6"); }
void write_pgm(const std::string& path, const Tensor& img) { write_pnm(path, img, 1, "P5"); }
Tensor read_pgm(const std::string& path) { return read_pnm(path, 1, "P5"); }

void save_clip(const Clip& clip, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "frames");
  fs::create_directories(root / "masks");
  fs::create_directories(root / "depth");
  fs::create_directories(root / "thermal");
  fs::create_directories(root / "event");
  for (int64_t i = 0; i < clip.length; ++i) {
    write_ppm((root / "frames" / frame_name(i, "ppm")).string(), clip.frames[static_cast<size_t>(i)]);
    write_pgm((root / "masks" / frame_name(i, "pgm")).string(), clip.masks[static_cast<size_t>(i)]);
    write_pgm((root / "depth" / frame_name(i, "pgm")).string(), clip.depth[static_cast<size_t>(i)]);
    write_pgm((root / "thermal" / frame_name(i, "pgm")).string(),
              clip.thermal[static_cast<size_t>(i)]);
    write_pgm((root / "event" / frame_name(i, "pgm")).string(), clip.event[static_cast<size_t>(i)]);
  }
  {
    std::ofstream f(root / "boxes.txt");
    if (!f) throw std::runtime_error("cannot write " + (root / "boxes.txt").string());
    for (int64_t i = 0; i < clip.length; ++i) {
      const BoxI& b = clip.boxes[static_cast<size_t>(i)];
      f << i << " " << b.x << " " << b.y << " " << b.w << " " << b.h << "\n";
    }
  }
  {
    std::ofstream f(root / "lang.txt");
    f << clip.sentence << "\n";
  }
  {
    std::ofstream f(root / "meta.txt");
    f << "size=" << clip.size << "\n"
      << "length=" << clip.length << "\n"
      << "seed=" << clip.seed << "\n";
  }
}

namespace {
std::map<std::string, std::string> read_kv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}
}  // namespace

Clip load_clip(const std::string& dir, std::optional<Task> required) {
  const fs::path root(dir);
  Clip clip;
  const std::string meta_path = (root / "meta.txt").string();
  auto meta = read_kv(meta_path);
  for (const char* key : {"size", "length", "seed"}) {
    if (!meta.count(key)) {
      throw ValidationError(meta_path + ": missing key '" + std::string(key) + "'");
    }
  }
  clip.size = std::stoll(meta["size"]);
  clip.length = std::stoll(meta["length"]);
  clip.seed = std::stoull(meta["seed"]);
  if (clip.size <= 0 || clip.length <= 0) {
    throw ValidationError(meta_path + ": size and length must be positive");
  }

  for (int64_t i = 0; i < clip.length; ++i) {
    const std::string fp = (root / "frames" / frame_name(i, "ppm")).string();
    if (!fs::exists(fp)) throw ValidationError("missing frame file '" + fp + "'");
    Tensor img = read_ppm(fp);
    if (img.dim(1) != clip.size || img.dim(2) != clip.size) {
      throw ValidationError(fp + ": frame is " + shape_str(img.shape()) + ", meta says size " +
                            std::to_string(clip.size));
    }
    clip.frames.push_back(std::move(img));
  }

  {
    const std::string bp = (root / "boxes.txt").string();
    std::ifstream f(bp);
    if (!f) throw ValidationError("cannot open '" + bp + "'");
    std::string line;
    int64_t expect = 0;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream is(line);
      int64_t idx = 0;
      BoxI b;
      if (!(is >> idx >> b.x >> b.y >> b.w >> b.h)) {
        throw ValidationError(bp + ":" + std::to_string(lineno) +
                              ": expected 'frame_index x y w h'");
      }
      if (idx != expect) {
        throw ValidationError(bp + ":" + std::to_string(lineno) + ": frame index " +
                              std::to_string(idx) + ", expected " + std::to_string(expect) +
                              " (missing index " + std::to_string(expect) + ")");
      }
      ++expect;
      clip.boxes.push_back(b);
    }
    if (expect != clip.length) {
      throw ValidationError(bp + ": has " + std::to_string(expect) + " boxes, clip length is " +
                            std::to_string(clip.length));
    }
  }

  auto load_maps = [&](const char* sub, std::vector<Tensor>& out, bool must) {
    const fs::path d = root / sub;
    if (!fs::exists(d)) {
      if (must) throw ValidationError("missing required modality directory '" + d.string() + "'");
      return;
    }
    for (int64_t i = 0; i < clip.length; ++i) {
      const std::string p = (d / frame_name(i, "pgm")).string();
      if (!fs::exists(p)) {
        if (must || i > 0 || !out.empty()) {
          throw ValidationError("missing map file '" + p + "'");
        }
        return;  // directory exists but is empty and the modality is optional
      }
      Tensor img = read_pgm(p);
      if (img.dim(1) != clip.size || img.dim(2) != clip.size) {
        throw ValidationError(p + ": map is " + shape_str(img.shape()) + ", meta says size " +
                              std::to_string(clip.size));
      }
      out.push_back(std::move(img));
    }
  };
  load_maps("masks", clip.masks, required == Task::M);
  load_maps("depth", clip.depth, required == Task::D);
  load_maps("thermal", clip.thermal, required == Task::T);
  load_maps("event", clip.event, required == Task::E);
  // Stored masks are 0/255; binarize back to 0/1.
  for (Tensor& m : clip.masks) {
    auto v = m.data_mut();
    for (double& x : v) x = x >= 0.5 ? 1.0 : 0.0;
  }

  const std::string lp = (root / "lang.txt").string();
  if (fs::exists(lp)) {
    std::ifstream f(lp);
    std::getline(f, clip.sentence);
  }
  if (required == Task::N && clip.sentence.empty()) {
    throw ValidationError(lp + ": empty sentence but task rgb_n requires one");
  }
  if (!clip.sentence.empty()) clip.text_ids = tokenize(clip.sentence);
  return clip;
}

std::vector<Clip> load_dataset(const std::string& dir, std::optional<Task> required) {
  const fs::path root(dir);
  if (!fs::exists(root)) throw ValidationError("dataset directory '" + dir + "' does not exist");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "meta.txt")) {
      names.push_back(e.path().string());
    }
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) {
    throw ValidationError("dataset directory '" + dir + "' contains no clip subdirectories");
  }
  std::vector<Clip> clips;
  clips.reserve(names.size());
  for (const std::string& n : names) clips.push_back(load_clip(n, required));
  return clips;
}

}  // namespace onetracker
