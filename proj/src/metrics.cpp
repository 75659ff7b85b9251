#include "onetracker/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace onetracker {

double box_iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double iy = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double box_iou(const BoxI& a, const BoxI& b) {
  auto c = [](const BoxI& x) {
    return Box{x.x + 0.5 * x.w, x.y + 0.5 * x.h, static_cast<double>(x.w),
               static_cast<double>(x.h)};
  };
  return box_iou(c(a), c(b));
}

double center_error(const Box& pred, const Box& gt) {
  return std::hypot(pred.cx - gt.cx, pred.cy - gt.cy);
}

double norm_center_error(const Box& pred, const Box& gt) {
  if (gt.w <= 0 || gt.h <= 0) {
    throw ValidationError("norm_center_error: degenerate ground-truth box");
  }
  return std::hypot((pred.cx - gt.cx) / gt.w, (pred.cy - gt.cy) / gt.h);
}

double success_auc(const std::vector<double>& ious) {
  if (ious.empty()) throw ValidationError("success_auc: no frames");
  double total = 0.0;
  for (int i = 0; i <= 50; ++i) {
    const double thr = static_cast<double>(i) / 50.0;
    int64_t hits = 0;
    for (double v : ious)
      if (v >= thr) ++hits;
    total += static_cast<double>(hits) / static_cast<double>(ious.size());
  }
  return total / 51.0;
}

namespace {

void check_same_plane(const Tensor& a, const Tensor& b, const char* who) {
  if (a.numel() != b.numel()) {
    throw ValidationError(std::string(who) + ": mask sizes differ (" + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()) + ")");
  }
}

// Masks arrive as (1,S,S) or (S,S); treat any value > 0.5 as foreground.
std::vector<bool> as_binary(const Tensor& m) {
  std::vector<bool> out(static_cast<size_t>(m.numel()));
  auto d = m.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = d[i] > 0.5;
  return out;
}

int64_t side_of(const Tensor& m, const char* who) {
  const int64_t n = m.numel();
  const auto s = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (s * s != n) throw ValidationError(std::string(who) + ": mask is not square");
  return s;
}

std::vector<bool> boundary_of(const std::vector<bool>& m, int64_t s) {
  std::vector<bool> b(m.size(), false);
  for (int64_t y = 0; y < s; ++y) {
    for (int64_t x = 0; x < s; ++x) {
      const size_t i = static_cast<size_t>(y * s + x);
      if (!m[i]) continue;
      if (y == 0 || x == 0 || y == s - 1 || x == s - 1 || !m[i - 1] || !m[i + 1] ||
          !m[i - static_cast<size_t>(s)] || !m[i + static_cast<size_t>(s)]) {
        b[i] = true;
      }
    }
  }
  return b;
}

std::vector<bool> dilate8(const std::vector<bool>& m, int64_t s) {
  std::vector<bool> out(m.size(), false);
  for (int64_t y = 0; y < s; ++y)
    for (int64_t x = 0; x < s; ++x) {
      if (!m[static_cast<size_t>(y * s + x)]) continue;
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          const int64_t ny = y + dy, nx = x + dx;
          if (ny >= 0 && ny < s && nx >= 0 && nx < s) out[static_cast<size_t>(ny * s + nx)] = true;
        }
    }
  return out;
}

int64_t count_and(const std::vector<bool>& a, const std::vector<bool>& b) {
  int64_t n = 0;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] && b[i]) ++n;
  return n;
}

int64_t count(const std::vector<bool>& a) {
  return std::count(a.begin(), a.end(), true);
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double mask_iou(const Tensor& pred, const Tensor& gt) {
  check_same_plane(pred, gt, "mask_iou");
  const auto p = as_binary(pred), g = as_binary(gt);
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    inter += (p[i] && g[i]);
    uni += (p[i] || g[i]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double boundary_f(const Tensor& pred, const Tensor& gt) {
  check_same_plane(pred, gt, "boundary_f");
  const int64_t s = side_of(pred, "boundary_f");
  const auto pb = boundary_of(as_binary(pred), s);
  const auto gb = boundary_of(as_binary(gt), s);
  const int64_t np = count(pb), ng = count(gb);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const double prec = static_cast<double>(count_and(pb, dilate8(gb, s))) / static_cast<double>(np);
  const double rec = static_cast<double>(count_and(gb, dilate8(pb, s))) / static_cast<double>(ng);
  if (prec + rec == 0.0) return 0.0;
  return 2.0 * prec * rec / (prec + rec);
}

void MetricAccumulator::add_box_frame(const Box& pred, const BoxI& gt) {
  const Box g{gt.x + 0.5 * gt.w, gt.y + 0.5 * gt.h, static_cast<double>(gt.w),
              static_cast<double>(gt.h)};
  ious.push_back(box_iou(pred, g));
  center_errors.push_back(center_error(pred, g));
  norm_errors.push_back(norm_center_error(pred, g));
}

void MetricAccumulator::add_mask_frame(const Tensor& pred_mask, const Tensor& gt_mask) {
  mask_j.push_back(mask_iou(pred_mask, gt_mask));
  mask_f.push_back(boundary_f(pred_mask, gt_mask));
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  ious.insert(ious.end(), other.ious.begin(), other.ious.end());
  center_errors.insert(center_errors.end(), other.center_errors.begin(),
                       other.center_errors.end());
  norm_errors.insert(norm_errors.end(), other.norm_errors.begin(), other.norm_errors.end());
  mask_j.insert(mask_j.end(), other.mask_j.begin(), other.mask_j.end());
  mask_f.insert(mask_f.end(), other.mask_f.begin(), other.mask_f.end());
}

EvalMetrics compute_metrics(const MetricAccumulator& acc) {
  if (acc.ious.empty()) throw ValidationError("compute_metrics: no frames accumulated");
  EvalMetrics m;
  m.frames = static_cast<int64_t>(acc.ious.size());
  m.auc = success_auc(acc.ious);
  m.mean_iou = mean_of(acc.ious);
  int64_t p_hits = 0, pn_hits = 0;
  for (double e : acc.center_errors) p_hits += (e <= 20.0);
  for (double e : acc.norm_errors) pn_hits += (e <= 0.2);
  m.precision = static_cast<double>(p_hits) / static_cast<double>(m.frames);
  m.precision_norm = static_cast<double>(pn_hits) / static_cast<double>(m.frames);
  if (!acc.mask_j.empty()) {
    m.j = mean_of(acc.mask_j);
    m.f = mean_of(acc.mask_f);
    m.jf = 0.5 * (*m.j + *m.f);
  }
  return m;
}

void accumulate_clip(MetricAccumulator& acc, const TrackResult& result, const Clip& clip,
                     Task task) {
  if (result.frames.size() != clip.boxes.size()) {
    throw ValidationError("accumulate_clip: prediction has " +
                          std::to_string(result.frames.size()) + " frames but clip has " +
                          std::to_string(clip.boxes.size()));
  }
  if (clip.length < 2) throw ValidationError("accumulate_clip: clip shorter than 2 frames");
  for (int64_t t = 1; t < clip.length; ++t) {
    const auto& fr = result.frames[static_cast<size_t>(t)];
    acc.add_box_frame(fr.box, clip.boxes[static_cast<size_t>(t)]);
    if (task == Task::M) {
      if (!fr.mask) throw ValidationError("accumulate_clip: task rgb_m prediction lacks a mask");
      acc.add_mask_frame(*fr.mask, clip.masks[static_cast<size_t>(t)]);
    }
  }
}

namespace {

std::string fmt6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

std::string metrics_table(const EvalMetrics& m) {
  std::ostringstream os;
  auto row = [&](const char* name, const std::string& val) {
    os << "  " << std::left << std::setw(16) << name << val << "\n";
  };
  os << "metric          value\n";
  row("frames", std::to_string(m.frames));
  row("auc", fmt6(m.auc));
  row("precision", fmt6(m.precision));
  row("precision_norm", fmt6(m.precision_norm));
  row("mean_iou", fmt6(m.mean_iou));
  if (m.j) {
    row("j", fmt6(*m.j));
    row("f", fmt6(*m.f));
    row("jf", fmt6(*m.jf));
  }
  return os.str();
}

std::string metrics_keyvalues(const EvalMetrics& m) {
  std::ostringstream os;
  os << "frames=" << m.frames << "\n";
  os << "auc=" << fmt6(m.auc) << "\n";
  os << "precision=" << fmt6(m.precision) << "\n";
  os << "precision_norm=" << fmt6(m.precision_norm) << "\n";
  os << "mean_iou=" << fmt6(m.mean_iou) << "\n";
  if (m.j) {
    os << "j=" << fmt6(*m.j) << "\n";
    os << "f=" << fmt6(*m.f) << "\n";
    os << "jf=" << fmt6(*m.jf) << "\n";
  }
  return os.str();
}

}  // namespace onetracker
