#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "onetracker/metrics.hpp"
#include "test_util.hpp"

using namespace onetracker;

namespace {

Tensor block_mask(int64_t s, int64_t x0, int64_t y0, int64_t w, int64_t h) {
  Tensor m = Tensor::zeros({1, s, s});
  for (int64_t y = y0; y < y0 + h; ++y)
    for (int64_t x = x0; x < x0 + w; ++x) m.data_mut()[y * s + x] = 1.0;
  return m;
}

}  // namespace

TEST_CASE("success auc oracles") {
  // perfect tracker: IoU 1 at every frame -> area 1
  CHECK(success_auc(std::vector<double>(10, 1.0)) == doctest::Approx(1.0).epsilon(1e-12));
  // an IoU of exactly 1.0 must clear the top threshold bin
  CHECK(success_auc({1.0}) == 1.0);
  // half the frames at IoU 1, half at 0: passes 26 of 51 thresholds on half
  // the frames... actually each threshold sees fraction 0.5 except t=0
  const double half = success_auc({1.0, 0.0});
  // threshold 0 counts both frames, the other 50 count one of two
  CHECK(half == doctest::Approx((1.0 + 50 * 0.5) / 51.0).epsilon(1e-12));
  // all-zero predictions still pass the zero threshold
  CHECK(success_auc({0.0, 0.0}) == doctest::Approx(1.0 / 51.0).epsilon(1e-12));
  CHECK_THROWS_AS(success_auc({}), ValidationError);
}

TEST_CASE("box iou and center errors") {
  Box a{50, 50, 20, 20};
  CHECK(box_iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  Box b{60, 50, 20, 20};  // half-overlap along x: inter 200, union 600
  CHECK(box_iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(center_error(a, b) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(norm_center_error(b, a) == doctest::Approx(0.5).epsilon(1e-12));
  BoxI ia{40, 40, 20, 20};
  CHECK(box_iou(ia, ia) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mask iou conventions") {
  Tensor e = Tensor::zeros({1, 8, 8});
  CHECK(mask_iou(e, e) == 1.0);  // both empty counts as a match
  Tensor m = block_mask(8, 2, 2, 4, 4);
  CHECK(mask_iou(m, m) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mask_iou(m, e) == 0.0);
  Tensor half = block_mask(8, 2, 2, 4, 2);
  CHECK(mask_iou(half, m) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("boundary f-measure conventions") {
  Tensor e = Tensor::zeros({1, 8, 8});
  CHECK(boundary_f(e, e) == 1.0);
  Tensor m = block_mask(8, 2, 2, 4, 4);
  CHECK(boundary_f(m, m) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(boundary_f(m, e) == 0.0);
  CHECK(boundary_f(e, m) == 0.0);
  // one-pixel shift stays high thanks to the 1-px dilation
  Tensor shifted = block_mask(8, 3, 2, 4, 4);
  CHECK(boundary_f(shifted, m) > 0.6);
  // a mask filling the frame has its boundary on the image edge
  Tensor full = block_mask(8, 0, 0, 8, 8);
  CHECK(boundary_f(full, full) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("metrics pool frames 1..L-1 and stay in range") {
  GenConfig gen;
  gen.length = 4;
  Clip clip = generate_clip(3, gen);
  TrackResult perfect;
  for (int64_t t = 0; t < clip.length; ++t) {
    FramePrediction f;
    const BoxI& b = clip.boxes[t];
    f.box = Box{b.x + b.w / 2.0, b.y + b.h / 2.0, double(b.w), double(b.h)};
    f.score = 1.0;
    perfect.frames.push_back(f);
  }
  MetricAccumulator acc;
  accumulate_clip(acc, perfect, clip, Task::RGB);
  CHECK(acc.ious.size() == 3);  // frame 0 excluded
  EvalMetrics m = compute_metrics(acc);
  CHECK(m.frames == 3);
  CHECK(m.auc == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.precision == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.precision_norm == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.mean_iou == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(m.j.has_value());

  // a far-off constant prediction scores near zero precision
  TrackResult off = perfect;
  for (auto& f : off.frames) f.box = Box{1.0, 1.0, 2.0, 2.0};
  MetricAccumulator acc2;
  accumulate_clip(acc2, off, clip, Task::RGB);
  EvalMetrics m2 = compute_metrics(acc2);
  CHECK(m2.precision < 0.1);
  CHECK(m2.auc >= 0.0);
  CHECK(m2.auc <= 1.0);
  CHECK(m2.auc < 0.1);

  // frame-count mismatches are rejected
  TrackResult shorter = perfect;
  shorter.frames.pop_back();
  MetricAccumulator acc3;
  CHECK_THROWS_AS(accumulate_clip(acc3, shorter, clip, Task::RGB), ValidationError);
}

TEST_CASE("mask task pools J and F and reports J&F") {
  GenConfig gen;
  gen.length = 3;
  Clip clip = generate_clip(9, gen);
  TrackResult r;
  for (int64_t t = 0; t < clip.length; ++t) {
    FramePrediction f;
    const BoxI& b = clip.boxes[t];
    f.box = Box{b.x + b.w / 2.0, b.y + b.h / 2.0, double(b.w), double(b.h)};
    f.mask = clip.masks[t];  // ground truth back as prediction
    f.score = 1.0;
    r.frames.push_back(f);
  }
  MetricAccumulator acc;
  accumulate_clip(acc, r, clip, Task::M);
  EvalMetrics m = compute_metrics(acc);
  REQUIRE(m.j.has_value());
  REQUIRE(m.f.has_value());
  REQUIRE(m.jf.has_value());
  CHECK(*m.j == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*m.f == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*m.jf == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("accumulator merge is order independent") {
  MetricAccumulator a, b;
  a.ious = {0.5, 0.9};
  a.center_errors = {3.0, 1.0};
  a.norm_errors = {0.1, 0.05};
  b.ious = {0.7};
  b.center_errors = {25.0};
  b.norm_errors = {0.5};
  MetricAccumulator ab = a;
  ab.merge(b);
  MetricAccumulator ba = b;
  ba.merge(a);
  EvalMetrics mab = compute_metrics(ab);
  EvalMetrics mba = compute_metrics(ba);
  CHECK(mab.auc == doctest::Approx(mba.auc).epsilon(1e-12));
  CHECK(mab.precision == doctest::Approx(mba.precision).epsilon(1e-12));
  CHECK(mab.precision_norm == doctest::Approx(mba.precision_norm).epsilon(1e-12));
  CHECK(mab.mean_iou == doctest::Approx(mba.mean_iou).epsilon(1e-12));
  CHECK(mab.frames == 3);
}

TEST_CASE("key=value report format") {
  MetricAccumulator acc;
  acc.ious = {1.0, 0.0};
  acc.center_errors = {0.0, 100.0};
  acc.norm_errors = {0.0, 5.0};
  EvalMetrics m = compute_metrics(acc);
  std::string s = metrics_keyvalues(m);
  CHECK(s.find("frames=2\n") != std::string::npos);
  CHECK(s.find("auc=") != std::string::npos);
  CHECK(s.find("precision=0.500000") != std::string::npos);
  CHECK(s.find("precision_norm=0.500000") != std::string::npos);
  CHECK(s.find("mean_iou=0.500000") != std::string::npos);
  CHECK(s.find("j=") == std::string::npos);  // no mask frames, no J/F lines
  CHECK(s.back() == '\n');

  acc.mask_j = {1.0, 0.5};
  acc.mask_f = {1.0, 1.0};
  std::string sm = metrics_keyvalues(compute_metrics(acc));
  CHECK(sm.find("j=0.750000") != std::string::npos);
  CHECK(sm.find("f=1.000000") != std::string::npos);
  CHECK(sm.find("jf=0.875000") != std::string::npos);

  CHECK_THROWS_AS(compute_metrics(MetricAccumulator{}), ValidationError);
}
