#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "fd_cases.hpp"
#include "onetracker/losses.hpp"

using namespace onetracker;
namespace O = onetracker::ops;
using ot_test::rand_tensor;

namespace {

Tensor scalar(double v) { return Tensor({1}, {v}); }

Tensor corners(double x0, double y0, double x1, double y1) {
  return Tensor({4}, {x0, y0, x1, y1});
}

double focal_at(double p) {
  Tensor score({1}, {p});
  Tensor target({1}, {1.0});
  return weighted_focal(score, target).at(0);
}

}  // namespace

TEST_CASE("focal loss oracle: single positive at p=0.5") {
  // -(1-p)^2 log p / N_pos = 0.25 * ln 2
  CHECK(focal_at(0.5) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("focal loss limits and monotonicity") {
  CHECK(focal_at(1.0 - 1e-6) < 1e-9);           // perfect prediction
  CHECK(focal_at(0.3) > focal_at(0.5));          // worse p costs more
  CHECK(focal_at(0.5) > focal_at(0.9));

  // negatives with low scores cost little; the beta term downweights
  // near-positive neighbours
  Tensor score({2}, {0.5, 0.1});
  Tensor target({2}, {1.0, 0.0});
  Tensor both = weighted_focal(score, target);
  CHECK(both.at(0) > focal_at(0.5));  // extra negative adds cost

  Tensor no_pos_target({2}, {0.0, 0.0});
  CHECK_THROWS_WITH_AS(weighted_focal(score, no_pos_target), doctest::Contains("positive"),
                       ValidationError);
  CHECK_THROWS_AS(weighted_focal(score, Tensor::zeros({3})), ValidationError);
}

TEST_CASE("giou oracles") {
  // identical boxes: loss 0, value 1
  Tensor a = corners(0.1, 0.2, 0.5, 0.6);
  CHECK(giou_loss(a, a).at(0) == doctest::Approx(0.0).epsilon(1e-12));

  // unit squares offset by one: IoU 1/7, enclosing 9, union 7
  Tensor p = corners(0.0, 0.0, 2.0, 2.0);
  Tensor g = corners(1.0, 1.0, 3.0, 3.0);
  const double want = 1.0 - (1.0 / 7.0 - 2.0 / 9.0);
  CHECK(giou_loss(p, g).at(0) == doctest::Approx(want).epsilon(1e-12));
  CHECK(want == doctest::Approx(1.0 + 5.0 / 63.0).epsilon(1e-12));

  // symmetry and translation invariance
  CHECK(giou_loss(g, p).at(0) == doctest::Approx(giou_loss(p, g).at(0)).epsilon(1e-12));
  Tensor p2 = corners(10.0, -3.0, 12.0, -1.0);
  Tensor g2 = corners(11.0, -2.0, 13.0, 0.0);
  CHECK(giou_loss(p2, g2).at(0) == doctest::Approx(giou_loss(p, g).at(0)).epsilon(1e-12));

  // far apart boxes approach loss 2
  Tensor far = corners(100.0, 100.0, 101.0, 101.0);
  Tensor near = corners(0.0, 0.0, 1.0, 1.0);
  CHECK(giou_loss(near, far).at(0) > 1.9);

  CHECK_THROWS_AS(giou_loss(p, corners(0.5, 0.5, 0.5, 0.6)), ValidationError);  // zero-width gt
  CHECK(giou_value(Box{0.5, 0.5, 0.2, 0.2}, Box{0.5, 0.5, 0.2, 0.2}) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("l1 box loss oracle") {
  Tensor pred({4}, {0.5, 0.5, 0.2, 0.2});
  Tensor gt({4}, {0.3, 0.5, 0.2, 0.2});
  CHECK(l1_box_loss(pred, gt).at(0) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(l1_box_loss(gt, gt).at(0) == 0.0);
}

TEST_CASE("boxinst projection oracle on a 4x4 grid") {
  // box covers columns/rows 1-2; one confident in-box pixel
  Tensor logits = Tensor::full({4, 4}, -40.0);
  logits.data_mut()[1 * 4 + 1] = 40.0;
  Box gt{0.5, 0.5, 0.5, 0.5};
  // per-axis Dice = 2*1 / (1 + 2) -> distance 2/3 per axis, L = 2/3
  CHECK(boxinst_projection_loss(logits, gt).at(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-6));

  // all-background mask: both dices vanish, loss approaches 2
  Tensor empty = Tensor::full({4, 4}, -40.0);
  CHECK(boxinst_projection_loss(empty, gt).at(0) == doctest::Approx(2.0).epsilon(1e-3));

  // a mask exactly filling the box drives the loss to ~0
  Tensor fill = Tensor::full({4, 4}, -40.0);
  for (int64_t y = 1; y <= 2; ++y)
    for (int64_t x = 1; x <= 2; ++x) fill.data_mut()[y * 4 + x] = 40.0;
  CHECK(boxinst_projection_loss(fill, gt).at(0) < 1e-3);

  CHECK_THROWS_AS(boxinst_projection_loss(logits, Box{0.5, 0.5, 0.0, 0.5}), ValidationError);
}

TEST_CASE("heatmap target shape and falloff") {
  Box gt{0.4375, 0.4375, 0.25, 0.25};
  Tensor t = make_heatmap_target(gt, 8);
  CHECK(t.shape() == Shape{8, 8});
  CHECK(t.at(3 * 8 + 3) == 1.0);  // containing cell exactly one
  double mx = 0.0;
  for (double v : t.data()) mx = std::max(mx, v);
  CHECK(mx == 1.0);
  // cells beyond the 3-sigma radius are exactly zero
  CHECK(t.at(0) == 0.0);
  CHECK(t.at(7 * 8 + 7) == 0.0);
  // a near neighbour is positive but below one
  CHECK(t.at(3 * 8 + 4) > 0.0);
  CHECK(t.at(3 * 8 + 4) < 1.0);
}

TEST_CASE("stage loss composes the weighted sum") {
  LossWeights w;  // (2, 5, 1)
  StageLossInputs in;
  in.cls = scalar(1.0);
  in.iou = scalar(1.0);
  in.l1 = scalar(1.0);
  in.mask = scalar(1.0);
  CHECK(stage_loss(in, w, 1, std::nullopt).at(0) == doctest::Approx(9.0).epsilon(1e-12));

  StageLossInputs missing = in;
  missing.mask.reset();
  CHECK_THROWS_WITH_AS(stage_loss(missing, w, 1, std::nullopt), doctest::Contains("mask"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(stage_loss(missing, w, 2, Modality::M), doctest::Contains("stage 2"),
                       ValidationError);
  CHECK_THROWS_AS(stage_loss(in, w, 2, std::nullopt), ValidationError);  // stage 2 needs a task
  CHECK_THROWS_AS(stage_loss(in, w, 3, std::nullopt), ValidationError);
}

TEST_CASE("losses are differentiable") {
  Rng rng(31);

  Tensor score = rand_tensor({1, 4, 4}, rng, 0.15, 0.85);
  Box gt{0.55, 0.45, 0.4, 0.5};
  Tensor target = make_heatmap_target(gt, 4);
  auto r1 = finite_diff_check([&](const Tensor& s) { return weighted_focal(s, target); }, score);
  INFO(r1.summary());
  CHECK(r1.ok);

  Tensor pred_c = corners(0.1, 0.15, 0.6, 0.7);
  Tensor gt_c = corners(0.2, 0.2, 0.7, 0.8);
  auto r2 = finite_diff_check([&](const Tensor& p) { return giou_loss(p, gt_c); }, pred_c);
  INFO(r2.summary());
  CHECK(r2.ok);

  Tensor pred_b({4}, {0.52, 0.48, 0.3, 0.24});
  Tensor gt_b({4}, {0.5, 0.5, 0.25, 0.25});
  auto r3 = finite_diff_check([&](const Tensor& p) { return l1_box_loss(p, gt_b); }, pred_b);
  INFO(r3.summary());
  CHECK(r3.ok);

  Tensor logits = rand_tensor({8, 8}, rng);
  auto r4 = finite_diff_check(
      [&](const Tensor& m) { return boxinst_projection_loss(m, Box{0.5, 0.5, 0.5, 0.5}); },
      logits);
  INFO(r4.summary());
  CHECK(r4.ok);

  Tensor gt_mask = Tensor::zeros({8, 8});
  for (int64_t i = 20; i < 40; ++i) gt_mask.data_mut()[i] = 1.0;
  auto r5 = finite_diff_check(
      [&](const Tensor& m) { return mask_bce_dice_loss(m, gt_mask); }, logits);
  INFO(r5.summary());
  CHECK(r5.ok);
}
