#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "onetracker/cli.hpp"
#include "onetracker/train.hpp"

namespace py = pybind11;
using namespace onetracker;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> dims(t.shape().begin(), t.shape().end());
  py::array_t<double> arr(dims);
  auto d = t.data();
  std::copy(d.begin(), d.end(), arr.mutable_data());
  return arr;
}

py::dict clip_to_dict(const Clip& clip) {
  py::dict out;
  auto stack = [](const std::vector<Tensor>& v) {
    py::list l;
    for (const Tensor& t : v) l.append(to_numpy(t));
    return l;
  };
  out["frames"] = stack(clip.frames);
  out["masks"] = stack(clip.masks);
  out["depth"] = stack(clip.depth);
  out["thermal"] = stack(clip.thermal);
  out["event"] = stack(clip.event);
  py::list boxes;
  for (const BoxI& b : clip.boxes) boxes.append(py::make_tuple(b.x, b.y, b.w, b.h));
  out["boxes"] = boxes;
  out["sentence"] = clip.sentence;
  out["text_ids"] = clip.text_ids;
  out["size"] = clip.size;
  out["length"] = clip.length;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "onetracker core bindings";

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a CLI invocation in-process; returns (exit_code, stdout, stderr).");

  m.def(
      "generate_clip",
      [](uint64_t seed, int64_t frame_size, int64_t length, int64_t distractors, double rgb_noise,
         bool crossing, int64_t max_speed) {
        GenConfig cfg;
        cfg.frame_size = frame_size;
        cfg.length = length;
        cfg.distractors = distractors;
        cfg.rgb_noise = rgb_noise;
        cfg.crossing = crossing;
        cfg.max_speed = max_speed;
        return clip_to_dict(generate_clip(seed, cfg));
      },
      py::arg("seed"), py::arg("frame_size") = 64, py::arg("length") = 8,
      py::arg("distractors") = 2, py::arg("rgb_noise") = 0.0, py::arg("crossing") = false,
      py::arg("max_speed") = 3);

  m.def("tokenize", &tokenize, py::arg("sentence"));

  m.def(
      "hanning_window", [](int64_t n) { return to_numpy(hanning_window(n)); }, py::arg("n"));

  m.def(
      "giou",
      [](std::tuple<double, double, double, double> a, std::tuple<double, double, double, double> b) {
        auto unpack = [](const auto& t) {
          return Box{std::get<0>(t), std::get<1>(t), std::get<2>(t), std::get<3>(t)};
        };
        return giou_value(unpack(a), unpack(b));
      },
      py::arg("box_a"), py::arg("box_b"),
      "GIoU of two (cx, cy, w, h) boxes in any consistent units.");

  m.def(
      "success_auc", [](const std::vector<double>& ious) { return success_auc(ious); },
      py::arg("ious"));
}
