#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <sstream>

#include "vidtrack/evalio.hpp"
#include "vidtrack/geometry.hpp"
#include "vidtrack/linker.hpp"
#include "vidtrack/pipeline.hpp"
#include "vidtrack/runner.hpp"
#include "vidtrack/synth.hpp"
#include "vidtrack/tensor_ops.hpp"
#include "vidtrack/tracker.hpp"

namespace py = pybind11;
using namespace vidtrack;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (C, H, W) float64 array <-> Tensor3; 2-D input is read as one channel.
Tensor3 to_tensor(const Array& a) {
  if (a.ndim() != 3 && a.ndim() != 2) throw ShapeError("expected a (C, H, W) or (H, W) array");
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(0)) : 1;
  const int h = static_cast<int>(a.shape(a.ndim() - 2));
  const int w = static_cast<int>(a.shape(a.ndim() - 1));
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor3(c, h, w, std::move(data));
}

Array to_array(const Tensor3& t) {
  Array out({t.channels(), t.height(), t.width()});
  std::memcpy(out.mutable_data(), t.data().data(), t.size() * sizeof(double));
  return out;
}

FeaturePyramid to_pyramid(int image_h, int image_w, const std::vector<std::pair<int, Array>>& levels) {
  FeaturePyramid p{image_h, image_w, {}};
  for (const auto& [stride, arr] : levels) p.levels.push_back({stride, to_tensor(arr)});
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Video object detection toolkit: tracker head, tracking-first merge, tubelet linking, evaluation";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ExhaustionError>(m, "ExhaustionError", PyExc_RuntimeError);

  // geometry
  py::class_<Box>(m, "Box")
      .def(py::init<>())
      .def(py::init<double, double, double, double>(), py::arg("x1"), py::arg("y1"), py::arg("x2"), py::arg("y2"))
      .def_static("from_center", &Box::from_center, py::arg("cx"), py::arg("cy"), py::arg("w"), py::arg("h"))
      .def_property_readonly("x1", &Box::x1)
      .def_property_readonly("y1", &Box::y1)
      .def_property_readonly("x2", &Box::x2)
      .def_property_readonly("y2", &Box::y2)
      .def_property_readonly("cx", &Box::cx)
      .def_property_readonly("cy", &Box::cy)
      .def_property_readonly("w", &Box::w)
      .def_property_readonly("h", &Box::h)
      .def_property_readonly("area", &Box::area)
      .def("corners", [](const Box& b) { return py::make_tuple(b.x1(), b.y1(), b.x2(), b.y2()); })
      .def(py::self == py::self)
      .def("__repr__", [](const Box& b) {
        std::ostringstream os;
        os << "Box(" << b.x1() << ", " << b.y1() << ", " << b.x2() << ", " << b.y2() << ")";
        return os.str();
      });

  py::class_<RegressionDelta>(m, "RegressionDelta")
      .def(py::init<double, double, double, double>(), py::arg("dx") = 0.0, py::arg("dy") = 0.0,
           py::arg("dw") = 0.0, py::arg("dh") = 0.0)
      .def_readwrite("dx", &RegressionDelta::dx)
      .def_readwrite("dy", &RegressionDelta::dy)
      .def_readwrite("dw", &RegressionDelta::dw)
      .def_readwrite("dh", &RegressionDelta::dh)
      .def("as_tuple", [](const RegressionDelta& d) { return py::make_tuple(d.dx, d.dy, d.dw, d.dh); });

  py::class_<JitterCoefficients>(m, "JitterCoefficients")
      .def(py::init<double, double, double, double>(), py::arg("dx") = 0.0, py::arg("dy") = 0.0,
           py::arg("dw") = 1.0, py::arg("dh") = 1.0);

  m.def("iou", &iou, py::arg("a"), py::arg("b"));
  m.def("encode", &encode, py::arg("reference"), py::arg("target"));
  m.def("decode", &decode, py::arg("reference"), py::arg("delta"));
  m.def("expand", &expand, py::arg("box"), py::arg("k"));
  m.def("jitter_roi", &jitter_roi, py::arg("gt"), py::arg("coeffs"));
  m.def(
      "sample_jittered_rois",
      [](const Box& gt, int n_keep, std::uint64_t seed, double threshold, bool keep_below) {
        return sample_jittered_rois(gt, n_keep, seed, RoiFilter{threshold, keep_below});
      },
      py::arg("gt"), py::arg("n_keep"), py::arg("seed"), py::arg("threshold") = 0.5, py::arg("keep_below") = true);

  // tensor ops
  m.def(
      "depthwise_correlate", [](const Array& t, const Array& s) { return to_array(depthwise_correlate(to_tensor(t), to_tensor(s))); },
      py::arg("template"), py::arg("search"));
  m.def(
      "roi_align_full_avg",
      [](const Array& f, const Box& roi, int out_h, int out_w, double stride, int sampling_ratio) {
        return to_array(roi_align_full_avg(to_tensor(f), roi, out_h, out_w, stride, {sampling_ratio}));
      },
      py::arg("features"), py::arg("roi"), py::arg("out_h"), py::arg("out_w"), py::arg("stride"),
      py::arg("sampling_ratio") = 0);
  m.def(
      "roi_align_nearest4",
      [](const Array& f, const Box& roi, int out_h, int out_w, double stride) {
        return to_array(roi_align_nearest4(to_tensor(f), roi, out_h, out_w, stride));
      },
      py::arg("features"), py::arg("roi"), py::arg("out_h"), py::arg("out_w"), py::arg("stride"));
  m.def(
      "fuse_pyramid",
      [](int image_h, int image_w, const std::vector<std::pair<int, Array>>& levels, int target_stride) {
        return to_array(fuse_pyramid(to_pyramid(image_h, image_w, levels), target_stride));
      },
      py::arg("image_h"), py::arg("image_w"), py::arg("levels"), py::arg("target_stride"));

  // detections
  py::enum_<Provenance>(m, "Provenance")
      .value("NONE", Provenance::kNone)
      .value("DETECTED", Provenance::kDetected)
      .value("TRACKED", Provenance::kTracked);

  py::class_<Detection>(m, "Detection")
      .def(py::init([](int frame, int class_id, double score, const Box& box, std::optional<std::int64_t> track_id) {
             Detection d;
             d.frame = frame;
             d.class_id = class_id;
             d.score = score;
             d.box = box;
             d.track_id = track_id;
             return d;
           }),
           py::arg("frame") = 0, py::arg("class_id") = 0, py::arg("score") = 0.0, py::arg("box") = Box(),
           py::arg("track_id") = std::nullopt)
      .def_readwrite("frame", &Detection::frame)
      .def_readwrite("class_id", &Detection::class_id)
      .def_readwrite("score", &Detection::score)
      .def_readwrite("box", &Detection::box)
      .def_readwrite("provenance", &Detection::provenance)
      .def_readwrite("track_id", &Detection::track_id)
      .def(py::self == py::self);

  py::class_<VideoDetectionSet>(m, "VideoDetectionSet")
      .def(py::init([](std::string video_id, std::vector<std::vector<Detection>> frames) {
             return VideoDetectionSet{std::move(video_id), std::move(frames)};
           }),
           py::arg("video_id") = "", py::arg("frames") = std::vector<std::vector<Detection>>{})
      .def_readwrite("video_id", &VideoDetectionSet::video_id)
      .def_readwrite("frames", &VideoDetectionSet::frames)
      .def_property_readonly("num_frames", &VideoDetectionSet::num_frames)
      .def_property_readonly("num_detections", &VideoDetectionSet::num_detections)
      .def(py::self == py::self);

  py::class_<TrackPrediction>(m, "TrackPrediction")
      .def(py::init<>())
      .def_readwrite("source", &TrackPrediction::source)
      .def_readwrite("source_index", &TrackPrediction::source_index)
      .def_readwrite("target_frame", &TrackPrediction::target_frame)
      .def_readwrite("predicted_box", &TrackPrediction::predicted_box)
      .def_readwrite("quality", &TrackPrediction::quality);

  // tracker
  m.def("smooth_l1", &smooth_l1, py::arg("x"));
  m.def("smooth_l1_grad", &smooth_l1_grad, py::arg("x"));
  m.def(
      "oracle_track",
      [](const std::vector<Detection>& boxes, const VideoDetectionSet& gt, double center_sigma, double scale_sigma,
         std::uint64_t seed, int tau) {
        NoiseParams n;
        n.center_sigma = center_sigma;
        n.scale_sigma = scale_sigma;
        return oracle_track(boxes, gt, n, seed, tau);
      },
      py::arg("boxes"), py::arg("gt"), py::arg("center_sigma") = 0.0, py::arg("scale_sigma") = 0.0,
      py::arg("seed") = 0, py::arg("tau") = 1);

  // pipeline
  py::enum_<TrackedScore>(m, "TrackedScore")
      .value("INHERIT", TrackedScore::kInherit)
      .value("REFRESH", TrackedScore::kRefresh)
      .value("MAX", TrackedScore::kMax);

  py::class_<PipelineConfig>(m, "PipelineConfig")
      .def(py::init<>())
      .def_readwrite("detect_to_track_score", &PipelineConfig::detect_to_track_score)
      .def_readwrite("track_quality_min", &PipelineConfig::track_quality_min)
      .def_readwrite("track_nms_iou", &PipelineConfig::track_nms_iou)
      .def_readwrite("t_merge", &PipelineConfig::t_merge)
      .def_readwrite("final_score_min", &PipelineConfig::final_score_min)
      .def_readwrite("final_nms_iou", &PipelineConfig::final_nms_iou)
      .def_readwrite("link_iou", &PipelineConfig::link_iou)
      .def_readwrite("tracked_score", &PipelineConfig::tracked_score)
      .def("set", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.set(k, v); })
      .def("validate", &PipelineConfig::validate)
      .def("to_text", [](const PipelineConfig& c) { return to_config_text(c); });

  m.def(
      "nms", [](const std::vector<Detection>& d, double t) { return nms(d, t); }, py::arg("detections"),
      py::arg("iou_thresh"));
  m.def(
      "filter_tracks", [](const std::vector<TrackPrediction>& p, const PipelineConfig& c) { return filter_tracks(p, c); },
      py::arg("predictions"), py::arg("config") = PipelineConfig{});
  m.def(
      "tfd_merge",
      [](const std::vector<Detection>& tracked, const std::vector<Detection>& detected, const PipelineConfig& cfg,
         std::int64_t next_track_id) {
        auto out = tfd_merge(tracked, detected, cfg, next_track_id);
        return py::make_tuple(out, next_track_id);
      },
      py::arg("tracked"), py::arg("detected"), py::arg("config") = PipelineConfig{}, py::arg("next_track_id") = 0,
      "Returns (merged detections, next free track id).");

  // linker
  py::enum_<LinkMode>(m, "LinkMode").value("SEQ_NMS", LinkMode::kSeqNms).value("SEQ_TRACK_NMS", LinkMode::kSeqTrackNms);
  py::class_<LinkGraph>(m, "LinkGraph")
      .def_readonly("successors", &LinkGraph::successors)
      .def_property_readonly("num_edges", &LinkGraph::num_edges);
  py::class_<Tubelet>(m, "Tubelet")
      .def_readonly("start_frame", &Tubelet::start_frame)
      .def_readonly("nodes", &Tubelet::nodes)
      .def_readonly("path_score", &Tubelet::path_score)
      .def_readonly("rescored", &Tubelet::rescored);
  m.def("build_graph_seqnms", &build_graph_seqnms, py::arg("video"), py::arg("iou_thresh") = 0.5);
  m.def("build_graph_seqtrack", &build_graph_seqtrack, py::arg("video"), py::arg("predicted"),
        py::arg("iou_thresh") = 0.5);
  m.def(
      "best_path", [](const LinkGraph& g, const NodeScores& s) { return best_path(g, s); }, py::arg("graph"),
      py::arg("scores"));
  m.def(
      "rescore_and_suppress",
      [](const VideoDetectionSet& v, const LinkGraph& g, double nms_iou) { return rescore_and_suppress(v, g, nms_iou); },
      py::arg("video"), py::arg("graph"), py::arg("nms_iou") = 0.45);

  // evaluation and files
  py::class_<EvalResult>(m, "EvalResult")
      .def_readonly("iou_threshold", &EvalResult::iou_threshold)
      .def_readonly("ap", &EvalResult::ap)
      .def_readonly("gt_count", &EvalResult::gt_count)
      .def_readonly("map", &EvalResult::map);
  m.def(
      "evaluate_map",
      [](const std::vector<VideoDetectionSet>& p, const std::vector<VideoDetectionSet>& g, double t) {
        return evaluate_map(p, g, t);
      },
      py::arg("preds"), py::arg("gt"), py::arg("iou_thresh") = 0.5);
  m.def("average_precision", &average_precision, py::arg("ranked_tp"), py::arg("num_gt"));
  m.def("load_detections", &load_detections, py::arg("path"));
  m.def("save_detections", &save_detections, py::arg("path"), py::arg("videos"));

  // synthetic data and composed variants
  py::class_<GeneratedVideo>(m, "GeneratedVideo")
      .def_readonly("gt", &GeneratedVideo::gt)
      .def_readonly("dets", &GeneratedVideo::dets);
  m.def(
      "generate_preset", [](const std::string& name, std::uint64_t seed) { return generate(preset_scenario(name, seed)); },
      py::arg("name"), py::arg("seed") = 0, "Generates one of the noiseless|degraded|fast scenarios.");
  m.def(
      "generate_scenario_json", [](const std::string& text) { return generate(scenario_from_json(text)); },
      py::arg("text"));
  m.def(
      "preset_json", [](const std::string& name, std::uint64_t seed) { return scenario_to_json(preset_scenario(name, seed)); },
      py::arg("name"), py::arg("seed") = 0);
  m.def(
      "run_variant",
      [](const VideoDetectionSet& dets, const std::string& variant, const PipelineConfig& cfg,
         const std::optional<VideoDetectionSet>& gt, double noise, std::uint64_t tracker_seed) {
        const Variant v = variant_from_string(variant);
        TrackFn tracker;
        if (uses_tracker(v)) {
          if (!gt) throw std::invalid_argument("variant " + variant + " needs gt for the oracle tracker");
          NoiseParams n;
          n.center_sigma = noise;
          n.scale_sigma = noise;
          tracker = make_oracle_tracker(*gt, n, tracker_seed);
        }
        return run_variant(dets, v, cfg, tracker ? &tracker : nullptr).final;
      },
      py::arg("dets"), py::arg("variant"), py::arg("config") = PipelineConfig{}, py::arg("gt") = std::nullopt,
      py::arg("noise") = 0.05, py::arg("tracker_seed") = 0,
      "Runs one ablation variant; tracker-backed variants use the ground-truth stand-in tracker.");
}
