#include "vidtrack/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vidtrack {

namespace {

struct Field {
  const char* key;
  double PipelineConfig::*member;
};

constexpr Field kFields[] = {
    {"detect_to_track_score", &PipelineConfig::detect_to_track_score},
    {"track_quality_min", &PipelineConfig::track_quality_min},
    {"track_nms_iou", &PipelineConfig::track_nms_iou},
    {"T_merge", &PipelineConfig::t_merge},
    {"final_score_min", &PipelineConfig::final_score_min},
    {"final_nms_iou", &PipelineConfig::final_nms_iou},
    {"link_iou", &PipelineConfig::link_iou},
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

constexpr const char* kTrackedScoreKey = "tracked_score";

}  // namespace

std::string_view to_string(TrackedScore m) {
  switch (m) {
    case TrackedScore::kInherit:
      return "inherit";
    case TrackedScore::kRefresh:
      return "refresh";
    case TrackedScore::kMax:
      return "max";
  }
  return "";
}

TrackedScore tracked_score_from_string(std::string_view s) {
  for (TrackedScore m : {TrackedScore::kInherit, TrackedScore::kRefresh, TrackedScore::kMax}) {
    if (s == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown tracked score mode '" + std::string(s) + "'");
}

void PipelineConfig::validate() const {
  for (const auto& f : kFields) {
    const double v = this->*f.member;
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(std::string("config value ") + f.key + " must lie in [0, 1]");
    }
  }
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  if (key == kTrackedScoreKey) {
    tracked_score = tracked_score_from_string(trim(value));
    return;
  }
  for (const auto& f : kFields) {
    if (key != f.key) continue;
    const std::string text(trim(value));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size()) {
      throw std::invalid_argument("config key " + std::string(key) + ": cannot parse '" + text + "'");
    }
    this->*f.member = v;
    return;
  }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config '" + path.string() + "'");
  PipelineConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view sv = line;
    if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    sv = trim(sv);
    if (sv.empty()) continue;
    const auto eq = sv.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      cfg.set(trim(sv.substr(0, eq)), trim(sv.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

std::string to_config_text(const PipelineConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : kFields) {
    // Shortest text that reads back to the same double.
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, cfg.*f.member);
    os << f.key << " = " << std::string_view(buf, res.ptr - buf) << "\n";
  }
  os << kTrackedScoreKey << " = " << to_string(cfg.tracked_score) << "\n";
  return os.str();
}

double by_score(const Detection& d) { return d.score; }

std::vector<std::size_t> nms_indices(std::span<const Box> boxes, std::span<const double> keys,
                                     double iou_thresh) {
  if (boxes.size() != keys.size()) throw std::invalid_argument("nms: boxes and keys differ in length");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (std::size_t k : kept) {
      if (iou(boxes[i], boxes[k]) > iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh, const ScoreKey& key) {
  std::vector<Box> boxes;
  std::vector<double> keys;
  boxes.reserve(dets.size());
  keys.reserve(dets.size());
  for (const auto& d : dets) {
    boxes.push_back(d.box);
    keys.push_back(key(d));
  }
  std::vector<Detection> out;
  for (std::size_t i : nms_indices(boxes, keys, iou_thresh)) out.push_back(dets[i]);
  return out;
}

std::vector<Detection> nms_per_class(std::span<const Detection> dets, double iou_thresh) {
  std::vector<char> keep(dets.size(), 0);
  std::vector<int> classes;
  for (const auto& d : dets) classes.push_back(d.class_id);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  for (int c : classes) {
    std::vector<std::size_t> members;
    std::vector<Box> boxes;
    std::vector<double> keys;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (dets[i].class_id != c) continue;
      members.push_back(i);
      boxes.push_back(dets[i].box);
      keys.push_back(dets[i].score);
    }
    for (std::size_t k : nms_indices(boxes, keys, iou_thresh)) keep[members[k]] = 1;
  }
  std::vector<Detection> out;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (keep[i]) out.push_back(dets[i]);
  }
  return out;
}

std::vector<std::size_t> filter_track_indices(std::span<const TrackPrediction> preds,
                                              const PipelineConfig& cfg) {
  std::vector<std::size_t> passing;
  std::vector<Box> boxes;
  std::vector<double> keys;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].quality < cfg.track_quality_min) continue;
    passing.push_back(i);
    boxes.push_back(preds[i].predicted_box);
    keys.push_back(preds[i].quality);
  }
  std::vector<std::size_t> out;
  for (std::size_t k : nms_indices(boxes, keys, cfg.track_nms_iou)) out.push_back(passing[k]);
  return out;
}

namespace {

Detection tracked_detection(const TrackPrediction& p) {
  Detection d;
  d.frame = p.target_frame;
  d.class_id = p.source.class_id;
  d.score = p.source.score;
  d.box = p.predicted_box;
  d.provenance = Provenance::kTracked;
  d.track_id = p.source.track_id;
  return d;
}

std::vector<std::size_t> merge_kept_indices(std::span<const Detection> tracked,
                                            std::span<const Detection> detected, double t_merge) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < detected.size(); ++i) {
    bool keep = true;
    for (const auto& t : tracked) {
      if (iou(detected[i].box, t.box) >= t_merge) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

// Tracked boxes take class and score from the detections they absorb.
void absorb_scores(std::vector<Detection>& tracked, std::span<const Detection> detected,
                   const PipelineConfig& cfg) {
  if (cfg.tracked_score == TrackedScore::kInherit) return;
  for (auto& t : tracked) {
    const Detection* best = nullptr;
    double best_iou = cfg.t_merge;
    for (const auto& d : detected) {
      const double o = iou(d.box, t.box);
      if (o >= best_iou && (best == nullptr || o > best_iou)) {
        best = &d;
        best_iou = o;
      }
    }
    if (best == nullptr) continue;
    if (cfg.tracked_score == TrackedScore::kRefresh || best->score > t.score) {
      t.class_id = best->class_id;
      t.score = best->score;
    }
  }
}

}  // namespace

std::vector<Detection> filter_tracks(std::span<const TrackPrediction> preds,
                                     const PipelineConfig& cfg) {
  std::vector<Detection> out;
  for (std::size_t i : filter_track_indices(preds, cfg)) out.push_back(tracked_detection(preds[i]));
  return out;
}

std::vector<Detection> tfd_merge(std::span<const Detection> tracked,
                                 std::span<const Detection> detected, const PipelineConfig& cfg,
                                 std::int64_t& next_track_id) {
  std::vector<Detection> out(tracked.begin(), tracked.end());
  absorb_scores(out, detected, cfg);
  for (std::size_t i : merge_kept_indices(tracked, detected, cfg.t_merge)) {
    Detection d = detected[i];
    d.provenance = Provenance::kDetected;
    d.track_id = next_track_id++;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<std::pair<std::int64_t, Detection>> FrameState::active_tracks() const {
  std::vector<std::pair<std::int64_t, Detection>> out;
  for (const auto& d : emitted) {
    if (d.track_id) out.emplace_back(*d.track_id, d);
  }
  return out;
}

FrameState step(const FrameState& state, std::span<const Detection> detections_next,
                const TrackFn& track_fn, const PipelineConfig& cfg) {
  FrameState next;
  next.frame = state.frame + 1;
  next.next_track_id = state.next_track_id;

  // Detect to track: confident detections of frame t become candidates.
  std::vector<Detection> candidates;
  std::vector<std::size_t> candidate_source;
  if (state.frame >= 0) {
    for (std::size_t i = 0; i < state.emitted.size(); ++i) {
      if (state.emitted[i].score >= cfg.detect_to_track_score) {
        candidates.push_back(state.emitted[i]);
        candidate_source.push_back(i);
      }
    }
  }
  std::vector<TrackPrediction> preds;
  if (!candidates.empty()) {
    preds = track_fn(candidates);
    if (preds.size() != candidates.size()) {
      throw std::runtime_error("tracker returned " + std::to_string(preds.size()) +
                               " predictions for " + std::to_string(candidates.size()) + " boxes");
    }
    for (std::size_t i = 0; i < preds.size(); ++i) {
      preds[i].source_index = candidate_source[i];
      preds[i].target_frame = next.frame;
    }
  }

  // Track to detect: filtered tracks first, then detections not covered by them.
  std::vector<Detection> tracked;
  for (std::size_t i : filter_track_indices(preds, cfg)) {
    tracked.push_back(tracked_detection(preds[i]));
    next.origins.push_back({Provenance::kTracked, preds[i].source_index});
  }
  std::vector<Detection> detected;
  std::vector<std::size_t> detected_source;
  for (std::size_t i = 0; i < detections_next.size(); ++i) {
    if (detections_next[i].score >= cfg.detect_to_track_score) {
      detected.push_back(detections_next[i]);
      detected_source.push_back(i);
    }
  }
  absorb_scores(tracked, detected, cfg);
  next.emitted = std::move(tracked);
  for (std::size_t k : merge_kept_indices(next.emitted, detected, cfg.t_merge)) {
    Detection d = detected[k];
    d.frame = next.frame;
    d.provenance = Provenance::kDetected;
    d.track_id = next.next_track_id++;
    next.emitted.push_back(std::move(d));
    next.origins.push_back({Provenance::kDetected, detected_source[k]});
  }
  next.predictions = std::move(preds);
  return next;
}

std::vector<Detection> final_detections(std::span<const Detection> dets, const PipelineConfig& cfg) {
  std::vector<Detection> passing;
  for (const auto& d : dets) {
    if (d.score >= cfg.final_score_min) passing.push_back(d);
  }
  return nms_per_class(passing, cfg.final_nms_iou);
}

TfdResult run_tfd(const VideoDetectionSet& dets, const TrackFn& track_fn, const PipelineConfig& cfg) {
  cfg.validate();
  TfdResult out;
  out.merged.video_id = dets.video_id;
  const std::size_t n = dets.frames.size();
  out.merged.frames.resize(n);
  out.origins.resize(n);
  out.predictions.resize(n);
  FrameState state;
  for (std::size_t t = 0; t < n; ++t) {
    state = step(state, dets.frames[t], track_fn, cfg);
    out.merged.frames[t] = state.emitted;
    out.origins[t] = state.origins;
    if (t > 0) out.predictions[t - 1] = state.predictions;
  }
  return out;
}

}  // namespace vidtrack
