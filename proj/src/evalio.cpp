#include "vidtrack/evalio.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "vidtrack/array_file.hpp"

namespace vidtrack {

using ojson = nlohmann::ordered_json;

namespace {

std::string format_error_text(const std::string& detail, int line, const std::string& source) {
  std::string where = source;
  if (line > 0) where += (where.empty() ? "line " : ":") + std::to_string(line);
  return where.empty() ? detail : where + ": " + detail;
}

}  // namespace

FormatError::FormatError(const std::string& detail, int line, const std::string& source)
    : std::runtime_error(format_error_text(detail, line, source)), line_(line), detail_(detail) {}

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* key, int line) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing field '") + key + "'", line);
  return *it;
}

int int_field(const nlohmann::json& j, const char* key, int line) {
  const auto& v = field(j, key, line);
  if (!v.is_number_integer()) throw FormatError(std::string("field '") + key + "' must be an integer", line);
  return v.get<int>();
}

double real_field(const nlohmann::json& j, const char* key, int line) {
  const auto& v = field(j, key, line);
  if (!v.is_number()) throw FormatError(std::string("field '") + key + "' must be a number", line);
  return v.get<double>();
}

Box box_field(const nlohmann::json& j, const char* key, int line) {
  const auto& v = field(j, key, line);
  if (!v.is_array() || v.size() != 4) {
    throw FormatError(std::string("field '") + key + "' must be [x1, y1, x2, y2]", line);
  }
  for (const auto& c : v) {
    if (!c.is_number()) throw FormatError(std::string("field '") + key + "' must hold numbers", line);
  }
  try {
    return Box(v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>());
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what(), line);
  }
}

std::optional<std::int64_t> track_field(const nlohmann::json& j, int line) {
  auto it = j.find("track");
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) throw FormatError("field 'track' must be an integer or null", line);
  return it->get<std::int64_t>();
}

Detection parse_detection(const nlohmann::json& j, int line) {
  Detection d;
  d.frame = int_field(j, "frame", line);
  if (d.frame < 0) throw FormatError("frame index must be non-negative", line);
  d.class_id = int_field(j, "class", line);
  d.score = real_field(j, "score", line);
  if (!(d.score >= 0.0 && d.score <= 1.0)) throw FormatError("score must lie in [0, 1]", line);
  d.box = box_field(j, "box", line);
  d.track_id = track_field(j, line);
  if (auto it = j.find("provenance"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw FormatError("field 'provenance' must be a string or null", line);
    try {
      d.provenance = provenance_from_string(it->get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what(), line);
    }
  }
  return d;
}

ojson box_json(const Box& b) { return ojson::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

ojson detection_json(const std::string& video, const Detection& d) {
  ojson j;
  j["video"] = video;
  j["frame"] = d.frame;
  j["class"] = d.class_id;
  j["score"] = d.score;
  j["box"] = box_json(d.box);
  j["track"] = d.track_id ? ojson(*d.track_id) : ojson(nullptr);
  j["provenance"] = d.provenance == Provenance::kNone ? ojson(nullptr) : ojson(std::string(to_string(d.provenance)));
  return j;
}

template <typename F>
void for_each_json_line(std::istream& is, F&& fn) {
  std::string text;
  int lineno = 0;
  while (std::getline(is, text)) {
    ++lineno;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!j.is_object()) throw FormatError("record must be a JSON object", lineno);
    fn(j, lineno);
  }
}

std::string video_field(const nlohmann::json& j, int line) {
  const auto& v = field(j, "video", line);
  if (!v.is_string()) throw FormatError("field 'video' must be a string", line);
  return v.get<std::string>();
}

}  // namespace

void write_detections(std::ostream& os, const std::vector<VideoDetectionSet>& videos) {
  for (const auto& v : videos) {
    ojson meta;
    meta["video"] = v.video_id;
    meta["frames"] = v.frames.size();
    os << meta.dump() << '\n';
    for (std::size_t t = 0; t < v.frames.size(); ++t) {
      for (const auto& d : v.frames[t]) {
        if (d.frame != static_cast<int>(t)) {
          throw std::invalid_argument("detection frame " + std::to_string(d.frame) +
                                      " stored under frame " + std::to_string(t));
        }
        os << detection_json(v.video_id, d).dump() << '\n';
      }
    }
  }
}

std::vector<VideoDetectionSet> read_detections(std::istream& is) {
  std::vector<VideoDetectionSet> videos;
  std::map<std::string, std::size_t> index;
  auto video = [&](const std::string& id) -> VideoDetectionSet& {
    auto [it, inserted] = index.emplace(id, videos.size());
    if (inserted) videos.push_back({id, {}});
    return videos[it->second];
  };
  for_each_json_line(is, [&](const nlohmann::json& j, int line) {
    const std::string id = video_field(j, line);
    if (j.contains("frames") && !j.contains("box")) {
      const int n = int_field(j, "frames", line);
      if (n < 0) throw FormatError("frame count must be non-negative", line);
      auto& v = video(id);
      if (v.frames.size() < static_cast<std::size_t>(n)) v.frames.resize(n);
      return;
    }
    Detection d = parse_detection(j, line);
    video(id).frame(d.frame).push_back(d);
  });
  return videos;
}

void save_detections(const std::filesystem::path& path, const std::vector<VideoDetectionSet>& videos) {
  std::ostringstream os;
  write_detections(os, videos);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << os.str();
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::vector<VideoDetectionSet> load_detections(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return read_detections(f);
  } catch (const FormatError& e) {
    throw FormatError(e.detail(), e.line(), path.string());
  }
}

void save_predictions(const std::filesystem::path& path,
                      const std::map<std::string, VideoPredictions>& preds) {
  std::ostringstream os;
  for (const auto& [video, frames] : preds) {
    for (const auto& frame : frames) {
      for (const auto& p : frame) {
        ojson j;
        j["video"] = video;
        j["frame"] = p.source.frame;
        j["index"] = p.source_index;
        j["class"] = p.source.class_id;
        j["score"] = p.source.score;
        j["box"] = box_json(p.source.box);
        j["track"] = p.source.track_id ? ojson(*p.source.track_id) : ojson(nullptr);
        j["target_frame"] = p.target_frame;
        j["pred_box"] = box_json(p.predicted_box);
        j["quality"] = p.quality;
        os << j.dump() << '\n';
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << os.str();
}

std::map<std::string, VideoPredictions> load_predictions(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::map<std::string, VideoPredictions> out;
  try {
    for_each_json_line(f, [&](const nlohmann::json& j, int line) {
      TrackPrediction p;
      const std::string id = video_field(j, line);
      p.source.frame = int_field(j, "frame", line);
      if (p.source.frame < 0) throw FormatError("frame index must be non-negative", line);
      const int index = int_field(j, "index", line);
      if (index < 0) throw FormatError("index must be non-negative", line);
      p.source_index = static_cast<std::size_t>(index);
      p.source.class_id = int_field(j, "class", line);
      p.source.score = real_field(j, "score", line);
      p.source.box = box_field(j, "box", line);
      p.source.track_id = track_field(j, line);
      p.target_frame = int_field(j, "target_frame", line);
      p.predicted_box = box_field(j, "pred_box", line);
      p.quality = real_field(j, "quality", line);
      if (!(p.quality >= 0.0 && p.quality <= 1.0)) throw FormatError("quality must lie in [0, 1]", line);
      auto& frames = out[id];
      if (frames.size() <= static_cast<std::size_t>(p.source.frame)) frames.resize(p.source.frame + 1);
      frames[p.source.frame].push_back(std::move(p));
    });
  } catch (const FormatError& e) {
    throw FormatError(e.detail(), e.line(), path.string());
  }
  return out;
}

namespace {

constexpr char kFeatMagic[4] = {'V', 'T', 'F', 'P'};

struct LevelHeader {
  std::uint32_t stride, c, h, w;
};

}  // namespace

void write_features(std::ostream& os, const FeaturePyramid& pyr, int elem_bytes) {
  if (elem_bytes != 4 && elem_bytes != 8) throw std::invalid_argument("element width must be 4 or 8 bytes");
  os.write(kFeatMagic, 4);
  le::put_u32(os, 1);
  le::put_u32(os, static_cast<std::uint32_t>(elem_bytes));
  le::put_u32(os, static_cast<std::uint32_t>(pyr.image_height));
  le::put_u32(os, static_cast<std::uint32_t>(pyr.image_width));
  le::put_u32(os, static_cast<std::uint32_t>(pyr.levels.size()));
  for (const auto& l : pyr.levels) {
    le::put_u32(os, static_cast<std::uint32_t>(l.stride));
    le::put_u32(os, static_cast<std::uint32_t>(l.map.channels()));
    le::put_u32(os, static_cast<std::uint32_t>(l.map.height()));
    le::put_u32(os, static_cast<std::uint32_t>(l.map.width()));
  }
  for (const auto& l : pyr.levels) {
    for (double v : l.map.data()) {
      if (elem_bytes == 8) {
        le::put_f64(os, v);
      } else {
        le::put_f32(os, static_cast<float>(v));
      }
    }
  }
}

FeaturePyramid read_features(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kFeatMagic, 4)) {
    throw FormatError("not a feature file (bad magic)");
  }
  FeaturePyramid pyr;
  std::uint32_t elem = 0;
  std::vector<LevelHeader> headers;
  try {
    if (le::get_u32(is) != 1) throw FormatError("unsupported feature file version");
    elem = le::get_u32(is);
    if (elem != 4 && elem != 8) throw FormatError("element width must be 4 or 8 bytes");
    pyr.image_height = static_cast<int>(le::get_u32(is));
    pyr.image_width = static_cast<int>(le::get_u32(is));
    const std::uint32_t levels = le::get_u32(is);
    if (levels == 0) throw ShapeError("empty feature pyramid");
    if (levels > 64) throw FormatError("implausible level count");
    for (std::uint32_t i = 0; i < levels; ++i) {
      LevelHeader h{le::get_u32(is), le::get_u32(is), le::get_u32(is), le::get_u32(is)};
      if (h.stride == 0 || h.c == 0 || h.h == 0 || h.w == 0) throw FormatError("zero dimension in level header");
      if (static_cast<std::uint64_t>(h.c) * h.h * h.w > (std::uint64_t{1} << 31)) {
        throw FormatError("level too large");
      }
      headers.push_back(h);
    }
  } catch (const std::runtime_error& e) {
    if (dynamic_cast<const FormatError*>(&e) != nullptr) throw;
    throw FormatError(std::string("truncated header: ") + e.what());
  }
  for (std::size_t li = 0; li < headers.size(); ++li) {
    const auto& h = headers[li];
    const std::size_t n = static_cast<std::size_t>(h.c) * h.h * h.w;
    std::vector<double> data(n);
    try {
      for (auto& v : data) v = elem == 8 ? le::get_f64(is) : static_cast<double>(le::get_f32(is));
    } catch (const std::runtime_error&) {
      throw FormatError("payload size mismatch: level " + std::to_string(li) + " expects " +
                        std::to_string(n) + " values of " + std::to_string(elem) + " bytes");
    }
    pyr.levels.push_back({static_cast<int>(h.stride),
                          Tensor3(static_cast<int>(h.c), static_cast<int>(h.h), static_cast<int>(h.w),
                                  std::move(data))});
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("payload size mismatch: trailing bytes after the last level");
  }
  pyr.validate();
  return pyr;
}

void save_features(const std::filesystem::path& path, const FeaturePyramid& pyr, int elem_bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_features(f, pyr, elem_bytes);
}

FeaturePyramid load_features(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return read_features(f);
  } catch (const FormatError& e) {
    throw FormatError(e.detail(), e.line(), path.string());
  }
}

std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& video,
                                   int frame) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06d.vtf", frame);
  return dir / video / name;
}

double average_precision(const std::vector<bool>& ranked_tp, int num_gt) {
  if (num_gt <= 0) return 0.0;
  const std::size_t n = ranked_tp.size();
  std::vector<double> recall(n), precision(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked_tp[i]) ++tp;
    recall[i] = static_cast<double>(tp) / num_gt;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // Precision envelope: running maximum from the right.
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

namespace {

struct RankedPred {
  std::size_t video;
  int frame;
  double score;
  Box box;
};

}  // namespace

EvalResult evaluate_map(const std::vector<VideoDetectionSet>& preds,
                        const std::vector<VideoDetectionSet>& gt, double iou_thresh) {
  EvalResult result;
  result.iou_threshold = iou_thresh;

  std::map<std::string, std::size_t> gt_index;
  for (std::size_t v = 0; v < gt.size(); ++v) gt_index.emplace(gt[v].video_id, v);

  // class -> predictions in input order
  std::map<int, std::vector<RankedPred>> by_class;
  for (const auto& pv : preds) {
    auto it = gt_index.find(pv.video_id);
    if (it == gt_index.end()) continue;
    for (std::size_t t = 0; t < pv.frames.size(); ++t) {
      for (const auto& d : pv.frames[t]) {
        by_class[d.class_id].push_back({it->second, static_cast<int>(t), d.score, d.box});
      }
    }
  }
  for (const auto& gv : gt) {
    for (const auto& f : gv.frames) {
      for (const auto& g : f) ++result.gt_count[g.class_id];
    }
  }

  for (const auto& [cls, count] : result.gt_count) {
    auto ranked = by_class[cls];
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedPred& a, const RankedPred& b) { return a.score > b.score; });
    std::map<std::pair<std::size_t, int>, std::vector<char>> used;
    std::vector<bool> tp;
    tp.reserve(ranked.size());
    for (const auto& p : ranked) {
      const auto& gframes = gt[p.video].frames;
      bool hit = false;
      if (static_cast<std::size_t>(p.frame) < gframes.size()) {
        const auto& frame_gt = gframes[p.frame];
        auto& taken = used[{p.video, p.frame}];
        taken.resize(frame_gt.size(), 0);
        double best = -1.0;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < frame_gt.size(); ++j) {
          if (taken[j] || frame_gt[j].class_id != cls) continue;
          const double o = iou(p.box, frame_gt[j].box);
          if (o >= iou_thresh && o > best) {
            best = o;
            best_j = j;
          }
        }
        if (best >= 0.0) {
          taken[best_j] = 1;
          hit = true;
        }
      }
      tp.push_back(hit);
    }
    result.ap[cls] = average_precision(tp, count);
  }
  if (!result.ap.empty()) {
    double sum = 0.0;
    for (const auto& [cls, ap] : result.ap) sum += ap;
    result.map = sum / static_cast<double>(result.ap.size());
  }
  return result;
}

EvalResult evaluate_map(const VideoDetectionSet& preds, const VideoDetectionSet& gt,
                        double iou_thresh) {
  return evaluate_map(std::vector<VideoDetectionSet>{preds}, std::vector<VideoDetectionSet>{gt},
                      iou_thresh);
}

}  // namespace vidtrack
