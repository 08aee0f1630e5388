#include "vidtrack/linker.hpp"

#include <stdexcept>
#include <string>

namespace vidtrack {

std::string_view to_string(LinkMode m) {
  return m == LinkMode::kSeqNms ? "seqnms" : "seqtrack";
}

LinkMode link_mode_from_string(std::string_view s) {
  if (s == "seqnms") return LinkMode::kSeqNms;
  if (s == "seqtrack" || s == "seqtracknms") return LinkMode::kSeqTrackNms;
  throw std::invalid_argument("unknown link mode '" + std::string(s) + "'");
}

std::size_t LinkGraph::num_nodes() const {
  std::size_t n = 0;
  for (const auto& f : successors) n += f.size();
  return n;
}

std::size_t LinkGraph::num_edges() const {
  std::size_t n = 0;
  for (const auto& f : successors) {
    for (const auto& s : f) n += s.size();
  }
  return n;
}

namespace {

template <typename SourceBox>
LinkGraph build(const VideoDetectionSet& video, LinkMode mode, double thresh, SourceBox source_box) {
  LinkGraph g;
  g.constraint = mode;
  g.iou_threshold = thresh;
  const std::size_t n = video.frames.size();
  g.successors.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto& cur = video.frames[t];
    g.successors[t].resize(cur.size());
    if (t + 1 >= n) continue;
    const auto& nxt = video.frames[t + 1];
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const std::optional<Box> from = source_box(t, i);
      if (!from) continue;
      for (std::size_t j = 0; j < nxt.size(); ++j) {
        if (cur[i].class_id == nxt[j].class_id && iou(*from, nxt[j].box) > thresh) {
          g.successors[t][i].push_back(j);
        }
      }
    }
  }
  return g;
}

}  // namespace

LinkGraph build_graph_seqnms(const VideoDetectionSet& video, double iou_thresh) {
  return build(video, LinkMode::kSeqNms, iou_thresh, [&](std::size_t t, std::size_t i) {
    return std::optional<Box>(video.frames[t][i].box);
  });
}

LinkGraph build_graph_seqtrack(const VideoDetectionSet& video, const PredictedBoxes& preds,
                               double iou_thresh) {
  const std::size_t n = video.frames.size();
  for (std::size_t t = 0; t + 1 < n; ++t) {
    if (t >= preds.size() || preds[t].size() != video.frames[t].size()) {
      throw std::invalid_argument("predictions for frame " + std::to_string(t) +
                                  " are not aligned with its detections");
    }
  }
  return build(video, LinkMode::kSeqTrackNms, iou_thresh,
               [&](std::size_t t, std::size_t i) { return preds[t][i]; });
}

PredictedBoxes align_predictions(const VideoDetectionSet& video,
                                 const std::vector<std::vector<TrackPrediction>>& per_frame) {
  PredictedBoxes out(video.frames.size());
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    out[t].resize(video.frames[t].size());
    if (t >= per_frame.size()) continue;
    for (const auto& p : per_frame[t]) {
      if (p.source_index >= out[t].size()) {
        throw std::invalid_argument("prediction source index " + std::to_string(p.source_index) +
                                    " out of range in frame " + std::to_string(t));
      }
      out[t][p.source_index] = p.predicted_box;
    }
  }
  return out;
}

std::optional<Tubelet> best_path(const LinkGraph& graph, const NodeScores& scores,
                                 const std::vector<std::vector<char>>* alive) {
  const std::size_t n = graph.num_frames();
  if (scores.size() != n) throw std::invalid_argument("scores do not match the graph");
  auto is_alive = [&](std::size_t t, std::size_t i) { return alive == nullptr || (*alive)[t][i]; };

  // best[t][i]: score of the best path starting at (t, i); next[t][i]: its
  // successor or npos when the path ends there. Backward pass so that ties
  // resolve towards the lexicographically smallest continuation.
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::vector<double>> best(n);
  std::vector<std::vector<std::size_t>> next(n);
  for (std::size_t tt = n; tt-- > 0;) {
    const std::size_t m = graph.successors[tt].size();
    if (scores[tt].size() != m) throw std::invalid_argument("scores do not match the graph");
    best[tt].assign(m, 0.0);
    next[tt].assign(m, npos);
    for (std::size_t i = 0; i < m; ++i) {
      if (!is_alive(tt, i)) continue;
      double ext = 0.0;
      std::size_t arg = npos;
      for (std::size_t j : graph.successors[tt][i]) {
        if (!is_alive(tt + 1, j)) continue;
        if (arg == npos || best[tt + 1][j] > ext) {
          ext = best[tt + 1][j];
          arg = j;
        }
      }
      if (arg != npos && ext > 0.0) {
        best[tt][i] = scores[tt][i] + ext;
        next[tt][i] = arg;
      } else {
        best[tt][i] = scores[tt][i];
      }
    }
  }

  bool found = false;
  std::size_t bt = 0;
  std::size_t bi = 0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < best[t].size(); ++i) {
      if (!is_alive(t, i)) continue;
      if (!found || best[t][i] > best[bt][bi]) {
        found = true;
        bt = t;
        bi = i;
      }
    }
  }
  if (!found) return std::nullopt;

  Tubelet tube;
  tube.start_frame = static_cast<int>(bt);
  for (std::size_t t = bt, i = bi; i != npos; i = next[t][i], ++t) {
    tube.nodes.push_back(i);
    tube.path_score += scores[t][i];
    if (next[t][i] == npos) break;
  }
  tube.rescored = tube.path_score / static_cast<double>(tube.nodes.size());
  return tube;
}

VideoDetectionSet rescore_and_suppress(const VideoDetectionSet& video, const LinkGraph& graph,
                                       double nms_iou, std::vector<Tubelet>* tubelets) {
  const std::size_t n = video.frames.size();
  if (graph.num_frames() != n) throw std::invalid_argument("graph was built for another video");
  NodeScores scores(n);
  std::vector<std::vector<char>> alive(n);
  std::vector<std::vector<char>> member(n);
  std::vector<std::vector<double>> rescored(n);
  std::size_t remaining = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (graph.successors[t].size() != video.frames[t].size()) {
      throw std::invalid_argument("graph was built for another video");
    }
    for (const auto& d : video.frames[t]) scores[t].push_back(d.score);
    alive[t].assign(video.frames[t].size(), 1);
    member[t].assign(video.frames[t].size(), 0);
    rescored[t].assign(video.frames[t].size(), 0.0);
    remaining += video.frames[t].size();
  }

  while (remaining > 0) {
    const auto tube = best_path(graph, scores, &alive);
    if (!tube) break;
    for (std::size_t k = 0; k < tube->nodes.size(); ++k) {
      const std::size_t t = tube->start_frame + k;
      const std::size_t i = tube->nodes[k];
      member[t][i] = 1;
      rescored[t][i] = tube->rescored;
      alive[t][i] = 0;
      --remaining;
      const Detection& m = video.frames[t][i];
      for (std::size_t j = 0; j < video.frames[t].size(); ++j) {
        const Detection& d = video.frames[t][j];
        if (alive[t][j] && d.class_id == m.class_id && iou(d.box, m.box) > nms_iou) {
          alive[t][j] = 0;
          --remaining;
        }
      }
    }
    if (tubelets != nullptr) tubelets->push_back(*tube);
  }

  VideoDetectionSet out;
  out.video_id = video.video_id;
  out.frames.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < video.frames[t].size(); ++i) {
      if (!member[t][i]) continue;
      Detection d = video.frames[t][i];
      d.score = rescored[t][i];
      out.frames[t].push_back(std::move(d));
    }
  }
  return out;
}

}  // namespace vidtrack
