// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "oracles.hpp"
#include "vidtrack/evalio.hpp"
#include "vidtrack/runner.hpp"
#include "vidtrack/synth.hpp"

using namespace vidtrack;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kRescoreTol = 1e-12;
constexpr double kCorrelateTol = 1e-9;
constexpr double kRoiRelTol = 1e-6;
constexpr double kRoiAbsFloor = 1e-12;
constexpr double kRoundTripTol = 1e-9;
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-6;
constexpr double kLinkerBudgetSeconds = 10.0;

// Oracle tracker used by the ablation criteria.
constexpr double kOracleNoise = 0.05;

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

NodeScores scores_of(const VideoDetectionSet& v) {
  NodeScores s(v.frames.size());
  for (std::size_t t = 0; t < v.frames.size(); ++t)
    for (const auto& d : v.frames[t]) s[t].push_back(d.score);
  return s;
}

void linker_oracle() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> nframes(1, 6), nbox(0, 5), grid(0, 4), cls(0, 1), q(1, 64);
  std::uniform_real_distribution<double> link_iou(0.2, 0.6);
  int path_mismatch = 0, rescore_mismatch = 0;
  double worst = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int inst = 0; inst < 500; ++inst) {
    VideoDetectionSet v;
    v.video_id = "inst";
    v.frames.resize(nframes(rng));
    for (std::size_t t = 0; t < v.frames.size(); ++t) {
      const int n = nbox(rng);
      for (int i = 0; i < n; ++i) {
        Detection d;
        d.frame = static_cast<int>(t);
        d.class_id = cls(rng);
        d.score = q(rng) / 64.0;  // dyadic, so every path sum is exact
        d.box = Box::from_center(grid(rng) * 5.0, grid(rng) * 5.0, 12.0, 12.0);
        v.frames[t].push_back(d);
      }
    }
    const LinkGraph g = build_graph_seqnms(v, link_iou(rng));
    const auto dp = best_path(g, scores_of(v));
    const auto brute = oracle::best_path_score(g, scores_of(v));
    if (dp.has_value() != brute.has_value() || (dp && dp->path_score != *brute)) ++path_mismatch;

    const auto got = rescore_and_suppress(v, g, 0.45);
    const auto want = oracle::rescore_reference(v, g, 0.45);
    bool same = got.frames.size() == want.frames.size();
    for (std::size_t t = 0; same && t < got.frames.size(); ++t) {
      same = got.frames[t].size() == want.frames[t].size();
      for (std::size_t i = 0; same && i < got.frames[t].size(); ++i) {
        const double err = std::abs(got.frames[t][i].score - want.frames[t][i].score);
        worst = std::max(worst, err);
        same = got.frames[t][i].box == want.frames[t][i].box && err <= kRescoreTol;
      }
    }
    if (!same) ++rescore_mismatch;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(1, "linker oracle", path_mismatch == 0 && rescore_mismatch == 0 && secs < kLinkerBudgetSeconds,
         "500 instances, best-path mismatches " + std::to_string(path_mismatch) + ", rescore mismatches " +
             std::to_string(rescore_mismatch) + fmt(", max score error %.3g", worst) + fmt(", %.2f s", secs));
}

void kernel_oracles() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  auto fill = [&](Tensor3& t) {
    for (double& v : t.data()) v = val(rng);
  };
  double corr_worst = 0.0;
  std::uniform_int_distribution<int> ch(1, 8), tsz(1, 7), extra(0, 14);
  for (int k = 0; k < 100; ++k) {
    const int c = ch(rng);
    Tensor3 templ(c, tsz(rng), tsz(rng));
    Tensor3 search(c, templ.height() + extra(rng), templ.width() + extra(rng));
    fill(templ);
    fill(search);
    const Tensor3 a = depthwise_correlate(templ, search);
    const Tensor3 b = oracle::correlate(templ, search);
    for (std::size_t i = 0; i < a.size(); ++i) corr_worst = std::max(corr_worst, std::abs(a.data()[i] - b.data()[i]));
  }

  // RoIs over a 64 x 80 px image at stride 4; a third straddle the border and
  // a sixth lie entirely outside.
  Tensor3 feat(3, 16, 20);
  fill(feat);
  std::uniform_real_distribution<double> inside(8.0, 72.0), size(4.0, 48.0), far(120.0, 200.0);
  double roi_worst = 0.0;
  int partial = 0, outside = 0;
  for (int k = 0; k < 100; ++k) {
    Box roi;
    if (k % 6 == 0) {
      roi = Box::from_center(far(rng), far(rng) * (k % 12 == 0 ? -1.0 : 1.0), size(rng), size(rng));
      ++outside;
    } else if (k % 3 == 0) {
      roi = Box::from_center(k % 2 ? -2.0 : 80.0, inside(rng), 2.0 * size(rng), size(rng));
      ++partial;
    } else {
      roi = Box::from_center(inside(rng), inside(rng) * 0.8, size(rng), size(rng));
    }
    const Tensor3 got = roi_align_full_avg(feat, roi, 7, 7, 4.0, {64});
    const Tensor3 want = oracle::roi_pool_oversampled(feat, roi, 7, 7, 4.0, 64);
    for (std::size_t i = 0; i < got.size(); ++i) {
      const double err = std::abs(got.data()[i] - want.data()[i]);
      roi_worst = std::max(roi_worst, err / (std::abs(want.data()[i]) + kRoiAbsFloor / kRoiRelTol));
    }
  }
  report(2, "kernel oracles", corr_worst <= kCorrelateTol && roi_worst <= kRoiRelTol,
         fmt("correlation max abs error %.3g over 100 fixtures", corr_worst) +
             fmt(", RoIAlign max relative error %.3g", roi_worst) + " over 100 RoIs (" +
             std::to_string(partial) + " partial, " + std::to_string(outside) + " outside)");
}

void round_trips(const fs::path& tmp) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> c(-500.0, 500.0), s(0.1, 300.0);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const Box b = Box::from_center(c(rng), c(rng), s(rng), s(rng));
    const Box g = Box::from_center(c(rng), c(rng), s(rng), s(rng));
    const Box r = decode(b, encode(b, g));
    worst = std::max({worst, std::abs(r.x1() - g.x1()), std::abs(r.y1() - g.y1()), std::abs(r.x2() - g.x2()),
                      std::abs(r.y2() - g.y2())});
  }

  std::vector<VideoDetectionSet> sets;
  for (std::uint64_t seed : {0, 1, 2}) sets.push_back(generate(degraded_scenario(seed)).dets);
  save_detections(tmp / "a.jsonl", sets);
  save_detections(tmp / "b.jsonl", load_detections(tmp / "a.jsonl"));
  const bool dets_same = slurp(tmp / "a.jsonl") == slurp(tmp / "b.jsonl") && load_detections(tmp / "b.jsonl") == sets;

  const TrackerWeights w = synthesize_weights({}, {}, 9);
  save_weights(tmp / "a.vtw", w);
  save_weights(tmp / "b.vtw", load_weights(tmp / "a.vtw"));
  const bool weights_same = slurp(tmp / "a.vtw") == slurp(tmp / "b.vtw");

  report(3, "round trips", worst <= kRoundTripTol && dets_same && weights_same,
         fmt("encode/decode max error %.3g over 10000 pairs", worst) + ", detection file " +
             (dets_same ? "identical" : "DIFFERS") + ", weights file " + (weights_same ? "identical" : "DIFFERS"));
}

void head_contract() {
  const TrackerConfig cfg;
  TrackerWeights w = synthesize_weights({}, cfg, 13);
  for (auto* fc : {&w.box_fc, &w.score_fc}) {
    std::fill(fc->weight.begin(), fc->weight.end(), 0.0);
    std::fill(fc->bias.begin(), fc->bias.end(), 0.0);
  }
  ScenarioSpec spec = noiseless_scenario(0);
  const FeatureRenderOptions opt;
  const FeaturePyramid f0 = render_features(spec, 10, opt);
  const FeaturePyramid f1 = render_features(spec, 11, opt);
  const GeneratedVideo g = generate(spec);
  const auto preds = track(f0, f1, g.dets.frames[10], w, cfg);
  bool identity = !preds.empty();
  for (std::size_t i = 0; i < preds.size(); ++i)
    identity = identity && preds[i].predicted_box == g.dets.frames[10][i].box && preds[i].quality == 0.5;

  const Tensor3 fused0 = fuse_pyramid(f0, 4);
  const HeadTrace tr = track_head(fused0, fuse_pyramid(f1, 4), 4, g.dets.frames[10][0].box, w, cfg);
  auto is = [](const Tensor3& t, int c, int h, int wd) { return t.channels() == c && t.height() == h && t.width() == wd; };
  const bool shapes = is(tr.template_features, 8, 7, 7) && is(tr.search_features, 8, 21, 21) &&
                      is(tr.correlation, 8, 15, 15) && is(tr.head, 256, 15, 15);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> x(-4.0, 4.0);
  double worst = 0.0;
  for (int n = 0; n < 1000;) {
    const double p = x(rng);
    if (std::abs(std::abs(p) - 1.0) <= 10 * kGradStep) continue;
    const double fd = (smooth_l1(p + kGradStep) - smooth_l1(p - kGradStep)) / (2 * kGradStep);
    worst = std::max(worst, std::abs(fd - smooth_l1_grad(p)));
    ++n;
  }
  report(4, "head contract", identity && shapes && worst <= kGradTol,
         std::string("zero-FC identity ") + (identity ? "holds" : "BROKEN") + ", shapes 7x7/21x21/15x15/256x15x15 " +
             (shapes ? "ok" : "WRONG") + fmt(", smooth-L1 gradient max error %.3g at 1000 points", worst));
}

double map_of(const GeneratedVideo& g, Variant v, const PipelineConfig& cfg, const TrackFn* tr) {
  return evaluate_map(run_variant(g.dets, v, cfg, tr).final, g.gt).map;
}

NoiseParams oracle_noise() {
  NoiseParams n;
  n.center_sigma = kOracleNoise;
  n.scale_sigma = kOracleNoise;
  return n;
}

void ablation_ordering() {
  PipelineConfig cfg7;
  PipelineConfig cfg3;
  cfg3.t_merge = 0.3;
  double det = 0, seq = 0, tfd7 = 0;
  int ordered = 0, merge_ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GeneratedVideo g = generate(degraded_scenario(seed));
    const TrackFn tr = make_oracle_tracker(g.gt, oracle_noise(), seed);
    const double a = map_of(g, Variant::kDetector, cfg7, nullptr);
    const double b = map_of(g, Variant::kSeqNms, cfg7, nullptr);
    const double c = map_of(g, Variant::kTfdSeqNms, cfg7, &tr);
    const double d = map_of(g, Variant::kTfdSeqNms, cfg3, &tr);
    det += a / 20;
    seq += b / 20;
    tfd7 += c / 20;
    ordered += a < b && b < c;
    merge_ok += c >= d;
  }
  const bool ok = det < seq && seq < tfd7 && merge_ok >= 15;
  report(5, "ablation ordering", ok,
         fmt("mean mAP detector %.4f", det) + fmt(" < seqnms %.4f", seq) + fmt(" < tfd(0.7)+seqnms %.4f", tfd7) +
             " (strict per seed " + std::to_string(ordered) + "/20), tfd(0.7) >= tfd(0.3) on " +
             std::to_string(merge_ok) + "/20 (need 15)");
}

void fast_motion() {
  int wins = 0;
  double worst_gap = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GeneratedVideo g = generate(fast_motion_scenario(seed));
    const TrackFn tr = make_oracle_tracker(g.gt, oracle_noise(), seed);
    const double a = map_of(g, Variant::kTfdSeqNms, {}, &tr);
    const double b = map_of(g, Variant::kTfdSeqTrackNms, {}, &tr);
    wins += b > a;
    worst_gap = std::min(worst_gap, b - a);
  }
  report(6, "fast motion", wins == 10,
         "tfd+seqtracknms beats tfd+seqnms on " + std::to_string(wins) + "/10 seeds" + fmt(", smallest gain %.4f", worst_gap));
}

void noiseless() {
  int exact = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GeneratedVideo g = generate(noiseless_scenario(seed));
    const TrackFn tr = make_oracle_tracker(g.gt, {}, seed);
    for (Variant v : {Variant::kDetector, Variant::kSeqNms, Variant::kTfdSeqNms, Variant::kTfdSeqTrackNms}) {
      exact += map_of(g, v, {}, &tr) == 1.0;
      ++total;
    }
  }
  report(7, "noiseless limit", exact == total,
         std::to_string(exact) + "/" + std::to_string(total) + " variant runs score mAP exactly 1.0 (5 seeds x 4 variants)");
}

void manifest_replay(const fs::path& tmp) {
  std::ostringstream sink;
  const fs::path orig = tmp / "run";
  int rc = vidtrack::cli::run_cli({"run", "--preset", "degraded", "--seed", "7", "--variant", "tfd+seqtracknms",
                                   "--out-dir", orig.string()},
                                  sink, sink);
  int identical = 0;
  std::size_t files = 0;
  for (int rep = 0; rc == 0 && rep < 3; ++rep) {
    const fs::path again = tmp / ("replay" + std::to_string(rep));
    rc = vidtrack::cli::run_cli({"replay", "--manifest", (orig / "manifest.json").string(), "--out-dir", again.string()},
                                sink, sink);
    bool same = rc == 0;
    files = 0;
    for (const auto& e : fs::directory_iterator(orig)) {
      if (e.path().filename() == "manifest.json") continue;  // carries wall-clock timings
      ++files;
      same = same && slurp(e.path()) == slurp(again / e.path().filename());
    }
    identical += same;
  }
  report(8, "manifest replay", rc == 0 && identical == 3,
         std::to_string(identical) + "/3 replays byte-identical across " + std::to_string(files) + " output files" +
             (rc == 0 ? "" : ", command failed: " + sink.str()));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path tmp = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "vidtrack_acceptance";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  linker_oracle();
  kernel_oracles();
  round_trips(tmp);
  head_contract();
  ablation_ordering();
  fast_motion();
  noiseless();
  manifest_replay(tmp / "replay");

  std::printf("%s: %d of 8 criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
