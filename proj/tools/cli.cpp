#include "cli.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vidtrack/evalio.hpp"
#include "vidtrack/linker.hpp"
#include "vidtrack/pipeline.hpp"
#include "vidtrack/runner.hpp"
#include "vidtrack/synth.hpp"
#include "vidtrack/tracker.hpp"

namespace vidtrack::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Canonical, fully resolved form of one command: enough to re-run it.
struct Invocation {
  std::string command;
  std::vector<std::pair<std::string, std::string>> args;
  std::vector<std::string> input_flags;
  std::vector<std::string> output_flags;
  json config = json::object();
  std::optional<std::uint64_t> seed;
  json timing = json::object();

  void arg(const std::string& flag, const std::string& value) { args.emplace_back(flag, value); }
  void input(const std::string& flag, const std::string& path) {
    arg(flag, path);
    input_flags.push_back(flag);
  }
  void output(const std::string& flag, const std::string& path) {
    arg(flag, path);
    output_flags.push_back(flag);
  }

  /// Runs `f` as a named stage: errors are prefixed with the stage name and
  /// the wall-clock time is recorded.
  template <class F>
  auto stage(const std::string& name, F&& f) -> decltype(f()) {
    const auto start = std::chrono::steady_clock::now();
    auto record = [&] {
      const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start);
      timing[name] = timing.value(name, 0.0) + ms.count();
    };
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        record();
      } else {
        auto r = f();
        record();
        return r;
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name + ": " + e.what());
    }
  }

  std::string lookup(const std::string& flag) const {
    for (const auto& [f, v] : args) {
      if (f == flag) return v;
    }
    return {};
  }

  json manifest() const {
    json m;
    m["toolkit_version"] = kToolkitVersion;
    m["command"] = command;
    json argv = json::array();
    for (const auto& [f, v] : args) {
      argv.push_back(f);
      if (!v.empty()) argv.push_back(v);
    }
    m["argv"] = argv;
    m["inputs"] = json::object();
    for (const auto& f : input_flags) m["inputs"][f] = lookup(f);
    m["outputs"] = json::object();
    for (const auto& f : output_flags) m["outputs"][f] = lookup(f);
    m["config"] = config;
    m["seed"] = seed ? json(*seed) : json(nullptr);
    m["timing_ms"] = timing;
    return m;
  }
};

/// Output files are written beside their destination and moved into place
/// only once every stage succeeded.
class OutputBatch {
 public:
  OutputBatch() = default;
  OutputBatch(const OutputBatch&) = delete;
  OutputBatch& operator=(const OutputBatch&) = delete;
  ~OutputBatch() {
    if (committed_) return;
    for (const auto& [tmp, dst] : files_) {
      std::error_code ec;
      fs::remove(tmp, ec);
    }
  }

  fs::path file(const fs::path& dst) {
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    fs::path tmp = dst;
    tmp += ".partial";
    files_.emplace_back(tmp, dst);
    return tmp;
  }

  void commit() {
    for (const auto& [tmp, dst] : files_) fs::rename(tmp, dst);
    committed_ = true;
  }

 private:
  std::vector<std::pair<fs::path, fs::path>> files_;
  bool committed_ = false;
};

std::string number_text(double v) { return json(v).dump(); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

json read_json(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- options

struct ConfigFlag {
  const char* flag;
  const char* key;
};

constexpr ConfigFlag kConfigFlags[] = {
    {"--detect-to-track-score", "detect_to_track_score"},
    {"--track-quality-min", "track_quality_min"},
    {"--track-nms-iou", "track_nms_iou"},
    {"--t-merge", "T_merge"},
    {"--final-score-min", "final_score_min"},
    {"--final-nms-iou", "final_nms_iou"},
    {"--link-iou", "link_iou"},
    {"--tracked-score", "tracked_score"},
};

struct ConfigOptions {
  std::string file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "pipeline config file (key = value)");
    for (const auto& f : kConfigFlags) {
      app->add_option_function<std::string>(
          f.flag, [this, key = std::string(f.key)](const std::string& v) { overrides[key] = v; },
          std::string("override ") + f.key);
    }
  }

  /// Resolves the config and records it as explicit flags.
  PipelineConfig resolve(Invocation& inv) const {
    return inv.stage("config", [&] {
      PipelineConfig cfg = file.empty() ? PipelineConfig{} : load_pipeline_config(file);
      for (const auto& [key, value] : overrides) cfg.set(key, value);
      cfg.validate();
      std::istringstream text(to_config_text(cfg));
      std::string line;
      while (std::getline(text, line)) {
        const auto eq = line.find(" = ");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 3);
        for (const auto& f : kConfigFlags) {
          if (key == f.key) inv.arg(f.flag, value);
        }
        inv.config[key] = value;
      }
      return cfg;
    });
  }
};

struct TrackerOptions {
  double k = 3.0;
  int tau = 1;

  void attach(CLI::App* app) {
    app->add_option("--k", k, "search region expansion factor")->capture_default_str();
    app->add_option("--tau", tau, "frame gap of the tracker")->capture_default_str();
  }

  TrackerConfig resolve(Invocation& inv) const {
    TrackerConfig cfg;
    cfg.k = k;
    cfg.tau = tau;
    inv.stage("config", [&] { cfg.validate(); });
    inv.arg("--k", number_text(k));
    inv.arg("--tau", std::to_string(tau));
    inv.config["k"] = number_text(k);
    inv.config["tau"] = std::to_string(tau);
    return cfg;
  }
};

NoiseParams oracle_noise(double sigma) {
  NoiseParams n;
  n.center_sigma = sigma;
  n.scale_sigma = sigma;
  return n;
}

/// Tracker backing `track` and `tfd`: ground-truth oracle or the head on
/// precomputed feature files.
struct TrackerSource {
  bool oracle = false;
  std::string gt;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string features_dir;
  std::string weights;
  TrackerOptions tracker;

  void attach(CLI::App* app) {
    app->add_flag("--oracle", oracle, "track with the ground-truth oracle");
    app->add_option("--gt", gt, "ground truth for the oracle");
    app->add_option("--noise", noise, "oracle center/scale noise (fraction of box size)")
        ->capture_default_str();
    app->add_option("--tracker-seed", seed, "oracle noise seed")->capture_default_str();
    app->add_option("--features-dir", features_dir, "directory of per-frame feature files");
    app->add_option("--weights", weights, "tracker weights file");
    tracker.attach(app);
  }

  bool given() const { return oracle || !features_dir.empty() || !weights.empty(); }

  using Factory = std::function<TrackFn(const std::string& video)>;

  Factory resolve(Invocation& inv) const {
    const TrackerConfig tcfg = tracker.resolve(inv);
    if (oracle) {
      if (gt.empty()) throw StageError("tracker: --oracle needs --gt");
      if (!features_dir.empty() || !weights.empty()) {
        throw StageError("tracker: --oracle excludes --features-dir/--weights");
      }
      inv.arg("--oracle", "");
      inv.input("--gt", gt);
      inv.arg("--noise", number_text(noise));
      inv.arg("--tracker-seed", std::to_string(seed));
      inv.seed = seed;
      auto videos = inv.stage("load ground truth", [&] { return load_detections(gt); });
      auto by_id = std::make_shared<std::map<std::string, VideoDetectionSet>>();
      for (auto& v : videos) (*by_id)[v.video_id] = std::move(v);
      const NoiseParams np = oracle_noise(noise);
      const std::uint64_t s = seed;
      const int tau = tcfg.tau;
      return [by_id, np, s, tau](const std::string& video) {
        auto it = by_id->find(video);
        if (it == by_id->end()) throw std::runtime_error("no ground truth for video '" + video + "'");
        return make_oracle_tracker(it->second, np, s, tau);
      };
    }
    if (features_dir.empty() || weights.empty()) {
      throw StageError("tracker: give --oracle --gt, or --features-dir and --weights");
    }
    inv.input("--features-dir", features_dir);
    inv.input("--weights", weights);
    auto w = inv.stage("load weights", [&] { return load_weights(weights); });
    const fs::path dir = features_dir;
    return [w, tcfg, dir](const std::string& video) {
      FeatureSource src = [dir, video](int frame) { return load_features(feature_path(dir, video, frame)); };
      return make_head_tracker(std::move(src), w, tcfg);
    };
  }
};

json eval_to_json(const EvalResult& r, const std::string& variant) {
  json j;
  if (!variant.empty()) j["variant"] = variant;
  j["iou_threshold"] = r.iou_threshold;
  j["map"] = r.map;
  json classes = json::array();
  for (const auto& [c, ap] : r.ap) {
    classes.push_back({{"class", c}, {"gt", r.gt_count.at(c)}, {"ap", ap}});
  }
  j["classes"] = classes;
  return j;
}

void print_eval(std::ostream& out, const EvalResult& r) {
  out << "class      gt        AP\n";
  for (const auto& [c, ap] : r.ap) {
    out << std::setw(5) << c << std::setw(8) << r.gt_count.at(c) << "  " << std::fixed << std::setprecision(6)
        << ap << "\n";
  }
  out << "mAP@" << std::defaultfloat << r.iou_threshold << " " << std::fixed << std::setprecision(6) << r.map
      << std::defaultfloat << "\n";
}

void write_manifest(const fs::path& path, const Invocation& inv) { write_text(path, inv.manifest().dump(2) + "\n"); }

// ---------------------------------------------------------------- commands

struct Context {
  std::ostream& out;
  Invocation inv;
  std::string manifest_path;
};

void cmd_synth_gen(Context& ctx, const std::string& spec_path, const std::string& preset, std::uint64_t seed,
                   const std::string& out_gt, const std::string& out_dets, const std::string& features_dir) {
  auto& inv = ctx.inv;
  ScenarioSpec spec;
  if (!spec_path.empty()) {
    inv.input("--spec", spec_path);
    spec = inv.stage("load spec", [&] { return load_scenario(spec_path); });
  } else {
    inv.arg("--preset", preset);
    inv.arg("--seed", std::to_string(seed));
    spec = inv.stage("load spec", [&] { return preset_scenario(preset, seed); });
  }
  inv.seed = spec.seed;
  inv.output("--out-gt", out_gt);
  inv.output("--out-dets", out_dets);
  const GeneratedVideo g = inv.stage("generate", [&] { return generate(spec); });
  OutputBatch batch;
  inv.stage("write", [&] {
    save_detections(batch.file(out_gt), {g.gt});
    save_detections(batch.file(out_dets), {g.dets});
  });
  if (!features_dir.empty()) {
    inv.output("--features-dir", features_dir);
    inv.stage("render features", [&] {
      for (int t = 0; t < spec.num_frames; ++t) {
        save_features(batch.file(feature_path(features_dir, spec.video_id, t)), render_features(spec, t));
      }
    });
  }
  batch.commit();
}

void cmd_init_weights(Context& ctx, const std::string& out, std::uint64_t seed, int channels,
                      const TrackerOptions& topt) {
  auto& inv = ctx.inv;
  const TrackerConfig tcfg = topt.resolve(inv);
  inv.arg("--seed", std::to_string(seed));
  inv.arg("--channels", std::to_string(channels));
  inv.output("--out", out);
  inv.seed = seed;
  WeightInit init;
  init.input_channels = channels;
  const TrackerWeights w = inv.stage("init", [&] { return synthesize_weights(init, tcfg, seed); });
  OutputBatch batch;
  inv.stage("write", [&] { save_weights(batch.file(out), w); });
  batch.commit();
}

void cmd_track(Context& ctx, const std::string& dets_path, const TrackerSource& src, const ConfigOptions& copt,
               const std::string& out) {
  auto& inv = ctx.inv;
  inv.input("--dets", dets_path);
  const PipelineConfig cfg = copt.resolve(inv);
  const auto factory = src.resolve(inv);
  inv.output("--out", out);
  const auto videos = inv.stage("load detections", [&] { return load_detections(dets_path); });
  std::map<std::string, VideoPredictions> preds;
  inv.stage("track", [&] {
    for (const auto& v : videos) {
      const TrackFn fn = factory(v.video_id);
      auto& per_frame = preds[v.video_id];
      per_frame.resize(v.frames.size());
      for (std::size_t t = 0; t + 1 < v.frames.size(); ++t) {
        std::vector<Detection> cands;
        std::vector<std::size_t> source;
        for (std::size_t i = 0; i < v.frames[t].size(); ++i) {
          if (v.frames[t][i].score >= cfg.detect_to_track_score) {
            cands.push_back(v.frames[t][i]);
            source.push_back(i);
          }
        }
        if (cands.empty()) continue;
        auto p = fn(cands);
        for (std::size_t i = 0; i < p.size(); ++i) p[i].source_index = source[i];
        per_frame[t] = std::move(p);
      }
    }
  });
  OutputBatch batch;
  inv.stage("write", [&] { save_predictions(batch.file(out), preds); });
  batch.commit();
}

/// Tracker that answers from a prediction file: a candidate is matched to a
/// prediction from the same frame with an identical source box. Unmatched
/// candidates get quality 0 and are dropped by the track filter.
TrackFn lookup_tracker(const VideoPredictions& table) {
  return [&table](std::span<const Detection> boxes) {
    std::vector<TrackPrediction> out;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const Detection& d = boxes[i];
      TrackPrediction p;
      p.source = d;
      p.source_index = i;
      p.target_frame = d.frame + 1;
      p.predicted_box = d.box;
      p.quality = 0.0;
      if (d.frame >= 0 && static_cast<std::size_t>(d.frame) < table.size()) {
        for (const auto& q : table[d.frame]) {
          if (q.source.box == d.box) {
            p.predicted_box = q.predicted_box;
            p.quality = q.quality;
            p.target_frame = q.target_frame;
            break;
          }
        }
      }
      out.push_back(std::move(p));
    }
    return out;
  };
}

void cmd_tfd(Context& ctx, const std::string& dets_path, const std::string& preds_path, const TrackerSource& src,
             const ConfigOptions& copt, const std::string& out, const std::string& out_preds) {
  auto& inv = ctx.inv;
  inv.input("--dets", dets_path);
  const PipelineConfig cfg = copt.resolve(inv);
  std::function<TrackFn(const std::string&)> factory;
  std::map<std::string, VideoPredictions> table;
  if (!preds_path.empty()) {
    if (src.given()) throw StageError("tracker: --preds excludes inline tracker options");
    inv.input("--preds", preds_path);
    table = inv.stage("load predictions", [&] { return load_predictions(preds_path); });
    factory = [&table](const std::string& video) { return lookup_tracker(table[video]); };
  } else {
    factory = src.resolve(inv);
  }
  inv.output("--out", out);
  if (!out_preds.empty()) inv.output("--out-preds", out_preds);
  const auto videos = inv.stage("load detections", [&] { return load_detections(dets_path); });
  std::vector<VideoDetectionSet> merged;
  std::map<std::string, VideoPredictions> preds;
  inv.stage("tfd", [&] {
    for (const auto& v : videos) {
      TfdResult r = run_tfd(v, factory(v.video_id), cfg);
      merged.push_back(std::move(r.merged));
      preds[v.video_id] = std::move(r.predictions);
    }
  });
  OutputBatch batch;
  inv.stage("write", [&] {
    save_detections(batch.file(out), merged);
    if (!out_preds.empty()) save_predictions(batch.file(out_preds), preds);
  });
  batch.commit();
}

void cmd_link(Context& ctx, const std::string& dets_path, const std::string& preds_path, const std::string& mode,
              const ConfigOptions& copt, const std::string& out) {
  auto& inv = ctx.inv;
  inv.input("--dets", dets_path);
  const bool per_frame = mode == "detector";
  const LinkMode link_mode =
      per_frame ? LinkMode::kSeqNms : inv.stage("mode", [&] { return link_mode_from_string(mode); });
  inv.arg("--mode", per_frame ? "detector" : std::string(to_string(link_mode)));
  const PipelineConfig cfg = copt.resolve(inv);
  std::map<std::string, VideoPredictions> preds;
  if (!preds_path.empty()) {
    inv.input("--preds", preds_path);
    preds = inv.stage("load predictions", [&] { return load_predictions(preds_path); });
  }
  if (!per_frame && link_mode == LinkMode::kSeqTrackNms && preds_path.empty()) {
    throw StageError("mode: seqtrack linking needs --preds");
  }
  inv.output("--out", out);
  const auto videos = inv.stage("load detections", [&] { return load_detections(dets_path); });
  std::vector<VideoDetectionSet> result;
  inv.stage("link", [&] {
    for (const auto& v : videos) {
      if (per_frame) {
        result.push_back(run_variant(v, Variant::kDetector, cfg).final);
      } else if (link_mode == LinkMode::kSeqNms) {
        result.push_back(link_video(v, LinkMode::kSeqNms, cfg));
      } else {
        const auto it = preds.find(v.video_id);
        const PredictedBoxes aligned =
            align_predictions(v, it == preds.end() ? VideoPredictions{} : it->second);
        result.push_back(link_video(v, LinkMode::kSeqTrackNms, cfg, &aligned));
      }
    }
  });
  OutputBatch batch;
  inv.stage("write", [&] { save_detections(batch.file(out), result); });
  batch.commit();
}

void cmd_eval(Context& ctx, const std::string& preds_path, const std::string& gt_path, double iou_thresh,
              const std::string& out) {
  auto& inv = ctx.inv;
  inv.input("--preds", preds_path);
  inv.input("--gt", gt_path);
  inv.arg("--iou", number_text(iou_thresh));
  const auto preds = inv.stage("load predictions", [&] { return load_detections(preds_path); });
  const auto gt = inv.stage("load ground truth", [&] { return load_detections(gt_path); });
  const EvalResult r = inv.stage("evaluate", [&] { return evaluate_map(preds, gt, iou_thresh); });
  print_eval(ctx.out, r);
  if (!out.empty()) {
    inv.output("--out", out);
    OutputBatch batch;
    inv.stage("write", [&] { write_text(batch.file(out), eval_to_json(r, "").dump(2) + "\n"); });
    batch.commit();
  }
}

struct RunOptions {
  std::string spec;
  std::string preset;
  std::uint64_t seed = 0;
  std::string variant;
  std::string tracker = "oracle";
  double noise = 0.05;
  std::optional<std::uint64_t> tracker_seed;
  std::string weights;
  std::uint64_t weights_seed = 0;
  double iou = 0.5;
  std::string out_dir;
};

void cmd_run(Context& ctx, const RunOptions& o, const ConfigOptions& copt, const TrackerOptions& topt) {
  auto& inv = ctx.inv;
  ScenarioSpec spec;
  if (!o.spec.empty()) {
    inv.input("--spec", o.spec);
    spec = inv.stage("load spec", [&] { return load_scenario(o.spec); });
  } else {
    if (o.preset.empty()) throw StageError("load spec: give --spec or --preset");
    inv.arg("--preset", o.preset);
    inv.arg("--seed", std::to_string(o.seed));
    spec = inv.stage("load spec", [&] { return preset_scenario(o.preset, o.seed); });
  }
  inv.seed = spec.seed;
  const Variant variant = inv.stage("variant", [&] { return variant_from_string(o.variant); });
  inv.arg("--variant", std::string(to_string(variant)));
  const PipelineConfig cfg = copt.resolve(inv);
  const TrackerConfig tcfg = topt.resolve(inv);

  const GeneratedVideo g = inv.stage("generate", [&] { return generate(spec); });

  TrackFn tracker;
  if (uses_tracker(variant)) {
    inv.arg("--tracker", o.tracker);
    if (o.tracker == "oracle") {
      const std::uint64_t s = o.tracker_seed.value_or(spec.seed);
      inv.arg("--noise", number_text(o.noise));
      inv.arg("--tracker-seed", std::to_string(s));
      tracker = make_oracle_tracker(g.gt, oracle_noise(o.noise), s, tcfg.tau);
    } else if (o.tracker == "head") {
      TrackerWeights w;
      if (!o.weights.empty()) {
        inv.input("--weights", o.weights);
        w = inv.stage("load weights", [&] { return load_weights(o.weights); });
      } else {
        inv.arg("--weights-seed", std::to_string(o.weights_seed));
        WeightInit init;
        const FeatureRenderOptions fopt;
        init.input_channels = static_cast<int>(fopt.strides.size()) * fopt.channels_per_level;
        w = inv.stage("init weights", [&] { return synthesize_weights(init, tcfg, o.weights_seed); });
      }
      tracker = make_head_tracker([spec](int frame) { return render_features(spec, frame); }, w, tcfg);
    } else {
      throw StageError("tracker: unknown tracker '" + o.tracker + "' (oracle|head)");
    }
  }
  inv.arg("--iou", number_text(o.iou));
  inv.output("--out-dir", o.out_dir);

  const VariantOutput result = inv.stage("pipeline", [&] {
    return run_variant(g.dets, variant, cfg, tracker ? &tracker : nullptr);
  });
  const EvalResult ev = inv.stage("evaluate", [&] { return evaluate_map(result.final, g.gt, o.iou); });

  const fs::path dir = o.out_dir;
  OutputBatch batch;
  inv.stage("write", [&] {
    save_scenario(batch.file(dir / "scenario.json"), spec);
    save_detections(batch.file(dir / "gt.jsonl"), {g.gt});
    save_detections(batch.file(dir / "dets.jsonl"), {g.dets});
    if (result.tfd) {
      save_detections(batch.file(dir / "merged.jsonl"), {result.tfd->merged});
      save_predictions(batch.file(dir / "preds.jsonl"), {{g.dets.video_id, result.tfd->predictions}});
    }
    save_detections(batch.file(dir / "final.jsonl"), {result.final});
    write_text(batch.file(dir / "eval.json"), eval_to_json(ev, std::string(to_string(variant))).dump(2) + "\n");
  });
  print_eval(ctx.out, ev);
  const fs::path manifest = batch.file(dir / "manifest.json");
  write_manifest(manifest, inv);
  batch.commit();
}

void cmd_plot(Context& ctx, const std::vector<std::string>& results, const std::string& out) {
  auto& inv = ctx.inv;
  for (const auto& r : results) inv.input("--results", r);
  inv.output("--out", out);
  std::ostringstream csv;
  csv << "variant,map\n";
  inv.stage("read results", [&] {
    for (const auto& r : results) {
      const json j = read_json(r);
      if (!j.contains("map")) throw std::runtime_error(r + ": no \"map\" entry");
      const std::string name = j.contains("variant") ? j["variant"].get<std::string>() : fs::path(r).stem().string();
      csv << name << "," << j["map"].dump() << "\n";
    }
  });
  OutputBatch batch;
  inv.stage("write", [&] { write_text(batch.file(out), csv.str()); });
  batch.commit();
}

/// Rebuilds a command line from a manifest, optionally redirecting every
/// output into `out_dir`.
std::vector<std::string> replay_args(const json& m, const std::string& out_dir) {
  if (!m.contains("command") || !m.contains("argv")) throw std::runtime_error("not a manifest");
  std::vector<std::string> args{m["command"].get<std::string>()};
  std::map<std::string, std::string> outputs;
  for (const auto& [flag, path] : m["outputs"].items()) outputs[flag] = path.get<std::string>();
  const auto& argv = m["argv"];
  for (std::size_t i = 0; i < argv.size(); ++i) {
    std::string a = argv[i].get<std::string>();
    args.push_back(a);
    if (out_dir.empty() || !outputs.count(a) || i + 1 >= argv.size()) continue;
    const std::string value = argv[++i].get<std::string>();
    if (a == "--out-dir") {
      args.push_back(out_dir);
    } else {
      args.push_back((fs::path(out_dir) / fs::path(value).filename()).string());
    }
  }
  return args;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Video object detection toolkit: tracking-first detection, tubelet linking, evaluation"};
  app.name("vidtrack");
  app.set_version_flag("--version", kToolkitVersion);
  app.require_subcommand(1);

  std::string manifest_out;
  auto add_manifest = [&](CLI::App* sub) {
    sub->add_option("--manifest", manifest_out, "write a run manifest to this path");
  };

  // synth-gen
  std::string sg_spec, sg_preset, sg_gt, sg_dets, sg_features;
  std::uint64_t sg_seed = 0;
  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic scenario");
  auto* sg_spec_opt = synth->add_option("--spec", sg_spec, "scenario JSON")->check(CLI::ExistingFile);
  synth->add_option("--preset", sg_preset, "noiseless|degraded|fast")->excludes(sg_spec_opt);
  synth->add_option("--seed", sg_seed, "preset seed")->capture_default_str();
  synth->add_option("--out-gt", sg_gt, "ground-truth output")->required();
  synth->add_option("--out-dets", sg_dets, "detections output")->required();
  synth->add_option("--features-dir", sg_features, "also render feature files here");
  add_manifest(synth);

  // init-weights
  std::string iw_out;
  std::uint64_t iw_seed = 0;
  int iw_channels = 8;
  TrackerOptions iw_tracker;
  auto* initw = app.add_subcommand("init-weights", "write seeded random tracker weights");
  initw->add_option("--out", iw_out, "weights output")->required();
  initw->add_option("--seed", iw_seed)->capture_default_str();
  initw->add_option("--channels", iw_channels, "fused feature channels")->capture_default_str();
  iw_tracker.attach(initw);
  add_manifest(initw);

  // track
  std::string tr_dets, tr_out;
  TrackerSource tr_src;
  ConfigOptions tr_cfg;
  auto* track = app.add_subcommand("track", "predict next-frame boxes for every detection");
  track->add_option("--dets", tr_dets, "detections")->required();
  tr_src.attach(track);
  tr_cfg.attach(track);
  track->add_option("--out", tr_out, "predictions output")->required();
  add_manifest(track);

  // tfd
  std::string tf_dets, tf_preds, tf_out, tf_out_preds;
  TrackerSource tf_src;
  ConfigOptions tf_cfg;
  auto* tfd = app.add_subcommand("tfd", "tracking-first merge of tracked and detected boxes");
  tfd->add_option("--dets", tf_dets, "detections")->required();
  tfd->add_option("--preds", tf_preds, "precomputed predictions used as a lookup tracker");
  tf_src.attach(tfd);
  tf_cfg.attach(tfd);
  tfd->add_option("--out", tf_out, "merged detections output")->required();
  tfd->add_option("--out-preds", tf_out_preds, "predictions made during the merge");
  add_manifest(tfd);

  // link
  std::string ln_dets, ln_preds, ln_mode, ln_out;
  ConfigOptions ln_cfg;
  auto* link = app.add_subcommand("link", "link detections into tubelets and rescore");
  link->add_option("--dets", ln_dets, "detections")->required();
  link->add_option("--preds", ln_preds, "track predictions (seqtrack)");
  link->add_option("--mode", ln_mode, "seqnms|seqtrack|detector")->required();
  ln_cfg.attach(link);
  link->add_option("--out", ln_out, "output")->required();
  add_manifest(link);

  // eval
  std::string ev_preds, ev_gt, ev_out;
  double ev_iou = 0.5;
  auto* eval = app.add_subcommand("eval", "per-class AP and mAP");
  eval->add_option("--preds", ev_preds, "detections to score")->required();
  eval->add_option("--gt", ev_gt, "ground truth")->required();
  eval->add_option("--iou", ev_iou, "match threshold")->capture_default_str();
  eval->add_option("--out", ev_out, "write the result as JSON");
  add_manifest(eval);

  // run
  RunOptions rn;
  ConfigOptions rn_cfg;
  TrackerOptions rn_tracker;
  auto* run = app.add_subcommand("run", "generate, run one ablation variant and evaluate");
  auto* rn_spec_opt = run->add_option("--spec", rn.spec, "scenario JSON");
  run->add_option("--preset", rn.preset, "noiseless|degraded|fast")->excludes(rn_spec_opt);
  run->add_option("--seed", rn.seed, "preset seed")->capture_default_str();
  run->add_option("--variant", rn.variant, "detector|seqnms|tfd+seqnms|tfd+seqtracknms")->required();
  run->add_option("--tracker", rn.tracker, "oracle|head")->capture_default_str();
  run->add_option("--noise", rn.noise, "oracle noise")->capture_default_str();
  run->add_option("--tracker-seed", rn.tracker_seed, "oracle seed (default: scenario seed)");
  run->add_option("--weights", rn.weights, "head weights (default: seeded random)");
  run->add_option("--weights-seed", rn.weights_seed)->capture_default_str();
  run->add_option("--iou", rn.iou, "evaluation IoU")->capture_default_str();
  run->add_option("--out-dir", rn.out_dir, "output directory")->required();
  rn_cfg.attach(run);
  rn_tracker.attach(run);

  // plot
  std::vector<std::string> pl_results;
  std::string pl_out;
  auto* plot = app.add_subcommand("plot", "CSV of variant vs mAP");
  plot->add_option("--results", pl_results, "eval JSON files")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", pl_out, "CSV output")->required();
  add_manifest(plot);

  // replay
  std::string rp_manifest, rp_out_dir;
  auto* replay = app.add_subcommand("replay", "re-run a command from its manifest");
  replay->add_option("--manifest", rp_manifest, "manifest JSON")->required()->check(CLI::ExistingFile);
  replay->add_option("--out-dir", rp_out_dir, "redirect outputs into this directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  CLI::App* sub = app.get_subcommands().front();
  Context ctx{out, Invocation{}, manifest_out};
  ctx.inv.command = sub->get_name();
  try {
    if (sub == synth) {
      if (sg_spec.empty() && sg_preset.empty()) throw StageError("load spec: give --spec or --preset");
      cmd_synth_gen(ctx, sg_spec, sg_preset, sg_seed, sg_gt, sg_dets, sg_features);
    } else if (sub == initw) {
      cmd_init_weights(ctx, iw_out, iw_seed, iw_channels, iw_tracker);
    } else if (sub == track) {
      cmd_track(ctx, tr_dets, tr_src, tr_cfg, tr_out);
    } else if (sub == tfd) {
      cmd_tfd(ctx, tf_dets, tf_preds, tf_src, tf_cfg, tf_out, tf_out_preds);
    } else if (sub == link) {
      cmd_link(ctx, ln_dets, ln_preds, ln_mode, ln_cfg, ln_out);
    } else if (sub == eval) {
      cmd_eval(ctx, ev_preds, ev_gt, ev_iou, ev_out);
    } else if (sub == run) {
      cmd_run(ctx, rn, rn_cfg, rn_tracker);
    } else if (sub == plot) {
      cmd_plot(ctx, pl_results, pl_out);
    } else if (sub == replay) {
      const json m = ctx.inv.stage("manifest", [&] { return read_json(rp_manifest); });
      const auto again = ctx.inv.stage("manifest", [&] { return replay_args(m, rp_out_dir); });
      return run_cli(again, out, err);
    }
    if (!ctx.manifest_path.empty() && sub != run) {
      ctx.inv.stage("manifest", [&] { write_manifest(ctx.manifest_path, ctx.inv); });
    }
  } catch (const std::exception& e) {
    err << "vidtrack " << ctx.inv.command << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace vidtrack::cli
