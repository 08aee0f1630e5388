#include "vidtrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace vidtrack {

using ojson = nlohmann::ordered_json;

Box ObjectSpec::box_at(int frame) const {
  const double a = frame - birth;
  const double s = std::pow(scale_rate, a);
  return Box::from_center(cx + vx * a, cy + vy * a, w * s, h * s);
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("scenario: " + what);
}

bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void ScenarioSpec::validate() const {
  require(image_width > 0 && image_height > 0, "image size must be positive");
  require(num_frames > 0, "frame count must be positive");
  require(num_classes > 0, "class count must be positive");
  const auto& n = noise;
  require(n.jitter_sigma >= 0.0, "jitter_sigma must be non-negative");
  require(is_prob(n.miss_prob), "miss_prob must lie in [0, 1]");
  require(is_prob(n.misclass_prob), "misclass_prob must lie in [0, 1]");
  require(n.fp_rate >= 0.0, "fp_rate must be non-negative");
  require(is_prob(n.score_min) && is_prob(n.score_max) && n.score_min <= n.score_max,
          "detection score range must lie in [0, 1]");
  require(is_prob(n.fp_score_min) && is_prob(n.fp_score_max) && n.fp_score_min <= n.fp_score_max,
          "false-positive score range must lie in [0, 1]");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    const std::string tag = "object " + std::to_string(i) + ": ";
    require(o.class_id >= 0 && o.class_id < num_classes, tag + "class out of range");
    require(o.birth >= 0 && o.birth < o.death && o.death <= num_frames, tag + "invalid lifetime");
    require(o.w > 0.0 && o.h > 0.0 && o.scale_rate > 0.0, tag + "extent must stay positive");
    require(std::isfinite(o.cx) && std::isfinite(o.cy) && std::isfinite(o.vx) && std::isfinite(o.vy),
            tag + "motion must be finite");
    for (const auto& d : o.degradations) {
      require(d.start <= d.end, tag + "degradation window is reversed");
      require(d.factor > 0.0 && d.factor < 1.0, tag + "degradation factor must lie in (0, 1)");
    }
  }
}

std::string scenario_to_json(const ScenarioSpec& s) {
  ojson j;
  j["video_id"] = s.video_id;
  j["image_width"] = s.image_width;
  j["image_height"] = s.image_height;
  j["num_frames"] = s.num_frames;
  j["num_classes"] = s.num_classes;
  j["seed"] = s.seed;
  ojson n;
  n["jitter_sigma"] = s.noise.jitter_sigma;
  n["miss_prob"] = s.noise.miss_prob;
  n["fp_rate"] = s.noise.fp_rate;
  n["misclass_prob"] = s.noise.misclass_prob;
  n["score_min"] = s.noise.score_min;
  n["score_max"] = s.noise.score_max;
  n["fp_score_min"] = s.noise.fp_score_min;
  n["fp_score_max"] = s.noise.fp_score_max;
  j["noise"] = n;
  ojson objs = ojson::array();
  for (const auto& o : s.objects) {
    ojson jo;
    jo["class"] = o.class_id;
    jo["birth"] = o.birth;
    jo["death"] = o.death;
    jo["cx"] = o.cx;
    jo["cy"] = o.cy;
    jo["w"] = o.w;
    jo["h"] = o.h;
    jo["vx"] = o.vx;
    jo["vy"] = o.vy;
    jo["scale_rate"] = o.scale_rate;
    ojson wins = ojson::array();
    for (const auto& d : o.degradations) wins.push_back({{"start", d.start}, {"end", d.end}, {"factor", d.factor}});
    jo["degradations"] = wins;
    objs.push_back(jo);
  }
  j["objects"] = objs;
  return j.dump(2) + "\n";
}

ScenarioSpec scenario_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario: invalid JSON: ") + e.what());
  }
  ScenarioSpec s;
  try {
    s.video_id = j.value("video_id", s.video_id);
    s.image_width = j.value("image_width", s.image_width);
    s.image_height = j.value("image_height", s.image_height);
    s.num_frames = j.at("num_frames").get<int>();
    s.num_classes = j.value("num_classes", s.num_classes);
    s.seed = j.value("seed", s.seed);
    if (j.contains("noise")) {
      const auto& n = j["noise"];
      s.noise.jitter_sigma = n.value("jitter_sigma", s.noise.jitter_sigma);
      s.noise.miss_prob = n.value("miss_prob", s.noise.miss_prob);
      s.noise.fp_rate = n.value("fp_rate", s.noise.fp_rate);
      s.noise.misclass_prob = n.value("misclass_prob", s.noise.misclass_prob);
      s.noise.score_min = n.value("score_min", s.noise.score_min);
      s.noise.score_max = n.value("score_max", s.noise.score_max);
      s.noise.fp_score_min = n.value("fp_score_min", s.noise.fp_score_min);
      s.noise.fp_score_max = n.value("fp_score_max", s.noise.fp_score_max);
    }
    for (const auto& jo : j.value("objects", nlohmann::json::array())) {
      ObjectSpec o;
      o.class_id = jo.value("class", 0);
      o.birth = jo.value("birth", 0);
      o.death = jo.value("death", s.num_frames);
      o.cx = jo.at("cx").get<double>();
      o.cy = jo.at("cy").get<double>();
      o.w = jo.at("w").get<double>();
      o.h = jo.at("h").get<double>();
      o.vx = jo.value("vx", 0.0);
      o.vy = jo.value("vy", 0.0);
      o.scale_rate = jo.value("scale_rate", 1.0);
      for (const auto& jd : jo.value("degradations", nlohmann::json::array())) {
        o.degradations.push_back(
            {jd.at("start").get<int>(), jd.at("end").get<int>(), jd.at("factor").get<double>()});
      }
      s.objects.push_back(std::move(o));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

ScenarioSpec load_scenario(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open scenario '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return scenario_from_json(ss.str());
}

void save_scenario(const std::filesystem::path& path, const ScenarioSpec& spec) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << scenario_to_json(spec);
}

GeneratedVideo generate(const ScenarioSpec& spec) {
  spec.validate();
  const auto& nz = spec.noise;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::poisson_distribution<int> fp_count(nz.fp_rate > 0.0 ? nz.fp_rate : 1.0);

  GeneratedVideo out;
  out.gt.video_id = spec.video_id;
  out.dets.video_id = spec.video_id;
  out.gt.frames.resize(spec.num_frames);
  out.dets.frames.resize(spec.num_frames);

  for (int t = 0; t < spec.num_frames; ++t) {
    for (std::size_t oi = 0; oi < spec.objects.size(); ++oi) {
      const auto& o = spec.objects[oi];
      if (!o.alive_at(t)) continue;
      Detection g;
      g.frame = t;
      g.class_id = o.class_id;
      g.score = 1.0;
      g.box = o.box_at(t);
      g.track_id = static_cast<std::int64_t>(oi);
      out.gt.frames[t].push_back(g);

      if (nz.miss_prob > 0.0 && unit(rng) < nz.miss_prob) continue;
      Detection d = g;
      d.track_id.reset();
      if (nz.jitter_sigma > 0.0) {
        const double cx = g.box.cx() + nz.jitter_sigma * jitter(rng);
        const double cy = g.box.cy() + nz.jitter_sigma * jitter(rng);
        const double w = std::max(1.0, g.box.w() + nz.jitter_sigma * jitter(rng));
        const double h = std::max(1.0, g.box.h() + nz.jitter_sigma * jitter(rng));
        d.box = Box::from_center(cx, cy, w, h);
      }
      double score = nz.score_min + (nz.score_max - nz.score_min) * unit(rng);
      for (const auto& win : o.degradations) {
        if (t >= win.start && t < win.end) score *= win.factor;
      }
      d.score = std::clamp(score, 0.0, 1.0);
      if (spec.num_classes > 1 && nz.misclass_prob > 0.0 && unit(rng) < nz.misclass_prob) {
        const int shift = 1 + static_cast<int>(unit(rng) * (spec.num_classes - 1));
        d.class_id = (o.class_id + std::min(shift, spec.num_classes - 1)) % spec.num_classes;
      }
      out.dets.frames[t].push_back(d);
    }
    const int nfp = nz.fp_rate > 0.0 ? fp_count(rng) : 0;
    for (int k = 0; k < nfp; ++k) {
      Detection d;
      d.frame = t;
      d.class_id = std::min(spec.num_classes - 1, static_cast<int>(unit(rng) * spec.num_classes));
      const double w = 20.0 + 80.0 * unit(rng);
      const double h = 20.0 + 80.0 * unit(rng);
      d.box = Box::from_center(unit(rng) * spec.image_width, unit(rng) * spec.image_height, w, h);
      d.score = nz.fp_score_min + (nz.fp_score_max - nz.fp_score_min) * unit(rng);
      out.dets.frames[t].push_back(d);
    }
  }
  return out;
}

FeaturePyramid render_features(const ScenarioSpec& spec, int frame,
                               const FeatureRenderOptions& options) {
  if (frame < 0 || frame >= spec.num_frames) throw std::out_of_range("frame outside the scenario");
  if (options.strides.empty() || options.channels_per_level <= 0) {
    throw std::invalid_argument("feature rendering needs at least one level and channel");
  }
  FeaturePyramid pyr;
  pyr.image_height = spec.image_height;
  pyr.image_width = spec.image_width;
  for (std::size_t li = 0; li < options.strides.size(); ++li) {
    const int s = options.strides[li];
    const int h = (spec.image_height + s - 1) / s;
    const int w = (spec.image_width + s - 1) / s;
    const int c = options.channels_per_level;
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(frame), static_cast<std::uint32_t>(li)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> bg(-options.background_amplitude,
                                              options.background_amplitude);
    Tensor3 map(c, h, w);
    for (double& v : map.data()) v = bg(rng);
    for (std::size_t oi = 0; oi < spec.objects.size(); ++oi) {
      const auto& o = spec.objects[oi];
      if (!o.alive_at(frame)) continue;
      const Box b = o.box_at(frame);
      const int ch = static_cast<int>(oi % static_cast<std::size_t>(c));
      const double sx = b.w() / 4.0;
      const double sy = b.h() / 4.0;
      for (int y = 0; y < h; ++y) {
        const double dy = ((y + 0.5) * s - b.cy()) / sy;
        for (int x = 0; x < w; ++x) {
          const double dx = ((x + 0.5) * s - b.cx()) / sx;
          map.at(ch, y, x) += std::exp(-0.5 * (dx * dx + dy * dy));
        }
      }
    }
    pyr.levels.push_back({s, std::move(map)});
  }
  return pyr;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

void add_degradations(std::mt19937_64& rng, ObjectSpec& o, int count) {
  for (int k = 0; k < count; ++k) {
    const int len = uniform_int(rng, 3, 7);
    const int start = uniform_int(rng, o.birth, std::max(o.birth, o.death - len));
    o.degradations.push_back({start, std::min(o.death, start + len), uniform(rng, 0.05, 0.15)});
  }
}

DetectorNoise degraded_noise() {
  DetectorNoise n;
  n.jitter_sigma = 3.0;
  n.miss_prob = 0.1;
  n.fp_rate = 1.5;
  n.misclass_prob = 0.05;
  n.score_min = 0.5;
  n.score_max = 1.0;
  n.fp_score_min = 0.05;
  n.fp_score_max = 0.6;
  return n;
}

}  // namespace

ScenarioSpec noiseless_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ScenarioSpec s;
  s.video_id = "noiseless_" + std::to_string(seed);
  s.image_width = 640;
  s.image_height = 480;
  s.num_frames = 30;
  s.num_classes = 3;
  s.seed = seed;
  s.noise = DetectorNoise{};
  // Horizontal lanes far apart so boxes never overlap.
  for (int i = 0; i < 3; ++i) {
    ObjectSpec o;
    o.class_id = i;
    o.birth = uniform_int(rng, 0, 5);
    o.death = uniform_int(rng, 24, 30);
    o.w = uniform(rng, 40.0, 70.0);
    o.h = uniform(rng, 40.0, 70.0);
    o.cx = uniform(rng, 100.0, 200.0);
    o.cy = 80.0 + 150.0 * i;
    o.vx = uniform(rng, 2.0, 6.0);
    s.objects.push_back(o);
  }
  return s;
}

ScenarioSpec degraded_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  ScenarioSpec s;
  s.video_id = "degraded_" + std::to_string(seed);
  s.image_width = 640;
  s.image_height = 480;
  s.num_frames = 40;
  s.num_classes = 4;
  s.seed = seed;
  s.noise = degraded_noise();
  const int count = uniform_int(rng, 4, 6);
  for (int i = 0; i < count; ++i) {
    ObjectSpec o;
    o.class_id = uniform_int(rng, 0, s.num_classes - 1);
    o.birth = uniform_int(rng, 0, 10);
    o.death = uniform_int(rng, std::min(s.num_frames, o.birth + 20), s.num_frames);
    o.w = uniform(rng, 40.0, 110.0);
    o.h = uniform(rng, 40.0, 110.0);
    o.cx = uniform(rng, 80.0, 560.0);
    o.cy = uniform(rng, 80.0, 400.0);
    o.vx = uniform(rng, -4.0, 4.0);
    o.vy = uniform(rng, -3.0, 3.0);
    o.scale_rate = uniform(rng, 0.99, 1.01);
    add_degradations(rng, o, uniform_int(rng, 1, 2));
    s.objects.push_back(o);
  }
  // A companion appears beside the first object a few frames after it and
  // moves with it, overlapping it by IoU of roughly 0.35 to 0.42.
  ObjectSpec host = s.objects.front();
  ObjectSpec mate = host;
  mate.class_id = uniform_int(rng, 0, s.num_classes - 1);
  mate.birth = std::min(host.death - 10, host.birth + uniform_int(rng, 3, 6));
  const Box hb = host.box_at(mate.birth);
  const double target = uniform(rng, 0.35, 0.42);
  // Horizontal offset d gives IoU (w - d) / (w + d) for equal boxes.
  const double offset = hb.w() * (1.0 - target) / (1.0 + target);
  mate.cx = hb.cx() + (uniform(rng, 0.0, 1.0) < 0.5 ? -offset : offset);
  mate.cy = hb.cy();
  mate.w = hb.w();
  mate.h = hb.h();
  mate.scale_rate = host.scale_rate;
  mate.degradations.clear();
  add_degradations(rng, mate, 1);
  s.objects.push_back(mate);
  return s;
}

ScenarioSpec fast_motion_scenario(std::uint64_t seed) {
  ScenarioSpec s = degraded_scenario(seed);
  std::mt19937_64 rng(seed ^ 0xfa57ULL);
  s.video_id = "fast_" + std::to_string(seed);
  s.image_width = 1280;
  const int count = uniform_int(rng, 3, 4);
  for (int i = 0; i < count; ++i) {
    ObjectSpec o;
    o.class_id = uniform_int(rng, 0, s.num_classes - 1);
    o.birth = uniform_int(rng, 0, 10);
    o.death = std::min(s.num_frames, o.birth + uniform_int(rng, 25, 35));
    o.w = uniform(rng, 30.0, 50.0);
    o.h = uniform(rng, 40.0, 80.0);
    o.vx = uniform(rng, 1.3, 1.6) * o.w;
    o.cx = uniform(rng, 20.0, 80.0);
    o.cy = uniform(rng, 60.0, 420.0);
    // Born blurred, plus one later dip.
    const int len = uniform_int(rng, 3, 5);
    o.degradations.push_back({o.birth, o.birth + len, uniform(rng, 0.05, 0.15)});
    const int len2 = uniform_int(rng, 3, 5);
    const int start2 = uniform_int(rng, o.birth + len + 2, o.death - len2);
    o.degradations.push_back({start2, start2 + len2, uniform(rng, 0.05, 0.15)});
    s.objects.push_back(o);
  }
  return s;
}

ScenarioSpec preset_scenario(const std::string& name, std::uint64_t seed) {
  if (name == "noiseless") return noiseless_scenario(seed);
  if (name == "degraded") return degraded_scenario(seed);
  if (name == "fast") return fast_motion_scenario(seed);
  throw std::invalid_argument("unknown scenario preset '" + name + "'");
}

}  // namespace vidtrack
