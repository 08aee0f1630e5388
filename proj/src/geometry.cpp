#include "vidtrack/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace vidtrack {

Box::Box(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2))) {
    throw std::invalid_argument("box coordinates must be finite");
  }
  if (x2 < x1 || y2 < y1) {
    throw std::invalid_argument("box has negative extent: [" + std::to_string(x1) + ", " +
                                std::to_string(y1) + ", " + std::to_string(x2) + ", " +
                                std::to_string(y2) + "]");
  }
}

Box Box::from_center(double cx, double cy, double w, double h) {
  return Box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
}

Box Box::translated(double dx, double dy) const {
  return Box(x1_ + dx, y1_ + dy, x2_ + dx, y2_ + dy);
}

Box Box::scaled(double s) const { return Box(x1_ * s, y1_ * s, x2_ * s, y2_ * s); }

bool RegressionDelta::is_finite() const {
  return std::isfinite(dx) && std::isfinite(dy) && std::isfinite(dw) && std::isfinite(dh);
}

bool JitterCoefficients::in_range() const {
  return dx >= kShiftMin && dx <= kShiftMax && dy >= kShiftMin && dy <= kShiftMax &&
         dw >= kScaleMin && dw <= kScaleMax && dh >= kScaleMin && dh <= kScaleMax;
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

namespace {

void require_positive(const Box& b, const char* what) {
  if (!b.has_positive_area()) {
    throw std::domain_error(std::string(what) + " box must have positive width and height");
  }
}

}  // namespace

RegressionDelta encode(const Box& reference, const Box& target) {
  require_positive(reference, "reference");
  require_positive(target, "target");
  return {(target.cx() - reference.cx()) / reference.w(),
          (target.cy() - reference.cy()) / reference.h(), std::log(target.w() / reference.w()),
          std::log(target.h() / reference.h())};
}

Box decode(const Box& reference, const RegressionDelta& delta) {
  require_positive(reference, "reference");
  if (!delta.is_finite()) throw std::domain_error("regression delta must be finite");
  return Box::from_center(delta.dx * reference.w() + reference.cx(),
                          delta.dy * reference.h() + reference.cy(),
                          std::exp(delta.dw) * reference.w(), std::exp(delta.dh) * reference.h());
}

Box expand(const Box& b, double k) {
  if (!(k >= 1.0)) throw std::invalid_argument("expansion factor must be >= 1");
  return Box::from_center(b.cx(), b.cy(), k * b.w(), k * b.h());
}

Box jitter_roi(const Box& gt, const JitterCoefficients& c) {
  return Box::from_center(c.dx * gt.w() + gt.cx(), c.dy * gt.h() + gt.cy(), c.dw * gt.w(),
                          c.dh * gt.h());
}

std::vector<Box> sample_jittered_rois(const Box& gt, int n_keep, std::uint64_t seed,
                                      const RoiFilter& filter) {
  if (n_keep < 1) throw std::invalid_argument("n_keep must be >= 1");
  require_positive(gt, "ground-truth");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> shift(JitterCoefficients::kShiftMin,
                                               JitterCoefficients::kShiftMax);
  std::uniform_real_distribution<double> scale(JitterCoefficients::kScaleMin,
                                               JitterCoefficients::kScaleMax);

  const int budget = 2 * n_keep;
  std::vector<Box> passing;
  passing.reserve(budget);
  for (int i = 0; i < budget; ++i) {
    JitterCoefficients c;
    c.dx = shift(rng);
    c.dy = shift(rng);
    c.dw = scale(rng);
    c.dh = scale(rng);
    Box r = jitter_roi(gt, c);
    if (filter.accepts(iou(r, gt))) passing.push_back(r);
  }
  if (static_cast<int>(passing.size()) < n_keep) {
    throw ExhaustionError("only " + std::to_string(passing.size()) + " of " +
                          std::to_string(budget) + " jittered RoIs passed the overlap filter, " +
                          std::to_string(n_keep) + " required");
  }
  std::shuffle(passing.begin(), passing.end(), rng);
  passing.resize(n_keep);
  return passing;
}

}  // namespace vidtrack
