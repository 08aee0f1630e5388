#include "vidtrack/detection.hpp"

#include <stdexcept>

namespace vidtrack {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kDetected:
      return "detected";
    case Provenance::kTracked:
      return "tracked";
    case Provenance::kNone:
      break;
  }
  return "";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "detected") return Provenance::kDetected;
  if (s == "tracked") return Provenance::kTracked;
  throw std::invalid_argument("unknown provenance '" + std::string(s) + "'");
}

std::size_t VideoDetectionSet::num_detections() const {
  std::size_t n = 0;
  for (const auto& f : frames) n += f.size();
  return n;
}

std::vector<Detection>& VideoDetectionSet::frame(int t) {
  if (t < 0) throw std::out_of_range("negative frame index");
  if (static_cast<std::size_t>(t) >= frames.size()) frames.resize(t + 1);
  return frames[t];
}

}  // namespace vidtrack
