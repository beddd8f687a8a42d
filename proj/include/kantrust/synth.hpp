#pragma once

#include <cstdint>
#include <vector>

#include "kantrust/interchange.hpp"

namespace kantrust::synth {

struct SynthOptions {
  std::size_t count = 5000;
  std::uint64_t seed = 7;
  double conf_floor = 0.25;
  bool captions = false;
  // Adds an extra "trust_label" column derived from conf.
  bool trust_label = false;
};

// COCO-like detections: 80 classes with a heavy head (class 0 most common),
// log-normal box sizes, centre-biased positions, and confidences that rise
// with box area and vary per class. Deterministic for a given seed.
std::vector<DetectionRecord> generate(const SynthOptions& opts);

}  // namespace kantrust::synth
