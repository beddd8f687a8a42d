#include "kantrust/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "kantrust/random.hpp"

namespace kantrust::synth {

namespace {

constexpr int kNumClasses = 80;

struct ImageSize {
  std::int64_t w;
  std::int64_t h;
};

constexpr std::array<ImageSize, 4> kImageSizes = {{{640, 480}, {480, 640}, {640, 427}, {640, 640}}};

constexpr std::array<const char*, 6> kScenes = {"a street with cars and people", "a kitchen with a table",
                                                "a park with trees and a bench", "a parking lot next to a building",
                                                "people walking on a campus path", "a dog lying on a sofa"};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::int64_t sample_class(Rng& rng) {
  if (rng.uniform() < 0.3) return 0;
  // Zipf-like tail over classes 1..79.
  const double u = rng.uniform();
  const auto c = static_cast<std::int64_t>(std::floor(std::pow(static_cast<double>(kNumClasses - 1), u)));
  return std::clamp<std::int64_t>(c, 1, kNumClasses - 1);
}

}  // namespace

std::vector<DetectionRecord> generate(const SynthOptions& opts) {
  Rng rng(opts.seed);
  std::array<double, kNumClasses> class_bias{};
  std::array<double, kNumClasses> class_aspect{};
  for (int c = 0; c < kNumClasses; ++c) {
    class_bias[static_cast<std::size_t>(c)] = 0.6 * rng.normal();
    class_aspect[static_cast<std::size_t>(c)] = 0.35 * rng.normal();
  }
  class_aspect[0] = 0.7;  // people are tall

  std::vector<DetectionRecord> out;
  out.reserve(opts.count);
  std::size_t image_no = 0;
  while (out.size() < opts.count) {
    const ImageSize size = kImageSizes[rng.below(kImageSizes.size())];
    const std::string image_id = "img" + std::to_string(image_no);
    const std::string caption = kScenes[rng.below(kScenes.size())];
    ++image_no;
    const auto per_image = 1 + rng.below(12);
    for (std::uint64_t d = 0; d < per_image && out.size() < opts.count; ++d) {
      DetectionRecord rec;
      rec.image_id = image_id;
      rec.img_w = size.w;
      rec.img_h = size.h;
      rec.cls = sample_class(rng);

      const double log_area = std::log(0.03) + 1.3 * rng.normal();
      const double aspect = class_aspect[static_cast<std::size_t>(rec.cls)] + 0.3 * rng.normal();
      rec.w = std::clamp(std::exp(0.5 * (log_area - aspect)), 0.008, 1.0);
      rec.h = std::clamp(std::exp(0.5 * (log_area + aspect)), 0.012, 1.0);
      auto centre = [&](double extent) {
        const double u = std::clamp(0.5 + 0.22 * rng.normal(), 0.0, 1.0);
        return std::clamp(extent / 2.0 + (1.0 - extent) * u, 0.0, 1.0);
      };
      rec.x = centre(rec.w);
      rec.y = centre(rec.h);

      const double area = rec.w * rec.h;
      const double edge_dist = std::min({rec.x - rec.w / 2.0, 1.0 - rec.x - rec.w / 2.0, rec.y - rec.h / 2.0,
                                         1.0 - rec.y - rec.h / 2.0});
      const double z = 0.9 + 0.45 * std::log(area / 0.03) + class_bias[static_cast<std::size_t>(rec.cls)] +
                       1.5 * std::min(edge_dist, 0.1) + 0.7 * rng.normal();
      rec.conf = std::min(sigmoid(z), 0.99);
      if (rec.conf < opts.conf_floor) continue;

      if (opts.captions) rec.caption = caption;
      if (opts.trust_label) {
        rec.extras["trust_label"] = std::clamp(rec.conf - 0.15 * std::abs(rng.normal()) * (1.0 - area), 0.0, 1.0);
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace kantrust::synth
