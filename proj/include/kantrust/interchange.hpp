#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kantrust {

inline constexpr std::size_t kNumFeatures = 7;

// Canonical feature order. Every module, report and model file uses it.
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "x", "y", "w", "h", "conf", "cls", "scale"};

enum FeatureIndex : std::size_t {
  kFeatX = 0,
  kFeatY = 1,
  kFeatW = 2,
  kFeatH = 3,
  kFeatConf = 4,
  kFeatCls = 5,
  kFeatScale = 6,
};

// Returns the index of `name` in kFeatureNames or std::nullopt.
std::optional<std::size_t> feature_index(std::string_view name);

enum class Format { kCsv, kJsonl };

Format parse_format(std::string_view name);
std::string_view format_name(Format f);
// "jsonl" for *.jsonl / *.ndjson, csv otherwise.
Format format_from_path(const std::string& path);

// One detector output. Box geometry is center/size as fractions of the image.
struct DetectionRecord {
  std::string image_id;
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double conf = 0.0;
  std::int64_t cls = 0;
  std::int64_t img_w = 1;
  std::int64_t img_h = 1;
  std::optional<std::string> caption;
  // Additional numeric columns (e.g. an external trust label), keyed by name.
  std::map<std::string, double> extras;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

// Throws ValidationError naming the offending field and value.
void validate(const DetectionRecord& rec);

using FeatureVector = std::array<double, kNumFeatures>;

// (x, y, w, h, conf, cls, w*h).
FeatureVector extract_features(const DetectionRecord& rec);
std::vector<FeatureVector> extract_features(std::span<const DetectionRecord> recs);

// Per-feature min-max scaling onto the spline domain [0,1].
class Normalizer {
 public:
  Normalizer();
  Normalizer(const FeatureVector& min, const FeatureVector& max);

  const FeatureVector& min() const { return min_; }
  const FeatureVector& max() const { return max_; }
  bool degenerate(std::size_t k) const { return !(max_[k] > min_[k]); }

  double normalize(std::size_t k, double value) const;
  FeatureVector normalize(const FeatureVector& fv) const;
  // Maps a point of [0,1] back to raw units; degenerate features return min.
  double denormalize(std::size_t k, double t) const;
  // d(normalized)/d(raw) inside the range; 0 for degenerate features.
  double scale_factor(std::size_t k) const;

  friend bool operator==(const Normalizer&, const Normalizer&) = default;

 private:
  FeatureVector min_;
  FeatureVector max_;
};

Normalizer fit_normalizer(std::span<const FeatureVector> data);

// ---- file I/O ---------------------------------------------------------------

inline constexpr std::array<std::string_view, 10> kCsvColumns = {
    "image_id", "x", "y", "w", "h", "conf", "cls", "img_w", "img_h", "caption"};

// Parses the interchange schema. CSV requires the exact ten-column header,
// optionally followed by extra numeric columns. Errors name the line and field.
std::vector<DetectionRecord> parse_detections(std::istream& in, Format format);
std::vector<DetectionRecord> read_detections(const std::string& path, Format format);

void write_detections(std::ostream& out, std::span<const DetectionRecord> recs, Format format);

// Generic RFC 4180 split (quotes removed, blank lines skipped).
std::vector<std::vector<std::string>> split_csv_rows(const std::string& text);
// Quotes a field when it contains separators, quotes or newlines.
std::string csv_field(std::string_view s);

// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace kantrust
