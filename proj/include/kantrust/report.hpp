#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kantrust/interchange.hpp"
#include "kantrust/interpret.hpp"
#include "kantrust/kan.hpp"

namespace kantrust::report {

inline constexpr double kDefaultTau = 0.05;
inline constexpr double kDefaultRMin = 0.7;
inline constexpr int kSplineSamples = 64;

// ---- trust verdicts ------------------------------------------------------------

struct TrustVerdict {
  std::string image_id;
  std::size_t index = 0;
  double predicted = 0.0;
  double detector_conf = 0.0;
  double residual = 0.0;
  bool low_trust = false;
  std::string reason;
};

// Pure decision rule: flagged when |pred - conf| > tau, or when conf falls in a
// calibration conf bin whose R^2 is below r_min.
TrustVerdict judge(double predicted, double detector_conf, double tau, const kan::TrustCalibration& cal,
                   double r_min);

// 3 x the stored validation RMSE when present, else kDefaultTau.
double default_tau(const kan::KanModel& m);

// Conf-bin calibration computed from a model's fit on (data, targets).
kan::TrustCalibration calibrate(const kan::KanModel& m, std::span<const FeatureVector> data,
                                std::span<const double> targets, int n_bins = interpret::kDefaultFidelityBins);

// ---- tabular output -------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws if absent
};

std::string to_csv(const CsvTable& table);
CsvTable parse_csv_table(std::string_view text);
CsvTable read_csv_table(const std::string& path);

// Values for `target` ("conf" or an extra column). Throws ValidationError if a
// record lacks it.
std::vector<double> targets_for(std::span<const DetectionRecord> recs, const std::string& target);

// Throws ValidationError unless the model uses the canonical feature order.
void check_feature_order(const kan::KanModel& m);

CsvTable pdp_table(const kan::KanModel& m, const interpret::PdpCurve& curve);
CsvTable spline_table(const kan::KanModel& m, int unit, std::size_t feature, int samples = kSplineSamples);

// Writes every analysis CSV plus report.json into outdir.
void write_analysis_bundle(const kan::KanModel& m, const interpret::InterpretReport& r, const std::string& outdir);

// ---- command line -----------------------------------------------------------------

// Entry point shared by the binary and the tests. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kantrust::report
