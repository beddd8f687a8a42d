#include "kantrust/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kantrust/errors.hpp"
#include "kantrust/synth.hpp"

namespace kantrust::report {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

json number_or_null(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

std::string optional_cell(std::optional<double> v) {
  return format_double(v.value_or(std::numeric_limits<double>::quiet_NaN()));
}

std::string valid_feature_names() {
  std::string s;
  for (auto n : kFeatureNames) {
    if (!s.empty()) s += ", ";
    s += n;
  }
  return s;
}

std::size_t feature_or_throw(const std::string& name) {
  auto k = feature_index(name);
  if (!k) throw UsageError("unknown feature '" + name + "' (valid: " + valid_feature_names() + ")");
  return *k;
}

void write_table(const std::string& path, const CsvTable& t) { write_file_atomic(path, to_csv(t)); }

Format input_format(const std::optional<std::string>& flag, const std::string& path) {
  return flag ? parse_format(*flag) : format_from_path(path);
}

// ---- bundle tables ------------------------------------------------------------

CsvTable feature_stats_table(const interpret::FeatureStats& fs) {
  CsvTable t{{"feature", "spline_activation", "saliency", "pdp_delta"}, {}};
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    t.rows.push_back({std::string(kFeatureNames[k]), format_double(fs.spline_activation[k]),
                      format_double(fs.saliency[k]), format_double(fs.pdp_delta[k])});
  }
  return t;
}

CsvTable node_stats_table(const std::vector<interpret::NodeStat>& nodes) {
  CsvTable t{{"node", "activation", "importance", "top_feature", "correlation", "correlation_defined"}, {}};
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const auto& n = nodes[j];
    t.rows.push_back({"n" + std::to_string(j), format_double(n.activation), format_double(n.importance),
                      std::string(kFeatureNames[n.top_feature]), format_double(n.correlation),
                      n.correlation_defined ? "true" : "false"});
  }
  return t;
}

CsvTable edge_table(const interpret::EdgeImportanceMatrix& em) {
  CsvTable t;
  t.header.push_back("node");
  for (auto n : kFeatureNames) t.header.emplace_back(n);
  for (int j = 0; j < em.hidden(); ++j) {
    std::vector<std::string> row{"n" + std::to_string(j)};
    for (std::size_t k = 0; k < kNumFeatures; ++k) row.push_back(format_double(em.at(j, k)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable influence_csv(const interpret::InfluenceTable& inf) {
  CsvTable t{{"feature", "spline_activation", "saliency", "pdp_delta", "edge_importance", "influence"}, {}};
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    const auto& r = inf[k];
    t.rows.push_back({std::string(kFeatureNames[k]), format_double(r.raw.spline_activation),
                      format_double(r.raw.saliency), format_double(r.raw.pdp_delta),
                      format_double(r.raw.edge_importance), format_double(r.influence)});
  }
  return t;
}

CsvTable fidelity_csv(const interpret::FidelityReport& f) {
  CsvTable t{{"scope", "feature", "bin_index", "bin_lo", "bin_hi", "n", "r2", "mae", "rmse"}, {}};
  t.rows.push_back({"overall", "", "", "", "", std::to_string(f.overall.n), optional_cell(f.overall.r2),
                    format_double(f.overall.mae), format_double(f.overall.rmse)});
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    for (const auto& b : f.bins[k]) {
      t.rows.push_back({"feature", std::string(kFeatureNames[k]), std::to_string(b.bin_index), format_double(b.lo),
                        format_double(b.hi), std::to_string(b.metrics.n), optional_cell(b.metrics.r2),
                        format_double(b.metrics.mae), format_double(b.metrics.rmse)});
    }
  }
  return t;
}

CsvTable monotonicity_csv(const std::array<interpret::Monotonicity, kNumFeatures>& mono) {
  CsvTable t{{"feature", "score", "direction", "strength"}, {}};
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    t.rows.push_back({std::string(kFeatureNames[k]), format_double(mono[k].score),
                      std::string(interpret::direction_name(mono[k].direction)),
                      std::string(interpret::strength_name(mono[k].strength))});
  }
  return t;
}

json curve_json(const CsvTable& t) {
  json c = json::object();
  for (std::size_t col = 0; col < t.header.size(); ++col) {
    json values = json::array();
    for (const auto& row : t.rows) values.push_back(std::stod(row[col]));
    c[t.header[col]] = std::move(values);
  }
  return c;
}

// ---- commands ---------------------------------------------------------------------

struct Globals {
  std::uint64_t seed = 42;
  std::optional<std::string> format;
  std::string outdir = ".";
};

struct TrainArgs {
  std::string data;
  std::string model;
  std::string history;
  kan::TrainConfig cfg;
  int calibration_bins = interpret::kDefaultFidelityBins;
};

struct AnalyzeArgs {
  std::string model;
  std::string data;
  interpret::AnalyzeOptions opts;
};

struct ScoreArgs {
  std::string model;
  std::string data;
  std::string output;
  std::optional<double> tau;
  double r_min = kDefaultRMin;
};

std::vector<DetectionRecord> load_records(const std::string& path, const Globals& g) {
  return read_detections(path, input_format(g.format, path));
}

int cmd_ingest(const std::string& input, const std::string& output, const Globals& g, std::ostream& out) {
  const auto recs = load_records(input, g);
  if (!output.empty()) {
    std::ostringstream buf;
    write_detections(buf, recs, format_from_path(output));
    write_file_atomic(output, buf.str());
  }
  const auto features = extract_features(recs);
  std::size_t captions = 0;
  for (const auto& r : recs) captions += r.caption ? 1 : 0;
  out << "records: " << recs.size() << "\n";
  out << "captions: " << captions << "\n";
  if (!features.empty()) {
    const Normalizer n = fit_normalizer(features);
    out << "feature,min,max\n";
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      out << kFeatureNames[k] << ',' << format_double(n.min()[k]) << ',' << format_double(n.max()[k]) << "\n";
    }
  }
  return 0;
}

kan::KanModel do_train(const TrainArgs& a, const std::vector<DetectionRecord>& recs, std::ostream& out) {
  const auto features = extract_features(recs);
  const auto targets = targets_for(recs, a.cfg.target);
  auto result = kan::train(features, targets, a.cfg);
  result.model.calibration() = [&] {
    auto cal = calibrate(result.model, features, targets, a.calibration_bins);
    cal.val_rmse = result.model.calibration().val_rmse;
    return cal;
  }();

  kan::save_model_file(result.model, a.model);
  CsvTable hist{{"epoch", "train_mse", "val_mse"}, {}};
  for (std::size_t e = 0; e < result.history.train_mse.size(); ++e) {
    hist.rows.push_back(
        {std::to_string(e + 1), format_double(result.history.train_mse[e]), format_double(result.history.val_mse[e])});
  }
  write_table(a.history, hist);
  out << "trained on " << recs.size() << " records, target=" << a.cfg.target << "\n";
  out << "initial val_mse: " << format_double(result.history.val_mse.front()) << "\n";
  out << "final val_mse: " << format_double(result.history.val_mse.back()) << "\n";
  out << "model: " << a.model << "\n";
  return std::move(result.model);
}

void do_analyze(const kan::KanModel& m, const std::vector<DetectionRecord>& recs, const interpret::AnalyzeOptions& opts,
                const std::string& outdir, std::ostream& out) {
  check_feature_order(m);
  const auto features = extract_features(recs);
  const auto targets = targets_for(recs, m.target());
  const auto r = interpret::analyze(m, features, targets, opts);
  write_analysis_bundle(m, r, outdir);
  out << "analysis written to " << outdir << " (overall R2 " << optional_cell(r.fidelity.overall.r2) << ")\n";
}

void do_score(const kan::KanModel& m, const std::vector<DetectionRecord>& recs, const ScoreArgs& a, std::ostream& out,
              std::ostream& err) {
  check_feature_order(m);
  if (m.target() != "conf") {
    err << "warning: model was trained against '" << m.target()
        << "', residuals compare it with detector confidence\n";
  }
  const double tau = a.tau.value_or(default_tau(m));
  const auto features = extract_features(recs);
  const auto preds = kan::predict(m, features);
  CsvTable t{{"image_id", "index", "pred", "conf", "residual", "low_trust", "reason"}, {}};
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    auto v = judge(preds[i], recs[i].conf, tau, m.calibration(), a.r_min);
    v.image_id = recs[i].image_id;
    v.index = i;
    flagged += v.low_trust ? 1 : 0;
    t.rows.push_back({v.image_id, std::to_string(v.index), format_double(v.predicted), format_double(v.detector_conf),
                      format_double(v.residual), v.low_trust ? "true" : "false", v.reason});
  }
  write_table(a.output, t);
  out << "scored " << recs.size() << " detections, " << flagged << " low-trust (tau=" << format_double(tau)
      << ")\n";
}

}  // namespace

// ---- verdicts -------------------------------------------------------------------

TrustVerdict judge(double predicted, double detector_conf, double tau, const kan::TrustCalibration& cal,
                   double r_min) {
  TrustVerdict v;
  v.predicted = predicted;
  v.detector_conf = detector_conf;
  v.residual = std::abs(predicted - detector_conf);
  const bool residual_flag = v.residual > tau;
  bool bin_flag = false;
  if (cal.conf_bin_edges.size() >= 2 && cal.conf_bin_r2.size() + 1 == cal.conf_bin_edges.size()) {
    const auto b = interpret::bin_of(cal.conf_bin_edges, detector_conf);
    const auto& r2 = cal.conf_bin_r2[b];
    bin_flag = r2.has_value() && *r2 < r_min;
  }
  v.low_trust = residual_flag || bin_flag;
  if (residual_flag && bin_flag) {
    v.reason = "residual+low_fidelity_bin";
  } else if (residual_flag) {
    v.reason = "residual";
  } else if (bin_flag) {
    v.reason = "low_fidelity_bin";
  } else {
    v.reason = "ok";
  }
  return v;
}

double default_tau(const kan::KanModel& m) {
  const auto& rmse = m.calibration().val_rmse;
  return rmse ? 3.0 * *rmse : kDefaultTau;
}

kan::TrustCalibration calibrate(const kan::KanModel& m, std::span<const FeatureVector> data,
                                std::span<const double> targets, int n_bins) {
  const auto fid = interpret::fidelity_bins(m, data, targets, n_bins);
  kan::TrustCalibration cal;
  cal.conf_bin_edges = fid.edges[kFeatConf];
  cal.conf_bin_r2.assign(static_cast<std::size_t>(n_bins), std::nullopt);
  for (const auto& b : fid.bins[kFeatConf]) cal.conf_bin_r2[b.bin_index] = b.metrics.r2;
  return cal;
}

// ---- tables --------------------------------------------------------------------------

std::size_t CsvTable::column(std::string_view name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ValidationError("missing CSV column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out.push_back(',');
      out += csv_field(row[c]);
    }
    out.push_back('\n');
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  return out;
}

CsvTable parse_csv_table(std::string_view text) {
  auto rows = split_csv_rows(std::string(text));
  CsvTable t;
  if (rows.empty()) return t;
  t.header = std::move(rows.front());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != t.header.size()) {
      throw ValidationError("CSV row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                            " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(rows[r]));
  }
  return t;
}

CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_csv_table(text);
}

std::vector<double> targets_for(std::span<const DetectionRecord> recs, const std::string& target) {
  std::vector<double> out;
  out.reserve(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (target == "conf") {
      out.push_back(recs[i].conf);
      continue;
    }
    auto it = recs[i].extras.find(target);
    if (it == recs[i].extras.end()) {
      throw ValidationError("record " + std::to_string(i) + " has no target column '" + target + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

void check_feature_order(const kan::KanModel& m) {
  if (!m.has_canonical_features()) {
    std::string got;
    for (const auto& n : m.feature_names()) got += (got.empty() ? "" : ",") + n;
    throw ValidationError("model feature order '" + got + "' does not match x,y,w,h,conf,cls,scale");
  }
}

CsvTable pdp_table(const kan::KanModel& m, const interpret::PdpCurve& curve) {
  CsvTable t{{"t_raw", "t_normalized", "value"}, {}};
  for (std::size_t g = 0; g < curve.grid.size(); ++g) {
    t.rows.push_back({format_double(curve.grid[g]),
                      format_double(m.normalizer().normalize(curve.feature_index, curve.grid[g])),
                      format_double(curve.values[g])});
  }
  return t;
}

CsvTable spline_table(const kan::KanModel& m, int unit, std::size_t feature, int samples) {
  if (unit < 0 || unit >= m.hidden()) {
    throw UsageError("unit " + std::to_string(unit) + " out of range [0," + std::to_string(m.hidden() - 1) + "]");
  }
  if (samples < 2) throw UsageError("need at least 2 spline samples");
  CsvTable t{{"t_raw", "t_normalized", "value"}, {}};
  for (int g = 0; g < samples; ++g) {
    const double tn = static_cast<double>(g) / static_cast<double>(samples - 1);
    t.rows.push_back({format_double(m.normalizer().denormalize(feature, tn)), format_double(tn),
                      format_double(m.edge_value(unit, feature, tn))});
  }
  return t;
}

void write_analysis_bundle(const kan::KanModel& m, const interpret::InterpretReport& r, const std::string& outdir) {
  fs::create_directories(outdir);
  json bundle = json::object();
  bundle["model"] = {{"inputs", kNumFeatures}, {"hidden", m.hidden()},  {"outputs", 1},
                     {"grid", m.grid()},       {"degree", m.degree()},  {"seed", m.seed()},
                     {"target", m.target()}};
  bundle["features"] = json::array();
  for (auto n : kFeatureNames) bundle["features"].push_back(std::string(n));

  write_table(path_in(outdir, "feature_stats.csv"), feature_stats_table(r.feature_stats));
  bundle["feature_stats"] = json::array();
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    bundle["feature_stats"].push_back({{"feature", std::string(kFeatureNames[k])},
                                       {"spline_activation", r.feature_stats.spline_activation[k]},
                                       {"saliency", r.feature_stats.saliency[k]},
                                       {"pdp_delta", r.feature_stats.pdp_delta[k]}});
  }

  write_table(path_in(outdir, "node_stats.csv"), node_stats_table(r.nodes));
  bundle["node_stats"] = json::array();
  for (std::size_t j = 0; j < r.nodes.size(); ++j) {
    const auto& n = r.nodes[j];
    bundle["node_stats"].push_back({{"node", "n" + std::to_string(j)},
                                    {"activation", n.activation},
                                    {"importance", n.importance},
                                    {"top_feature", std::string(kFeatureNames[n.top_feature])},
                                    {"correlation", n.correlation},
                                    {"correlation_defined", n.correlation_defined}});
  }

  write_table(path_in(outdir, "edge_importance.csv"), edge_table(r.edges));
  bundle["edge_importance"] = json::array();
  for (int j = 0; j < r.edges.hidden(); ++j) {
    json row = json::array();
    for (std::size_t k = 0; k < kNumFeatures; ++k) row.push_back(r.edges.at(j, k));
    bundle["edge_importance"].push_back(std::move(row));
  }

  write_table(path_in(outdir, "influence.csv"), influence_csv(r.influence));
  bundle["influence"] = json::array();
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    const auto& row = r.influence[k];
    bundle["influence"].push_back({{"feature", std::string(kFeatureNames[k])},
                                   {"spline_activation", row.raw.spline_activation},
                                   {"saliency", row.raw.saliency},
                                   {"pdp_delta", row.raw.pdp_delta},
                                   {"edge_importance", row.raw.edge_importance},
                                   {"influence", row.influence}});
  }

  write_table(path_in(outdir, "fidelity_bins.csv"), fidelity_csv(r.fidelity));
  const auto& ov = r.fidelity.overall;
  json fid = {{"overall", {{"n", ov.n}, {"r2", number_or_null(ov.r2)}, {"mae", ov.mae}, {"rmse", ov.rmse}}},
              {"bins", json::array()}};
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    for (const auto& b : r.fidelity.bins[k]) {
      fid["bins"].push_back({{"feature", std::string(kFeatureNames[k])},
                             {"bin_index", b.bin_index},
                             {"bin_lo", b.lo},
                             {"bin_hi", b.hi},
                             {"n", b.metrics.n},
                             {"r2", number_or_null(b.metrics.r2)},
                             {"mae", b.metrics.mae},
                             {"rmse", b.metrics.rmse}});
    }
  }
  bundle["fidelity"] = std::move(fid);

  write_table(path_in(outdir, "monotonicity.csv"), monotonicity_csv(r.monotonicity));
  bundle["monotonicity"] = json::array();
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    const auto& mo = r.monotonicity[k];
    bundle["monotonicity"].push_back({{"feature", std::string(kFeatureNames[k])},
                                      {"score", mo.score},
                                      {"direction", std::string(interpret::direction_name(mo.direction))},
                                      {"strength", std::string(interpret::strength_name(mo.strength))}});
  }

  bundle["pdp"] = json::object();
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    const auto t = pdp_table(m, r.pdp[k]);
    write_table(path_in(outdir, "pdp_" + std::string(kFeatureNames[k]) + ".csv"), t);
    bundle["pdp"][std::string(kFeatureNames[k])] = curve_json(t);
  }

  bundle["splines"] = json::array();
  for (int j = 0; j < m.hidden(); ++j) {
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      const auto t = spline_table(m, j, k);
      write_table(path_in(outdir, "splines_unit" + std::to_string(j) + "_" + std::string(kFeatureNames[k]) + ".csv"),
                  t);
      json c = curve_json(t);
      c["unit"] = j;
      c["feature"] = std::string(kFeatureNames[k]);
      bundle["splines"].push_back(std::move(c));
    }
  }

  write_file_atomic(path_in(outdir, "report.json"), bundle.dump(1) + "\n");
}

// ---- CLI ---------------------------------------------------------------------------------

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spline KAN surrogate of detector confidence: train, interpret, score"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--format", g.format, "Input format (csv|jsonl); inferred from the extension by default")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  app.add_option("--outdir", g.outdir, "Output directory")->capture_default_str();

  auto add_train_flags = [](CLI::App* sub, TrainArgs& a) {
    sub->add_option("--epochs", a.cfg.epochs)->capture_default_str();
    sub->add_option("--batch-size", a.cfg.batch_size)->capture_default_str();
    sub->add_option("--lr", a.cfg.learning_rate)->capture_default_str();
    sub->add_option("--val-fraction", a.cfg.val_fraction)->capture_default_str();
    sub->add_option("--l2", a.cfg.l2_penalty)->capture_default_str();
    sub->add_option("--hidden", a.cfg.hidden)->capture_default_str();
    sub->add_option("--grid", a.cfg.grid)->capture_default_str();
    sub->add_option("--degree", a.cfg.degree)->capture_default_str();
    sub->add_option("--target-column", a.cfg.target, "Train against this column instead of conf")
        ->capture_default_str();
    sub->add_option("--calibration-bins", a.calibration_bins, "Conf quantile bins stored for trust scoring")
        ->capture_default_str();
  };

  std::string ingest_input;
  std::string ingest_output;
  auto* ingest = app.add_subcommand("ingest", "Validate an interchange file and summarize it");
  ingest->add_option("-i,--input", ingest_input)->required();
  ingest->add_option("-o,--output", ingest_output, "Re-serialized copy (format from extension)");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train the surrogate");
  train->add_option("--data", train_args.data)->required();
  train->add_option("--model", train_args.model, "Model path (default <outdir>/model.kan)");
  train->add_option("--history", train_args.history, "History CSV (default <outdir>/history.csv)");
  add_train_flags(train, train_args);

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Write the interpretability report bundle");
  analyze->add_option("--model", analyze_args.model)->required();
  analyze->add_option("--data", analyze_args.data)->required();
  analyze->add_option("--points", analyze_args.opts.pdp_points, "PDP grid points")->capture_default_str();
  analyze->add_option("--bins", analyze_args.opts.fidelity_bins, "Fidelity quantile bins")->capture_default_str();
  analyze->add_flag("--scale-edges", analyze_args.opts.scale_edges_by_weight, "Scale edge norms by |w_j|");

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Flag low-trust detections");
  score->add_option("--model", score_args.model)->required();
  score->add_option("--data", score_args.data)->required();
  score->add_option("--output", score_args.output, "Verdict CSV (default <outdir>/verdicts.csv)");
  score->add_option("--tau", score_args.tau, "Residual threshold (default 3x stored validation RMSE, else 0.05)");
  score->add_option("--r-min", score_args.r_min, "Minimum acceptable conf-bin R2")->capture_default_str();

  std::string pdp_model;
  std::string pdp_data;
  std::vector<std::string> pdp_features;
  int pdp_points = interpret::kDefaultPdpPoints;
  auto* pdp = app.add_subcommand("pdp", "Export partial dependence curves");
  pdp->add_option("--model", pdp_model)->required();
  pdp->add_option("--data", pdp_data)->required();
  pdp->add_option("--feature", pdp_features, "Feature name (repeatable; default all)");
  pdp->add_option("--points", pdp_points)->capture_default_str();

  std::string spl_model;
  std::optional<int> spl_unit;
  std::optional<std::string> spl_feature;
  int spl_points = kSplineSamples;
  auto* splines = app.add_subcommand("splines", "Export spline edge curves");
  splines->add_option("--model", spl_model)->required();
  splines->add_option("--unit", spl_unit, "Hidden unit (default all)");
  splines->add_option("--feature", spl_feature, "Feature name (default all)");
  splines->add_option("--points", spl_points)->capture_default_str();

  TrainArgs report_args;
  std::optional<double> report_tau;
  double report_rmin = kDefaultRMin;
  auto* report = app.add_subcommand("report", "train + analyze + score in one run");
  report->add_option("--data", report_args.data)->required();
  add_train_flags(report, report_args);
  report->add_option("--tau", report_tau);
  report->add_option("--r-min", report_rmin)->capture_default_str();

  synth::SynthOptions synth_opts;
  std::string synth_output;
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic COCO-like detections");
  synth_cmd->add_option("--count", synth_opts.count)->capture_default_str();
  synth_cmd->add_option("-o,--output", synth_output)->required();
  synth_cmd->add_option("--conf-floor", synth_opts.conf_floor)->capture_default_str();
  synth_cmd->add_flag("--captions", synth_opts.captions);
  synth_cmd->add_flag("--trust-label", synth_opts.trust_label);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*ingest) return cmd_ingest(ingest_input, ingest_output, g, out);

    if (*train) {
      train_args.cfg.seed = g.seed;
      if (train_args.model.empty()) train_args.model = path_in(g.outdir, "model.kan");
      if (train_args.history.empty()) train_args.history = path_in(g.outdir, "history.csv");
      do_train(train_args, load_records(train_args.data, g), out);
      return 0;
    }

    if (*analyze) {
      const auto m = kan::load_model_file(analyze_args.model);
      do_analyze(m, load_records(analyze_args.data, g), analyze_args.opts, g.outdir, out);
      return 0;
    }

    if (*score) {
      const auto m = kan::load_model_file(score_args.model);
      if (score_args.output.empty()) score_args.output = path_in(g.outdir, "verdicts.csv");
      do_score(m, load_records(score_args.data, g), score_args, out, err);
      return 0;
    }

    if (*pdp) {
      const auto m = kan::load_model_file(pdp_model);
      check_feature_order(m);
      std::vector<std::size_t> which;
      for (const auto& name : pdp_features) which.push_back(feature_or_throw(name));
      if (which.empty()) {
        for (std::size_t k = 0; k < kNumFeatures; ++k) which.push_back(k);
      }
      const auto features = extract_features(load_records(pdp_data, g));
      for (std::size_t k : which) {
        const auto curve = interpret::partial_dependence(m, features, k, pdp_points);
        write_table(path_in(g.outdir, "pdp_" + std::string(kFeatureNames[k]) + ".csv"), pdp_table(m, curve));
      }
      out << "wrote " << which.size() << " PDP curve(s) to " << g.outdir << "\n";
      return 0;
    }

    if (*splines) {
      const auto m = kan::load_model_file(spl_model);
      check_feature_order(m);
      std::vector<std::size_t> feats;
      if (spl_feature) {
        feats.push_back(feature_or_throw(*spl_feature));
      } else {
        for (std::size_t k = 0; k < kNumFeatures; ++k) feats.push_back(k);
      }
      std::vector<int> units;
      if (spl_unit) {
        units.push_back(*spl_unit);
      } else {
        for (int j = 0; j < m.hidden(); ++j) units.push_back(j);
      }
      std::size_t written = 0;
      for (int j : units) {
        for (std::size_t k : feats) {
          write_table(path_in(g.outdir, "splines_unit" + std::to_string(j) + "_" + std::string(kFeatureNames[k]) + ".csv"),
                      spline_table(m, j, k, spl_points));
          ++written;
        }
      }
      out << "wrote " << written << " spline curve(s) to " << g.outdir << "\n";
      return 0;
    }

    if (*report) {
      report_args.cfg.seed = g.seed;
      report_args.model = path_in(g.outdir, "model.kan");
      report_args.history = path_in(g.outdir, "history.csv");
      const auto recs = load_records(report_args.data, g);
      const auto m = do_train(report_args, recs, out);
      do_analyze(m, recs, {}, g.outdir, out);
      ScoreArgs sa;
      sa.output = path_in(g.outdir, "verdicts.csv");
      sa.tau = report_tau;
      sa.r_min = report_rmin;
      do_score(m, recs, sa, out, err);
      return 0;
    }

    if (*synth_cmd) {
      synth_opts.seed = g.seed;
      const auto recs = synth::generate(synth_opts);
      std::ostringstream buf;
      write_detections(buf, recs, g.format ? parse_format(*g.format) : format_from_path(synth_output));
      write_file_atomic(synth_output, buf.str());
      out << "wrote " << recs.size() << " records to " << synth_output << "\n";
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kUsage);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kUsage);
  }
  return static_cast<int>(ExitCode::kUsage);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("kantrust");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace kantrust::report
