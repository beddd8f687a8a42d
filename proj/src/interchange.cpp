#include "kantrust/interchange.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"
#include "kantrust/errors.hpp"

namespace kantrust {

namespace {

using json = nlohmann::json;

std::string field_error(std::string_view field, std::string_view msg) {
  std::string out = "field '";
  out += field;
  out += "': ";
  out += msg;
  return out;
}

void check_unit(std::string_view field, double v, bool open_at_zero) {
  const bool ok = open_at_zero ? (v > 0.0 && v <= 1.0) : (v >= 0.0 && v <= 1.0);
  if (!ok) {
    throw ValidationError(field_error(
        field, "value " + format_double(v) + (open_at_zero ? " outside (0,1]" : " outside [0,1]")));
  }
}

std::optional<double> to_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::optional<std::int64_t> to_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

struct CsvField {
  std::string text;
  bool quoted = false;
};

struct CsvRow {
  std::size_t line = 0;
  std::vector<CsvField> fields;
};

// RFC 4180 reader. Quoted fields may contain separators, quotes ("") and
// newlines; `line` is the physical line where the row starts.
std::vector<CsvRow> split_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    CsvRow row;
    row.line = line;
    bool end_of_row = false;
    while (!end_of_row) {
      CsvField field;
      if (i < n && text[i] == '"') {
        field.quoted = true;
        ++i;
        while (true) {
          if (i >= n) throw ValidationError("line " + std::to_string(row.line) + ": unterminated quoted field");
          if (text[i] == '"') {
            if (i + 1 < n && text[i + 1] == '"') {
              field.text.push_back('"');
              i += 2;
              continue;
            }
            ++i;
            break;
          }
          if (text[i] == '\n') ++line;
          field.text.push_back(text[i++]);
        }
        if (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          throw ValidationError("line " + std::to_string(line) + ": unexpected character after closing quote");
        }
      } else {
        while (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') field.text.push_back(text[i++]);
      }
      row.fields.push_back(std::move(field));
      if (i >= n) {
        end_of_row = true;
      } else if (text[i] == ',') {
        ++i;
      } else {
        if (text[i] == '\r') ++i;
        if (i < n && text[i] == '\n') ++i;
        ++line;
        end_of_row = true;
      }
    }
    const bool blank = row.fields.size() == 1 && row.fields[0].text.empty() && !row.fields[0].quoted;
    if (!blank) rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_quote(std::string_view s) {
  std::string out;
  out.reserve(s.size() + 2);
  out.push_back('"');
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

bool needs_quotes(std::string_view s) {
  return s.empty() || s.find_first_of(",\"\r\n") != std::string_view::npos;
}

DetectionRecord record_from_csv(const CsvRow& row, const std::vector<std::string>& extra_names) {
  const std::size_t expected = kCsvColumns.size() + extra_names.size();
  const std::string where = "line " + std::to_string(row.line) + ": ";
  if (row.fields.size() != expected) {
    throw ValidationError(where + "expected " + std::to_string(expected) + " fields, got " +
                          std::to_string(row.fields.size()));
  }
  auto real = [&](std::size_t col) {
    auto v = to_double(row.fields[col].text);
    if (!v) throw ValidationError(where + field_error(kCsvColumns[col], "not a number: '" + row.fields[col].text + "'"));
    return *v;
  };
  auto integer = [&](std::size_t col) {
    auto v = to_int(row.fields[col].text);
    if (!v) throw ValidationError(where + field_error(kCsvColumns[col], "not an integer: '" + row.fields[col].text + "'"));
    return *v;
  };

  DetectionRecord rec;
  rec.image_id = row.fields[0].text;
  rec.x = real(1);
  rec.y = real(2);
  rec.w = real(3);
  rec.h = real(4);
  rec.conf = real(5);
  rec.cls = integer(6);
  rec.img_w = integer(7);
  rec.img_h = integer(8);
  const CsvField& cap = row.fields[9];
  if (cap.quoted || !cap.text.empty()) rec.caption = cap.text;
  for (std::size_t e = 0; e < extra_names.size(); ++e) {
    const CsvField& f = row.fields[kCsvColumns.size() + e];
    auto v = to_double(f.text);
    if (!v) throw ValidationError(where + field_error(extra_names[e], "not a number: '" + f.text + "'"));
    rec.extras.emplace(extra_names[e], *v);
  }
  try {
    validate(rec);
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  }
  return rec;
}

std::vector<DetectionRecord> parse_csv(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
  const auto rows = split_csv(text);
  if (rows.empty()) throw ValidationError("line 1: missing CSV header");

  const auto& header = rows.front().fields;
  if (header.size() < kCsvColumns.size()) {
    throw ValidationError("line 1: header must start with image_id,x,y,w,h,conf,cls,img_w,img_h,caption");
  }
  for (std::size_t c = 0; c < kCsvColumns.size(); ++c) {
    if (header[c].text != kCsvColumns[c]) {
      throw ValidationError("line 1: header column " + std::to_string(c + 1) + " must be '" +
                            std::string(kCsvColumns[c]) + "', got '" + header[c].text + "'");
    }
  }
  std::vector<std::string> extra_names;
  std::set<std::string> seen(kCsvColumns.begin(), kCsvColumns.end());
  for (std::size_t c = kCsvColumns.size(); c < header.size(); ++c) {
    if (header[c].text.empty() || !seen.insert(header[c].text).second) {
      throw ValidationError("line 1: invalid or duplicate extra column '" + header[c].text + "'");
    }
    extra_names.push_back(header[c].text);
  }

  std::vector<DetectionRecord> out;
  out.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) out.push_back(record_from_csv(rows[r], extra_names));
  return out;
}

std::vector<DetectionRecord> parse_jsonl(std::istream& in) {
  std::vector<DetectionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where + "malformed JSON: " + e.what());
    }
    if (!obj.is_object()) throw ValidationError(where + "expected a JSON object");

    auto require = [&](std::string_view key) -> const json& {
      auto it = obj.find(std::string(key));
      if (it == obj.end()) throw ValidationError(where + field_error(key, "missing"));
      return *it;
    };
    auto real = [&](std::string_view key) {
      const json& v = require(key);
      if (!v.is_number()) throw ValidationError(where + field_error(key, "not a number: " + v.dump()));
      return v.get<double>();
    };
    auto integer = [&](std::string_view key) -> std::int64_t {
      const json& v = require(key);
      if (!v.is_number_integer()) throw ValidationError(where + field_error(key, "not an integer: " + v.dump()));
      return v.get<std::int64_t>();
    };

    DetectionRecord rec;
    const json& id = require("image_id");
    if (!id.is_string()) throw ValidationError(where + field_error("image_id", "not a string"));
    rec.image_id = id.get<std::string>();
    rec.x = real("x");
    rec.y = real("y");
    rec.w = real("w");
    rec.h = real("h");
    rec.conf = real("conf");
    rec.cls = integer("cls");
    rec.img_w = integer("img_w");
    rec.img_h = integer("img_h");
    if (auto it = obj.find("caption"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw ValidationError(where + field_error("caption", "not a string"));
      rec.caption = it->get<std::string>();
    }
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::find(kCsvColumns.begin(), kCsvColumns.end(), it.key()) != kCsvColumns.end()) continue;
      if (!it->is_number()) throw ValidationError(where + field_error(it.key(), "extra fields must be numeric"));
      rec.extras.emplace(it.key(), it->get<double>());
    }
    try {
      validate(rec);
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

std::optional<std::size_t> feature_index(std::string_view name) {
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    if (kFeatureNames[k] == name) return k;
  }
  return std::nullopt;
}

Format parse_format(std::string_view name) {
  if (name == "csv") return Format::kCsv;
  if (name == "jsonl") return Format::kJsonl;
  throw UsageError("unknown format '" + std::string(name) + "' (expected csv or jsonl)");
}

std::string_view format_name(Format f) { return f == Format::kCsv ? "csv" : "jsonl"; }

Format format_from_path(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  return (ext == ".jsonl" || ext == ".ndjson") ? Format::kJsonl : Format::kCsv;
}

void validate(const DetectionRecord& rec) {
  check_unit("x", rec.x, false);
  check_unit("y", rec.y, false);
  check_unit("w", rec.w, true);
  check_unit("h", rec.h, true);
  check_unit("conf", rec.conf, false);
  if (rec.cls < 0) throw ValidationError(field_error("cls", "value " + std::to_string(rec.cls) + " is negative"));
  if (rec.img_w < 1) throw ValidationError(field_error("img_w", "value " + std::to_string(rec.img_w) + " < 1"));
  if (rec.img_h < 1) throw ValidationError(field_error("img_h", "value " + std::to_string(rec.img_h) + " < 1"));
  for (const auto& [name, v] : rec.extras) {
    if (!std::isfinite(v)) throw ValidationError(field_error(name, "non-finite value"));
  }
}

FeatureVector extract_features(const DetectionRecord& rec) {
  return {rec.x, rec.y, rec.w, rec.h, rec.conf, static_cast<double>(rec.cls), rec.w * rec.h};
}

std::vector<FeatureVector> extract_features(std::span<const DetectionRecord> recs) {
  std::vector<FeatureVector> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(extract_features(r));
  return out;
}

// ---- Normalizer --------------------------------------------------------------

Normalizer::Normalizer() {
  min_.fill(0.0);
  max_.fill(1.0);
}

Normalizer::Normalizer(const FeatureVector& min, const FeatureVector& max) : min_(min), max_(max) {
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    if (!(max_[k] >= min_[k])) {
      throw ValidationError("normalizer: max < min for feature " + std::string(kFeatureNames[k]));
    }
  }
}

double Normalizer::normalize(std::size_t k, double value) const {
  if (degenerate(k)) return 0.5;
  const double t = (value - min_[k]) / (max_[k] - min_[k]);
  return std::clamp(t, 0.0, 1.0);
}

FeatureVector Normalizer::normalize(const FeatureVector& fv) const {
  FeatureVector out;
  for (std::size_t k = 0; k < kNumFeatures; ++k) out[k] = normalize(k, fv[k]);
  return out;
}

double Normalizer::denormalize(std::size_t k, double t) const {
  if (degenerate(k)) return min_[k];
  return min_[k] + t * (max_[k] - min_[k]);
}

double Normalizer::scale_factor(std::size_t k) const {
  return degenerate(k) ? 0.0 : 1.0 / (max_[k] - min_[k]);
}

Normalizer fit_normalizer(std::span<const FeatureVector> data) {
  if (data.empty()) throw ValidationError("cannot fit a normalizer on an empty dataset");
  FeatureVector lo = data.front();
  FeatureVector hi = data.front();
  for (const auto& fv : data) {
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      if (!std::isfinite(fv[k])) {
        throw ValidationError("non-finite value in feature " + std::string(kFeatureNames[k]));
      }
      lo[k] = std::min(lo[k], fv[k]);
      hi[k] = std::max(hi[k], fv[k]);
    }
  }
  return Normalizer(lo, hi);
}

// ---- I/O ---------------------------------------------------------------------

std::vector<DetectionRecord> parse_detections(std::istream& in, Format format) {
  return format == Format::kCsv ? parse_csv(in) : parse_jsonl(in);
}

std::vector<DetectionRecord> read_detections(const std::string& path, Format format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open input file '" + path + "'");
  return parse_detections(in, format);
}

std::vector<std::vector<std::string>> split_csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  for (auto& row : split_csv(text)) {
    std::vector<std::string> fields;
    fields.reserve(row.fields.size());
    for (auto& f : row.fields) fields.push_back(std::move(f.text));
    out.push_back(std::move(fields));
  }
  return out;
}

std::string csv_field(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos ? csv_quote(s) : std::string(s);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_detections(std::ostream& out, std::span<const DetectionRecord> recs, Format format) {
  if (format == Format::kJsonl) {
    for (const auto& r : recs) {
      json obj = json::object();
      obj["image_id"] = r.image_id;
      obj["x"] = r.x;
      obj["y"] = r.y;
      obj["w"] = r.w;
      obj["h"] = r.h;
      obj["conf"] = r.conf;
      obj["cls"] = r.cls;
      obj["img_w"] = r.img_w;
      obj["img_h"] = r.img_h;
      if (r.caption) obj["caption"] = *r.caption;
      for (const auto& [name, v] : r.extras) obj[name] = v;
      out << obj.dump() << '\n';
    }
    return;
  }

  std::vector<std::string> extra_names;
  if (!recs.empty()) {
    for (const auto& [name, v] : recs.front().extras) extra_names.push_back(name);
  }
  for (const auto& r : recs) {
    if (r.extras.size() != extra_names.size() ||
        !std::equal(extra_names.begin(), extra_names.end(), r.extras.begin(),
                    [](const std::string& a, const auto& kv) { return a == kv.first; })) {
      throw ValidationError("CSV output requires every record to carry the same extra columns");
    }
  }

  for (std::size_t c = 0; c < kCsvColumns.size(); ++c) out << (c ? "," : "") << kCsvColumns[c];
  for (const auto& name : extra_names) out << ',' << (needs_quotes(name) ? csv_quote(name) : name);
  out << '\n';
  for (const auto& r : recs) {
    out << (needs_quotes(r.image_id) && !r.image_id.empty() ? csv_quote(r.image_id) : r.image_id) << ','
        << format_double(r.x) << ',' << format_double(r.y) << ',' << format_double(r.w) << ','
        << format_double(r.h) << ',' << format_double(r.conf) << ',' << r.cls << ',' << r.img_w << ','
        << r.img_h << ',';
    // Absent caption: empty unquoted field. Present caption: always quoted.
    if (r.caption) out << csv_quote(*r.caption);
    for (const auto& [name, v] : r.extras) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw UsageError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

}  // namespace kantrust
