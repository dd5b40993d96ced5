#pragma once
// Evaluation artifacts: per-image error maps, the protocol results table
// with per-group averages and best-entry flags, the fine-tuning improvement
// table, and CSV/JSON writers for all of them.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casr/image.hpp"
#include "casr/metrics.hpp"
#include "casr/png_io.hpp"

namespace casr {

// ---------------------------------------------------------------------------
// Error maps.
// ---------------------------------------------------------------------------

struct ErrorMap {
  Image<double> diff;   // |hr - sr| per pixel
  double score = 0.0;   // mean absolute difference
};

template <typename T>
ErrorMap error_map(const Image<T>& hr, const Image<T>& sr) {
  require_same_shape(hr, sr, "error_map");
  ErrorMap m;
  m.diff = Image<double>(hr.height, hr.width, 1.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < hr.v.size(); ++i) {
    const double d = std::abs(static_cast<double>(hr.v[i]) - static_cast<double>(sr.v[i]));
    m.diff.v[i] = d;
    acc += d;
  }
  m.score = acc / static_cast<double>(hr.v.size());
  return m;
}

// 8-bit visualization rescaled by the map's max (max -> 255, 0 -> 0).
inline Image<double> render_error_map(const ErrorMap& m) {
  Image<double> out(m.diff.height, m.diff.width, 1.0);
  const double mx = m.diff.v.empty() ? 0.0 : *std::max_element(m.diff.v.begin(), m.diff.v.end());
  if (mx > 0.0)
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = m.diff.v[i] / mx;
  return out;
}

inline void write_error_map_png(const std::filesystem::path& path, const ErrorMap& m) {
  write_png_gray(path, render_error_map(m));
}

// ---------------------------------------------------------------------------
// Protocol results table.
// ---------------------------------------------------------------------------

struct ReportKey {
  std::string family;
  std::string loss;
  std::string stage;
  auto operator<=>(const ReportKey&) const = default;
};

struct ProtocolRow {
  std::string family;  // "-" for baseline rows
  std::string loss;    // "-" for loss-independent rows, "average" for group means
  std::string stage;   // "SR-I", "SR-PT", "SR-FT", "LR", "HR"
  std::optional<double> psnr_db;
  std::optional<double> ssim;
  std::optional<double> macro_f1;
  bool best_psnr = false;
  bool best_ssim = false;
  bool best_f1 = false;
  std::string note;
};

struct ProtocolReport {
  std::vector<ProtocolRow> rows;
  nlohmann::json metadata;

  bool ok() const {
    for (const auto& r : rows)
      if (r.note.starts_with("FAILED")) return false;
    return true;
  }
};

namespace detail {

inline void flag_best(std::vector<ProtocolRow>& rows) {
  const auto flag_column = [&](auto member_value, auto member_flag) {
    double best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (const auto& r : rows)
      if (r.loss != "average" && (r.*member_value).has_value()) {
        best = std::max(best, *(r.*member_value));
        any = true;
      }
    if (!any) return;
    for (auto& r : rows)
      if (r.loss != "average" && (r.*member_value).has_value() && *(r.*member_value) == best)
        r.*member_flag = true;
  };
  flag_column(&ProtocolRow::psnr_db, &ProtocolRow::best_psnr);
  flag_column(&ProtocolRow::ssim, &ProtocolRow::best_ssim);
  flag_column(&ProtocolRow::macro_f1, &ProtocolRow::best_f1);
}

inline void sort_rows(std::vector<ProtocolRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const ProtocolRow& a, const ProtocolRow& b) {
    const auto key = [](const ProtocolRow& r) {
      return std::tuple<const std::string&, const std::string&, bool, const std::string&>(
          r.family, r.stage, r.loss == "average", r.loss);
    };
    return key(a) < key(b);
  });
}

}  // namespace detail

// Turns per-cell metric reports into the results table: one row per cell,
// plus an "average" row per (family, stage) group spanning several losses,
// plus best-per-column flags over the non-average rows.
inline ProtocolReport summarize(const std::vector<std::pair<ReportKey, MetricReport>>& cells) {
  if (cells.empty()) throw AggregationError("summarize: empty report collection");
  std::set<ReportKey> seen;
  for (const auto& [key, report] : cells) {
    (void)report;
    if (!seen.insert(key).second)
      throw AggregationError("summarize: duplicate key (" + key.family + ", " + key.loss +
                             ", " + key.stage + ")");
  }

  ProtocolReport out;
  std::map<std::pair<std::string, std::string>, std::vector<const MetricReport*>> groups;
  for (const auto& [key, report] : cells) {
    ProtocolRow row;
    row.family = key.family;
    row.loss = key.loss;
    row.stage = key.stage;
    if (report.has_iq) {
      row.psnr_db = report.psnr_db;
      row.ssim = report.ssim;
    }
    if (report.has_cls) row.macro_f1 = report.f1.macro;
    out.rows.push_back(std::move(row));
    groups[{key.family, key.stage}].push_back(&report);
  }

  for (const auto& [group_key, members] : groups) {
    for (const auto* m : members)
      if (m->has_iq != members[0]->has_iq || m->has_cls != members[0]->has_cls)
        throw AggregationError("summarize: inconsistent columns in group (" + group_key.first +
                               ", " + group_key.second + ")");
    ProtocolRow avg;
    avg.family = group_key.first;
    avg.stage = group_key.second;
    avg.loss = "average";
    const double n = static_cast<double>(members.size());
    if (members[0]->has_iq) {
      double psnr = 0, ssim = 0;
      for (const auto* m : members) {
        psnr += m->psnr_db;
        ssim += m->ssim;
      }
      avg.psnr_db = psnr / n;
      avg.ssim = ssim / n;
    }
    if (members[0]->has_cls) {
      double f1 = 0;
      for (const auto* m : members) f1 += m->f1.macro;
      avg.macro_f1 = f1 / n;
    }
    out.rows.push_back(std::move(avg));
  }

  detail::sort_rows(out.rows);
  detail::flag_best(out.rows);
  out.metadata["cells"] = cells.size();
  return out;
}

// ---------------------------------------------------------------------------
// Improvement table (fine-tuning minus pretraining, per configuration).
// ---------------------------------------------------------------------------

struct ImprovementRow {
  std::string configuration;
  double f1_pt = 0.0;
  double f1_ft = 0.0;
  double delta = 0.0;
};

inline std::vector<ImprovementRow> improvement_table(
    const std::vector<std::pair<std::string, double>>& pt,
    const std::vector<std::pair<std::string, double>>& ft) {
  std::map<std::string, double> pt_map, ft_map;
  for (const auto& [k, v] : pt)
    if (!pt_map.emplace(k, v).second)
      throw AggregationError("improvement_table: duplicate pretraining key " + k);
  for (const auto& [k, v] : ft)
    if (!ft_map.emplace(k, v).second)
      throw AggregationError("improvement_table: duplicate fine-tuning key " + k);
  for (const auto& [k, v] : pt_map)
    if (!ft_map.contains(k))
      throw AggregationError("improvement_table: key " + k + " missing from fine-tuning side");
  for (const auto& [k, v] : ft_map)
    if (!pt_map.contains(k))
      throw AggregationError("improvement_table: key " + k + " missing from pretraining side");

  std::vector<ImprovementRow> rows;
  rows.reserve(pt_map.size());
  for (const auto& [k, pv] : pt_map)
    rows.push_back({k, pv, ft_map.at(k), ft_map.at(k) - pv});
  return rows;  // map iteration is already key-sorted
}

// ---------------------------------------------------------------------------
// Writers.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

inline std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

}  // namespace detail

inline nlohmann::json protocol_row_to_json(const ProtocolRow& r) {
  nlohmann::json j{{"family", r.family}, {"loss", r.loss}, {"stage", r.stage}};
  j["psnr_db"] = r.psnr_db ? nlohmann::json(*r.psnr_db) : nlohmann::json();
  j["ssim"] = r.ssim ? nlohmann::json(*r.ssim) : nlohmann::json();
  j["macro_f1"] = r.macro_f1 ? nlohmann::json(*r.macro_f1) : nlohmann::json();
  j["best_psnr"] = r.best_psnr;
  j["best_ssim"] = r.best_ssim;
  j["best_f1"] = r.best_f1;
  j["note"] = r.note;
  return j;
}

inline ProtocolRow protocol_row_from_json(const nlohmann::json& j) {
  ProtocolRow r;
  r.family = j.at("family").get<std::string>();
  r.loss = j.at("loss").get<std::string>();
  r.stage = j.at("stage").get<std::string>();
  if (!j.at("psnr_db").is_null()) r.psnr_db = j.at("psnr_db").get<double>();
  if (!j.at("ssim").is_null()) r.ssim = j.at("ssim").get<double>();
  if (!j.at("macro_f1").is_null()) r.macro_f1 = j.at("macro_f1").get<double>();
  r.best_psnr = j.at("best_psnr").get<bool>();
  r.best_ssim = j.at("best_ssim").get<bool>();
  r.best_f1 = j.at("best_f1").get<bool>();
  r.note = j.at("note").get<std::string>();
  return r;
}

inline void write_protocol_csv(const ProtocolReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write report " + path.string());
  out << "family,loss,stage,psnr_db,ssim,macro_f1,best_psnr,best_ssim,best_f1,note\n";
  for (const auto& r : report.rows)
    out << detail::csv_field(r.family) << ',' << detail::csv_field(r.loss) << ','
        << detail::csv_field(r.stage) << ',' << detail::csv_number(r.psnr_db) << ','
        << detail::csv_number(r.ssim) << ',' << detail::csv_number(r.macro_f1) << ','
        << (r.best_psnr ? "1" : "0") << ',' << (r.best_ssim ? "1" : "0") << ','
        << (r.best_f1 ? "1" : "0") << ',' << detail::csv_field(r.note) << "\n";
}

inline void write_protocol_json(const ProtocolReport& report, const std::filesystem::path& path) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) j["rows"].push_back(protocol_row_to_json(r));
  j["metadata"] = report.metadata;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write report " + path.string());
  out << j.dump(2) << "\n";
}

inline void write_improvement_csv(const std::vector<ImprovementRow>& rows,
                                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write report " + path.string());
  out << "configuration,f1_pt,f1_ft,improvement\n";
  for (const auto& r : rows)
    out << detail::csv_field(r.configuration) << ',' << detail::csv_number(r.f1_pt) << ','
        << detail::csv_number(r.f1_ft) << ',' << detail::csv_number(r.delta) << "\n";
}

inline void write_improvement_json(const std::vector<ImprovementRow>& rows,
                                   const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({{"configuration", r.configuration},
                 {"f1_pt", r.f1_pt},
                 {"f1_ft", r.f1_ft},
                 {"improvement", r.delta}});
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write report " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace casr
