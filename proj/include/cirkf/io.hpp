#pragma once

// File formats: client and path CSVs, filter traces, calibration and
// baseline JSON, the cohort manifest and experiment reports. Doubles are
// written with 17 significant digits so files round-trip exactly.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cirkf/baselines.hpp"
#include "cirkf/cir.hpp"
#include "cirkf/errors.hpp"
#include "cirkf/eval.hpp"
#include "cirkf/shift.hpp"
#include "cirkf/statespace.hpp"
#include "cirkf/synth.hpp"

namespace cirkf::io {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kClientCsvHeader = "t,risk_score,label";
inline constexpr const char* kPathCsvHeader = "t,lambda";
inline constexpr const char* kTraceCsvHeader = "t,y,lambda_pred,lambda_filt,v_filt,innovation";

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
    if (!out.flush()) throw DataError("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---- CSV ------------------------------------------------------------------

inline std::string path_csv(const IntensityPath& p) {
  std::string s = std::string(kPathCsvHeader) + "\n";
  for (std::size_t i = 0; i < p.values.size(); ++i)
    s += fmt(p.t0 + static_cast<double>(i) * p.dt) + "," + fmt(p.values[i]) + "\n";
  return s;
}

inline std::string series_csv(const TransactionSeries& s) {
  std::string out = std::string(s.labels ? kClientCsvHeader : "t,risk_score") + "\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += fmt(s.timestamps[i]) + "," + fmt(s.risk_scores[i]);
    if (s.labels) out += "," + std::to_string((*s.labels)[i]);
    out += "\n";
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": not a number: '" + s + "'");
  }
}

}  // namespace detail

/// Parses a client CSV with header `t,risk_score[,label]`.
inline TransactionSeries parse_series_csv(const std::string& text, const std::string& client_id) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError(client_id + ": empty CSV");
  const auto header = detail::split_fields(line);
  const bool has_labels = header.size() == 3 && header[2] == "label";
  if (header.size() < 2 || header[0] != "t" || header[1] != "risk_score" ||
      (header.size() == 3 && !has_labels) || header.size() > 3)
    throw DataError(client_id + ": expected header '" + kClientCsvHeader + "'");

  TransactionSeries s;
  s.client_id = client_id;
  if (has_labels) s.labels.emplace();
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_fields(line);
    const std::string where = client_id + " row " + std::to_string(row);
    if (f.size() != header.size()) throw DataError(where + ": wrong number of fields");
    s.timestamps.push_back(detail::parse_double(f[0], where));
    s.risk_scores.push_back(detail::parse_double(f[1], where));
    if (has_labels) {
      if (f[2] != "0" && f[2] != "1") throw DataError(where + ": label must be 0 or 1");
      s.labels->push_back(f[2] == "1" ? 1 : 0);
    }
  }
  s.validate();
  return s;
}

inline TransactionSeries read_series_csv(const fs::path& path) {
  return parse_series_csv(read_file(path), path.stem().string());
}

inline std::string filter_trace_csv(const FilterResult& r, std::span<const double> y, double t0,
                                    double dt) {
  std::string s = std::string(kTraceCsvHeader) + "\n";
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    const auto& st = r.steps[i];
    s += fmt(t0 + static_cast<double>(i) * dt) + "," + fmt(y[i]) + "," + fmt(st.predicted_lambda) +
         "," + fmt(st.updated.lambda_filtered) + "," + fmt(st.updated.variance) + "," +
         fmt(st.innovation) + "\n";
  }
  return s;
}

// ---- JSON -----------------------------------------------------------------

inline json to_json(const CirParams& p) {
  return json{{"kappa", p.kappa}, {"theta", p.theta}, {"sigma", p.sigma}};
}

inline CirParams params_from_json(const json& j) {
  try {
    CirParams p{j.at("kappa").get<double>(), j.at("theta").get<double>(),
                j.at("sigma").get<double>()};
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad parameter object: ") + e.what());
  }
}

inline json calibration_json(const CalibrationResult& c) {
  return json{{"kappa", c.params.kappa},   {"theta", c.params.theta},
              {"sigma", c.params.sigma},   {"w", c.w},
              {"loglik", c.log_likelihood}, {"converged", c.converged},
              {"n_obs", c.n_obs}};
}

inline json shift_json(const CorrectedParams& c) {
  return json{{"alpha_shift", c.alpha_shift},
              {"theta_star", c.params.theta},
              {"sigma_star", c.params.sigma},
              {"kappa_refit", c.params.kappa},
              {"n_negative", c.n_negative}};
}

/// Calibration fields and shift diagnostics in one flat document.
inline json kf_model_json(const KfModel& m) {
  json j = calibration_json(m.calibration);
  j.update(shift_json(m.correction));
  return j;
}

inline json baseline_json(std::string_view model, const PolyIntensity& f, double loglik) {
  return json{{"model", std::string(model)}, {"coeffs", f.coeffs}, {"loglik", loglik}};
}

// ---- cohort ---------------------------------------------------------------

inline json cohort_config_json(const CohortConfig& c) {
  return json{{"n_clients", c.n_clients},
              {"group_boundaries", c.group_boundaries},
              {"tx_min", c.tx_min},
              {"tx_max", c.tx_max},
              {"kappa_min", c.kappa_min},
              {"kappa_max", c.kappa_max},
              {"shape_min", c.shape_min},
              {"shape_max", c.shape_max},
              {"rho_target", c.rho_target},
              {"seed", c.seed},
              {"max_attempts_per_client", c.max_attempts_per_client},
              {"score_model",
               {{"base_rel", c.score_model.base_rel},
                {"noise_rel", c.score_model.noise_rel},
                {"max_jump", c.score_model.max_jump},
                {"pilot_length", c.score_model.pilot_length}}}};
}

inline std::string client_file(const std::string& client_id) { return "clients/" + client_id + ".csv"; }

inline json manifest_json(const Cohort& cohort, const CohortConfig& cfg) {
  json groups = json::array();
  json clients = json::array();
  for (std::size_t g = 0; g < cohort.groups.size(); ++g) {
    const auto& grp = cohort.groups[g];
    groups.push_back({{"index", g}, {"label", grp.label()}, {"lower", grp.lower},
                      {"upper", grp.upper}, {"n_clients", grp.clients.size()}});
    for (const auto& c : grp.clients) {
      clients.push_back({{"client_id", c.series.client_id},
                         {"group", g},
                         {"file", client_file(c.series.client_id)},
                         {"true_params", to_json(c.true_params)},
                         {"seed", c.seed},
                         {"target_prop", c.target_prop},
                         {"label_jump", c.label_jump},
                         {"n_tx", c.series.size()},
                         {"realized_prop", c.series.fraud_proportion()}});
    }
  }
  return json{{"schema_version", kSchemaVersion},
              {"csv_schemas", {{"client", kClientCsvHeader}, {"path", kPathCsvHeader},
                               {"filter_trace", kTraceCsvHeader}}},
              {"seed", cohort.seed},
              {"attempts", cohort.attempts},
              {"dropped", cohort.dropped},
              {"config", cohort_config_json(cfg)},
              {"groups", groups},
              {"clients", clients}};
}

inline void write_cohort(const Cohort& cohort, const CohortConfig& cfg, const fs::path& dir) {
  for (const auto& g : cohort.groups)
    for (const auto& c : g.clients)
      write_file_atomic(dir / client_file(c.series.client_id), series_csv(c.series));
  write_file_atomic(dir / "manifest.json", dump(manifest_json(cohort, cfg)));
}

/// Rebuilds a cohort from its manifest. Latent intensities are not persisted,
/// so `intensity` stays empty.
inline Cohort read_cohort(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) throw DataError("no manifest.json in " + dir.string());
  const json j = read_json(manifest);
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw DataError("unsupported cohort schema version");
    Cohort cohort;
    cohort.seed = j.at("seed").get<std::uint64_t>();
    cohort.attempts = j.value("attempts", std::size_t{0});
    cohort.dropped = j.value("dropped", std::size_t{0});
    for (const auto& g : j.at("groups"))
      cohort.groups.push_back(CohortGroup{g.at("lower").get<double>(), g.at("upper").get<double>(), {}});
    for (const auto& c : j.at("clients")) {
      const auto g = c.at("group").get<std::size_t>();
      if (g >= cohort.groups.size()) throw DataError("manifest: client group out of range");
      GeneratedClient gc;
      gc.series = parse_series_csv(read_file(dir / c.at("file").get<std::string>()),
                                   c.at("client_id").get<std::string>());
      gc.true_params = params_from_json(c.at("true_params"));
      gc.seed = c.value("seed", std::uint64_t{0});
      gc.target_prop = c.value("target_prop", 0.0);
      gc.label_jump = c.value("label_jump", 0.0);
      cohort.groups[g].clients.push_back(std::move(gc));
    }
    return cohort;
  } catch (const json::exception& e) {
    throw DataError("manifest: " + std::string(e.what()));
  }
}

// ---- reports --------------------------------------------------------------

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json nan_json(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

inline json report_json(const ExperimentReport& r) {
  json models = json::array();
  for (Model m : r.models) models.push_back(std::string(model_name(m)));
  json groups = json::array();
  for (const auto& g : r.groups) {
    json per_model = json::object();
    for (std::size_t k = 0; k < r.models.size(); ++k) {
      const auto& s = g.models[k];
      per_model[std::string(model_name(r.models[k]))] = {
          {"median_auc", nan_json(s.median_auc)}, {"median_ap", nan_json(s.median_ap)},
          {"n_auc", s.n_auc}, {"n_ap", s.n_ap}, {"n_failed", s.n_failed}};
    }
    groups.push_back({{"label", g.label}, {"lower", g.lower}, {"upper", g.upper},
                      {"n_clients", g.n_clients}, {"n_single_class", g.n_single_class},
                      {"models", per_model}});
  }
  json clients = json::array();
  for (const auto& c : r.clients) {
    json per_model = json::object();
    for (std::size_t k = 0; k < r.models.size(); ++k) {
      json e{{"auc", opt_json(c.metrics[k].auc)}, {"ap", opt_json(c.metrics[k].ap)}};
      if (!c.errors[k].empty()) e["error"] = c.errors[k];
      per_model[std::string(model_name(r.models[k]))] = e;
    }
    clients.push_back({{"client_id", c.client_id}, {"group", c.group},
                       {"realized_prop", c.realized_prop}, {"n_test", c.n_test},
                       {"n_test_frauds", c.n_test_frauds}, {"models", per_model}});
  }
  return json{{"schema_version", kSchemaVersion},
              {"metadata", {{"seed", r.seed}, {"cohort_seed", r.cohort_seed},
                            {"config_hash", r.config_hash}}},
              {"models", models},
              {"groups", groups},
              {"clients", clients}};
}

inline double json_median(const json& v) {
  return v.is_null() ? std::nan("") : v.get<double>();
}

/// Inverse of report_json for the summary part; per-client errors are kept.
inline ExperimentReport report_from_json(const json& j) {
  try {
    ExperimentReport r;
    for (const auto& m : j.at("models")) r.models.push_back(parse_model(m.get<std::string>()));
    const auto& meta = j.at("metadata");
    r.seed = meta.at("seed").get<std::uint64_t>();
    r.cohort_seed = meta.at("cohort_seed").get<std::uint64_t>();
    r.config_hash = meta.at("config_hash").get<std::string>();
    for (const auto& g : j.at("groups")) {
      GroupSummary gs;
      gs.label = g.at("label").get<std::string>();
      gs.lower = g.at("lower").get<double>();
      gs.upper = g.at("upper").get<double>();
      gs.n_clients = g.at("n_clients").get<std::size_t>();
      gs.n_single_class = g.at("n_single_class").get<std::size_t>();
      for (Model m : r.models) {
        const auto& s = g.at("models").at(std::string(model_name(m)));
        gs.models.push_back(ModelSummary{json_median(s.at("median_auc")),
                                         json_median(s.at("median_ap")),
                                         s.at("n_auc").get<std::size_t>(),
                                         s.at("n_ap").get<std::size_t>(),
                                         s.at("n_failed").get<std::size_t>()});
      }
      r.groups.push_back(std::move(gs));
    }
    for (const auto& c : j.at("clients")) {
      ClientEvaluation ev;
      ev.client_id = c.at("client_id").get<std::string>();
      ev.group = c.at("group").get<std::size_t>();
      ev.realized_prop = c.at("realized_prop").get<double>();
      ev.n_test = c.at("n_test").get<std::size_t>();
      ev.n_test_frauds = c.at("n_test_frauds").get<std::size_t>();
      for (Model m : r.models) {
        const auto& e = c.at("models").at(std::string(model_name(m)));
        MetricPair mp;
        if (!e.at("auc").is_null()) mp.auc = e.at("auc").get<double>();
        if (!e.at("ap").is_null()) mp.ap = e.at("ap").get<double>();
        ev.metrics.push_back(mp);
        ev.errors.push_back(e.value("error", std::string{}));
      }
      r.clients.push_back(std::move(ev));
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError("report: " + std::string(e.what()));
  }
}

enum class Metric { auc, ap };

inline double summary_value(const ModelSummary& s, Metric m) {
  return m == Metric::auc ? s.median_auc : s.median_ap;
}

/// Rows are models, columns are groups.
inline std::string table_csv(const ExperimentReport& r, Metric metric) {
  std::string s = "model";
  for (std::size_t g = 0; g < r.groups.size(); ++g) s += ",group_" + std::to_string(g + 1);
  s += "\n";
  for (std::size_t k = 0; k < r.models.size(); ++k) {
    s += std::string(model_name(r.models[k]));
    for (const auto& g : r.groups) {
      const double v = summary_value(g.models[k], metric);
      s += "," + (std::isnan(v) ? std::string("NA") : fmt(v));
    }
    s += "\n";
  }
  return s;
}

/// Long-format points for a median-versus-group line plot.
inline std::string plot_points_csv(const ExperimentReport& r, Metric metric) {
  std::string s = "group,lower,upper,model,median,n\n";
  for (std::size_t g = 0; g < r.groups.size(); ++g) {
    const auto& gs = r.groups[g];
    for (std::size_t k = 0; k < r.models.size(); ++k) {
      const auto& ms = gs.models[k];
      const double v = summary_value(ms, metric);
      s += std::to_string(g + 1) + "," + fmt(gs.lower) + "," + fmt(gs.upper) + "," +
           std::string(model_name(r.models[k])) + "," + (std::isnan(v) ? std::string("NA") : fmt(v)) +
           "," + std::to_string(metric == Metric::auc ? ms.n_auc : ms.n_ap) + "\n";
    }
  }
  return s;
}

/// report.json, auc_table.csv, ap_table.csv, auc_points.csv, ap_points.csv.
inline void write_report(const ExperimentReport& r, const fs::path& dir) {
  write_file_atomic(dir / "report.json", dump(report_json(r)));
  write_file_atomic(dir / "auc_table.csv", table_csv(r, Metric::auc));
  write_file_atomic(dir / "ap_table.csv", table_csv(r, Metric::ap));
  write_file_atomic(dir / "auc_points.csv", plot_points_csv(r, Metric::auc));
  write_file_atomic(dir / "ap_points.csv", plot_points_csv(r, Metric::ap));
}

}  // namespace cirkf::io
