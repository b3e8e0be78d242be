#pragma once

// CLI-facing layer: maps user CSV files and flag/key-value configuration onto
// datasets, dispatches the interval constructions, and renders structured
// JSON output. Output files are pure functions of (inputs, seed); wall-clock
// measurements go to stderr, never into the payload.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ptd/csv.hpp"
#include "ptd/design.hpp"
#include "ptd/errors.hpp"
#include "ptd/estimators.hpp"
#include "ptd/intervals.hpp"
#include "ptd/simulation.hpp"

namespace ptd {

using Json = nlohmann::ordered_json;

struct RunConfig {
  std::string data_path;
  std::string response;  // may stay empty for the mean estimator
  std::vector<std::string> covariates;
  std::vector<std::pair<std::string, std::string>> proxy_map;  // true -> proxy column
  std::string label_col = "label";
  // Exactly one design specification:
  std::optional<double> pi_const;
  std::string pi_col;
  std::string cluster_col, cluster_pi_path;
  std::string stratum_col, stratum_counts_path;

  std::string estimator = "ols";
  double q = 0.5;
  std::string method = "full-boot";
  std::size_t replicates = 2000;
  double alpha = 0.1;
  std::string tuning = "diag";
  std::uint64_t seed = 0;
  std::string out_path;
  int threads = 1;  // execution knob; never echoed into output
};

inline EstimatorKind estimator_kind_from_string(const std::string& s) {
  if (s == "mean") return EstimatorKind::kMean;
  if (s == "ols") return EstimatorKind::kOls;
  if (s == "logistic") return EstimatorKind::kLogistic;
  if (s == "quantile") return EstimatorKind::kQuantile;
  throw InvalidConfigError("unknown estimator '" + s + "'");
}

inline Method method_from_string(const std::string& s) {
  if (s == "full-boot") return Method::kFullBoot;
  if (s == "conv-boot") return Method::kConvBoot;
  if (s == "clt") return Method::kClt;
  if (s == "cluster-boot") return Method::kClusterBoot;
  if (s == "cluster-conv-boot") return Method::kClusterConvBoot;
  if (s == "stratified-boot") return Method::kStratifiedBoot;
  throw InvalidConfigError("unknown method '" + s + "'");
}

inline TuningStrategy tuning_from_string(const std::string& s) {
  if (s == "identity") return TuningStrategy::kIdentity;
  if (s == "diag") return TuningStrategy::kOptDiag;
  if (s == "full") return TuningStrategy::kOptFull;
  throw InvalidConfigError("unknown tuning strategy '" + s + "'");
}

inline SimMethod sim_method_from_string(const std::string& s) {
  if (s == "classical") return SimMethod::kClassical;
  if (s == "naive") return SimMethod::kNaive;
  if (s == "full-boot") return SimMethod::kFullBoot;
  if (s == "conv-boot") return SimMethod::kConvBoot;
  if (s == "clt") return SimMethod::kClt;
  if (s == "cluster-boot") return SimMethod::kClusterBoot;
  if (s == "cluster-conv-boot") return SimMethod::kClusterConvBoot;
  if (s == "stratified-boot") return SimMethod::kStratifiedBoot;
  throw InvalidConfigError("unknown simulation method '" + s + "'");
}

// Exit-code classification: 1 usage, 2 data, 3 numerical failure.
inline int classify_error(const std::exception& e) {
  if (dynamic_cast<const InvalidConfigError*>(&e)) return 1;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const MissingOnLabeledError*>(&e) ||
      dynamic_cast<const InvalidLabelError*>(&e) || dynamic_cast<const InvalidDesignError*>(&e) ||
      dynamic_cast<const IncompatibleMethodDesignError*>(&e) ||
      dynamic_cast<const ShapeMismatchError*>(&e) || dynamic_cast<const EmptyInputError*>(&e))
    return 2;
  return 3;
}

struct IngestResult {
  Dataset dataset;
  std::vector<std::string> model_columns;      // names, matrix column order
  std::vector<std::string> coefficient_names;  // (intercept, covariates...) or columns
  std::vector<std::string> warnings;
};

namespace detail {

inline std::map<std::string, std::vector<std::string>> read_keyed_table(
    const std::string& path, std::size_t fields) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto cells = split_csv_line(t);
    if (cells.size() != fields)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(fields) + " fields");
    std::vector<std::string> rest(cells.begin() + 1, cells.end());
    if (!out.emplace(cells[0], std::move(rest)).second)
      throw ParseError(path + ":" + std::to_string(line_no) + ": duplicate key '" + cells[0] +
                       "'");
  }
  return out;
}

inline void validate_run_config(const RunConfig& cfg) {
  const EstimatorKind kind = estimator_kind_from_string(cfg.estimator);
  if (kind != EstimatorKind::kMean && cfg.response.empty())
    throw InvalidConfigError("--response is required for regression estimators");
  if (cfg.covariates.empty())
    throw InvalidConfigError(kind == EstimatorKind::kMean
                                 ? "--covariates must name the columns to average"
                                 : "--covariates must name at least one regressor");
  int designs = 0;
  designs += cfg.pi_const.has_value() ? 1 : 0;
  designs += cfg.pi_col.empty() ? 0 : 1;
  designs += cfg.cluster_col.empty() ? 0 : 1;
  designs += cfg.stratum_col.empty() ? 0 : 1;
  if (designs != 1)
    throw InvalidConfigError("exactly one of --pi, --pi-col, --cluster-col, --stratum-col "
                             "must be given");
  if (!cfg.cluster_col.empty() && cfg.cluster_pi_path.empty())
    throw InvalidConfigError("--cluster-col requires --cluster-pi <file>");
  if (!cfg.stratum_col.empty() && cfg.stratum_counts_path.empty())
    throw InvalidConfigError("--stratum-col requires --stratum-counts <file>");
  const Method method = method_from_string(cfg.method);
  if ((method == Method::kClusterBoot || method == Method::kClusterConvBoot) &&
      cfg.cluster_col.empty())
    throw IncompatibleMethodDesignError("method '" + cfg.method + "' needs --cluster-col");
  if (method == Method::kStratifiedBoot && cfg.stratum_col.empty())
    throw IncompatibleMethodDesignError("stratified-boot needs --stratum-col");
  if (cfg.proxy_map.empty())
    throw InvalidConfigError("--proxy-map must pair at least one true column with its proxy");
}

}  // namespace detail

inline EstimatorSpec make_estimator_spec(const RunConfig& cfg, std::size_t n_model_columns) {
  EstimatorSpec spec;
  spec.kind = estimator_kind_from_string(cfg.estimator);
  spec.quantile_level = cfg.q;
  if (spec.kind == EstimatorKind::kMean) {
    spec.include_intercept = false;
    spec.covariate_columns.resize(n_model_columns);
    for (std::size_t j = 0; j < n_model_columns; ++j) spec.covariate_columns[j] = j;
  } else {
    spec.response_column = 0;
    spec.include_intercept = true;
    spec.covariate_columns.resize(n_model_columns - 1);
    for (std::size_t j = 1; j < n_model_columns; ++j) spec.covariate_columns[j - 1] = j;
  }
  return spec;
}

// Builds the Dataset from a CSV file: model columns are (response,
// covariates...) — just the covariates for the mean — truth values come from
// the named columns and proxy values from their mapped proxy columns.
// Unlabeled rows may leave mapped true cells empty; labeled rows must be
// fully populated.
inline IngestResult ingest_csv(const std::string& path, const RunConfig& cfg) {
  detail::validate_run_config(cfg);
  const CsvTable table = read_csv(path);
  const std::size_t n = table.rows.size();
  if (n == 0) throw ParseError("'" + path + "' contains no data rows");

  IngestResult out;
  const EstimatorKind kind = estimator_kind_from_string(cfg.estimator);
  if (kind != EstimatorKind::kMean) out.model_columns.push_back(cfg.response);
  for (const auto& c : cfg.covariates) out.model_columns.push_back(c);
  if (kind == EstimatorKind::kMean) {
    out.coefficient_names = out.model_columns;
  } else {
    out.coefficient_names.push_back("(intercept)");
    for (const auto& c : cfg.covariates) out.coefficient_names.push_back(c);
  }

  const std::size_t p = out.model_columns.size();
  std::vector<std::size_t> true_idx(p);
  std::vector<std::size_t> proxy_idx(p);
  std::vector<bool> mapped(p, false);
  for (std::size_t j = 0; j < p; ++j) {
    true_idx[j] = table.column_index(out.model_columns[j]);
    proxy_idx[j] = true_idx[j];
    for (const auto& [truth_name, proxy_name] : cfg.proxy_map)
      if (truth_name == out.model_columns[j]) {
        proxy_idx[j] = table.column_index(proxy_name);
        mapped[j] = true;
      }
  }
  for (const auto& [truth_name, proxy_name] : cfg.proxy_map) {
    if (std::find(out.model_columns.begin(), out.model_columns.end(), truth_name) ==
        out.model_columns.end())
      out.warnings.push_back("proxy mapping for unused column '" + truth_name + "' ignored");
  }
  const std::size_t label_idx = table.column_index(cfg.label_col);

  Dataset ds;
  ds.truth = Matrix(n, p);
  ds.proxy = Matrix(n, p);
  ds.labeled.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& label_cell = table.rows[i][label_idx];
    if (label_cell == "0")
      ds.labeled[i] = 0;
    else if (label_cell == "1")
      ds.labeled[i] = 1;
    else
      throw InvalidLabelError("row " + std::to_string(i + 1) + ": label '" + label_cell +
                              "' is not 0 or 1");
    for (std::size_t j = 0; j < p; ++j) {
      const auto proxy_val =
          parse_cell(table.rows[i][proxy_idx[j]], table.header[proxy_idx[j]], i);
      if (!proxy_val)
        throw ParseError("row " + std::to_string(i + 1) + ": proxy column '" +
                         table.header[proxy_idx[j]] + "' is empty");
      ds.proxy(i, j) = *proxy_val;
      const auto true_val =
          parse_cell(table.rows[i][true_idx[j]], table.header[true_idx[j]], i);
      if (true_val) {
        ds.truth(i, j) = *true_val;
      } else if (ds.labeled[i]) {
        throw MissingOnLabeledError("row " + std::to_string(i + 1) + ": labeled row lacks '" +
                                    out.model_columns[j] + "'");
      } else if (!mapped[j]) {
        throw ParseError("row " + std::to_string(i + 1) + ": column '" + out.model_columns[j] +
                         "' has no proxy mapping and may not be empty");
      } else {
        ds.truth(i, j) = kMissing;
      }
    }
  }

  // Design.
  if (cfg.pi_const) {
    ds.design = UniformBernoulli{*cfg.pi_const};
  } else if (!cfg.pi_col.empty()) {
    WeightedBernoulli wb;
    wb.pi.resize(n);
    const std::size_t pi_idx = table.column_index(cfg.pi_col);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = parse_cell(table.rows[i][pi_idx], cfg.pi_col, i);
      if (!v) throw ParseError("row " + std::to_string(i + 1) + ": empty probability cell");
      wb.pi[i] = *v;
    }
    ds.design = std::move(wb);
  } else if (!cfg.cluster_col.empty()) {
    const auto pi_table = detail::read_keyed_table(cfg.cluster_pi_path, 2);
    Clustered cl;
    cl.cluster_of.resize(n);
    std::map<std::string, std::int32_t> ids;
    const std::size_t cidx = table.column_index(cfg.cluster_col);
    for (const auto& [key, _] : pi_table)
      ids.emplace(key, static_cast<std::int32_t>(ids.size()));
    cl.pi_k.resize(ids.size());
    for (const auto& [key, fields] : pi_table) {
      const auto v = parse_cell(fields[0], "pi", 0);
      if (!v) throw ParseError("cluster-pi file: empty probability for '" + key + "'");
      cl.pi_k[static_cast<std::size_t>(ids.at(key))] = *v;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = ids.find(table.rows[i][cidx]);
      if (it == ids.end())
        throw InvalidDesignError("row " + std::to_string(i + 1) + ": cluster '" +
                                 table.rows[i][cidx] + "' missing from the cluster-pi file");
      cl.cluster_of[i] = it->second;
    }
    ds.design = std::move(cl);
  } else {
    const auto counts = detail::read_keyed_table(cfg.stratum_counts_path, 3);
    Stratified st;
    st.stratum_of.resize(n);
    std::map<std::string, std::int32_t> ids;
    for (const auto& [key, _] : counts) ids.emplace(key, static_cast<std::int32_t>(ids.size()));
    st.n_complete.resize(ids.size());
    st.n_incomplete.resize(ids.size());
    for (const auto& [key, fields] : counts) {
      const auto s = static_cast<std::size_t>(ids.at(key));
      st.n_complete[s] = static_cast<std::int64_t>(std::stoll(fields[0]));
      st.n_incomplete[s] = static_cast<std::int64_t>(std::stoll(fields[1]));
    }
    const std::size_t sidx = table.column_index(cfg.stratum_col);
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = ids.find(table.rows[i][sidx]);
      if (it == ids.end())
        throw InvalidDesignError("row " + std::to_string(i + 1) + ": stratum '" +
                                 table.rows[i][sidx] + "' missing from the counts file");
      st.stratum_of[i] = it->second;
    }
    ds.design = std::move(st);
  }

  validate_dataset(ds);
  for (auto& w : design_warnings(ds)) out.warnings.push_back(std::move(w));
  out.dataset = std::move(ds);
  return out;
}

inline IngestResult ingest_csv(const RunConfig& cfg) { return ingest_csv(cfg.data_path, cfg); }

// Re-emits the model columns of a dataset; used to verify ingestion
// round-trips numeric fields at full precision.
inline std::string write_dataset_csv(const Dataset& ds, const std::vector<std::string>& names) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j] << "_true";
  for (std::size_t j = 0; j < names.size(); ++j) out << "," << names[j] << "_proxy";
  out << ",label\n";
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      if (j) out << ",";
      if (std::isfinite(ds.truth(i, j))) out << ds.truth(i, j);
    }
    for (std::size_t j = 0; j < ds.cols(); ++j) out << "," << ds.proxy(i, j);
    out << "," << (ds.labeled[i] ? 1 : 0) << "\n";
  }
  return out.str();
}

struct AnalysisRun {
  PTDResult result;
  Json document;
};

inline Json config_echo(const RunConfig& cfg) {
  Json j;
  j["data"] = cfg.data_path;
  j["response"] = cfg.response;
  j["covariates"] = cfg.covariates;
  Json pm = Json::object();
  for (const auto& [t, p] : cfg.proxy_map) pm[t] = p;
  j["proxy_map"] = pm;
  j["label_col"] = cfg.label_col;
  Json design = Json::object();
  if (cfg.pi_const) {
    design["type"] = "uniform-bernoulli";
    design["pi"] = *cfg.pi_const;
  } else if (!cfg.pi_col.empty()) {
    design["type"] = "weighted-bernoulli";
    design["pi_col"] = cfg.pi_col;
  } else if (!cfg.cluster_col.empty()) {
    design["type"] = "clustered";
    design["cluster_col"] = cfg.cluster_col;
    design["cluster_pi"] = cfg.cluster_pi_path;
  } else {
    design["type"] = "stratified";
    design["stratum_col"] = cfg.stratum_col;
    design["stratum_counts"] = cfg.stratum_counts_path;
  }
  j["design"] = design;
  j["estimator"] = cfg.estimator;
  if (cfg.estimator == "quantile") j["q"] = cfg.q;
  j["method"] = cfg.method;
  j["B"] = cfg.replicates;
  j["alpha"] = cfg.alpha;
  j["tuning"] = cfg.tuning;
  j["seed"] = cfg.seed;
  return j;
}

inline AnalysisRun run_analysis(const RunConfig& cfg) {
  const IngestResult ingest = ingest_csv(cfg);
  const EstimatorSpec spec = make_estimator_spec(cfg, ingest.model_columns.size());

  IntervalConfig icfg;
  icfg.replicates = cfg.replicates;
  icfg.alpha = cfg.alpha;
  icfg.tuning = tuning_from_string(cfg.tuning);
  icfg.method = method_from_string(cfg.method);
  icfg.master_seed = cfg.seed;
  icfg.threads = cfg.threads;

  AnalysisRun run;
  run.result = run_intervals(ingest.dataset, spec, icfg);

  Json doc;
  doc["schema"] = "ptd-analysis/1";
  doc["config"] = config_echo(cfg);
  Json coeffs = Json::array();
  for (std::size_t j = 0; j < run.result.point.size(); ++j) {
    Json c;
    c["name"] = ingest.coefficient_names[j];
    c["point"] = run.result.point[j];
    c["lo"] = run.result.intervals[j].lo;
    c["hi"] = run.result.intervals[j].hi;
    c["alpha"] = run.result.alpha;
    c["method"] = run.result.method;
    c["tuning"] = run.result.tuning.label();
    coeffs.push_back(std::move(c));
  }
  doc["coefficients"] = coeffs;
  Json diag;
  diag["B"] = run.result.diagnostics.replicates;
  diag["redraws"] = run.result.diagnostics.redraws;
  diag["seed"] = cfg.seed;
  diag["ridge_applied"] = run.result.diagnostics.ridge_applied;
  diag["convolution_inner_bootstrap"] = run.result.diagnostics.convolution_inner_bootstrap;
  diag["point_fit_converged"] = run.result.diagnostics.point_fit_converged;
  diag["warnings"] = ingest.warnings;
  doc["diagnostics"] = diag;
  run.document = std::move(doc);
  return run;
}

// ---------------------------------------------------------------------------
// Scenario files: plain-text key = value lines driving the simulation module.

struct ScenarioBand {
  std::string method;
  double min = 0.0;
  double max = 1.0;
};

struct Scenario {
  ScenarioConfig config;
  std::vector<SimMethod> methods;
  std::vector<ScenarioBand> coverage_bands;
  std::vector<std::pair<std::string, std::string>> echo;  // parsed keys in file order
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  const std::string last = trim(cur);
  if (!last.empty() || !out.empty()) out.push_back(last);
  return out;
}

inline double to_double(const std::string& v, const std::string& key, std::size_t line) {
  const auto parsed = parse_cell(v, key, line);
  if (!parsed) throw InvalidConfigError("line " + std::to_string(line) + ": empty value");
  return *parsed;
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfigError("cannot open scenario '" + path + "'");
  Scenario sc;
  ScenarioConfig& cfg = sc.config;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, ScenarioBand> bands;  // keyed by method
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw InvalidConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    sc.echo.emplace_back(key, value);
    auto num = [&] { return detail::to_double(value, key, line_no); };
    auto num_list = [&] {
      std::vector<double> out;
      for (const auto& item : detail::split_list(value))
        out.push_back(detail::to_double(item, key, line_no));
      return out;
    };
    try {
      if (key == "regime") {
        if (value == "error-in-response")
          cfg.regime = Regime::kErrorInResponse;
        else if (value == "error-in-covariate")
          cfg.regime = Regime::kErrorInCovariate;
        else if (value == "error-in-both")
          cfg.regime = Regime::kErrorInBoth;
        else
          throw InvalidConfigError("unknown regime '" + value + "'");
      } else if (key == "estimator") {
        cfg.estimator = estimator_kind_from_string(value);
      } else if (key == "q") {
        cfg.quantile_level = num();
      } else if (key == "n_rows") {
        cfg.n_rows = static_cast<std::size_t>(num());
      } else if (key == "covariate_dim") {
        cfg.covariate_dim = static_cast<std::size_t>(num());
      } else if (key == "design") {
        if (value == "uniform")
          cfg.design.kind = ScenarioDesign::Kind::kUniform;
        else if (value == "weighted")
          cfg.design.kind = ScenarioDesign::Kind::kWeightedBernoulli;
        else if (value == "cluster")
          cfg.design.kind = ScenarioDesign::Kind::kClustered;
        else if (value == "stratified")
          cfg.design.kind = ScenarioDesign::Kind::kStratified;
        else
          throw InvalidConfigError("unknown design '" + value + "'");
      } else if (key == "pi") {
        cfg.design.pi_labeled = num();
      } else if (key == "pi_min") {
        cfg.design.pi_min = num();
      } else if (key == "pi_max") {
        cfg.design.pi_max = num();
      } else if (key == "cluster_size") {
        cfg.design.cluster_size = static_cast<std::size_t>(num());
      } else if (key == "cluster_count") {
        cfg.design.cluster_count = static_cast<std::size_t>(num());
      } else if (key == "cluster_pi") {
        cfg.design.cluster_pi = num();
      } else if (key == "stratum_sizes") {
        cfg.design.stratum_sizes.clear();
        for (double v : num_list()) cfg.design.stratum_sizes.push_back(static_cast<std::size_t>(v));
      } else if (key == "stratum_complete") {
        cfg.design.stratum_complete.clear();
        for (double v : num_list())
          cfg.design.stratum_complete.push_back(static_cast<std::int64_t>(v));
      } else if (key == "stratum_shift") {
        cfg.stratum_shift = num_list();
      } else if (key == "true_theta") {
        cfg.true_theta = num_list();
      } else if (key == "noise_sd") {
        cfg.noise_sd = num();
      } else if (key == "het_scale") {
        cfg.het_scale = num();
      } else if (key == "mean_proxy_rho") {
        cfg.mean_proxy_rho = num();
      } else if (key == "response_bias") {
        cfg.response_noise.bias = num();
      } else if (key == "response_scale") {
        cfg.response_noise.scale = num();
      } else if (key == "response_noise_sd") {
        cfg.response_noise.noise_sd = num();
      } else if (key == "covariate_bias") {
        cfg.covariate_noise.bias = num();
      } else if (key == "covariate_scale") {
        cfg.covariate_noise.scale = num();
      } else if (key == "covariate_noise_sd") {
        cfg.covariate_noise.noise_sd = num();
      } else if (key == "cluster_sd_y") {
        cfg.cluster_sd_y = num();
      } else if (key == "cluster_sd_z") {
        cfg.cluster_sd_z = num();
      } else if (key == "cluster_sd_proxy") {
        cfg.cluster_sd_proxy = num();
      } else if (key == "n_sims") {
        cfg.n_sims = static_cast<std::size_t>(num());
      } else if (key == "B") {
        cfg.interval_cfg.replicates = static_cast<std::size_t>(num());
      } else if (key == "alpha") {
        cfg.interval_cfg.alpha = num();
      } else if (key == "tuning") {
        cfg.interval_cfg.tuning = tuning_from_string(value);
      } else if (key == "seed") {
        cfg.master_seed = static_cast<std::uint64_t>(num());
      } else if (key == "methods") {
        sc.methods.clear();
        for (const auto& item : detail::split_list(value))
          sc.methods.push_back(sim_method_from_string(item));
      } else if (key.rfind("require.", 0) == 0) {
        // require.<method>.coverage.min / require.<method>.coverage.max
        const std::string rest = key.substr(8);
        const auto dot = rest.rfind(".coverage.min");
        const auto dot2 = rest.rfind(".coverage.max");
        if (dot != std::string::npos && dot + 13 == rest.size()) {
          bands[rest.substr(0, dot)].min = num();
        } else if (dot2 != std::string::npos && dot2 + 13 == rest.size()) {
          bands[rest.substr(0, dot2)].max = num();
        } else {
          throw InvalidConfigError("unknown requirement key '" + key + "'");
        }
      } else {
        throw InvalidConfigError("unknown key '" + key + "'");
      }
    } catch (const InvalidConfigError& e) {
      throw InvalidConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (sc.methods.empty()) throw InvalidConfigError(path + ": no methods declared");
  for (auto& [method, band] : bands) {
    band.method = method;
    sim_method_from_string(method);  // validates the name
    sc.coverage_bands.push_back(band);
  }
  return sc;
}

struct SimulationRun {
  CoverageReport report;
  Json document;
  bool bands_pass = true;
};

inline SimulationRun run_simulation(const Scenario& sc, int threads = 1) {
  ScenarioConfig cfg = sc.config;
  cfg.interval_cfg.threads = threads;
  SimulationRun run;
  run.report = run_coverage_experiment(cfg, sc.methods);

  Json doc;
  doc["schema"] = "ptd-simulate/1";
  Json echo = Json::object();
  for (const auto& [k, v] : sc.echo) echo[k] = v;
  doc["scenario"] = echo;
  doc["estimand"] = run.report.estimand;
  Json methods = Json::object();
  for (const auto& m : run.report.methods) {
    Json mj;
    mj["coverage"] = m.coverage;
    mj["mean_width"] = m.mean_width;
    mj["width_sd"] = m.width_sd;
    mj["mean_bias"] = m.mean_bias;
    mj["sims_used"] = m.sims_used;
    mj["failures"] = m.failures;
    methods[m.name] = std::move(mj);
  }
  doc["methods"] = methods;
  Json bands = Json::array();
  for (const auto& band : sc.coverage_bands) {
    Json bj;
    bj["method"] = band.method;
    bj["metric"] = "coverage";
    bj["min"] = band.min;
    bj["max"] = band.max;
    bool found = false;
    bool pass = true;
    for (const auto& m : run.report.methods) {
      if (m.name != band.method) continue;
      found = true;
      bj["observed"] = m.coverage;
      for (double c : m.coverage) pass = pass && c >= band.min && c <= band.max;
      pass = pass && m.failures == 0;
    }
    if (!found) throw InvalidConfigError("band references method '" + band.method +
                                         "' that is not in the methods list");
    bj["pass"] = pass;
    run.bands_pass = run.bands_pass && pass;
    bands.push_back(std::move(bj));
  }
  doc["bands"] = bands;
  doc["pass"] = run.bands_pass;
  doc["n_sims"] = run.report.n_sims;
  run.document = std::move(doc);
  return run;
}

inline SimulationRun run_simulation(const std::string& scenario_path, int threads = 1) {
  return run_simulation(parse_scenario(scenario_path), threads);
}

}  // namespace ptd
