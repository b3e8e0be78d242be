// Command-line front end: `analyze` runs the Predict-Then-Debias interval
// constructions on a user CSV; `simulate` drives the Monte Carlo coverage
// harness from a scenario file. Output files depend only on inputs and the
// seed; timing goes to stderr.

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ptd/run.hpp"

namespace {

void write_output(const ptd::Json& doc, const std::string& out_path) {
  const std::string payload = doc.dump(2) + "\n";
  if (out_path.empty() || out_path == "-") {
    std::cout << payload;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ptd::ParseError("cannot write '" + out_path + "'");
  out << payload;
}

// Plain-text key = value config file; flags given on the command line win.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ptd::InvalidConfigError("cannot open config '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = ptd::detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ptd::InvalidConfigError(path + ":" + std::to_string(line_no) +
                                    ": expected key = value");
    kv[ptd::detail::trim(t.substr(0, eq))] = ptd::detail::trim(t.substr(eq + 1));
  }
  return kv;
}

std::vector<std::pair<std::string, std::string>> parse_proxy_map(const std::string& value) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : ptd::detail::split_list(value)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw ptd::InvalidConfigError("--proxy-map entries look like true=proxy, got '" + item +
                                    "'");
    out.emplace_back(ptd::detail::trim(item.substr(0, eq)),
                     ptd::detail::trim(item.substr(eq + 1)));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predict-Then-Debias estimation and confidence intervals"};
  app.require_subcommand(1);

  // --- analyze ---------------------------------------------------------
  auto* analyze = app.add_subcommand("analyze", "Debiased analysis of a CSV dataset");
  std::string config_path;
  std::string data, response, covariates, proxy_map_arg, label_col, pi_col, cluster_col,
      cluster_pi, stratum_col, stratum_counts, estimator, method, tuning, out_path;
  double pi_const = -1.0, q = -1.0, alpha = -1.0;
  long long b_arg = -1, seed_arg = -1;
  int threads = 1;
  analyze->add_option("--config", config_path, "key = value config file; flags override");
  analyze->add_option("--data", data, "input CSV path");
  analyze->add_option("--response", response, "response column name");
  analyze->add_option("--covariates", covariates, "comma-separated covariate columns");
  analyze->add_option("--proxy-map", proxy_map_arg, "true=proxy[,true=proxy...]");
  analyze->add_option("--label-col", label_col, "0/1 labeled indicator column");
  analyze->add_option("--pi", pi_const, "constant labeling probability");
  analyze->add_option("--pi-col", pi_col, "per-row labeling probability column");
  analyze->add_option("--cluster-col", cluster_col, "cluster id column");
  analyze->add_option("--cluster-pi", cluster_pi, "file of cluster_id,pi lines");
  analyze->add_option("--stratum-col", stratum_col, "stratum id column");
  analyze->add_option("--stratum-counts", stratum_counts,
                      "file of stratum_id,n_complete,n_incomplete lines");
  analyze->add_option("--estimator", estimator, "mean|ols|logistic|quantile");
  analyze->add_option("--q", q, "quantile level for --estimator quantile");
  analyze->add_option("--method", method,
                      "full-boot|conv-boot|clt|cluster-boot|cluster-conv-boot|stratified-boot");
  analyze->add_option("--B", b_arg, "bootstrap replicates (default 2000)");
  analyze->add_option("--alpha", alpha, "miscoverage level (default 0.1)");
  analyze->add_option("--tuning", tuning, "identity|diag|full (default diag)");
  analyze->add_option("--seed", seed_arg, "master seed (default 0)");
  analyze->add_option("--out", out_path, "output JSON path (default stdout)");
  analyze->add_option("--threads", threads, "worker threads (default 1)");

  // --- simulate --------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo coverage experiment");
  std::string scenario_path, sim_out;
  int sim_threads = 1;
  simulate->add_option("--scenario", scenario_path, "scenario file")->required();
  simulate->add_option("--out", sim_out, "output JSON path (default stdout)");
  simulate->add_option("--threads", sim_threads, "worker threads (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*analyze) {
      ptd::RunConfig cfg;
      std::map<std::string, std::string> file_kv;
      if (!config_path.empty()) file_kv = read_config_file(config_path);
      auto pick = [&](const std::string& key, const std::string& flag_value) {
        if (!flag_value.empty()) return flag_value;
        const auto it = file_kv.find(key);
        return it == file_kv.end() ? std::string() : it->second;
      };
      cfg.data_path = pick("data", data);
      cfg.response = pick("response", response);
      const std::string covs = pick("covariates", covariates);
      if (!covs.empty()) cfg.covariates = ptd::detail::split_list(covs);
      const std::string pm = pick("proxy-map", proxy_map_arg);
      if (!pm.empty()) cfg.proxy_map = parse_proxy_map(pm);
      const std::string lbl = pick("label-col", label_col);
      if (!lbl.empty()) cfg.label_col = lbl;
      if (pi_const >= 0.0)
        cfg.pi_const = pi_const;
      else if (file_kv.count("pi") && pi_col.empty() && cluster_col.empty() &&
               stratum_col.empty())
        cfg.pi_const = std::stod(file_kv.at("pi"));
      cfg.pi_col = pick("pi-col", pi_col);
      cfg.cluster_col = pick("cluster-col", cluster_col);
      cfg.cluster_pi_path = pick("cluster-pi", cluster_pi);
      cfg.stratum_col = pick("stratum-col", stratum_col);
      cfg.stratum_counts_path = pick("stratum-counts", stratum_counts);
      const std::string est = pick("estimator", estimator);
      if (!est.empty()) cfg.estimator = est;
      if (q >= 0.0)
        cfg.q = q;
      else if (file_kv.count("q"))
        cfg.q = std::stod(file_kv.at("q"));
      const std::string meth = pick("method", method);
      if (!meth.empty()) cfg.method = meth;
      if (b_arg >= 0)
        cfg.replicates = static_cast<std::size_t>(b_arg);
      else if (file_kv.count("B"))
        cfg.replicates = static_cast<std::size_t>(std::stoll(file_kv.at("B")));
      if (alpha >= 0.0)
        cfg.alpha = alpha;
      else if (file_kv.count("alpha"))
        cfg.alpha = std::stod(file_kv.at("alpha"));
      const std::string tun = pick("tuning", tuning);
      if (!tun.empty()) cfg.tuning = tun;
      if (seed_arg >= 0)
        cfg.seed = static_cast<std::uint64_t>(seed_arg);
      else if (file_kv.count("seed"))
        cfg.seed = static_cast<std::uint64_t>(std::stoull(file_kv.at("seed")));
      cfg.out_path = pick("out", out_path);
      cfg.threads = threads;
      if (cfg.data_path.empty()) throw ptd::InvalidConfigError("--data is required");

      const auto t0 = std::chrono::steady_clock::now();
      const ptd::AnalysisRun run = ptd::run_analysis(cfg);
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      write_output(run.document, cfg.out_path);
      std::cerr << "analyze: " << run.result.method << " finished in " << dt.count() << "s\n";
      for (const auto& w : run.document["diagnostics"]["warnings"])
        std::cerr << "warning: " << w.get<std::string>() << "\n";
      return 0;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const ptd::SimulationRun run = ptd::run_simulation(scenario_path, sim_threads);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    write_output(run.document, sim_out);
    std::cerr << "simulate: " << run.report.n_sims << " sims in " << dt.count() << "s\n";
    for (const auto& m : run.report.methods)
      std::cerr << "  " << m.name << ": " << m.wall_seconds << "s\n";
    if (!run.bands_pass) std::cerr << "simulate: declared acceptance bands FAILED\n";
    return run.bands_pass ? 0 : 4;
  } catch (const ptd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ptd::classify_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
