#pragma once

// Synthetic data generation and Monte Carlo experiments: coverage of the
// interval constructions, width comparison against the classical estimator,
// efficiency ratios for the tuned estimator, and the naive-estimator bias
// demonstration.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "ptd/design.hpp"
#include "ptd/errors.hpp"
#include "ptd/estimators.hpp"
#include "ptd/intervals.hpp"
#include "ptd/matrix.hpp"
#include "ptd/parallel.hpp"
#include "ptd/ptd_core.hpp"
#include "ptd/rng.hpp"

namespace ptd {

enum class Regime { kErrorInResponse, kErrorInCovariate, kErrorInBoth };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::kErrorInResponse:
      return "error-in-response";
    case Regime::kErrorInCovariate:
      return "error-in-covariate";
    case Regime::kErrorInBoth:
      return "error-in-both";
  }
  return "?";
}

// Distortion applied to an imputed column: proxy = bias + scale * truth +
// noise_sd * eta. For a logistic response proxy, noise_sd is the label flip
// probability instead.
struct ProxyNoise {
  double bias = 0.0;
  double scale = 1.0;
  double noise_sd = 0.0;
};

struct ScenarioDesign {
  enum class Kind { kUniform, kWeightedBernoulli, kClustered, kStratified };
  Kind kind = Kind::kUniform;
  double pi_labeled = 0.1;  // uniform labeling rate
  // Weighted Bernoulli: pi_i = pi_min + (pi_max - pi_min) * sigmoid(z~_1).
  double pi_min = 0.05;
  double pi_max = 0.15;
  std::size_t cluster_size = 20;
  std::size_t cluster_count = 250;
  double cluster_pi = 0.2;
  std::vector<std::size_t> stratum_sizes;
  std::vector<std::int64_t> stratum_complete;
};

struct ScenarioConfig {
  Regime regime = Regime::kErrorInCovariate;
  EstimatorKind estimator = EstimatorKind::kOls;
  double quantile_level = 0.5;
  std::size_t n_rows = 5000;
  std::size_t covariate_dim = 1;
  ScenarioDesign design;
  ProxyNoise response_noise;
  ProxyNoise covariate_noise;
  Vector true_theta;           // (intercept, slopes...); the mean for kMean
  double noise_sd = 1.0;       // response noise scale
  double het_scale = 0.0;      // response noise becomes (1 + het|z1|) * noise_sd
  double mean_proxy_rho = 0.9;  // kMean: corr(X, proxy)
  double cluster_sd_y = 0.0;    // cluster random effect in the response
  double cluster_sd_z = 0.0;    // cluster random effect in the covariates
  double cluster_sd_proxy = 0.0;  // cluster-level proxy error
  std::vector<double> stratum_shift;  // per-stratum covariate mean shift
  std::size_t n_sims = 500;
  IntervalConfig interval_cfg;
  std::uint64_t master_seed = 0;
};

namespace detail {

constexpr std::uint64_t kSimSpace = 11;
constexpr std::uint64_t kEstimandSpace = 12;
constexpr std::uint64_t kSimIntervalSpace = 13;
constexpr std::uint64_t kClassicalSpace = 14;

inline void validate_scenario(const ScenarioConfig& cfg) {
  const std::size_t d =
      cfg.estimator == EstimatorKind::kMean ? 1 : cfg.covariate_dim + 1;
  if (cfg.n_rows < 10 * d) throw InvalidConfigError("scenario needs at least 10*d rows");
  if (cfg.n_sims < 1) throw InvalidConfigError("scenario needs at least one simulation");
  if (cfg.true_theta.size() != d)
    throw InvalidConfigError("true_theta must have dimension " + std::to_string(d));
  if (cfg.design.kind == ScenarioDesign::Kind::kClustered &&
      cfg.design.cluster_size * cfg.design.cluster_count != cfg.n_rows)
    throw InvalidConfigError("cluster_size * cluster_count must equal n_rows");
  if (cfg.design.kind == ScenarioDesign::Kind::kStratified) {
    std::size_t total = 0;
    for (std::size_t s : cfg.design.stratum_sizes) total += s;
    if (total != cfg.n_rows) throw InvalidConfigError("stratum sizes must sum to n_rows");
    if (cfg.design.stratum_complete.size() != cfg.design.stratum_sizes.size())
      throw InvalidConfigError("per-stratum complete counts missing");
    for (std::size_t s = 0; s < cfg.design.stratum_sizes.size(); ++s) {
      const auto nc = cfg.design.stratum_complete[s];
      if (nc < 1 || static_cast<std::size_t>(nc) >= cfg.design.stratum_sizes[s])
        throw InvalidConfigError("stratum " + std::to_string(s) +
                                 " complete count must lie in [1, size)");
    }
  }
}

inline EstimatorSpec scenario_spec(const ScenarioConfig& cfg) {
  EstimatorSpec spec;
  spec.kind = cfg.estimator;
  spec.quantile_level = cfg.quantile_level;
  if (cfg.estimator == EstimatorKind::kMean) {
    spec.covariate_columns = {0};
    spec.include_intercept = false;
  } else {
    spec.response_column = 0;
    spec.covariate_columns.resize(cfg.covariate_dim);
    for (std::size_t j = 0; j < cfg.covariate_dim; ++j) spec.covariate_columns[j] = j + 1;
    spec.include_intercept = true;
  }
  return spec;
}

// Draws k distinct values from [0, n) via partial Fisher-Yates.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           RngStream& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.next_below(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace detail

// One synthetic dataset. Column 0 is the response (the single variable for
// the mean kind); columns 1..covariate_dim are covariates. Which columns the
// proxies distort follows the error regime; truth cells of distorted columns
// are NaN on unlabeled rows.
inline Dataset generate_synthetic(const ScenarioConfig& cfg, std::size_t sim_index) {
  detail::validate_scenario(cfg);
  RngStream rng =
      RngStream::derive(RngStream::derive_key(cfg.master_seed, detail::kSimSpace), sim_index);
  const std::size_t n = cfg.n_rows;

  Dataset ds;
  if (cfg.estimator == EstimatorKind::kMean) {
    ds.truth = Matrix(n, 1);
    ds.proxy = Matrix(n, 1);
    const double rho = cfg.mean_proxy_rho;
    const double resid = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (std::size_t i = 0; i < n; ++i) {
      const double x = cfg.true_theta[0] + rng.next_normal();
      const double centered = x - cfg.true_theta[0];
      ds.truth(i, 0) = x;
      ds.proxy(i, 0) = cfg.covariate_noise.bias + cfg.true_theta[0] +
                       cfg.covariate_noise.scale * (rho * centered + resid * rng.next_normal());
    }
  } else {
    const std::size_t dz = cfg.covariate_dim;
    const std::size_t p = dz + 1;
    ds.truth = Matrix(n, p);
    ds.proxy = Matrix(n, p);

    std::vector<double> re_y, re_z, re_proxy;
    const bool clustered = cfg.design.kind == ScenarioDesign::Kind::kClustered;
    if (clustered) {
      const std::size_t k = cfg.design.cluster_count;
      re_y.resize(k);
      re_z.resize(k);
      re_proxy.resize(k);
      for (std::size_t c = 0; c < k; ++c) {
        re_y[c] = cfg.cluster_sd_y * rng.next_normal();
        re_z[c] = cfg.cluster_sd_z * rng.next_normal();
        re_proxy[c] = cfg.cluster_sd_proxy * rng.next_normal();
      }
    }
    std::vector<std::int32_t> stratum_of;
    if (cfg.design.kind == ScenarioDesign::Kind::kStratified) {
      stratum_of.reserve(n);
      for (std::size_t s = 0; s < cfg.design.stratum_sizes.size(); ++s)
        stratum_of.insert(stratum_of.end(), cfg.design.stratum_sizes[s],
                          static_cast<std::int32_t>(s));
    }

    const bool proxy_response = cfg.regime != Regime::kErrorInCovariate;
    const bool proxy_covariates = cfg.regime != Regime::kErrorInResponse;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cluster = clustered ? i / cfg.design.cluster_size : 0;
      double lin = cfg.true_theta[0];
      double z1 = 0.0;
      for (std::size_t j = 0; j < dz; ++j) {
        double shift = 0.0;
        if (!stratum_of.empty() && !cfg.stratum_shift.empty())
          shift = cfg.stratum_shift[static_cast<std::size_t>(stratum_of[i]) %
                                    cfg.stratum_shift.size()];
        const double z = shift + (clustered ? re_z[cluster] : 0.0) + rng.next_normal();
        if (j == 0) z1 = z;
        ds.truth(i, j + 1) = z;
        lin += cfg.true_theta[j + 1] * z;
      }
      if (clustered) lin += re_y[cluster];
      double y = 0.0;
      if (cfg.estimator == EstimatorKind::kLogistic) {
        y = rng.next_double() < detail::sigmoid(lin) ? 1.0 : 0.0;
      } else {
        const double sd = cfg.noise_sd * (1.0 + cfg.het_scale * std::abs(z1));
        y = lin + sd * rng.next_normal();
      }
      ds.truth(i, 0) = y;

      for (std::size_t j = 0; j < dz; ++j) {
        const double z = ds.truth(i, j + 1);
        if (proxy_covariates) {
          ds.proxy(i, j + 1) = cfg.covariate_noise.bias + cfg.covariate_noise.scale * z +
                               cfg.covariate_noise.noise_sd * rng.next_normal() +
                               (clustered ? re_proxy[cluster] : 0.0);
        } else {
          ds.proxy(i, j + 1) = z;
        }
      }
      if (proxy_response) {
        if (cfg.estimator == EstimatorKind::kLogistic) {
          const bool flip = rng.next_double() < cfg.response_noise.noise_sd;
          ds.proxy(i, 0) = flip ? 1.0 - y : y;
        } else {
          ds.proxy(i, 0) = cfg.response_noise.bias + cfg.response_noise.scale * y +
                           cfg.response_noise.noise_sd * rng.next_normal();
        }
      } else {
        ds.proxy(i, 0) = y;
      }
    }
  }

  // Labeling per design; redrawn (rarely) if a Bernoulli draw leaves too few
  // labeled rows for the complete-sample fits.
  const std::size_t d = cfg.estimator == EstimatorKind::kMean ? 1 : cfg.covariate_dim + 1;
  ds.labeled.assign(n, 0);
  switch (cfg.design.kind) {
    case ScenarioDesign::Kind::kUniform: {
      ds.design = UniformBernoulli{cfg.design.pi_labeled};
      for (int attempt = 0; attempt < 100; ++attempt) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
          ds.labeled[i] = rng.next_double() < cfg.design.pi_labeled ? 1 : 0;
          count += ds.labeled[i];
        }
        if (count > d && count < n) break;
      }
      break;
    }
    case ScenarioDesign::Kind::kWeightedBernoulli: {
      WeightedBernoulli wb;
      wb.pi.resize(n);
      const std::size_t score_col = cfg.estimator == EstimatorKind::kMean ? 0 : 1;
      for (std::size_t i = 0; i < n; ++i)
        wb.pi[i] = cfg.design.pi_min + (cfg.design.pi_max - cfg.design.pi_min) *
                                           detail::sigmoid(ds.proxy(i, score_col));
      for (int attempt = 0; attempt < 100; ++attempt) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
          ds.labeled[i] = rng.next_double() < wb.pi[i] ? 1 : 0;
          count += ds.labeled[i];
        }
        if (count > d && count < n) break;
      }
      ds.design = std::move(wb);
      break;
    }
    case ScenarioDesign::Kind::kClustered: {
      Clustered cl;
      cl.cluster_of.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        cl.cluster_of[i] = static_cast<std::int32_t>(i / cfg.design.cluster_size);
      cl.pi_k.assign(cfg.design.cluster_count, cfg.design.cluster_pi);
      for (int attempt = 0; attempt < 100; ++attempt) {
        std::size_t labeled_clusters = 0;
        for (std::size_t c = 0; c < cfg.design.cluster_count; ++c) {
          const bool xi = rng.next_double() < cfg.design.cluster_pi;
          labeled_clusters += xi ? 1 : 0;
          for (std::size_t i = c * cfg.design.cluster_size;
               i < (c + 1) * cfg.design.cluster_size; ++i)
            ds.labeled[i] = xi ? 1 : 0;
        }
        if (labeled_clusters >= 2 && labeled_clusters < cfg.design.cluster_count) break;
      }
      ds.design = std::move(cl);
      break;
    }
    case ScenarioDesign::Kind::kStratified: {
      Stratified st;
      st.stratum_of.resize(n);
      std::size_t offset = 0;
      for (std::size_t s = 0; s < cfg.design.stratum_sizes.size(); ++s) {
        const std::size_t size = cfg.design.stratum_sizes[s];
        const auto n_complete = static_cast<std::size_t>(cfg.design.stratum_complete[s]);
        const auto picks = detail::sample_without_replacement(size, n_complete, rng);
        for (std::size_t i = 0; i < size; ++i)
          st.stratum_of[offset + i] = static_cast<std::int32_t>(s);
        for (std::size_t pick : picks) ds.labeled[offset + pick] = 1;
        st.n_complete.push_back(static_cast<std::int64_t>(n_complete));
        st.n_incomplete.push_back(static_cast<std::int64_t>(size - n_complete));
        offset += size;
      }
      ds.design = std::move(st);
      break;
    }
  }

  // Poison the truth cells the labeling withheld.
  const bool proxy_response = cfg.regime != Regime::kErrorInCovariate;
  const bool proxy_covariates =
      cfg.estimator == EstimatorKind::kMean || cfg.regime != Regime::kErrorInResponse;
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.labeled[i]) continue;
    if (cfg.estimator == EstimatorKind::kMean) {
      ds.truth(i, 0) = kMissing;
      continue;
    }
    if (proxy_response) ds.truth(i, 0) = kMissing;
    if (proxy_covariates)
      for (std::size_t j = 0; j < cfg.covariate_dim; ++j) ds.truth(i, j + 1) = kMissing;
  }
  return ds;
}

// The scenario's target parameter: the generator's coefficients when the
// model is correctly specified for the estimator, otherwise the plug-in fit
// on one million freshly generated rows.
inline Vector resolve_estimand(const ScenarioConfig& cfg) {
  detail::validate_scenario(cfg);
  const bool analytic = cfg.estimator == EstimatorKind::kMean ||
                        cfg.estimator == EstimatorKind::kOls ||
                        (cfg.estimator == EstimatorKind::kLogistic && cfg.cluster_sd_y == 0.0);
  if (analytic) return cfg.true_theta;

  // Plug-in fit on roughly one million labeled rows of fresh true data.
  constexpr std::size_t kPlugInRows = 1'000'000;
  ScenarioConfig big = cfg;
  big.n_rows = 2 * kPlugInRows;
  big.design.kind = ScenarioDesign::Kind::kUniform;
  big.design.pi_labeled = 0.5;
  big.master_seed = RngStream::derive_key(cfg.master_seed, detail::kEstimandSpace);
  const Dataset ds = generate_synthetic(big, 0);
  const EstimatorSpec spec = detail::scenario_spec(cfg);
  WeightVector w(ds.rows(), 1.0);
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (!ds.labeled[i]) w[i] = 0.0;
  return fit(spec, ds.truth, w).theta;
}

struct ClassicalResult {
  FitResult fit;
  std::vector<IntervalPair> intervals;
};

// The classical baseline: weighted fit on the complete sample's true data
// with a sandwich normal interval (cluster-robust under a clustered design;
// percentile bootstrap for the quantile kind).
inline ClassicalResult classical_estimate(const Dataset& ds, const EstimatorSpec& spec,
                                          const IntervalConfig& cfg) {
  const WeightPair w = compute_weights(ds);
  ClassicalResult out;
  out.fit = fit(spec, ds.truth, w.complete);
  const std::size_t d = spec.dimension();
  const double z = normal_quantile(1.0 - cfg.alpha / 2.0);

  if (spec.kind != EstimatorKind::kQuantile) {
    Matrix var;
    if (const auto* cl = std::get_if<Clustered>(&ds.design))
      var = cluster_sandwich_covariance(spec, ds.truth, w.complete, out.fit.theta,
                                        cl->cluster_of);
    else
      var = sandwich_covariance(spec, ds.truth, w.complete, out.fit.theta);
    out.intervals.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double half = z * std::sqrt(std::max(var(j, j), 0.0));
      out.intervals[j] = {out.fit.theta[j] - half, out.fit.theta[j] + half};
    }
    return out;
  }

  // Quantile kind: iid (or cluster) percentile bootstrap of the weighted fit.
  const std::size_t n = ds.rows();
  Matrix draws(cfg.replicates, d);
  const auto* cl = std::get_if<Clustered>(&ds.design);
  std::vector<std::vector<std::int32_t>> members;
  if (cl) members = cluster_members(*cl, n);
  const std::uint64_t seed = RngStream::derive_key(cfg.master_seed, detail::kClassicalSpace);
  detail::run_replicates(cfg.replicates, seed, detail::retry_cap(cfg), cfg.threads, nullptr,
                         [&](std::size_t b, RngStream& rng) {
                           thread_local detail::ReplicateBuffers buf;
                           buf.clear();
                           auto take = [&](std::int32_t i) {
                             const double wc = w.complete[static_cast<std::size_t>(i)];
                             if (wc > 0.0) {
                               buf.complete_rows.push_back(i);
                               buf.complete_w.push_back(wc);
                             }
                           };
                           if (cl) {
                             for (std::size_t t = 0; t < members.size(); ++t)
                               for (std::int32_t i : members[rng.next_below(members.size())])
                                 take(i);
                           } else {
                             for (std::size_t k = 0; k < n; ++k)
                               take(static_cast<std::int32_t>(rng.next_below(n)));
                           }
                           const FitResult fr =
                               fit_rows(spec, ds.truth, buf.complete_rows, buf.complete_w);
                           for (std::size_t j = 0; j < d; ++j) draws(b, j) = fr.theta[j];
                         });
  out.intervals = detail::percentile_intervals(draws, cfg.alpha);
  return out;
}

// The naive baseline: unweighted fit treating proxies as truth on all rows.
inline FitResult naive_estimate(const Dataset& ds, const EstimatorSpec& spec) {
  WeightVector ones(ds.rows(), 1.0);
  return fit(spec, ds.proxy, ones);
}

// Sandwich normal interval around the naive fit; used by the bias
// demonstration.
inline ClassicalResult naive_estimate_with_interval(const Dataset& ds, const EstimatorSpec& spec,
                                                    double alpha) {
  ClassicalResult out;
  out.fit = naive_estimate(ds, spec);
  WeightVector ones(ds.rows(), 1.0);
  const Matrix var = sandwich_covariance(spec, ds.proxy, ones, out.fit.theta);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const std::size_t d = spec.dimension();
  out.intervals.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double half = z * std::sqrt(std::max(var(j, j), 0.0));
    out.intervals[j] = {out.fit.theta[j] - half, out.fit.theta[j] + half};
  }
  return out;
}

enum class SimMethod {
  kClassical,
  kNaive,
  kFullBoot,
  kConvBoot,
  kClt,
  kClusterBoot,
  kClusterConvBoot,
  kStratifiedBoot,
};

inline std::string to_string(SimMethod m) {
  switch (m) {
    case SimMethod::kClassical:
      return "classical";
    case SimMethod::kNaive:
      return "naive";
    case SimMethod::kFullBoot:
      return "full-boot";
    case SimMethod::kConvBoot:
      return "conv-boot";
    case SimMethod::kClt:
      return "clt";
    case SimMethod::kClusterBoot:
      return "cluster-boot";
    case SimMethod::kClusterConvBoot:
      return "cluster-conv-boot";
    case SimMethod::kStratifiedBoot:
      return "stratified-boot";
  }
  return "?";
}

struct MethodReport {
  std::string name;
  std::vector<double> coverage;    // per coefficient
  std::vector<double> mean_width;
  std::vector<double> width_sd;
  std::vector<double> mean_bias;   // point minus estimand
  std::size_t sims_used = 0;
  std::size_t failures = 0;
  double wall_seconds = 0.0;  // accumulated method time; not part of the
                              // deterministic report payload
};

struct CoverageReport {
  Vector estimand;
  std::size_t n_sims = 0;
  std::vector<MethodReport> methods;
};

inline CoverageReport run_coverage_experiment(const ScenarioConfig& cfg,
                                              const std::vector<SimMethod>& methods) {
  detail::validate_scenario(cfg);
  const EstimatorSpec spec = detail::scenario_spec(cfg);
  const std::size_t d = spec.dimension();
  const Vector estimand = resolve_estimand(cfg);
  const std::size_t n_sims = cfg.n_sims;
  const std::size_t n_methods = methods.size();

  // Per (method, sim, coefficient) slots; reduced in sim order afterwards so
  // the report is independent of scheduling.
  std::vector<std::vector<double>> lo(n_methods), hi(n_methods), pt(n_methods);
  std::vector<std::vector<std::uint8_t>> ok(n_methods);
  for (std::size_t m = 0; m < n_methods; ++m) {
    lo[m].assign(n_sims * d, 0.0);
    hi[m].assign(n_sims * d, 0.0);
    pt[m].assign(n_sims * d, 0.0);
    ok[m].assign(n_sims, 0);
  }
  std::vector<double> seconds(n_methods, 0.0);
  std::mutex seconds_mutex;

  parallel_for(n_sims, cfg.interval_cfg.threads, [&](std::size_t sim) {
    const Dataset ds = generate_synthetic(cfg, sim);
    IntervalConfig icfg = cfg.interval_cfg;
    icfg.threads = 1;  // parallelism lives at the simulation level here
    icfg.master_seed =
        RngStream::derive_key(RngStream::derive_key(cfg.master_seed, detail::kSimIntervalSpace),
                              sim);
    for (std::size_t m = 0; m < n_methods; ++m) {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        Vector point(d);
        std::vector<IntervalPair> intervals(d);
        switch (methods[m]) {
          case SimMethod::kClassical: {
            const ClassicalResult r = classical_estimate(ds, spec, icfg);
            point = r.fit.theta;
            intervals = r.intervals;
            break;
          }
          case SimMethod::kNaive: {
            const ClassicalResult r = naive_estimate_with_interval(ds, spec, icfg.alpha);
            point = r.fit.theta;
            intervals = r.intervals;
            break;
          }
          default: {
            switch (methods[m]) {
              case SimMethod::kFullBoot:
                icfg.method = Method::kFullBoot;
                break;
              case SimMethod::kConvBoot:
                icfg.method = Method::kConvBoot;
                break;
              case SimMethod::kClt:
                icfg.method = Method::kClt;
                break;
              case SimMethod::kClusterBoot:
                icfg.method = Method::kClusterBoot;
                break;
              case SimMethod::kClusterConvBoot:
                icfg.method = Method::kClusterConvBoot;
                break;
              default:
                icfg.method = Method::kStratifiedBoot;
                break;
            }
            const PTDResult r = run_intervals(ds, spec, icfg);
            point = r.point;
            intervals = r.intervals;
            break;
          }
        }
        for (std::size_t j = 0; j < d; ++j) {
          lo[m][sim * d + j] = intervals[j].lo;
          hi[m][sim * d + j] = intervals[j].hi;
          pt[m][sim * d + j] = point[j];
        }
        ok[m][sim] = 1;
      } catch (const Error&) {
        ok[m][sim] = 0;
      }
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      std::lock_guard<std::mutex> lock(seconds_mutex);
      seconds[m] += dt.count();
    }
  });

  CoverageReport report;
  report.estimand = estimand;
  report.n_sims = n_sims;
  for (std::size_t m = 0; m < n_methods; ++m) {
    MethodReport mr;
    mr.name = to_string(methods[m]);
    mr.coverage.assign(d, 0.0);
    mr.mean_width.assign(d, 0.0);
    mr.width_sd.assign(d, 0.0);
    mr.mean_bias.assign(d, 0.0);
    std::vector<double> width_sq(d, 0.0);
    for (std::size_t sim = 0; sim < n_sims; ++sim) {
      if (!ok[m][sim]) {
        ++mr.failures;
        continue;
      }
      ++mr.sims_used;
      for (std::size_t j = 0; j < d; ++j) {
        const double l = lo[m][sim * d + j];
        const double h = hi[m][sim * d + j];
        if (l <= estimand[j] && estimand[j] <= h) mr.coverage[j] += 1.0;
        const double width = h - l;
        mr.mean_width[j] += width;
        width_sq[j] += width * width;
        mr.mean_bias[j] += pt[m][sim * d + j] - estimand[j];
      }
    }
    if (mr.sims_used > 0) {
      const double inv = 1.0 / static_cast<double>(mr.sims_used);
      for (std::size_t j = 0; j < d; ++j) {
        mr.coverage[j] *= inv;
        mr.mean_width[j] *= inv;
        mr.mean_bias[j] *= inv;
        const double var = std::max(0.0, width_sq[j] * inv - mr.mean_width[j] * mr.mean_width[j]);
        mr.width_sd[j] = std::sqrt(var);
      }
    }
    mr.wall_seconds = seconds[m];
    report.methods.push_back(std::move(mr));
  }
  return report;
}

struct EfficiencyCheck {
  double measured = 0.0;
  double predicted = 0.0;
};

// Monte Carlo variance ratio of the optimally tuned PTD mean against the
// classical weighted mean under jointly Gaussian (X, proxy) with correlation
// rho and uniform labeling probability pi_labeled. The predicted ratio is
// 1 - (1 - pi_labeled) * rho^2.
inline EfficiencyCheck efficiency_ratio_check(double pi_labeled, double rho,
                                              std::size_t n_sims, std::size_t n_rows = 2000,
                                              std::uint64_t master_seed = 2024,
                                              int threads = 1) {
  ScenarioConfig cfg;
  cfg.estimator = EstimatorKind::kMean;
  cfg.regime = Regime::kErrorInCovariate;
  cfg.n_rows = n_rows;
  cfg.true_theta = {0.0};
  cfg.mean_proxy_rho = rho;
  cfg.design.kind = ScenarioDesign::Kind::kUniform;
  cfg.design.pi_labeled = pi_labeled;
  cfg.n_sims = n_sims;
  cfg.master_seed = master_seed;

  const EstimatorSpec spec = detail::scenario_spec(cfg);
  std::vector<double> classical(n_sims, 0.0), tuned(n_sims, 0.0);
  parallel_for(n_sims, threads, [&](std::size_t sim) {
    const Dataset ds = generate_synthetic(cfg, sim);
    const WeightPair w = compute_weights(ds);
    const FitResult theta_c = fit(spec, ds.truth, w.complete);
    const FitResult gamma_c = fit(spec, ds.proxy, w.complete);
    const FitResult gamma_o = fit(spec, ds.proxy, w.incomplete);
    CovarianceBundle bundle;
    const auto n = static_cast<double>(ds.rows());
    bundle.sigma_theta_c =
        sandwich_covariance(spec, ds.truth, w.complete, theta_c.theta).scaled(n);
    bundle.sigma_gamma_c =
        sandwich_covariance(spec, ds.proxy, w.complete, gamma_c.theta).scaled(n);
    bundle.sigma_gamma_o =
        sandwich_covariance(spec, ds.proxy, w.incomplete, gamma_o.theta).scaled(n);
    bundle.sigma_cross = cross_covariance_mest(spec, ds.truth, ds.proxy, w.complete,
                                               theta_c.theta, gamma_c.theta);
    const TuningMatrix omega = optimal_diag_tuning(bundle);
    const Vector point = ptd_combine(omega, gamma_o.theta, theta_c.theta, gamma_c.theta);
    classical[sim] = theta_c.theta[0];
    tuned[sim] = point[0];
  });

  auto variance = [&](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
  };
  EfficiencyCheck out;
  out.measured = variance(tuned) / variance(classical);
  out.predicted = 1.0 - (1.0 - pi_labeled) * rho * rho;
  return out;
}

}  // namespace ptd
