#pragma once

// The confidence-interval constructions for the Predict-Then-Debias
// estimator: full percentile bootstrap, convolution speedup, CLT plug-in,
// cluster bootstrap (with convolution variant), and stratified bootstrap,
// plus the subroutines that pick the tuning matrix from bootstrap draws.
//
// Every replicate consumes exactly one derived random stream, so results are
// bit-identical for any thread count and replicates may run in parallel.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ptd/design.hpp"
#include "ptd/errors.hpp"
#include "ptd/estimators.hpp"
#include "ptd/matrix.hpp"
#include "ptd/parallel.hpp"
#include "ptd/ptd_core.hpp"
#include "ptd/rng.hpp"

namespace ptd {

enum class TuningStrategy { kIdentity, kOptDiag, kOptFull };
enum class Method { kFullBoot, kConvBoot, kClt, kClusterBoot, kClusterConvBoot, kStratifiedBoot };

inline std::string to_string(TuningStrategy s) {
  switch (s) {
    case TuningStrategy::kIdentity:
      return "identity";
    case TuningStrategy::kOptDiag:
      return "diag";
    case TuningStrategy::kOptFull:
      return "full";
  }
  return "?";
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kFullBoot:
      return "full-boot";
    case Method::kConvBoot:
      return "conv-boot";
    case Method::kClt:
      return "clt";
    case Method::kClusterBoot:
      return "cluster-boot";
    case Method::kClusterConvBoot:
      return "cluster-conv-boot";
    case Method::kStratifiedBoot:
      return "stratified-boot";
  }
  return "?";
}

struct IntervalConfig {
  std::size_t replicates = 2000;  // B
  double alpha = 0.1;
  TuningStrategy tuning = TuningStrategy::kOptDiag;
  Method method = Method::kFullBoot;
  std::size_t redraw_limit = 0;  // 0 means the default of 10 * replicates
  std::uint64_t master_seed = 0;
  int threads = 1;
  // When set, this exact tuning matrix is used and estimation is skipped;
  // any fixed matrix that is consistent for some limit is admissible.
  std::optional<TuningMatrix> fixed_tuning;
};

struct BootstrapDraws {
  Matrix theta_c;  // B x d
  Matrix gamma_c;  // B x d
  Matrix gamma_o;  // B x d; empty in convolution mode
  std::vector<std::uint64_t> replicate_seeds;
  std::size_t redraws = 0;
};

struct TuningSelection {
  TuningMatrix omega = TuningMatrix::identity();
  CovarianceBundle bundle;
  bool ridge_applied = false;
};

namespace detail {

// Stream-id namespaces under one master seed.
constexpr std::uint64_t kReplicateSpace = 1;
constexpr std::uint64_t kInnerBootSpace = 2;

inline void validate_config(const IntervalConfig& cfg) {
  if (cfg.replicates < 2) throw InvalidConfigError("replicate count B must be at least 2");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    throw InvalidConfigError("alpha must lie strictly inside (0,1)");
}

inline std::size_t retry_cap(const IntervalConfig& cfg) {
  const std::size_t limit =
      cfg.redraw_limit == 0 ? 10 * cfg.replicates : cfg.redraw_limit;
  return std::max<std::size_t>(1, limit / cfg.replicates);
}

struct ReplicateBuffers {
  std::vector<std::int32_t> complete_rows, incomplete_rows;
  std::vector<double> complete_w, incomplete_w;
  void clear() {
    complete_rows.clear();
    incomplete_rows.clear();
    complete_w.clear();
    incomplete_w.clear();
  }
  void push(std::int32_t row, double wc, double wo, bool want_incomplete) {
    if (wc > 0.0) {
      complete_rows.push_back(row);
      complete_w.push_back(wc);
    }
    if (want_incomplete && wo > 0.0) {
      incomplete_rows.push_back(row);
      incomplete_w.push_back(wo);
    }
  }
};

// Runs attempt(b, stream) for b = 0..B-1, retrying each replicate with fresh
// derived streams when a fit fails on a degenerate resample. Returns the
// total number of redraws; throws TooManyRedrawsError once any replicate
// exhausts its share of the redraw budget.
template <class Attempt>
std::size_t run_replicates(std::size_t b_count, std::uint64_t master_seed, std::size_t cap,
                           int threads, std::vector<std::uint64_t>* seeds_out,
                           Attempt&& attempt) {
  const std::uint64_t space = RngStream::derive_key(master_seed, kReplicateSpace);
  std::vector<std::uint8_t> exhausted(b_count, 0);
  std::vector<std::uint32_t> retries(b_count, 0);
  if (seeds_out) seeds_out->assign(b_count, 0);
  parallel_for(b_count, threads, [&](std::size_t b) {
    const std::uint64_t replicate_key = RngStream::derive_key(space, b);
    for (std::size_t r = 0; r <= cap; ++r) {
      const std::uint64_t key = RngStream::derive_key(replicate_key, r);
      RngStream stream(key);
      try {
        attempt(b, stream);
        retries[b] = static_cast<std::uint32_t>(r);
        if (seeds_out) (*seeds_out)[b] = key;
        return;
      } catch (const FitError&) {
        // degenerate resample; redraw
      }
    }
    exhausted[b] = 1;
  });
  std::size_t total = 0;
  for (std::size_t b = 0; b < b_count; ++b) {
    total += retries[b];
    if (exhausted[b])
      throw TooManyRedrawsError("replicate " + std::to_string(b) +
                                " exhausted the redraw budget");
  }
  return total;
}

inline std::vector<IntervalPair> percentile_intervals(const Matrix& ptd_draws, double alpha) {
  const std::size_t d = ptd_draws.cols();
  std::vector<IntervalPair> out(d);
  std::vector<double> column(ptd_draws.rows());
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t b = 0; b < ptd_draws.rows(); ++b) column[b] = ptd_draws(b, j);
    out[j].lo = empirical_quantile(column, alpha / 2.0);
    out[j].hi = empirical_quantile(column, 1.0 - alpha / 2.0);
  }
  return out;
}

struct OriginalFits {
  FitResult theta_c, gamma_c, gamma_o;
};

inline OriginalFits original_fits(const Dataset& ds, const EstimatorSpec& spec,
                                  const WeightPair& w) {
  OriginalFits fits;
  fits.theta_c = fit(spec, ds.truth, w.complete);
  fits.gamma_c = fit(spec, ds.proxy, w.complete);
  fits.gamma_o = fit(spec, ds.proxy, w.incomplete);
  return fits;
}

inline PTDResult assemble_result(const OriginalFits& fits, const TuningSelection& tuning,
                                 const Matrix& ptd_draws, const IntervalConfig& cfg,
                                 std::size_t redraws) {
  PTDResult out;
  out.point = ptd_combine(tuning.omega, fits.gamma_o.theta, fits.theta_c.theta,
                          fits.gamma_c.theta);
  out.intervals = percentile_intervals(ptd_draws, cfg.alpha);
  out.tuning = tuning.omega;
  out.method = to_string(cfg.method);
  out.alpha = cfg.alpha;
  out.diagnostics.replicates = cfg.replicates;
  out.diagnostics.redraws = redraws;
  out.diagnostics.ridge_applied = tuning.ridge_applied;
  out.diagnostics.point_fit_converged =
      fits.theta_c.converged && fits.gamma_c.converged && fits.gamma_o.converged;
  return out;
}

}  // namespace detail

// Builds the N-scaled covariance bundle from bootstrap draws (using
// N * Var-hat(gamma_o) in place of the gamma_o draws when the override is
// present) and returns the tuning matrix for the strategy. The identity
// strategy skips estimation entirely.
inline TuningSelection select_tuning(const BootstrapDraws& draws,
                                     const std::optional<Matrix>& sigma_gamma_o_override,
                                     TuningStrategy strategy, std::size_t n_rows) {
  TuningSelection sel;
  if (strategy == TuningStrategy::kIdentity) return sel;
  const auto n = static_cast<double>(n_rows);
  CovarianceBundle& bundle = sel.bundle;
  bundle.sigma_theta_c = sample_covariance(draws.theta_c).scaled(n);
  bundle.sigma_gamma_c = sample_covariance(draws.gamma_c).scaled(n);
  bundle.sigma_cross = sample_cross_covariance(draws.theta_c, draws.gamma_c).scaled(n);
  if (sigma_gamma_o_override) {
    bundle.sigma_gamma_o = sigma_gamma_o_override->scaled(n);
  } else {
    if (draws.gamma_o.rows() == 0)
      throw InvalidConfigError("tuning needs gamma_o draws or a variance override");
    bundle.sigma_gamma_o = sample_covariance(draws.gamma_o).scaled(n);
  }
  sel.omega = strategy == TuningStrategy::kOptDiag
                  ? optimal_diag_tuning(bundle)
                  : optimal_full_tuning(bundle, &sel.ridge_applied);
  return sel;
}


namespace detail {

inline TuningSelection choose_tuning(const BootstrapDraws& draws,
                                     const std::optional<Matrix>& sigma_gamma_o_override,
                                     const IntervalConfig& cfg, std::size_t n_rows) {
  if (cfg.fixed_tuning) {
    TuningSelection sel;
    sel.omega = *cfg.fixed_tuning;
    return sel;
  }
  return select_tuning(draws, sigma_gamma_o_override, cfg.tuning, n_rows);
}

}  // namespace detail

// Predict-Then-Debias percentile bootstrap. Rows are resampled with
// replacement carrying (W, W-bar, X, X-tilde) jointly; the three weighted
// fits run on each resample, the tuning matrix is selected once from all B
// draws, and nearest-rank percentiles of the combined draws form the
// intervals. With uniform labeling this reproduces the uniform-sampling
// variant exactly, since constant weights factor out of every weighted fit.
inline PTDResult full_percentile_bootstrap(const Dataset& ds, const EstimatorSpec& spec,
                                           const IntervalConfig& cfg,
                                           BootstrapDraws* capture = nullptr) {
  detail::validate_config(cfg);
  const std::size_t n = ds.rows();
  const std::size_t d = spec.dimension();
  const WeightPair w = compute_weights(ds);
  const detail::OriginalFits fits = detail::original_fits(ds, spec, w);

  BootstrapDraws draws;
  draws.theta_c = Matrix(cfg.replicates, d);
  draws.gamma_c = Matrix(cfg.replicates, d);
  draws.gamma_o = Matrix(cfg.replicates, d);
  draws.redraws = detail::run_replicates(
      cfg.replicates, cfg.master_seed, detail::retry_cap(cfg), cfg.threads,
      &draws.replicate_seeds, [&](std::size_t b, RngStream& rng) {
        thread_local detail::ReplicateBuffers buf;
        buf.clear();
        for (std::size_t k = 0; k < n; ++k) {
          const auto i = static_cast<std::int32_t>(rng.next_below(n));
          buf.push(i, w.complete[static_cast<std::size_t>(i)],
                   w.incomplete[static_cast<std::size_t>(i)], /*want_incomplete=*/true);
        }
        const FitResult tc = fit_rows(spec, ds.truth, buf.complete_rows, buf.complete_w);
        const FitResult gc = fit_rows(spec, ds.proxy, buf.complete_rows, buf.complete_w);
        const FitResult go = fit_rows(spec, ds.proxy, buf.incomplete_rows, buf.incomplete_w);
        for (std::size_t j = 0; j < d; ++j) {
          draws.theta_c(b, j) = tc.theta[j];
          draws.gamma_c(b, j) = gc.theta[j];
          draws.gamma_o(b, j) = go.theta[j];
        }
      });

  const TuningSelection tuning = detail::choose_tuning(draws, std::nullopt, cfg, n);
  Matrix ptd_draws(cfg.replicates, d);
  for (std::size_t b = 0; b < cfg.replicates; ++b) {
    const Vector combined =
        ptd_combine(tuning.omega, draws.gamma_o.row(b), draws.theta_c.row(b),
                    draws.gamma_c.row(b));
    for (std::size_t j = 0; j < d; ++j) ptd_draws(b, j) = combined[j];
  }
  PTDResult out = detail::assemble_result(fits, tuning, ptd_draws, cfg, draws.redraws);
  if (capture) *capture = std::move(draws);
  return out;
}

namespace detail {

// Var-hat(gamma_o) for the convolution speedup: the plug-in sandwich for
// smooth kinds, a nested bootstrap for the quantile kind whose Powell
// sandwich is too noisy at desk scale.
inline Matrix gamma_o_variance(const Dataset& ds, const EstimatorSpec& spec,
                               const WeightPair& w, const FitResult& gamma_o,
                               const IntervalConfig& cfg, bool cluster_robust,
                               bool* used_inner_bootstrap) {
  *used_inner_bootstrap = false;
  if (spec.kind != EstimatorKind::kQuantile) {
    if (cluster_robust) {
      const auto& cl = std::get<Clustered>(ds.design);
      return cluster_sandwich_covariance(spec, ds.proxy, w.incomplete, gamma_o.theta,
                                         cl.cluster_of);
    }
    return sandwich_covariance(spec, ds.proxy, w.incomplete, gamma_o.theta);
  }
  *used_inner_bootstrap = true;
  constexpr std::size_t kInnerReplicates = 200;
  const std::size_t n = ds.rows();
  const std::size_t d = spec.dimension();
  Matrix inner_draws(kInnerReplicates, d);
  const std::uint64_t inner_seed = RngStream::derive_key(cfg.master_seed, kInnerBootSpace);
  std::vector<std::vector<std::int32_t>> members;
  if (cluster_robust) members = cluster_members(std::get<Clustered>(ds.design), n);
  run_replicates(kInnerReplicates, inner_seed, retry_cap(cfg), cfg.threads, nullptr,
                 [&](std::size_t b, RngStream& rng) {
                   thread_local ReplicateBuffers buf;
                   buf.clear();
                   auto take = [&](std::int32_t i) {
                     const double wo = w.incomplete[static_cast<std::size_t>(i)];
                     if (wo > 0.0) {
                       buf.incomplete_rows.push_back(i);
                       buf.incomplete_w.push_back(wo);
                     }
                   };
                   if (cluster_robust) {
                     for (std::size_t t = 0; t < members.size(); ++t)
                       for (std::int32_t i : members[rng.next_below(members.size())]) take(i);
                   } else {
                     for (std::size_t k = 0; k < n; ++k)
                       take(static_cast<std::int32_t>(rng.next_below(n)));
                   }
                   const FitResult go =
                       fit_rows(spec, ds.proxy, buf.incomplete_rows, buf.incomplete_w);
                   for (std::size_t j = 0; j < d; ++j) inner_draws(b, j) = go.theta[j];
                 });
  return sample_covariance(inner_draws);
}

}  // namespace detail

// Convolution speedup: gamma_o is fit once, its variance estimate is
// Cholesky-factored, and each replicate replaces the incomplete-sample refit
// with the Gaussian draw gamma_o + L Z(b).
inline PTDResult convolution_bootstrap(const Dataset& ds, const EstimatorSpec& spec,
                                       const IntervalConfig& cfg,
                                       BootstrapDraws* capture = nullptr) {
  detail::validate_config(cfg);
  const std::size_t n = ds.rows();
  const std::size_t d = spec.dimension();
  const WeightPair w = compute_weights(ds);
  const detail::OriginalFits fits = detail::original_fits(ds, spec, w);

  bool inner_bootstrap = false;
  const Matrix s_gamma_o = detail::gamma_o_variance(ds, spec, w, fits.gamma_o, cfg,
                                                    /*cluster_robust=*/false, &inner_bootstrap);
  const LowerTriangular chol_gamma = cholesky(s_gamma_o);

  BootstrapDraws draws;
  draws.theta_c = Matrix(cfg.replicates, d);
  draws.gamma_c = Matrix(cfg.replicates, d);
  Matrix normals(cfg.replicates, d);
  draws.redraws = detail::run_replicates(
      cfg.replicates, cfg.master_seed, detail::retry_cap(cfg), cfg.threads,
      &draws.replicate_seeds, [&](std::size_t b, RngStream& rng) {
        thread_local detail::ReplicateBuffers buf;
        buf.clear();
        for (std::size_t k = 0; k < n; ++k) {
          const auto i = static_cast<std::int32_t>(rng.next_below(n));
          buf.push(i, w.complete[static_cast<std::size_t>(i)], 0.0, /*want_incomplete=*/false);
        }
        const FitResult tc = fit_rows(spec, ds.truth, buf.complete_rows, buf.complete_w);
        const FitResult gc = fit_rows(spec, ds.proxy, buf.complete_rows, buf.complete_w);
        for (std::size_t j = 0; j < d; ++j) {
          draws.theta_c(b, j) = tc.theta[j];
          draws.gamma_c(b, j) = gc.theta[j];
          normals(b, j) = rng.next_normal();
        }
      });

  const TuningSelection tuning = detail::choose_tuning(draws, s_gamma_o, cfg, n);
  Matrix ptd_draws(cfg.replicates, d);
  Vector gamma_draw(d);
  for (std::size_t b = 0; b < cfg.replicates; ++b) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = fits.gamma_o.theta[i];
      for (std::size_t j = 0; j <= i; ++j) s += chol_gamma.entries(i, j) * normals(b, j);
      gamma_draw[i] = s;
    }
    const Vector combined =
        ptd_combine(tuning.omega, gamma_draw, draws.theta_c.row(b), draws.gamma_c.row(b));
    for (std::size_t j = 0; j < d; ++j) ptd_draws(b, j) = combined[j];
  }
  PTDResult out = detail::assemble_result(fits, tuning, ptd_draws, cfg, draws.redraws);
  out.diagnostics.convolution_inner_bootstrap = inner_bootstrap;
  if (capture) *capture = std::move(draws);
  return out;
}

// Plug-in covariance bundle from the sandwich and cross-covariance
// estimators, N-scaled as the CLT interval construction expects.
inline CovarianceBundle plug_in_bundle(const Dataset& ds, const EstimatorSpec& spec) {
  if (spec.kind == EstimatorKind::kQuantile)
    throw UnsupportedKindError("CLT intervals need smooth estimating equations");
  const WeightPair w = compute_weights(ds);
  const detail::OriginalFits fits = detail::original_fits(ds, spec, w);
  const auto n = static_cast<double>(ds.rows());
  CovarianceBundle bundle;
  bundle.sigma_theta_c =
      sandwich_covariance(spec, ds.truth, w.complete, fits.theta_c.theta).scaled(n);
  bundle.sigma_gamma_c =
      sandwich_covariance(spec, ds.proxy, w.complete, fits.gamma_c.theta).scaled(n);
  bundle.sigma_gamma_o =
      sandwich_covariance(spec, ds.proxy, w.incomplete, fits.gamma_o.theta).scaled(n);
  bundle.sigma_cross = cross_covariance_mest(spec, ds.truth, ds.proxy, w.complete,
                                             fits.theta_c.theta, fits.gamma_c.theta);
  return bundle;
}

// CLT-based intervals: point +/- z_{1-alpha/2} sqrt(Sigma_jj / N) with Sigma
// the plug-in PTD asymptotic variance at the selected tuning matrix.
inline PTDResult clt_intervals(const Dataset& ds, const EstimatorSpec& spec,
                               const IntervalConfig& cfg, const CovarianceBundle& cov) {
  detail::validate_config(cfg);
  if (spec.kind == EstimatorKind::kQuantile)
    throw UnsupportedKindError("CLT intervals need smooth estimating equations");
  const WeightPair w = compute_weights(ds);
  const detail::OriginalFits fits = detail::original_fits(ds, spec, w);
  const std::size_t d = spec.dimension();

  TuningSelection tuning;
  tuning.bundle = cov;
  if (cfg.fixed_tuning) {
    tuning.omega = *cfg.fixed_tuning;
  } else {
    switch (cfg.tuning) {
      case TuningStrategy::kIdentity:
        tuning.omega = TuningMatrix::identity();
        break;
      case TuningStrategy::kOptDiag:
        tuning.omega = optimal_diag_tuning(cov);
        break;
      case TuningStrategy::kOptFull:
        tuning.omega = optimal_full_tuning(cov, &tuning.ridge_applied);
        break;
    }
  }

  PTDResult out;
  out.point = ptd_combine(tuning.omega, fits.gamma_o.theta, fits.theta_c.theta,
                          fits.gamma_c.theta);
  const Matrix sigma = ptd_asymptotic_variance(tuning.omega, cov);
  const double z = normal_quantile(1.0 - cfg.alpha / 2.0);
  const auto n = static_cast<double>(ds.rows());
  out.intervals.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double half = z * std::sqrt(std::max(sigma(j, j), 0.0) / n);
    out.intervals[j] = {out.point[j] - half, out.point[j] + half};
  }
  out.tuning = tuning.omega;
  out.method = to_string(Method::kClt);
  out.alpha = cfg.alpha;
  out.diagnostics.replicates = 0;
  out.diagnostics.ridge_applied = tuning.ridge_applied;
  out.diagnostics.point_fit_converged =
      fits.theta_c.converged && fits.gamma_c.converged && fits.gamma_o.converged;
  return out;
}

inline PTDResult clt_intervals(const Dataset& ds, const EstimatorSpec& spec,
                               const IntervalConfig& cfg) {
  return clt_intervals(ds, spec, cfg, plug_in_bundle(ds, spec));
}

// Cluster bootstrap: replicates resample whole clusters with replacement.
// With method kClusterConvBoot the incomplete-sample refit is replaced by a
// Gaussian draw whose variance estimate is cluster-robust.
inline PTDResult cluster_bootstrap(const Dataset& ds, const EstimatorSpec& spec,
                                   const IntervalConfig& cfg,
                                   BootstrapDraws* capture = nullptr) {
  detail::validate_config(cfg);
  const auto* cl = std::get_if<Clustered>(&ds.design);
  if (!cl)
    throw IncompatibleMethodDesignError("cluster bootstrap requires a clustered design");
  const bool convolution = cfg.method == Method::kClusterConvBoot;
  const std::size_t d = spec.dimension();
  const std::size_t n = ds.rows();
  const auto members = cluster_members(*cl, n);
  const std::size_t k_clusters = members.size();
  const WeightPair w = compute_weights(ds);
  const detail::OriginalFits fits = detail::original_fits(ds, spec, w);

  Matrix s_gamma_o;
  LowerTriangular chol_gamma;
  bool inner_bootstrap = false;
  if (convolution) {
    s_gamma_o = detail::gamma_o_variance(ds, spec, w, fits.gamma_o, cfg,
                                         /*cluster_robust=*/true, &inner_bootstrap);
    chol_gamma = cholesky(s_gamma_o);
  }

  BootstrapDraws draws;
  draws.theta_c = Matrix(cfg.replicates, d);
  draws.gamma_c = Matrix(cfg.replicates, d);
  Matrix normals;
  if (convolution)
    normals = Matrix(cfg.replicates, d);
  else
    draws.gamma_o = Matrix(cfg.replicates, d);
  draws.redraws = detail::run_replicates(
      cfg.replicates, cfg.master_seed, detail::retry_cap(cfg), cfg.threads,
      &draws.replicate_seeds, [&](std::size_t b, RngStream& rng) {
        thread_local detail::ReplicateBuffers buf;
        buf.clear();
        for (std::size_t t = 0; t < k_clusters; ++t)
          for (std::int32_t i : members[rng.next_below(k_clusters)])
            buf.push(i, w.complete[static_cast<std::size_t>(i)],
                     w.incomplete[static_cast<std::size_t>(i)], !convolution);
        const FitResult tc = fit_rows(spec, ds.truth, buf.complete_rows, buf.complete_w);
        const FitResult gc = fit_rows(spec, ds.proxy, buf.complete_rows, buf.complete_w);
        for (std::size_t j = 0; j < d; ++j) {
          draws.theta_c(b, j) = tc.theta[j];
          draws.gamma_c(b, j) = gc.theta[j];
        }
        if (convolution) {
          for (std::size_t j = 0; j < d; ++j) normals(b, j) = rng.next_normal();
        } else {
          const FitResult go =
              fit_rows(spec, ds.proxy, buf.incomplete_rows, buf.incomplete_w);
          for (std::size_t j = 0; j < d; ++j) draws.gamma_o(b, j) = go.theta[j];
        }
      });

  const TuningSelection tuning = detail::choose_tuning(
      draws, convolution ? std::optional<Matrix>(s_gamma_o) : std::nullopt, cfg, n);
  Matrix ptd_draws(cfg.replicates, d);
  Vector gamma_draw(d);
  for (std::size_t b = 0; b < cfg.replicates; ++b) {
    std::span<const double> gamma_o_b;
    if (convolution) {
      for (std::size_t i = 0; i < d; ++i) {
        double s = fits.gamma_o.theta[i];
        for (std::size_t j = 0; j <= i; ++j) s += chol_gamma.entries(i, j) * normals(b, j);
        gamma_draw[i] = s;
      }
      gamma_o_b = gamma_draw;
    } else {
      gamma_o_b = draws.gamma_o.row(b);
    }
    const Vector combined =
        ptd_combine(tuning.omega, gamma_o_b, draws.theta_c.row(b), draws.gamma_c.row(b));
    for (std::size_t j = 0; j < d; ++j) ptd_draws(b, j) = combined[j];
  }
  PTDResult out = detail::assemble_result(fits, tuning, ptd_draws, cfg, draws.redraws);
  out.diagnostics.convolution_inner_bootstrap = inner_bootstrap;
  if (capture) *capture = std::move(draws);
  return out;
}

// Stratified bootstrap: each replicate redraws the declared per-stratum
// counts within the labeled and incomplete rows of every stratum.
inline PTDResult stratified_bootstrap(const Dataset& ds, const EstimatorSpec& spec,
                                      const IntervalConfig& cfg,
                                      BootstrapDraws* capture = nullptr) {
  detail::validate_config(cfg);
  if (!std::holds_alternative<Stratified>(ds.design))
    throw IncompatibleMethodDesignError("stratified bootstrap requires a stratified design");
  const std::size_t d = spec.dimension();
  const std::size_t n = ds.rows();
  const StratifiedLayout layout = stratified_layout(ds);
  const WeightPair w = compute_weights(ds);
  const detail::OriginalFits fits = detail::original_fits(ds, spec, w);

  BootstrapDraws draws;
  draws.theta_c = Matrix(cfg.replicates, d);
  draws.gamma_c = Matrix(cfg.replicates, d);
  draws.gamma_o = Matrix(cfg.replicates, d);
  draws.redraws = detail::run_replicates(
      cfg.replicates, cfg.master_seed, detail::retry_cap(cfg), cfg.threads,
      &draws.replicate_seeds, [&](std::size_t b, RngStream& rng) {
        thread_local detail::ReplicateBuffers buf;
        buf.clear();
        for (std::size_t s = 0; s < layout.complete_rows.size(); ++s) {
          const auto& comp = layout.complete_rows[s];
          for (std::int64_t t = 0; t < layout.n_complete[s]; ++t) {
            const std::int32_t i = comp[rng.next_below(comp.size())];
            buf.complete_rows.push_back(i);
            buf.complete_w.push_back(w.complete[static_cast<std::size_t>(i)]);
          }
          const auto& inc = layout.incomplete_rows[s];
          for (std::int64_t t = 0; t < layout.n_incomplete[s]; ++t) {
            const std::int32_t i = inc[rng.next_below(inc.size())];
            buf.incomplete_rows.push_back(i);
            buf.incomplete_w.push_back(w.incomplete[static_cast<std::size_t>(i)]);
          }
        }
        const FitResult tc = fit_rows(spec, ds.truth, buf.complete_rows, buf.complete_w);
        const FitResult gc = fit_rows(spec, ds.proxy, buf.complete_rows, buf.complete_w);
        const FitResult go = fit_rows(spec, ds.proxy, buf.incomplete_rows, buf.incomplete_w);
        for (std::size_t j = 0; j < d; ++j) {
          draws.theta_c(b, j) = tc.theta[j];
          draws.gamma_c(b, j) = gc.theta[j];
          draws.gamma_o(b, j) = go.theta[j];
        }
      });

  const TuningSelection tuning = detail::choose_tuning(draws, std::nullopt, cfg, n);
  Matrix ptd_draws(cfg.replicates, d);
  for (std::size_t b = 0; b < cfg.replicates; ++b) {
    const Vector combined =
        ptd_combine(tuning.omega, draws.gamma_o.row(b), draws.theta_c.row(b),
                    draws.gamma_c.row(b));
    for (std::size_t j = 0; j < d; ++j) ptd_draws(b, j) = combined[j];
  }
  PTDResult out = detail::assemble_result(fits, tuning, ptd_draws, cfg, draws.redraws);
  if (capture) *capture = std::move(draws);
  return out;
}

// Dispatch on cfg.method.
inline PTDResult run_intervals(const Dataset& ds, const EstimatorSpec& spec,
                               const IntervalConfig& cfg) {
  switch (cfg.method) {
    case Method::kFullBoot:
      return full_percentile_bootstrap(ds, spec, cfg);
    case Method::kConvBoot:
      return convolution_bootstrap(ds, spec, cfg);
    case Method::kClt:
      return clt_intervals(ds, spec, cfg);
    case Method::kClusterBoot:
    case Method::kClusterConvBoot:
      return cluster_bootstrap(ds, spec, cfg);
    case Method::kStratifiedBoot:
      return stratified_bootstrap(ds, spec, cfg);
  }
  throw InvalidConfigError("unknown interval method");
}

}  // namespace ptd
