#pragma once

// Sampling/labeling designs, inverse-probability weight construction, and the
// resampling index generators behind every bootstrap method.
//
// Truth cells of unlabeled rows hold NaN so any accidental read poisons the
// result; weighted fits never touch them because those rows carry weight 0.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "ptd/errors.hpp"
#include "ptd/estimators.hpp"
#include "ptd/matrix.hpp"
#include "ptd/rng.hpp"

namespace ptd {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct UniformBernoulli {
  double pi_labeled = 0.1;
};

struct WeightedBernoulli {
  std::vector<double> pi;  // per-row labeling probability
};

struct Clustered {
  std::vector<std::int32_t> cluster_of;  // per-row cluster id, 0-based
  std::vector<double> pi_k;              // per-cluster labeling probability
};

struct Stratified {
  std::vector<std::int32_t> stratum_of;  // per-row stratum id, 0-based
  std::vector<std::int64_t> n_complete;  // per-stratum complete-sample size
  std::vector<std::int64_t> n_incomplete;
};

using LabelingDesign = std::variant<UniformBernoulli, WeightedBernoulli, Clustered, Stratified>;

struct Dataset {
  Matrix proxy;   // N x p, fully observed
  Matrix truth;   // N x p, NaN on unlabeled rows' imputed columns
  std::vector<std::uint8_t> labeled;
  LabelingDesign design;

  std::size_t rows() const { return proxy.rows(); }
  std::size_t cols() const { return proxy.cols(); }
};

// Disjoint-support weight pair: W drives complete-sample fits, W-bar (or the
// stratified W-circle) drives incomplete-sample fits.
struct WeightPair {
  WeightVector complete;
  WeightVector incomplete;
};

namespace detail {

inline void require_probability(double p, const char* what) {
  if (!(p > 0.0 && p < 1.0) || !std::isfinite(p))
    throw InvalidDesignError(std::string(what) + " must lie strictly inside (0,1)");
}

inline std::size_t group_count(std::span<const std::int32_t> ids, std::size_t declared) {
  std::int32_t max_id = -1;
  for (std::int32_t id : ids) {
    if (id < 0) throw InvalidDesignError("group ids must be nonnegative");
    max_id = std::max(max_id, id);
  }
  const auto k = static_cast<std::size_t>(max_id + 1);
  if (declared != 0 && k > declared)
    throw InvalidDesignError("group id exceeds declared group count");
  return declared == 0 ? k : declared;
}

}  // namespace detail

// Per-row member lists of each cluster, in id order.
inline std::vector<std::vector<std::int32_t>> cluster_members(const Clustered& design,
                                                              std::size_t n_rows) {
  if (design.cluster_of.size() != n_rows)
    throw InvalidDesignError("cluster id vector length mismatch");
  const std::size_t k = detail::group_count(design.cluster_of, design.pi_k.size());
  std::vector<std::vector<std::int32_t>> members(k);
  for (std::size_t i = 0; i < n_rows; ++i)
    members[static_cast<std::size_t>(design.cluster_of[i])].push_back(
        static_cast<std::int32_t>(i));
  for (std::size_t c = 0; c < k; ++c)
    if (members[c].empty()) throw InvalidDesignError("cluster " + std::to_string(c) + " is empty");
  return members;
}

inline WeightPair compute_weights(const Dataset& ds) {
  const std::size_t n = ds.rows();
  if (ds.labeled.size() != n) throw InvalidDesignError("labeled indicator length mismatch");
  WeightPair out;
  out.complete.assign(n, 0.0);
  out.incomplete.assign(n, 0.0);

  if (const auto* u = std::get_if<UniformBernoulli>(&ds.design)) {
    detail::require_probability(u->pi_labeled, "labeling probability");
    for (std::size_t i = 0; i < n; ++i) {
      if (ds.labeled[i])
        out.complete[i] = 1.0 / u->pi_labeled;
      else
        out.incomplete[i] = 1.0 / (1.0 - u->pi_labeled);
    }
    return out;
  }
  if (const auto* wb = std::get_if<WeightedBernoulli>(&ds.design)) {
    if (wb->pi.size() != n) throw InvalidDesignError("per-row probability length mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      detail::require_probability(wb->pi[i], "labeling probability");
      if (ds.labeled[i])
        out.complete[i] = 1.0 / wb->pi[i];
      else
        out.incomplete[i] = 1.0 / (1.0 - wb->pi[i]);
    }
    return out;
  }
  if (const auto* cl = std::get_if<Clustered>(&ds.design)) {
    const auto members = cluster_members(*cl, n);
    if (cl->pi_k.size() != members.size())
      throw InvalidDesignError("per-cluster probability count mismatch");
    for (std::size_t c = 0; c < members.size(); ++c) {
      detail::require_probability(cl->pi_k[c], "cluster labeling probability");
      const bool xi = ds.labeled[static_cast<std::size_t>(members[c].front())] != 0;
      for (std::int32_t i : members[c]) {
        if ((ds.labeled[static_cast<std::size_t>(i)] != 0) != xi)
          throw InvalidDesignError("cluster " + std::to_string(c) +
                                   " mixes labeled and unlabeled rows");
        if (xi)
          out.complete[static_cast<std::size_t>(i)] = 1.0 / cl->pi_k[c];
        else
          out.incomplete[static_cast<std::size_t>(i)] = 1.0 / (1.0 - cl->pi_k[c]);
      }
    }
    return out;
  }
  const auto& st = std::get<Stratified>(ds.design);
  if (st.stratum_of.size() != n) throw InvalidDesignError("stratum id vector length mismatch");
  const std::size_t k = detail::group_count(st.stratum_of, st.n_complete.size());
  if (st.n_complete.size() != k || st.n_incomplete.size() != k)
    throw InvalidDesignError("per-stratum count vectors must cover every stratum");
  std::vector<std::int64_t> size_k(k, 0), labeled_k(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(st.stratum_of[i]);
    ++size_k[s];
    if (ds.labeled[i]) ++labeled_k[s];
  }
  for (std::size_t s = 0; s < k; ++s) {
    if (st.n_complete[s] < 1 || st.n_incomplete[s] < 1)
      throw InvalidDesignError("stratum " + std::to_string(s) + " has a zero sample count");
    if (labeled_k[s] != st.n_complete[s])
      throw InvalidDesignError("stratum " + std::to_string(s) + " has " +
                               std::to_string(labeled_k[s]) + " labeled rows but declares " +
                               std::to_string(st.n_complete[s]));
    // Every unlabeled row is part of the declared incomplete subsample.
    if (size_k[s] - labeled_k[s] != st.n_incomplete[s])
      throw InvalidDesignError("stratum " + std::to_string(s) + " has " +
                               std::to_string(size_k[s] - labeled_k[s]) +
                               " unlabeled rows but declares " +
                               std::to_string(st.n_incomplete[s]));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(st.stratum_of[i]);
    const auto stratum_size = static_cast<double>(size_k[s]);
    if (ds.labeled[i])
      out.complete[i] = stratum_size / static_cast<double>(st.n_complete[s]);
    else
      out.incomplete[i] = stratum_size / static_cast<double>(st.n_incomplete[s]);
  }
  return out;
}

// Design-health notes that do not block a run (e.g. thin strata).
inline std::vector<std::string> design_warnings(const Dataset& ds) {
  std::vector<std::string> notes;
  if (const auto* st = std::get_if<Stratified>(&ds.design)) {
    for (std::size_t s = 0; s < st->n_complete.size(); ++s)
      if (st->n_complete[s] < 30)
        notes.push_back("stratum " + std::to_string(s) + " has only " +
                        std::to_string(st->n_complete[s]) +
                        " labeled rows; the stratified bootstrap expects a small number of "
                        "large strata");
  }
  return notes;
}

// IID row indices with replacement, 0-based.
inline std::vector<std::int32_t> resample_iid(std::size_t n_rows, RngStream& rng) {
  assert(n_rows >= 1);
  std::vector<std::int32_t> idx(n_rows);
  for (auto& v : idx) v = static_cast<std::int32_t>(rng.next_below(n_rows));
  return idx;
}

// Draws K cluster ids with replacement and concatenates their members; the
// output length need not equal N.
inline std::vector<std::int32_t> resample_clusters(
    const std::vector<std::vector<std::int32_t>>& clusters, RngStream& rng) {
  assert(!clusters.empty());
  std::vector<std::int32_t> idx;
  idx.reserve(clusters.size() * (clusters.front().size() + 1));
  for (std::size_t draw = 0; draw < clusters.size(); ++draw) {
    const auto& members = clusters[rng.next_below(clusters.size())];
    idx.insert(idx.end(), members.begin(), members.end());
  }
  return idx;
}

struct StratifiedLayout {
  std::vector<std::vector<std::int32_t>> complete_rows;    // per stratum
  std::vector<std::vector<std::int32_t>> incomplete_rows;  // per stratum
  std::vector<std::int64_t> n_complete, n_incomplete;
};

inline StratifiedLayout stratified_layout(const Dataset& ds) {
  const auto* st = std::get_if<Stratified>(&ds.design);
  if (!st) throw InvalidDesignError("dataset does not use a stratified design");
  const std::size_t k = detail::group_count(st->stratum_of, st->n_complete.size());
  StratifiedLayout layout;
  layout.complete_rows.resize(k);
  layout.incomplete_rows.resize(k);
  layout.n_complete = st->n_complete;
  layout.n_incomplete = st->n_incomplete;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const auto s = static_cast<std::size_t>(st->stratum_of[i]);
    if (ds.labeled[i])
      layout.complete_rows[s].push_back(static_cast<std::int32_t>(i));
    else
      layout.incomplete_rows[s].push_back(static_cast<std::int32_t>(i));
  }
  for (std::size_t s = 0; s < k; ++s)
    if (layout.complete_rows[s].empty())
      throw InvalidDesignError("stratum " + std::to_string(s) + " has no labeled rows");
  return layout;
}

struct StratifiedResample {
  std::vector<std::int32_t> complete;
  std::vector<std::int32_t> incomplete;
};

// Within each stratum draws n_k complete indices uniformly from the labeled
// rows and n_k-circle indices from the incomplete rows, then concatenates.
inline StratifiedResample resample_stratified(const StratifiedLayout& layout, RngStream& rng) {
  StratifiedResample out;
  for (std::size_t s = 0; s < layout.complete_rows.size(); ++s) {
    const auto& comp = layout.complete_rows[s];
    for (std::int64_t t = 0; t < layout.n_complete[s]; ++t)
      out.complete.push_back(comp[rng.next_below(comp.size())]);
    const auto& inc = layout.incomplete_rows[s];
    if (inc.empty())
      throw InvalidDesignError("stratum " + std::to_string(s) + " has no incomplete rows");
    for (std::int64_t t = 0; t < layout.n_incomplete[s]; ++t)
      out.incomplete.push_back(inc[rng.next_below(inc.size())]);
  }
  return out;
}

inline StratifiedResample resample_stratified(const Dataset& ds, RngStream& rng) {
  return resample_stratified(stratified_layout(ds), rng);
}

// Structural checks on a dataset; throws on violation.
inline void validate_dataset(const Dataset& ds) {
  const std::size_t n = ds.rows();
  if (n == 0) throw InvalidDesignError("dataset has no rows");
  if (ds.truth.rows() != n || ds.truth.cols() != ds.proxy.cols())
    throw ShapeMismatchError("truth and proxy matrices must share a shape");
  if (ds.labeled.size() != n) throw InvalidDesignError("labeled indicator length mismatch");
  std::size_t labeled_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    labeled_count += ds.labeled[i] ? 1 : 0;
    for (std::size_t j = 0; j < ds.cols(); ++j)
      if (!std::isfinite(ds.proxy(i, j)))
        throw InvalidDesignError("proxy matrix must be fully observed");
  }
  if (labeled_count == 0) throw InvalidDesignError("dataset has no labeled rows");
  compute_weights(ds);  // validates the design parameters
}

}  // namespace ptd
