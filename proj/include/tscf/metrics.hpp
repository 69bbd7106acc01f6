#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tscf/classifier.hpp"
#include "tscf/counterfactual.hpp"
#include "tscf/time_series.hpp"

namespace tscf {

struct SparsityConfig {
  double tau = 0.0025;            ///< threshold as a fraction of the instance range
  double tolerance_frac = 0.01;   ///< segment gap tolerance as a fraction of T
  bool global_range = false;      ///< one range over all channels instead of per channel
};

struct PlausibilityConfig {
  std::size_t k = 5;
};

struct Proximity {
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

Proximity proximity(const TimeSeries& x, const TimeSeries& cf);

/// Fraction of feature points that differ at all.
double sparsity_l0(const TimeSeries& x, const TimeSeries& cf);

/// Per-channel perceptibility threshold tau * range_c(x).
std::vector<double> change_thresholds(const TimeSeries& x, const SparsityConfig& cfg);

/// 1 where |x - cf| reaches the channel threshold. A zero threshold marks
/// every nonzero change.
std::vector<std::uint8_t> perceptible_changes(const TimeSeries& x, const TimeSeries& cf,
                                              const SparsityConfig& cfg);

std::size_t thresh_l0_count(const TimeSeries& x, const TimeSeries& cf, const SparsityConfig& cfg);
/// thresh_l0_count / (N * T).
double thresh_l0(const TimeSeries& x, const TimeSeries& cf, const SparsityConfig& cfg);

/// Unmarked gap length (in steps) that still joins two segments:
/// ceil(tolerance_frac * T), at least 1 when tolerance_frac > 0.
std::size_t tolerance_steps(std::size_t steps, const SparsityConfig& cfg);

/// Perceptible-change runs per channel after gap merging, summed over channels.
std::size_t num_segments(const TimeSeries& x, const TimeSeries& cf, const SparsityConfig& cfg);

/// x' for the sensitivity test: cf values where the change is perceptible,
/// original values elsewhere.
TimeSeries sensitivity_probe(const TimeSeries& x, const TimeSeries& cf, const SparsityConfig& cfg);

/// 1 if dropping imperceptible changes alters the prediction, else 0.
/// Absent when cf is not a valid counterfactual for `target`.
std::optional<int> sensitivity(const TimeSeries& x, const TimeSeries& cf,
                               const ClassifierModel& model, std::size_t target,
                               const SparsityConfig& cfg);

/// Latent representations of a training split with their predicted labels.
struct LatentSet {
  std::vector<LatentRep> reps;
  std::vector<std::size_t> labels;

  static LatentSet from_model(const ClassifierModel& model,
                              std::span<const LabeledInstance> instances);
};

/// Mean squared Euclidean distance to the k nearest members of `reps`
/// (restricted to `class_filter` when given). `exclude` removes one member,
/// used when the query is itself a training representation. Uses all
/// candidates when fewer than k remain. Throws MetricError if none remain.
double dist_nbr(const LatentSet& reps, std::span<const double> query,
                std::optional<std::size_t> class_filter, std::size_t k,
                std::optional<std::size_t> exclude = std::nullopt);

/// Ratio of the query's neighbourhood distance to the training average.
/// `degenerate` is set (value = +inf) when the denominator is zero or undefined.
struct RatioMetric {
  double value = 0.0;
  bool degenerate = false;
};

/// Caches the training-side denominators so many queries can be scored.
class PlausibilityReference {
 public:
  PlausibilityReference(LatentSet reps, PlausibilityConfig cfg = {});

  RatioMetric dist_all(std::span<const double> query) const;
  /// Throws MetricError if no training representation is predicted as `cls`.
  RatioMetric dist_class(std::span<const double> query, std::size_t cls) const;

  double denominator_all() const { return denom_all_; }
  std::optional<double> denominator_class(std::size_t cls) const;
  const LatentSet& reps() const { return reps_; }

 private:
  LatentSet reps_;
  PlausibilityConfig cfg_;
  double denom_all_ = 0.0;
  std::vector<std::optional<double>> denom_class_;
};

RatioMetric dist_all(const LatentSet& train_reps, std::span<const double> query,
                     std::size_t k = 5);
RatioMetric dist_class(const LatentSet& train_reps, std::span<const double> query,
                       std::size_t target, std::size_t k = 5);

struct ConsistencyResult {
  std::size_t eligible = 0;    ///< correctly predicted by both models
  std::size_t valid = 0;       ///< eligible and valid under model A
  std::size_t consistent = 0;  ///< eligible and valid under both
  std::optional<double> consist_bc;
  std::optional<double> consist_bv;
};

/// `cfs[i]` was generated against model A for an instance with true label
/// `labels[i]`. Validity is recomputed under both models.
ConsistencyResult consistency(std::span<const Counterfactual> cfs,
                              std::span<const std::size_t> labels,
                              const ClassifierModel& model_a, const ClassifierModel& model_b);

/// One record per explained instance. Metrics that only make sense for a
/// valid counterfactual are absent otherwise.
struct MetricReport {
  bool valid = false;
  CFStatus status = CFStatus::no_cf_found;
  std::optional<double> l1, l2, linf;
  std::optional<double> l0;
  std::optional<double> thresh_l0;
  std::optional<std::size_t> thresh_l0_count;
  std::optional<int> sens;
  std::optional<std::size_t> num_seg;
  std::optional<double> dist_all, dist_class;
  bool dist_all_degenerate = false;
  bool dist_class_degenerate = false;
  double gen_time = 0.0;
};

MetricReport evaluate(const Counterfactual& cf, const ClassifierModel& model,
                      const PlausibilityReference& plausibility, const SparsityConfig& sparsity);

}  // namespace tscf
