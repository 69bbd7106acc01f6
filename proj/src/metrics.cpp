#include "tscf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tscf/errors.hpp"

namespace tscf {

Proximity proximity(const TimeSeries& x, const TimeSeries& cf) {
  require_same_shape(x, cf, "proximity");
  Proximity p;
  double sq = 0.0;
  const auto a = x.flat();
  const auto b = cf.flat();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    p.l1 += d;
    sq += d * d;
    p.linf = std::max(p.linf, d);
  }
  p.l2 = std::sqrt(sq);
  return p;
}

double sparsity_l0(const TimeSeries& x, const TimeSeries& cf) {
  require_same_shape(x, cf, "sparsity_l0");
  std::size_t changed = 0;
  const auto a = x.flat();
  const auto b = cf.flat();
  for (std::size_t i = 0; i < a.size(); ++i) changed += a[i] != b[i];
  return static_cast<double>(changed) / static_cast<double>(a.size());
}

std::vector<double> change_thresholds(const TimeSeries& x, const SparsityConfig& cfg) {
  auto ranges = instance_range(x);
  if (cfg.global_range && !x.flat().empty()) {
    const auto [lo, hi] = std::minmax_element(x.flat().begin(), x.flat().end());
    std::fill(ranges.begin(), ranges.end(), *hi - *lo);
  }
  for (double& r : ranges) r *= cfg.tau;
  return ranges;
}

std::vector<std::uint8_t> perceptible_changes(const TimeSeries& x, const TimeSeries& cf,
                                              const SparsityConfig& cfg) {
  require_same_shape(x, cf, "perceptible_changes");
  const auto theta = change_thresholds(x, cfg);
  std::vector<std::uint8_t> mask(x.size(), 0);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (std::size_t t = 0; t < x.steps(); ++t) {
      const double d = std::abs(x(c, t) - cf(c, t));
      mask[c * x.steps() + t] = d > 0.0 && d >= theta[c];
    }
  }
  return mask;
}

std::size_t thresh_l0_count(const TimeSeries& x, const TimeSeries& cf, const SparsityConfig& cfg) {
  const auto mask = perceptible_changes(x, cf, cfg);
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

double thresh_l0(const TimeSeries& x, const TimeSeries& cf, const SparsityConfig& cfg) {
  return static_cast<double>(thresh_l0_count(x, cf, cfg)) / static_cast<double>(x.size());
}

std::size_t tolerance_steps(std::size_t steps, const SparsityConfig& cfg) {
  if (cfg.tolerance_frac <= 0.0) return 0;
  const auto tol = static_cast<std::size_t>(std::ceil(cfg.tolerance_frac * static_cast<double>(steps)));
  return std::max<std::size_t>(tol, 1);
}

std::size_t num_segments(const TimeSeries& x, const TimeSeries& cf, const SparsityConfig& cfg) {
  const auto mask = perceptible_changes(x, cf, cfg);
  const std::size_t steps = x.steps();
  const std::size_t tol = tolerance_steps(steps, cfg);
  std::size_t segments = 0;
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const std::uint8_t* m = mask.data() + c * steps;
    bool open = false;
    std::size_t gap = 0;
    for (std::size_t t = 0; t < steps; ++t) {
      if (m[t]) {
        if (!open || gap > tol) ++segments;
        open = true;
        gap = 0;
      } else if (open) {
        ++gap;
      }
    }
  }
  return segments;
}

TimeSeries sensitivity_probe(const TimeSeries& x, const TimeSeries& cf, const SparsityConfig& cfg) {
  const auto mask = perceptible_changes(x, cf, cfg);
  TimeSeries probe = x;
  auto out = probe.flat();
  const auto src = cf.flat();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out[i] = src[i];
  }
  return probe;
}

std::optional<int> sensitivity(const TimeSeries& x, const TimeSeries& cf,
                               const ClassifierModel& model, std::size_t target,
                               const SparsityConfig& cfg) {
  const std::size_t cf_pred = predict(model, cf).predicted;
  if (cf_pred != target) return std::nullopt;
  const std::size_t probe_pred = predict(model, sensitivity_probe(x, cf, cfg)).predicted;
  return probe_pred != cf_pred ? 1 : 0;
}

LatentSet LatentSet::from_model(const ClassifierModel& model,
                                std::span<const LabeledInstance> instances) {
  LatentSet set;
  set.reps.reserve(instances.size());
  set.labels.reserve(instances.size());
  for (const auto& inst : instances) {
    set.reps.push_back(latent(model, inst.series));
    set.labels.push_back(predict(model, inst.series).predicted);
  }
  return set;
}

double dist_nbr(const LatentSet& reps, std::span<const double> query,
                std::optional<std::size_t> class_filter, std::size_t k,
                std::optional<std::size_t> exclude) {
  if (k < 1) throw MetricError("neighbourhood size k must be >= 1");
  std::vector<double> d;
  d.reserve(reps.reps.size());
  for (std::size_t i = 0; i < reps.reps.size(); ++i) {
    if (exclude && *exclude == i) continue;
    if (class_filter && reps.labels[i] != *class_filter) continue;
    const auto& r = reps.reps[i];
    if (r.size() != query.size()) throw ContractError("latent dimension mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) s += (query[j] - r[j]) * (query[j] - r[j]);
    d.push_back(s);
  }
  if (d.empty()) {
    throw MetricError(class_filter ? "no training representation predicted as class " +
                                         std::to_string(*class_filter)
                                   : std::string("no training representations"));
  }
  const std::size_t kk = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
  double s = 0.0;
  for (std::size_t i = 0; i < kk; ++i) s += d[i];
  return s / static_cast<double>(kk);
}

namespace {

/// Mean self-excluded neighbourhood distance over members matching `cls`.
std::optional<double> mean_training_distance(const LatentSet& reps,
                                             std::optional<std::size_t> cls, std::size_t k) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < reps.reps.size(); ++i) {
    if (cls && reps.labels[i] != *cls) continue;
    try {
      sum += dist_nbr(reps, reps.reps[i], cls, k, i);
      ++count;
    } catch (const MetricError&) {
      // Sole member of its class: no neighbour once itself is excluded.
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

RatioMetric ratio(double numerator, std::optional<double> denominator) {
  if (!denominator || *denominator <= 0.0) {
    return {std::numeric_limits<double>::infinity(), true};
  }
  return {numerator / *denominator, false};
}

}  // namespace

PlausibilityReference::PlausibilityReference(LatentSet reps, PlausibilityConfig cfg)
    : reps_(std::move(reps)), cfg_(cfg) {
  if (reps_.reps.empty()) throw MetricError("plausibility reference needs training representations");
  denom_all_ = mean_training_distance(reps_, std::nullopt, cfg_.k).value_or(0.0);
  std::size_t classes = 0;
  for (auto l : reps_.labels) classes = std::max(classes, l + 1);
  denom_class_.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    denom_class_[c] = mean_training_distance(reps_, c, cfg_.k);
  }
}

std::optional<double> PlausibilityReference::denominator_class(std::size_t cls) const {
  return cls < denom_class_.size() ? denom_class_[cls] : std::nullopt;
}

RatioMetric PlausibilityReference::dist_all(std::span<const double> query) const {
  return ratio(dist_nbr(reps_, query, std::nullopt, cfg_.k), denom_all_);
}

RatioMetric PlausibilityReference::dist_class(std::span<const double> query, std::size_t cls) const {
  return ratio(dist_nbr(reps_, query, cls, cfg_.k), denominator_class(cls));
}

RatioMetric dist_all(const LatentSet& train_reps, std::span<const double> query, std::size_t k) {
  return ratio(dist_nbr(train_reps, query, std::nullopt, k),
               mean_training_distance(train_reps, std::nullopt, k));
}

RatioMetric dist_class(const LatentSet& train_reps, std::span<const double> query,
                       std::size_t target, std::size_t k) {
  return ratio(dist_nbr(train_reps, query, target, k),
               mean_training_distance(train_reps, target, k));
}

ConsistencyResult consistency(std::span<const Counterfactual> cfs,
                              std::span<const std::size_t> labels,
                              const ClassifierModel& model_a, const ClassifierModel& model_b) {
  if (cfs.size() != labels.size()) throw ContractError("consistency: one label per counterfactual");
  if (model_a.channels != model_b.channels || model_a.steps != model_b.steps ||
      model_a.num_classes != model_b.num_classes) {
    throw ContractError("consistency: models disagree on input shape or class set");
  }
  ConsistencyResult r;
  for (std::size_t i = 0; i < cfs.size(); ++i) {
    const auto& cf = cfs[i];
    if (predict(model_a, cf.original).predicted != labels[i]) continue;
    if (predict(model_b, cf.original).predicted != labels[i]) continue;
    ++r.eligible;
    if (predict(model_a, cf.perturbed).predicted != cf.target) continue;
    ++r.valid;
    if (predict(model_b, cf.perturbed).predicted == cf.target) ++r.consistent;
  }
  if (r.eligible > 0) {
    r.consist_bc = static_cast<double>(r.consistent) / static_cast<double>(r.eligible);
  }
  if (r.valid > 0) {
    r.consist_bv = static_cast<double>(r.consistent) / static_cast<double>(r.valid);
  }
  return r;
}

MetricReport evaluate(const Counterfactual& cf, const ClassifierModel& model,
                      const PlausibilityReference& plausibility, const SparsityConfig& sparsity) {
  MetricReport m;
  m.gen_time = cf.gen_time;
  m.status = cf.status;
  require_same_shape(cf.original, cf.perturbed, "evaluate");
  m.valid = cf.perturbed.all_finite() && predict(model, cf.perturbed).predicted == cf.target;
  if (!m.valid) return m;
  const auto p = proximity(cf.original, cf.perturbed);
  m.l1 = p.l1;
  m.l2 = p.l2;
  m.linf = p.linf;
  m.l0 = sparsity_l0(cf.original, cf.perturbed);
  m.thresh_l0_count = thresh_l0_count(cf.original, cf.perturbed, sparsity);
  m.thresh_l0 = static_cast<double>(*m.thresh_l0_count) / static_cast<double>(cf.original.size());
  m.sens = sensitivity(cf.original, cf.perturbed, model, cf.target, sparsity);
  m.num_seg = num_segments(cf.original, cf.perturbed, sparsity);
  const auto rep = latent(model, cf.perturbed);
  const auto all = plausibility.dist_all(rep);
  m.dist_all = all.value;
  m.dist_all_degenerate = all.degenerate;
  try {
    const auto cls = plausibility.dist_class(rep, cf.target);
    m.dist_class = cls.value;
    m.dist_class_degenerate = cls.degenerate;
  } catch (const MetricError&) {
    // Target class never predicted on the training split: metric absent.
  }
  return m;
}

}  // namespace tscf
