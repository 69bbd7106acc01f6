#include <algorithm>
#include <cmath>
#include <limits>

#include "tscf/cf_methods.hpp"
#include "tscf/errors.hpp"

namespace tscf {

double euclidean(const TimeSeries& a, const TimeSeries& b) {
  require_same_shape(a, b, "euclidean");
  double s = 0.0;
  const auto x = a.flat();
  const auto y = b.flat();
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

ReferencePool::ReferencePool(std::span<const LabeledInstance> train, const ClassifierModel& model) {
  series_.reserve(train.size());
  predicted_.reserve(train.size());
  for (const auto& inst : train) {
    series_.push_back(inst.series);
    predicted_.push_back(predict(model, inst.series).predicted);
  }
}

ReferencePool::ReferencePool(std::vector<TimeSeries> series, std::vector<std::size_t> predicted)
    : series_(std::move(series)), predicted_(std::move(predicted)) {
  if (series_.size() != predicted_.size()) {
    throw ContractError("reference pool needs one prediction per series");
  }
}

std::vector<std::size_t> ReferencePool::predicted_as(std::size_t cls) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < predicted_.size(); ++i) {
    if (predicted_[i] == cls) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> nun_index(const ReferencePool& pool, const TimeSeries& x,
                                     std::size_t target, const DistanceFn& distance) {
  std::optional<std::size_t> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool.predicted(i) != target) continue;
    const double d = distance(x, pool.series(i));
    if (!best || d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

std::optional<TimeSeries> nun(std::span<const LabeledInstance> train, const ClassifierModel& model,
                              const TimeSeries& x, std::size_t target) {
  const ReferencePool pool(train, model);
  const auto idx = nun_index(pool, x, target);
  if (!idx) return std::nullopt;
  return pool.series(*idx);
}

bool accepts(const Prediction& p, std::size_t target, double stop_prob) {
  return p.predicted == target && p.probs[target] >= stop_prob;
}

Counterfactual nun_cf(const CFRequest& req, const ReferencePool& pool, const ClassifierModel& model) {
  req.validate();
  const Deadline clock(req.time_budget);
  Counterfactual cf;
  cf.method = "nun_cf";
  cf.original = req.instance;
  cf.perturbed = req.instance;
  cf.target = req.target;
  const auto idx = nun_index(pool, req.instance, req.target);
  if (!idx) {
    cf.status = CFStatus::no_cf_found;
    cf.note = "no training instance is predicted as the target class";
  } else {
    cf.perturbed = pool.series(*idx);
    cf.valid = predict(model, cf.perturbed).predicted == req.target;
    cf.status = cf.valid ? CFStatus::ok : CFStatus::no_cf_found;
  }
  cf.gen_time = clock.elapsed();
  return cf;
}

}  // namespace tscf
