#include <algorithm>
#include <cmath>

#include "tscf/cf_methods.hpp"
#include "tscf/errors.hpp"

namespace tscf {

std::size_t best_window(std::span<const double> weights, std::size_t length) {
  if (length == 0 || length > weights.size()) throw ContractError("window length out of range");
  // Direct sums keep exact ties (e.g. a flat map) resolving to the earliest start.
  double best = 0.0;
  std::size_t start = 0;
  for (std::size_t s = 0; s + length <= weights.size(); ++s) {
    double sum = 0.0;
    for (std::size_t t = s; t < s + length; ++t) sum += weights[t];
    if (s == 0 || sum > best) {
      best = sum;
      start = s;
    }
  }
  return start;
}

Counterfactual native_guide(const CFRequest& req, const ReferencePool& pool,
                            const ClassifierModel& model, const NativeGuideConfig& cfg) {
  req.validate();
  if (req.instance.channels() != 1) {
    throw UnsupportedError("native guide requires univariate input");
  }
  if (model.architecture != Architecture::fcn) {
    throw UnsupportedError("native guide requires an fcn model (class activation maps)");
  }
  const Deadline clock(req.time_budget);
  Counterfactual cf;
  cf.method = "ng";
  cf.original = req.instance;
  cf.perturbed = req.instance;
  cf.target = req.target;

  const auto idx = nun_index(pool, req.instance, req.target);
  if (!idx) {
    cf.note = "no training instance is predicted as the target class";
    cf.gen_time = clock.elapsed();
    return cf;
  }
  const TimeSeries& guide = pool.series(*idx);
  const auto cam = class_activation_map(model, req.instance, req.original_pred);
  const std::size_t steps = req.instance.steps();

  std::size_t length = 1;
  while (true) {
    if (clock.expired()) {
      cf.status = CFStatus::timed_out;
      break;
    }
    const std::size_t start = best_window(cam, length);
    TimeSeries candidate = req.instance;
    for (std::size_t t = start; t < start + length; ++t) candidate(0, t) = guide(0, t);
    const auto p = predict(model, candidate);
    if (accepts(p, req.target, req.stop_prob) || length == steps) {
      cf.perturbed = std::move(candidate);
      cf.valid = p.predicted == req.target;
      cf.status = cf.valid ? CFStatus::ok : CFStatus::no_cf_found;
      break;
    }
    std::size_t next = length + 1;
    if (cfg.growth > 1.0) {
      next = std::max(next, static_cast<std::size_t>(std::ceil(static_cast<double>(length) * cfg.growth)));
    }
    length = std::min(next, steps);
  }
  cf.gen_time = clock.elapsed();
  return cf;
}

}  // namespace tscf
