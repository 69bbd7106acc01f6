#include <algorithm>
#include <cmath>

#include "tscf/cf_methods.hpp"
#include "tscf/errors.hpp"

namespace tscf {

std::vector<double> median_absolute_deviation(std::span<const LabeledInstance> train) {
  if (train.empty()) throw ContractError("median absolute deviation needs training data");
  const std::size_t features = train.front().series.size();
  const std::size_t channels = train.front().series.channels();
  const std::size_t steps = train.front().series.steps();
  const std::size_t m = train.size();

  auto median = [](std::vector<double>& v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
  };

  std::vector<double> floor(channels, 1e-6);
  for (std::size_t c = 0; c < channels; ++c) {
    double lo = train.front().series(c, 0), hi = lo;
    for (const auto& inst : train) {
      for (double v : inst.series.channel(c)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (hi > lo) floor[c] = 1e-6 * (hi - lo);
  }

  std::vector<double> mad(features);
  std::vector<double> column(m);
  for (std::size_t f = 0; f < features; ++f) {
    for (std::size_t i = 0; i < m; ++i) column[i] = train[i].series.flat()[f];
    const double med = median(column);
    for (std::size_t i = 0; i < m; ++i) column[i] = std::abs(train[i].series.flat()[f] - med);
    mad[f] = std::max(median(column), floor[f / steps]);
  }
  return mad;
}

Counterfactual wachter(const CFRequest& req, const ClassifierModel& model, const WachterConfig& cfg) {
  req.validate();
  if (!(cfg.lambda_init > 0.0) || !(cfg.step_size > 0.0)) {
    throw ConfigError("wachter needs positive lambda and step size");
  }
  if (!cfg.mad.empty() && cfg.mad.size() != req.instance.size()) {
    throw ContractError("wachter: MAD vector must have one entry per feature point");
  }
  const Deadline clock(req.time_budget);
  Counterfactual cf;
  cf.method = "wcf";
  cf.original = req.instance;
  cf.target = req.target;

  GradientObjective objective;
  objective.target = req.target;
  objective.target_prob = cfg.target_prob >= 0.0 ? cfg.target_prob : req.stop_prob;
  objective.reference = &req.instance;
  objective.scale = cfg.mad;

  TimeSeries current = req.instance;
  TimeSeries best = current;
  double best_loss = std::numeric_limits<double>::infinity();
  double lambda = cfg.lambda_init;

  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    if (clock.expired()) {
      cf.perturbed = best;
      cf.status = CFStatus::timed_out;
      cf.gen_time = clock.elapsed();
      return cf;
    }
    if (it > 0 && cfg.growth_every > 0 && it % cfg.growth_every == 0) lambda *= cfg.lambda_growth;
    objective.weight = lambda;
    const auto p = predict(model, current);
    if (accepts(p, req.target, req.stop_prob)) {
      cf.perturbed = std::move(current);
      cf.valid = true;
      cf.status = CFStatus::ok;
      cf.gen_time = clock.elapsed();
      return cf;
    }
    const auto g = input_gradient(model, current, objective);
    if (cfg.record_trace) cf.loss_trace.push_back(g.loss);
    if (g.loss < best_loss) {
      best_loss = g.loss;
      best = current;
    }
    auto x = current.flat();
    const auto grad = g.gradient.flat();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(grad[i])) {
        cf.perturbed = best;
        cf.status = CFStatus::no_cf_found;
        cf.note = "gradient became non-finite";
        cf.gen_time = clock.elapsed();
        return cf;
      }
      x[i] -= cfg.step_size * grad[i];
    }
  }
  const auto p = predict(model, current);
  if (accepts(p, req.target, req.stop_prob)) {
    cf.perturbed = std::move(current);
    cf.valid = true;
    cf.status = CFStatus::ok;
  } else {
    cf.perturbed = best;
    cf.status = CFStatus::no_cf_found;
    cf.note = "no valid counterfactual within the iteration limit";
  }
  cf.gen_time = clock.elapsed();
  return cf;
}

}  // namespace tscf
