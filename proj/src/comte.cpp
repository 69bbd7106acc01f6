#include <algorithm>
#include <map>

#include "tscf/cf_methods.hpp"
#include "tscf/errors.hpp"
#include "tscf/rng.hpp"

namespace tscf {

double comte_loss(double target_prob, std::size_t swapped, const ComteConfig& cfg) {
  const double miss = cfg.tau - target_prob;
  const double excess = swapped > cfg.sigma ? static_cast<double>(swapped - cfg.sigma) : 0.0;
  return miss * miss + cfg.lambda * excess;
}

namespace {

using Mask = std::vector<std::uint8_t>;

std::size_t popcount(const Mask& m) {
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

struct Evaluation {
  double loss = 0.0;
  std::size_t swapped = 0;
  bool accepted = false;
  bool valid = false;
};

/// Lower loss wins; equal loss prefers fewer swapped channels.
bool better(const Evaluation& a, const Evaluation& b) {
  if (a.loss != b.loss) return a.loss < b.loss;
  return a.swapped < b.swapped;
}

class ChannelSearch {
 public:
  ChannelSearch(const CFRequest& req, const TimeSeries& distractor, const ClassifierModel& model,
                const ComteConfig& cfg)
      : req_(req), distractor_(distractor), model_(model), cfg_(cfg) {}

  TimeSeries compose(const Mask& mask) const {
    TimeSeries out = req_.instance;
    for (std::size_t c = 0; c < mask.size(); ++c) {
      if (!mask[c]) continue;
      const auto src = distractor_.channel(c);
      std::copy(src.begin(), src.end(), out.channel(c).begin());
    }
    return out;
  }

  const Evaluation& evaluate(const Mask& mask) {
    auto it = cache_.find(mask);
    if (it != cache_.end()) return it->second;
    const auto p = predict(model_, compose(mask));
    Evaluation e;
    e.swapped = popcount(mask);
    e.loss = comte_loss(p.probs[req_.target], e.swapped, cfg_);
    e.valid = p.predicted == req_.target;
    e.accepted = accepts(p, req_.target, req_.stop_prob);
    auto [pos, inserted] = cache_.emplace(mask, e);
    if (e.accepted && (!best_ || better(e, best_eval_) ||
                       (!better(best_eval_, e) && mask < *best_))) {
      best_ = mask;
      best_eval_ = e;
    }
    return pos->second;
  }

  const std::optional<Mask>& best() const { return best_; }

 private:
  const CFRequest& req_;
  const TimeSeries& distractor_;
  const ClassifierModel& model_;
  const ComteConfig& cfg_;
  std::map<Mask, Evaluation> cache_;
  std::optional<Mask> best_;
  Evaluation best_eval_;
};

}  // namespace

Counterfactual comte(const CFRequest& req, const ReferencePool& pool, const ClassifierModel& model,
                     const ComteConfig& cfg) {
  req.validate();
  const std::size_t channels = req.instance.channels();
  if (channels < 2) throw UnsupportedError("COMTE requires multivariate input");
  if (cfg.sigma < 1 || !(cfg.tau > 0.0 && cfg.tau < 1.0)) {
    throw ConfigError("COMTE needs sigma >= 1 and tau in (0, 1)");
  }
  const Deadline clock(req.time_budget);
  Counterfactual cf;
  cf.method = "comte";
  cf.original = req.instance;
  cf.perturbed = req.instance;
  cf.target = req.target;

  const auto idx = nun_index(pool, req.instance, req.target);
  if (!idx) {
    cf.note = "no training instance is predicted as the target class";
    cf.gen_time = clock.elapsed();
    return cf;
  }
  ChannelSearch search(req, pool.series(*idx), model, cfg);
  Rng rng(cfg.seed);
  bool expired = false;

  for (std::size_t r = 0; r < cfg.restarts && !expired; ++r) {
    Mask mask(channels, 0);
    std::vector<std::size_t> order(channels);
    for (std::size_t c = 0; c < channels; ++c) order[c] = c;
    rng.shuffle(order);
    const auto size = static_cast<std::size_t>(
        rng.integer(1, static_cast<std::int64_t>(std::min(cfg.sigma, channels))));
    for (std::size_t i = 0; i < size; ++i) mask[order[i]] = 1;

    Evaluation current = search.evaluate(mask);
    for (std::size_t step = 0; step < cfg.max_steps; ++step) {
      if (clock.expired()) {
        expired = true;
        break;
      }
      std::optional<Mask> best_move;
      Evaluation best_eval;
      for (std::size_t c = 0; c < channels; ++c) {
        Mask next = mask;
        next[c] ^= 1;
        if (popcount(next) == 0) continue;
        const Evaluation e = search.evaluate(next);
        if (!best_move || better(e, best_eval)) {
          best_move = std::move(next);
          best_eval = e;
        }
      }
      if (!best_move || !better(best_eval, current)) break;
      mask = std::move(*best_move);
      current = best_eval;
    }
  }

  if (!search.best() && !expired) {
    // Greedy fallback: add the single most helpful channel until accepted.
    Mask mask(channels, 0);
    for (std::size_t added = 0; added < channels; ++added) {
      if (clock.expired()) {
        expired = true;
        break;
      }
      std::optional<std::size_t> pick;
      Evaluation pick_eval;
      for (std::size_t c = 0; c < channels; ++c) {
        if (mask[c]) continue;
        Mask next = mask;
        next[c] = 1;
        const Evaluation e = search.evaluate(next);
        if (!pick || better(e, pick_eval)) {
          pick = c;
          pick_eval = e;
        }
      }
      mask[*pick] = 1;
      if (pick_eval.accepted) break;
    }
    if (!search.best()) {
      // Every channel swapped is the NUN itself, which the pool filter makes valid.
      const Mask all(channels, 1);
      const auto& e = search.evaluate(all);
      if (e.valid) {
        cf.perturbed = search.compose(all);
        cf.valid = true;
        cf.status = CFStatus::ok;
      }
    }
  }
  if (search.best()) {
    cf.perturbed = search.compose(*search.best());
    cf.valid = true;
    cf.status = CFStatus::ok;
  } else if (!cf.valid) {
    cf.status = expired ? CFStatus::timed_out : CFStatus::no_cf_found;
  }
  cf.gen_time = clock.elapsed();
  return cf;
}

}  // namespace tscf
