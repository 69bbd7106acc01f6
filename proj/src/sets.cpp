#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "tscf/cf_methods.hpp"
#include "tscf/errors.hpp"
#include "tscf/rng.hpp"

namespace tscf {

namespace {

void znormalize(std::span<const double> in, std::span<double> out) {
  double mean = 0.0;
  for (double v : in) mean += v;
  mean /= static_cast<double>(in.size());
  double var = 0.0;
  for (double v : in) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(in.size()));
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = sd > 1e-12 ? (in[i] - mean) / sd : 0.0;
}

double entropy(double pos, double total) {
  if (total <= 0.0 || pos <= 0.0 || pos >= total) return 0.0;
  const double p = pos / total;
  return -p * std::log2(p) - (1 - p) * std::log2(1 - p);
}

double quantile_lower(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size() - 1)));
  return values[std::min(idx, values.size() - 1)];
}

}  // namespace

std::pair<double, std::size_t> min_sliding_distance(std::span<const double> series,
                                                    std::span<const double> shapelet) {
  const std::size_t len = shapelet.size();
  if (len == 0 || len > series.size()) throw ContractError("shapelet longer than series");
  std::vector<double> zs(len), zw(len);
  znormalize(shapelet, zs);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_start = 0;
  for (std::size_t s = 0; s + len <= series.size(); ++s) {
    znormalize(series.subspan(s, len), zw);
    double d = 0.0;
    for (std::size_t i = 0; i < len; ++i) d += (zw[i] - zs[i]) * (zw[i] - zs[i]);
    if (d < best) {
      best = d;
      best_start = s;
    }
  }
  return {std::sqrt(best / static_cast<double>(len)), best_start};
}

double information_gain(std::span<const double> distances, std::span<const std::uint8_t> positive) {
  const std::size_t n = distances.size();
  if (n == 0) return 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
  const double total = static_cast<double>(n);
  double total_pos = 0.0;
  for (auto p : positive) total_pos += p;
  const double parent = entropy(total_pos, total);
  double best = 0.0;
  double left_pos = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    left_pos += positive[order[i]];
    if (distances[order[i]] == distances[order[i + 1]]) continue;
    const double left = static_cast<double>(i + 1);
    const double right = total - left;
    const double children =
        (left / total) * entropy(left_pos, left) + (right / total) * entropy(total_pos - left_pos, right);
    best = std::max(best, parent - children);
  }
  return best;
}

ShapeletSet sets_mine(std::span<const LabeledInstance> train, const ClassifierModel& model,
                      const SetsConfig& cfg) {
  if (!(cfg.mining_budget > 0.0)) throw ConfigError("shapelet mining budget must be positive");
  if (train.empty()) return {};
  const std::size_t channels = train.front().series.channels();
  const std::size_t steps = train.front().series.steps();
  const std::size_t m = train.size();
  std::vector<std::size_t> labels;
  labels.reserve(m);
  for (const auto& inst : train) labels.push_back(predict(model, inst.series).predicted);

  std::set<std::size_t> length_set;
  for (double f : cfg.length_fracs) {
    auto len = static_cast<std::size_t>(std::lround(f * static_cast<double>(steps)));
    len = std::clamp<std::size_t>(len, 3, steps - 1);
    if (len < steps) length_set.insert(len);
  }
  const std::vector<std::size_t> lengths(length_set.begin(), length_set.end());
  if (lengths.empty()) return {};

  struct Candidate {
    std::size_t instance, length, start;
  };
  struct Scored {
    Shapelet shapelet;
    bool multi_class = false;
  };

  Rng rng(cfg.seed);
  std::vector<Scored> scored;
  const double channel_budget = cfg.mining_budget / static_cast<double>(channels);

  for (std::size_t ch = 0; ch < channels; ++ch) {
    const Deadline clock(channel_budget);
    std::size_t total = 0;
    for (auto len : lengths) total += m * (steps - len + 1);
    std::vector<Candidate> candidates;
    if (total <= cfg.max_candidates_per_channel) {
      for (std::size_t i = 0; i < m; ++i) {
        for (auto len : lengths) {
          for (std::size_t s = 0; s + len <= steps; ++s) candidates.push_back({i, len, s});
        }
      }
    } else {
      for (std::size_t k = 0; k < cfg.max_candidates_per_channel; ++k) {
        const auto i = static_cast<std::size_t>(rng.index(m));
        const auto len = lengths[rng.index(lengths.size())];
        const auto s = static_cast<std::size_t>(rng.index(steps - len + 1));
        candidates.push_back({i, len, s});
      }
    }

    std::vector<double> dists(m);
    std::vector<std::uint8_t> positive(m);
    for (const auto& cand : candidates) {
      if (clock.expired()) break;
      const auto src = train[cand.instance].series.channel(ch).subspan(cand.start, cand.length);
      const std::size_t cls = labels[cand.instance];
      for (std::size_t j = 0; j < m; ++j) {
        dists[j] = min_sliding_distance(train[j].series.channel(ch), src).first;
        positive[j] = labels[j] == cls;
      }
      Scored s;
      s.shapelet.values.assign(src.begin(), src.end());
      s.shapelet.channel = ch;
      s.shapelet.source_class = cls;
      s.shapelet.source_instance = cand.instance;
      s.shapelet.source_start = cand.start;
      s.shapelet.quality = information_gain(dists, positive);
      s.shapelet.detect_threshold = quantile_lower(dists, cfg.detect_quantile);
      std::set<std::size_t> detected;
      for (std::size_t j = 0; j < m; ++j) {
        if (dists[j] <= s.shapelet.detect_threshold) detected.insert(labels[j]);
      }
      s.multi_class = detected.size() > 1;
      scored.push_back(std::move(s));
    }
  }

  auto rank = [](const Shapelet& a, const Shapelet& b) {
    if (a.quality != b.quality) return a.quality > b.quality;
    if (a.channel != b.channel) return a.channel < b.channel;
    if (a.source_instance != b.source_instance) return a.source_instance < b.source_instance;
    if (a.values.size() != b.values.size()) return a.values.size() < b.values.size();
    return a.source_start < b.source_start;
  };
  std::stable_sort(scored.begin(), scored.end(),
                   [&](const Scored& a, const Scored& b) { return rank(a.shapelet, b.shapelet); });

  // Top-K per (class, channel), then drop shapelets present in several classes.
  ShapeletSet out;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> kept;
  for (auto& s : scored) {
    auto& count = kept[{s.shapelet.source_class, s.shapelet.channel}];
    if (count >= cfg.per_class) continue;
    ++count;
    if (!s.multi_class) out.shapelets.push_back(std::move(s.shapelet));
  }
  return out;
}

std::vector<double> scale_to_window(std::span<const double> shapelet, std::span<const double> window) {
  const auto [slo, shi] = std::minmax_element(shapelet.begin(), shapelet.end());
  const auto [wlo, whi] = std::minmax_element(window.begin(), window.end());
  const double srange = *shi - *slo;
  const double wrange = *whi - *wlo;
  std::vector<double> out(shapelet.size());
  if (wrange == 0.0 || srange == 0.0) {
    double mean = 0.0;
    for (double v : shapelet) mean += v;
    mean /= static_cast<double>(shapelet.size());
    const double level = 0.5 * (*wlo + *whi);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = shapelet[i] - mean + level;
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (shapelet[i] - *slo) / srange * wrange + *wlo;
  }
  return out;
}

Counterfactual sets(const CFRequest& req, const ShapeletSet& shapelets, const ReferencePool& pool,
                    const ClassifierModel& model) {
  req.validate();
  const Deadline clock(req.time_budget);
  Counterfactual cf;
  cf.method = "sets";
  cf.original = req.instance;
  cf.perturbed = req.instance;
  cf.target = req.target;
  auto finish = [&](CFStatus status, std::string note) {
    cf.status = status;
    cf.note = std::move(note);
    cf.gen_time = clock.elapsed();
    return cf;
  };

  if (shapelets.shapelets.empty()) return finish(CFStatus::no_cf_found, "empty shapelet set");
  const auto idx = nun_index(pool, req.instance, req.target);
  if (!idx) return finish(CFStatus::no_cf_found, "no training instance is predicted as the target class");
  const TimeSeries& guide = pool.series(*idx);
  const std::size_t channels = req.instance.channels();

  std::vector<const Shapelet*> ordered;
  for (const auto& s : shapelets.shapelets) {
    if (s.channel >= channels || s.values.size() > req.instance.steps()) continue;
    if (s.source_class == req.original_pred || s.source_class == req.target) ordered.push_back(&s);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Shapelet* a, const Shapelet* b) { return a->quality > b->quality; });

  // Single channels first, then every combination in increasing size.
  std::vector<std::uint8_t> in_subset(channels, 0);
  for (std::size_t size = 1; size <= channels; ++size) {
    std::vector<std::uint8_t> selector(channels, 0);
    std::fill(selector.begin(), selector.begin() + static_cast<std::ptrdiff_t>(size), 1);
    do {
      in_subset = selector;
      TimeSeries candidate = req.instance;
      for (const Shapelet* s : ordered) {
        if (!in_subset[s->channel]) continue;
        if (clock.expired()) {
          cf.perturbed = candidate;
          return finish(CFStatus::timed_out, "time budget exhausted");
        }
        auto ch = candidate.channel(s->channel);
        const auto [dist, pos] = min_sliding_distance(ch, s->values);
        const std::size_t len = s->values.size();
        if (s->source_class == req.original_pred) {
          if (dist > s->detect_threshold) continue;
          const auto src = guide.channel(s->channel);
          std::copy(src.begin() + static_cast<std::ptrdiff_t>(pos),
                    src.begin() + static_cast<std::ptrdiff_t>(pos + len),
                    ch.begin() + static_cast<std::ptrdiff_t>(pos));
        } else {
          const auto scaled = scale_to_window(s->values, ch.subspan(pos, len));
          std::copy(scaled.begin(), scaled.end(), ch.begin() + static_cast<std::ptrdiff_t>(pos));
        }
        if (accepts(predict(model, candidate), req.target, req.stop_prob)) {
          cf.perturbed = std::move(candidate);
          cf.valid = true;
          return finish(CFStatus::ok, {});
        }
      }
      cf.perturbed = candidate;
    } while (std::prev_permutation(selector.begin(), selector.end()));
  }
  return finish(CFStatus::no_cf_found, "ran out of shapelets");
}

}  // namespace tscf
