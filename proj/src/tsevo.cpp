#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>

#include "tscf/cf_methods.hpp"
#include "tscf/errors.hpp"
#include "tscf/nsga2.hpp"
#include "tscf/rng.hpp"

namespace tscf {

namespace {

using Complex = std::complex<double>;

/// Naive DFT over a shared table of n-th roots of unity.
class Dft {
 public:
  explicit Dft(std::size_t n) : roots_(n) {
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      roots_[j] = Complex(std::cos(angle), std::sin(angle));
    }
  }

  std::vector<Complex> forward(std::span<const double> x) const {
    const std::size_t n = roots_.size();
    std::vector<Complex> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      Complex acc = 0.0;
      std::size_t j = 0;
      for (std::size_t t = 0; t < n; ++t) {
        acc += x[t] * roots_[j];
        j += k;
        if (j >= n) j -= n;
      }
      out[k] = acc;
    }
    return out;
  }

  void inverse_real(const std::vector<Complex>& spectrum, std::span<double> out) const {
    const std::size_t n = roots_.size();
    for (std::size_t t = 0; t < n; ++t) {
      double acc = 0.0;
      std::size_t j = 0;
      for (std::size_t k = 0; k < n; ++k) {
        // conj(root) gives the positive exponent
        acc += spectrum[k].real() * roots_[j].real() + spectrum[k].imag() * roots_[j].imag();
        j += t;
        if (j >= n) j -= n;
      }
      out[t] = acc / static_cast<double>(n);
    }
  }

 private:
  std::vector<Complex> roots_;
};

struct Window {
  std::size_t start, end;  ///< [start, end)
};

Window random_window(Rng& rng, std::size_t steps) {
  auto a = static_cast<std::size_t>(rng.index(steps));
  auto b = static_cast<std::size_t>(rng.index(steps));
  if (a > b) std::swap(a, b);
  return {a, b + 1};
}

class Evolution {
 public:
  Evolution(const CFRequest& req, const ClassifierModel& model, const ReferencePool& pool,
            std::vector<std::size_t> refs, const TsevoConfig& cfg)
      : req_(req), model_(model), pool_(pool), refs_(std::move(refs)), cfg_(cfg), rng_(cfg.seed),
        ranges_(instance_range(req.instance)), dft_(req.instance.steps()) {}

  nsga2::Point evaluate(const TimeSeries& ind) {
    const auto p = predict(model_, ind);
    const auto x = req_.instance.flat();
    const auto y = ind.flat();
    double l1 = 0.0;
    std::size_t changed = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      l1 += std::abs(x[i] - y[i]);
      changed += x[i] != y[i];
    }
    const double l0 = static_cast<double>(changed) / static_cast<double>(x.size());
    if (p.predicted == req_.target &&
        (!best_ || l0 < best_l0_ || (l0 == best_l0_ && l1 < best_l1_))) {
      best_ = ind;
      best_l0_ = l0;
      best_l1_ = l1;
    }
    return {l1, l0, std::abs(1.0 - p.probs[req_.target])};
  }

  TimeSeries seeded_individual() {
    TimeSeries ind = req_.instance;
    const TimeSeries& ref = pool_.series(refs_[rng_.index(refs_.size())]);
    const auto w = random_window(rng_, ind.steps());
    for (std::size_t c = 0; c < ind.channels(); ++c) {
      for (std::size_t t = w.start; t < w.end; ++t) ind(c, t) = ref(c, t);
    }
    return ind;
  }

  void crossover(TimeSeries& a, TimeSeries& b) {
    const auto w = random_window(rng_, a.steps());
    for (std::size_t c = 0; c < a.channels(); ++c) {
      for (std::size_t t = w.start; t < w.end; ++t) std::swap(a(c, t), b(c, t));
    }
  }

  void mutate(TimeSeries& ind) {
    const double u = rng_.uniform();
    if (u < cfg_.p_opposing) {
      const auto w = random_window(rng_, ind.steps());
      for (std::size_t c = 0; c < ind.channels(); ++c) {
        for (std::size_t t = w.start; t < w.end; ++t) ind(c, t) = req_.instance(c, t);
      }
    } else if (u < cfg_.p_opposing + cfg_.p_frequency) {
      const std::size_t steps = ind.steps();
      const auto c = static_cast<std::size_t>(rng_.index(ind.channels()));
      const std::size_t ref = refs_[rng_.index(refs_.size())];
      auto spectrum = dft_.forward(ind.channel(c));
      auto cached = ref_spectra_.find({ref, c});
      if (cached == ref_spectra_.end()) {
        cached = ref_spectra_.emplace(std::make_pair(ref, c), dft_.forward(pool_.series(ref).channel(c))).first;
      }
      const auto& ref_spectrum = cached->second;
      const std::size_t half = steps / 2 + 1;
      const auto k0 = static_cast<std::size_t>(rng_.index(half));
      const std::size_t width = 1 + static_cast<std::size_t>(rng_.index(std::max<std::size_t>(1, half / 4)));
      for (std::size_t k = k0; k < std::min(half, k0 + width); ++k) {
        spectrum[k] = ref_spectrum[k];
        if (k != 0 && steps - k != k) spectrum[steps - k] = ref_spectrum[steps - k];
      }
      dft_.inverse_real(spectrum, ind.channel(c));
    } else if (u < cfg_.p_opposing + cfg_.p_frequency + cfg_.p_gaussian) {
      const auto w = random_window(rng_, ind.steps());
      for (std::size_t c = 0; c < ind.channels(); ++c) {
        const double scale = 0.05 * ranges_[c];
        for (std::size_t t = w.start; t < w.end; ++t) ind(c, t) += scale * rng_.normal();
      }
    }
  }

  std::size_t tournament(const std::vector<std::size_t>& rank, const std::vector<double>& crowd) {
    const auto a = static_cast<std::size_t>(rng_.index(rank.size()));
    const auto b = static_cast<std::size_t>(rng_.index(rank.size()));
    if (rank[a] != rank[b]) return rank[a] < rank[b] ? a : b;
    if (crowd[a] != crowd[b]) return crowd[a] > crowd[b] ? a : b;
    return std::min(a, b);
  }

  Rng& rng() { return rng_; }
  const std::optional<TimeSeries>& best() const { return best_; }

 private:
  const CFRequest& req_;
  const ClassifierModel& model_;
  const ReferencePool& pool_;
  std::vector<std::size_t> refs_;
  const TsevoConfig& cfg_;
  Rng rng_;
  std::vector<double> ranges_;
  Dft dft_;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<Complex>> ref_spectra_;
  std::optional<TimeSeries> best_;
  double best_l0_ = 0.0;
  double best_l1_ = 0.0;
};

}  // namespace

Counterfactual tsevo(const CFRequest& req, const ClassifierModel& model, const ReferencePool& pool,
                     const TsevoConfig& cfg) {
  req.validate();
  if (cfg.population < 4 || cfg.population % 2 != 0) {
    throw ConfigError("TSEvo population must be even and at least 4");
  }
  if (cfg.p_opposing < 0 || cfg.p_frequency < 0 || cfg.p_gaussian < 0 ||
      cfg.p_opposing + cfg.p_frequency + cfg.p_gaussian > 1.0 + 1e-12) {
    throw ConfigError("TSEvo mutation probabilities must be non-negative and sum to at most 1");
  }
  const Deadline clock(req.time_budget);
  Counterfactual cf;
  cf.method = "tsevo";
  cf.original = req.instance;
  cf.perturbed = req.instance;
  cf.target = req.target;

  auto refs = pool.predicted_as(req.target);
  const auto nun = nun_index(pool, req.instance, req.target);
  if (refs.empty() || !nun) {
    cf.note = "no training instance is predicted as the target class";
    cf.gen_time = clock.elapsed();
    return cf;
  }
  Evolution evo(req, model, pool, std::move(refs), cfg);

  std::vector<TimeSeries> population;
  std::vector<nsga2::Point> points;
  population.push_back(pool.series(*nun));
  while (population.size() < cfg.population) population.push_back(evo.seeded_individual());
  for (const auto& ind : population) points.push_back(evo.evaluate(ind));

  bool expired = false;
  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    if (clock.expired()) {
      expired = true;
      break;
    }
    const auto fronts = nsga2::fast_non_dominated_sort(points);
    std::vector<std::size_t> rank(population.size());
    std::vector<double> crowd(population.size());
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      const auto cd = nsga2::crowding_distance(points, fronts[f]);
      for (std::size_t i = 0; i < fronts[f].size(); ++i) {
        rank[fronts[f][i]] = f;
        crowd[fronts[f][i]] = cd[i];
      }
    }
    std::vector<TimeSeries> offspring;
    while (offspring.size() < cfg.population) {
      TimeSeries a = population[evo.tournament(rank, crowd)];
      TimeSeries b = population[evo.tournament(rank, crowd)];
      evo.crossover(a, b);
      evo.mutate(a);
      evo.mutate(b);
      offspring.push_back(std::move(a));
      offspring.push_back(std::move(b));
    }
    for (auto& child : offspring) {
      points.push_back(evo.evaluate(child));
      population.push_back(std::move(child));
    }
    const auto keep = nsga2::select_survivors(points, cfg.population);
    std::vector<TimeSeries> next_pop;
    std::vector<nsga2::Point> next_points;
    for (auto i : keep) {
      next_pop.push_back(std::move(population[i]));
      next_points.push_back(std::move(points[i]));
    }
    population = std::move(next_pop);
    points = std::move(next_points);
  }

  if (evo.best()) {
    cf.perturbed = *evo.best();
    cf.valid = true;
    cf.status = CFStatus::ok;
    if (expired) cf.note = "time budget expired; returning best valid individual so far";
  } else {
    cf.status = expired ? CFStatus::timed_out : CFStatus::no_cf_found;
  }
  cf.gen_time = clock.elapsed();
  return cf;
}

}  // namespace tscf
