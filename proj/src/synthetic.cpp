#include "tscf/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "tscf/errors.hpp"
#include "tscf/rng.hpp"

namespace tscf::synthetic {

namespace {

std::size_t pick(std::size_t requested, std::size_t fallback) {
  return requested ? requested : fallback;
}

double pick(double requested, double fallback) { return requested >= 0 ? requested : fallback; }

/// Alternating class labels so every split holds both classes.
template <typename Gen>
std::vector<LabeledInstance> draw(std::size_t count, std::size_t classes, Rng& rng, Gen&& gen) {
  std::vector<LabeledInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % classes;
    out.push_back({gen(label, rng), label});
  }
  return out;
}

Dataset assemble(std::string name, std::size_t classes, const Options& opt, std::size_t train,
                 std::size_t test, auto&& gen) {
  Rng rng(opt.seed);
  Dataset d;
  d.name = std::move(name);
  d.num_classes = classes;
  d.train = draw(train, classes, rng, gen);
  d.test = draw(test, classes, rng, gen);
  for (std::size_t c = 0; c < classes; ++c) d.original_labels.push_back(static_cast<double>(c));
  d.validate();
  return d;
}

void znorm_inplace(std::span<double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  for (double& x : v) x = sd > 0 ? (x - mean) / sd : 0.0;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Dataset gunpoint_like(const Options& opt) {
  const std::size_t steps = pick(opt.steps, 150);
  const double noise = pick(opt.noise, 0.02);
  const double scale = static_cast<double>(steps) / 150.0;
  return assemble("GunPointLike", 2, opt, pick(opt.train, 50), pick(opt.test, 150),
                  [&](std::size_t label, Rng& rng) {
                    const double rise = rng.uniform(40, 55) * scale;
                    const double fall = rng.uniform(95, 110) * scale;
                    const double height = rng.uniform(1.6, 2.0);
                    const double edge = rng.uniform(2.5, 4.0) * scale;
                    std::vector<double> v(steps);
                    for (std::size_t t = 0; t < steps; ++t) {
                      const double tt = static_cast<double>(t);
                      double y = height * sigmoid((tt - rise) / edge) * sigmoid((fall - tt) / edge);
                      if (label == 0) {
                        // Holster dip ahead of the rise and after the fall.
                        const double w = 4.0 * scale;
                        y -= 0.45 * std::exp(-0.5 * std::pow((tt - (rise - 9 * scale)) / w, 2));
                        y -= 0.35 * std::exp(-0.5 * std::pow((tt - (fall + 9 * scale)) / w, 2));
                      }
                      v[t] = y + noise * rng.normal();
                    }
                    znorm_inplace(v);
                    return TimeSeries::univariate(std::move(v));
                  });
}

Dataset motions_like(const Options& opt) {
  const std::size_t steps = pick(opt.steps, 100);
  const std::size_t channels = pick(opt.channels, 6);
  const double noise = pick(opt.noise, 0.15);
  return assemble("MotionsLike", 4, opt, pick(opt.train, 40), pick(opt.test, 40),
                  [&](std::size_t label, Rng& rng) {
                    TimeSeries x(channels, steps);
                    const double freq = 1.5 + 1.5 * static_cast<double>(label);
                    for (std::size_t c = 0; c < channels; ++c) {
                      const double phase = rng.uniform(0, 2 * std::numbers::pi);
                      const double amp = (c % 3 == label % 3 ? 1.5 : 0.6) * rng.uniform(0.8, 1.2);
                      for (std::size_t t = 0; t < steps; ++t) {
                        const double tt = static_cast<double>(t) / static_cast<double>(steps);
                        x(c, t) = amp * std::sin(2 * std::numbers::pi * freq * tt + phase) +
                                  noise * rng.normal();
                      }
                    }
                    return x;
                  });
}

Dataset decisive_channel(const Options& opt) {
  const std::size_t steps = pick(opt.steps, 30);
  const std::size_t channels = pick(opt.channels, 4);
  const double noise = pick(opt.noise, 0.3);
  return assemble("DecisiveChannel", 2, opt, pick(opt.train, 40), pick(opt.test, 40),
                  [&](std::size_t label, Rng& rng) {
                    TimeSeries x(channels, steps);
                    const double offset = label == 0 ? -1.0 : 1.0;
                    for (std::size_t c = 0; c < channels; ++c) {
                      const double phase = rng.uniform(0, 2 * std::numbers::pi);
                      for (std::size_t t = 0; t < steps; ++t) {
                        const double s = std::sin(0.4 * static_cast<double>(t) + phase);
                        x(c, t) = (c == 0 ? offset : 0.0) + 0.5 * s + noise * rng.normal();
                      }
                    }
                    return x;
                  });
}

Dataset mean_shift(const Options& opt) {
  const std::size_t steps = pick(opt.steps, 32);
  const std::size_t channels = pick(opt.channels, 1);
  const double noise = pick(opt.noise, 1.0);
  return assemble("MeanShift", 2, opt, pick(opt.train, 60), pick(opt.test, 60),
                  [&](std::size_t label, Rng& rng) {
                    TimeSeries x(channels, steps);
                    const double mu = label == 0 ? -0.5 : 0.5;
                    for (double& v : x.flat()) v = mu + noise * rng.normal();
                    return x;
                  });
}

Dataset xor_in_time(const Options& opt) {
  const std::size_t steps = pick(opt.steps, 32);
  const double noise = pick(opt.noise, 0.25);
  const std::size_t a0 = steps / 4, mid = steps / 2, b1 = 3 * steps / 4;
  return assemble("XorInTime", 2, opt, pick(opt.train, 120), pick(opt.test, 80),
                  [&](std::size_t label, Rng& rng) {
                    // label 1 <=> signs agree.
                    const double a = rng.bernoulli(0.5) ? 1.0 : -1.0;
                    const double b = label == 1 ? a : -a;
                    std::vector<double> v(steps);
                    for (std::size_t t = 0; t < steps; ++t) {
                      double level = 0.0;
                      if (t >= a0 && t < mid) level = a;
                      if (t >= mid && t < b1) level = b;
                      v[t] = level + noise * rng.normal();
                    }
                    return TimeSeries::univariate(std::move(v));
                  });
}

Dataset planted_bump(const Options& opt) {
  const std::size_t steps = pick(opt.steps, 50);
  const double noise = pick(opt.noise, 0.1);
  return assemble("PlantedBump", 2, opt, pick(opt.train, 40), pick(opt.test, 40),
                  [&](std::size_t label, Rng& rng) {
                    std::vector<double> v(steps);
                    const double height = rng.uniform(1.5, 2.5);
                    for (std::size_t t = 0; t < steps; ++t) {
                      v[t] = noise * rng.normal();
                      if (label == 0 && t >= 10 && t <= 20) {
                        v[t] += height * std::sin(std::numbers::pi * (static_cast<double>(t) - 9.0) / 12.0);
                      }
                    }
                    return TimeSeries::univariate(std::move(v));
                  });
}

Dataset planted_motif(const Options& opt) {
  const std::size_t steps = pick(opt.steps, 30);
  const double noise = pick(opt.noise, 0.001);
  return assemble("PlantedMotif", 2, opt, pick(opt.train, 20), pick(opt.test, 20),
                  [&](std::size_t label, Rng& rng) {
                    std::vector<double> v(steps);
                    const double slope = rng.uniform(0.01, 0.03);
                    const double offset = rng.uniform(-0.5, 0.5);
                    for (std::size_t t = 0; t < steps; ++t) {
                      v[t] = offset + slope * static_cast<double>(t) + noise * rng.normal();
                    }
                    if (label == 0) {
                      const auto at = static_cast<std::size_t>(rng.integer(2, static_cast<std::int64_t>(steps) - 5));
                      v[at + 1] += 1.0;
                    }
                    return TimeSeries::univariate(std::move(v));
                  });
}

Dataset make(const std::string& kind, const Options& opt) {
  if (kind == "gunpoint") return gunpoint_like(opt);
  if (kind == "motions") return motions_like(opt);
  if (kind == "decisive") return decisive_channel(opt);
  if (kind == "meanshift") return mean_shift(opt);
  if (kind == "xor") return xor_in_time(opt);
  if (kind == "bump") return planted_bump(opt);
  if (kind == "motif") return planted_motif(opt);
  throw ConfigError("unknown synthetic dataset '" + kind +
                    "' (known: gunpoint, motions, decisive, meanshift, xor, bump, motif)");
}

}  // namespace tscf::synthetic
