// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>

#include "oracles.hpp"
#include "support.hpp"
#include "tscf/cf_methods.hpp"
#include "tscf/dataset.hpp"
#include "tscf/errors.hpp"
#include "tscf/harness.hpp"
#include "tscf/metrics.hpp"
#include "tscf/nsga2.hpp"

using namespace tscf;

namespace {

// Tolerances.
constexpr double kMaxValidityMinutes = 10.0;
constexpr std::size_t kMinWcf = 20;
constexpr double kWcfMedianL0 = 0.9;
constexpr double kWcfMedianThresh = 0.2;
constexpr std::size_t kMetricTrials = 1000;
constexpr double kNormRelErr = 1e-10;
constexpr double kGradRelErr = 1e-4;
constexpr std::size_t kGradPoints = 20;
constexpr double kCamAbsErr = 1e-12;
constexpr std::size_t kSortPopulations = 200;
constexpr std::size_t kAbortAfter = 10;
constexpr double kCdAbsErr = 1e-6;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "failed: " << what << "; ";
    pass = pass && ok;
  }
};

double rel_err(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

CFRequest request_for(const ClassifierModel& model, const TimeSeries& x) {
  CFRequest r;
  r.instance = x;
  r.original_pred = predict(model, x).predicted;
  r.target = select_target(model, x);
  return r;
}

// --- 1 ----------------------------------------------------------------------

void validity(Outcome& out) {
  const auto start = std::chrono::steady_clock::now();
  testing::TempDir dir("accept_gp");
  write_univariate_tsv(synthetic::gunpoint_like(), dir / "GunPoint_TRAIN.tsv", dir / "GunPoint_TEST.tsv");
  const std::vector<Dataset> sets{load_dataset((dir / "GunPoint_TRAIN.tsv").string()),
                                  synthetic::decisive_channel(synthetic::Options{.channels = 4})};
  std::size_t explained = 0;
  for (const auto& data : sets) {
    for (auto arch : {Architecture::mlp, Architecture::fcn}) {
      const auto model = train(arch, data, testing::toy_training(1));
      const ReferencePool pool(data.train, model);
      const bool ng = arch == Architecture::fcn && data.channels() == 1;
      for (std::size_t i = 0; i < data.test.size(); ++i) {
        const auto r = request_for(model, data.test[i].series);
        if (!nun_index(pool, r.instance, r.target)) continue;
        ++explained;
        const std::string where = data.name + "/" + to_string(arch) + " #" + std::to_string(i);
        auto check = [&](const Counterfactual& cf, const char* m) {
          out.require(cf.valid && predict(model, cf.perturbed).predicted == r.target, std::string(m) + " " + where);
        };
        check(nun_cf(r, pool, model), "nun_cf");
        if (ng) check(native_guide(r, pool, model), "ng");
        TsevoConfig tc;
        tc.seed = mix_seed(0, i);
        check(tsevo(r, model, pool, tc), "tsevo");
      }
    }
  }
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  out.require(explained > 0, "no instance had a neighbour");
  out.require(minutes < kMaxValidityMinutes, "runtime");
  out.detail << explained << " instances, " << minutes << " min";
}

// --- 2 ----------------------------------------------------------------------

void thresh_vs_l0(Outcome& out) {
  const auto data = synthetic::gunpoint_like();
  const auto model = train(Architecture::fcn, data, testing::toy_training(1));
  WachterConfig cfg;
  cfg.mad = median_absolute_deviation(data.train);
  const SparsityConfig sp;
  std::vector<double> l0, th;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const auto r = request_for(model, data.test[i].series);
    const auto cf = wachter(r, model, cfg);
    if (!cf.valid) continue;
    l0.push_back(sparsity_l0(cf.original, cf.perturbed));
    th.push_back(thresh_l0(cf.original, cf.perturbed, sp));
  }
  out.require(l0.size() >= kMinWcf, "too few valid wCF counterfactuals");
  if (l0.empty()) return;
  const double ml0 = median(l0), mth = median(th);
  out.require(ml0 >= kWcfMedianL0, "median L0");
  out.require(mth <= kWcfMedianThresh, "median ThreshL0");
  out.detail << l0.size() << " CFs, median L0 " << ml0 << ", median ThreshL0 " << mth;
}

// --- 3 ----------------------------------------------------------------------

void metric_oracles(Outcome& out) {
  Rng rng(2025);
  const double taus[] = {0.0, 0.0025, 0.05, 0.3};
  double worst = 0.0;
  for (std::size_t trial = 0; trial < kMetricTrials; ++trial) {
    const std::size_t n = 1 + rng.index(3), t = 2 + rng.index(49);
    const auto [x, y] = testing::random_cf_pair(rng, n, t);
    SparsityConfig cfg;
    cfg.tau = taus[rng.index(4)];
    cfg.tolerance_frac = rng.bernoulli(0.3) ? 0.0 : rng.uniform(0.0, 0.2);
    cfg.global_range = rng.bernoulli(0.2);
    const auto p = proximity(x, y);
    const auto o = oracle::proximity(x, y);
    worst = std::max({worst, rel_err(p.l1, o.l1), rel_err(p.l2, o.l2), rel_err(p.linf, o.linf)});
    out.require(thresh_l0_count(x, y, cfg) == oracle::thresh_count(x, y, cfg.tau, cfg.global_range), "thresh_l0");
    std::size_t tol = 0;
    if (cfg.tolerance_frac > 0) {
      while (static_cast<double>(tol) < cfg.tolerance_frac * t) ++tol;
      tol = std::max<std::size_t>(tol, 1);
    }
    out.require(num_segments(x, y, cfg) == oracle::num_segments(x, y, cfg.tau, tol, cfg.global_range),
                "num_segments");

    const std::size_t m = 3 + rng.index(28), dim = 1 + rng.index(6), k = 1 + rng.index(7);
    const std::size_t classes = 1 + rng.index(3);
    LatentSet s;
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> r(dim);
      for (auto& v : r) v = rng.normal();
      s.reps.push_back(r);
      s.labels.push_back(i < classes ? i : rng.index(classes));
    }
    std::vector<double> q(dim);
    for (auto& v : q) v = rng.normal() * 2;
    const auto cls = rng.index(classes);
    worst = std::max(worst, rel_err(dist_nbr(s, q, cls, k), oracle::dist_nbr(s.reps, s.labels, q, cls, k)));
    worst = std::max(worst, rel_err(dist_all(s, q, k).value,
                                    oracle::dist_nbr(s.reps, s.labels, q, std::nullopt, k) /
                                        oracle::mean_train_dist(s.reps, s.labels, std::nullopt, k)));
    std::size_t members = 0;
    for (auto l : s.labels) members += l == cls;
    const auto rc = dist_class(s, q, cls, k);
    if (members < 2) {
      out.require(rc.degenerate, "dist_class degenerate");
    } else {
      worst = std::max(worst, rel_err(rc.value, oracle::dist_nbr(s.reps, s.labels, q, cls, k) /
                                                    oracle::mean_train_dist(s.reps, s.labels, cls, k)));
    }
  }
  out.require(worst < kNormRelErr, "relative error");
  out.detail << kMetricTrials << " trials, worst relative error " << worst;
}

// --- 4 ----------------------------------------------------------------------

void numseg_tolerance(Outcome& out) {
  std::vector<double> v(150);
  for (std::size_t t = 0; t < v.size(); ++t) v[t] = std::cos(0.1 * static_cast<double>(t));
  const auto x = TimeSeries::univariate(v);
  auto y = x;
  for (auto& u : y.flat()) u += 0.8;
  y(0, 50) = x(0, 50);
  y(0, 90) = x(0, 90);
  y(0, 91) = x(0, 91) + 1e-4;
  SparsityConfig cfg;
  const auto with = num_segments(x, y, cfg);
  cfg.tolerance_frac = 0.0;
  const auto without = num_segments(x, y, cfg);
  out.require(with == 1 && without == 3, "segment counts");
  out.detail << "with tolerance " << with << ", without " << without;
}

// --- 5 ----------------------------------------------------------------------

void sens_forced(Outcome& out) {
  Rng rng(55);
  const SparsityConfig cfg;
  std::size_t supra = 0, sub = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 1 + rng.index(3), t = 5 + rng.index(40);
    const auto x = testing::random_series(rng, n, t);
    std::vector<double> diff(x.size());
    for (auto& d : diff) d = rng.normal();
    const auto th = oracle::thresholds(x, cfg.tau, false);
    const bool perceptible = trial % 2 == 0;
    auto y = x;
    double push = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t s = 0; s < t; ++s) {
        if (!rng.bernoulli(0.5)) continue;
        const double mag = th[c] * (perceptible ? rng.uniform(1.01, 3.0) : rng.uniform(0.1, 0.9));
        y(c, s) += diff[c * t + s] > 0 ? mag : -mag;
        push += std::abs(diff[c * t + s]) * mag;
      }
    }
    if (push == 0.0) continue;
    const auto m = testing::boundary_model(x, diff, push / 2);
    if (predict(m, y).predicted != 1) {
      out.require(false, "constructed CF is not valid");
      continue;
    }
    const auto s = sensitivity(x, y, m, 1, cfg);
    out.require(s.has_value() && *s == (perceptible ? 0 : 1), "sensitivity value");
    (perceptible ? supra : sub)++;
  }
  out.require(supra > 100 && sub > 100, "case coverage");
  out.detail << supra << " supra-threshold and " << sub << " sub-threshold masks";
}

// --- 6 ----------------------------------------------------------------------

double objective_value(const ClassifierModel& m, const TimeSeries& x, const GradientObjective& o) {
  const auto p = softmax(logits(m, x));
  double v = o.weight * (p[o.target] - o.target_prob) * (p[o.target] - o.target_prob);
  for (std::size_t i = 0; i < x.size(); ++i) v += std::abs(x.flat()[i] - o.reference->flat()[i]) / o.scale[i];
  return v;
}

/// Worst relative error over `points` samples that do not straddle a kink.
double worst_gradient_error(const ClassifierModel& m, std::uint64_t seed) {
  Rng rng(seed);
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  while (checked < kGradPoints) {
    const auto x = testing::random_series(rng, m.channels, m.steps);
    const auto ref = testing::random_series(rng, m.channels, m.steps, 3.0);
    std::vector<double> scale(x.size());
    for (auto& s : scale) s = rng.uniform(0.5, 2.0);
    GradientObjective o;
    o.target = rng.index(m.num_classes);
    o.weight = rng.uniform(1.0, 20.0);
    o.target_prob = rng.uniform(0.5, 1.0);
    o.reference = &ref;
    o.scale = scale;
    const auto pattern = relu_pattern(m, x);
    const auto g = input_gradient(m, x, o);
    bool kink = false;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size() && !kink; ++i) {
      TimeSeries xp = x, xm = x;
      xp.flat()[i] += h;
      xm.flat()[i] -= h;
      kink = relu_pattern(m, xp) != pattern || relu_pattern(m, xm) != pattern ||
             std::abs(x.flat()[i] - ref.flat()[i]) < 2 * h;
      const double fd = (objective_value(m, xp, o) - objective_value(m, xm, o)) / (2 * h);
      num += (g.gradient.flat()[i] - fd) * (g.gradient.flat()[i] - fd);
      den = std::max({den, std::abs(g.gradient.flat()[i]), std::abs(fd)});
    }
    if (kink) continue;
    ++checked;
    worst = std::max(worst, std::sqrt(num / static_cast<double>(x.size())) / std::max(den, 1e-12));
  }
  return worst;
}

void gradients(Outcome& out) {
  const auto mlp = build_mlp(2, 12, 3, MlpShape{{16, 8}, {0.1, 0.2, 0.2}}, 4);
  auto fcn = build_fcn(2, 12, 3, FcnShape{{4, 6}, {5, 3}}, 5);
  Rng rng(8);
  for (auto& layer : fcn.layers) {
    if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      for (std::size_t c = 0; c < bn->channels; ++c) {
        bn->gamma[c] = rng.uniform(0.5, 1.5);
        bn->beta[c] = rng.uniform(-0.3, 0.3);
        bn->running_mean[c] = rng.uniform(-0.2, 0.2);
        bn->running_var[c] = rng.uniform(0.5, 2.0);
      }
    }
  }
  const double e_mlp = worst_gradient_error(mlp, 21);
  const double e_fcn = worst_gradient_error(fcn, 22);
  out.require(e_mlp < kGradRelErr, "mlp gradient");
  out.require(e_fcn < kGradRelErr, "fcn gradient");

  ClassifierModel cam;
  cam.architecture = Architecture::fcn;
  cam.channels = 1;
  cam.steps = 4;
  cam.num_classes = 2;
  cam.layers.emplace_back(Conv1dLayer{1, 2, 3, {1, 0, -1, 0.5, 0.5, 0.5}, {0.0, -0.5}});
  cam.layers.emplace_back(ReluLayer{});
  cam.layers.emplace_back(GlobalAvgPoolLayer{});
  cam.layers.emplace_back(DenseLayer{2, 2, {2, -1, -0.5, 3}, {0.1, -0.2}});
  cam.validate();
  const auto x = TimeSeries::univariate({1, 2, -1, 0});
  // A0 = relu(x[t-1] - x[t+1]) = [0, 2, 2, 0], A1 = relu(0.5 (x[t-1] + x[t] + x[t+1]) - 0.5) = [1, 0.5, 0, 0]
  const std::vector<std::vector<double>> hand{{-1, 3.5, 4, 0}, {3, 0.5, -1, 0}};
  double cam_err = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto got = class_activation_map(cam, x, c);
    for (std::size_t t = 0; t < 4; ++t) cam_err = std::max(cam_err, std::abs(got[t] - hand[c][t]));
  }
  out.require(cam_err < kCamAbsErr, "CAM");
  out.detail << "worst relative error mlp " << e_mlp << ", fcn " << e_fcn << "; CAM error " << cam_err;
}

// --- 7 ----------------------------------------------------------------------

void nsga2_sort(Outcome& out) {
  Rng rng(71);
  std::size_t mismatches = 0;
  for (std::size_t trial = 0; trial < kSortPopulations; ++trial) {
    std::vector<nsga2::Point> pts(1 + rng.index(50), nsga2::Point(3));
    for (auto& p : pts)
      for (auto& v : p) v = trial % 2 ? rng.uniform() : static_cast<double>(rng.index(5));
    mismatches += nsga2::fast_non_dominated_sort(pts) != oracle::fronts(pts);
  }
  out.require(mismatches == 0, "front mismatch");
  out.detail << kSortPopulations << " populations, " << mismatches << " mismatches";
}

// --- 8 ----------------------------------------------------------------------

void consistency_checks(Outcome& out) {
  Rng rng(88);
  std::size_t defined = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = build_mlp(1, 6, 3, MlpShape{{5}, {}}, rng.next());
    const auto b = build_mlp(1, 6, 3, MlpShape{{5}, {}}, rng.next());
    std::vector<Counterfactual> cfs;
    std::vector<std::size_t> labels;
    for (int i = 0; i < 30; ++i) {
      Counterfactual c;
      c.original = testing::random_series(rng, 1, 6);
      c.perturbed = testing::random_series(rng, 1, 6);
      c.target = rng.index(3);
      labels.push_back(rng.bernoulli(0.7) ? predict(a, c.original).predicted : rng.index(3));
      cfs.push_back(c);
    }
    const auto r = consistency(cfs, labels, a, b);
    if (!r.consist_bc || !r.consist_bv) continue;
    ++defined;
    out.require(*r.consist_bv >= *r.consist_bc, "consistBV below consistBC");
  }
  out.require(defined > 100, "too few defined cases");

  const auto data = synthetic::gunpoint_like();
  const auto model = train(Architecture::mlp, data, testing::toy_training(2, 20));
  auto partner = model;
  auto* head = std::get_if<DenseLayer>(&partner.layers.back());
  out.require(head != nullptr, "dense head");
  if (!head) return;
  for (auto& w : head->weight) w *= 2.0;
  for (auto& b : head->bias) b *= 2.0;
  out.require(predict_labels(model, data.train) == predict_labels(partner, data.train), "partner agreement");
  const ReferencePool pool(data.train, model);
  std::vector<Counterfactual> cfs;
  std::vector<std::size_t> labels;
  for (const auto& inst : data.test) {
    cfs.push_back(nun_cf(request_for(model, inst.series), pool, model));
    labels.push_back(inst.label);
  }
  const auto r = consistency(cfs, labels, model, partner);
  out.require(r.consist_bv && *r.consist_bv == 1.0, "NUN_CF consistBV");
  out.detail << defined << " random cases; NUN_CF consistBV " << r.consist_bv.value_or(-1.0);
}

// --- 9 ----------------------------------------------------------------------

std::map<std::string, std::string> result_tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), root).generic_string();
    if (rel.rfind("timing/", 0) == 0) continue;
    files[rel] = testing::slurp(e.path());
  }
  return files;
}

void harness(Outcome& out) {
  const auto data = load_dataset("synthetic:meanshift?train=24&test=30&steps=60&seed=5");
  auto tc = testing::toy_training(3, 10);
  tc.learning_rate = 0.01;
  const auto model = train(Architecture::fcn, data, tc);
  ExperimentConfig cfg;
  cfg.consistency = false;
  cfg.timeout_s = 0.002;
  auto reg = MethodRegistry::builtin();
  reg.add("stub", [](const CFRequest& r, const MethodContext&, std::uint64_t) {
    std::this_thread::sleep_for(std::chrono::milliseconds(15));
    Counterfactual cf;
    cf.original = r.instance;
    cf.perturbed = r.instance;
    cf.target = r.target;
    cf.status = CFStatus::ok;
    return cf;
  });
  std::vector<std::size_t> idx(data.test.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto run = evaluate_method(data, model, "fcn", "stub", idx, cfg, reg);
  const auto& pr = run.pairs.at(0);
  out.require(pr.state == PairState::aborted && pr.attempted == kAbortAfter && pr.timeouts == kAbortAfter,
              "abort after ten timeouts");

  std::vector<std::size_t> labels;
  const std::vector<std::size_t> sizes{260, 130, 70, 30, 10};
  for (std::size_t c = 0; c < sizes.size(); ++c) labels.insert(labels.end(), sizes[c], c);
  const auto sample = stratified_sample(labels, 160, 1);
  std::vector<std::size_t> got(sizes.size(), 0);
  for (auto i : sample.indices) ++got[labels[i]];
  out.require(sample.indices.size() == 160, "sample size");
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    out.require(std::abs(static_cast<double>(got[c]) - 160.0 * static_cast<double>(sizes[c]) / 500.0) <= 1.0,
                "class proportion");
  }

  const auto bench = ExperimentConfig::parse(
      "datasets = synthetic:meanshift?train=20&test=16&steps=48&seed=2\n"
      "models = fcn:1, mlp:2\n"
      "methods = nun_cf, ng, wcf, tsevo\n"
      "seed = 11\n"
      "workers = 2\n"
      "epochs = 6\n"
      "learning_rate = 0.01\n"
      "fcn.filters = 4, 8, 4\n"
      "mlp.hidden = 16\n"
      "mlp.dropout = 0, 0.1\n"
      "method.wcf.max_iters = 50\n"
      "method.tsevo.population = 8\n"
      "method.tsevo.generations = 3\n");
  testing::TempDir a("accept_a"), b("accept_b");
  write_results(run_benchmark(bench), a.path());
  write_results(run_benchmark(bench), b.path());
  const auto ta = result_tree(a.path()), tb = result_tree(b.path());
  out.require(ta == tb && ta.size() > 8, "result trees differ");
  out.detail << "aborted after " << pr.attempted << " attempts; per-class counts";
  for (auto g : got) out.detail << ' ' << g;
  out.detail << "; " << ta.size() << " identical files";
}

// --- 10 ---------------------------------------------------------------------

void nemenyi(Outcome& out) {
  const double cd = critical_difference(5, 20, 0.05);
  const double expect = 2.728 * std::sqrt(30.0 / 120.0);
  out.require(std::abs(cd - expect) < kCdAbsErr, "critical difference");
  out.detail << "CD " << cd << " vs " << expect;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"validity guarantees", validity},
      {"ThreshL0 vs L0", thresh_vs_l0},
      {"metric oracles", metric_oracles},
      {"NumSeg tolerance", numseg_tolerance},
      {"Sens forced cases", sens_forced},
      {"gradients and CAM", gradients},
      {"non-dominated sorting", nsga2_sort},
      {"consistency", consistency_checks},
      {"harness", harness},
      {"Nemenyi CD", nemenyi},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << ' ' << (i + 1) << ' ' << criteria[i].first << ": " << o.detail.str()
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
