#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "support.hpp"
#include "tscf/errors.hpp"
#include "tscf/metrics.hpp"

using namespace tscf;

namespace {

double rel_err(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

LatentSet line_reps(std::size_t n) {
  LatentSet s;
  for (std::size_t i = 0; i < n; ++i) {
    s.reps.push_back({static_cast<double>(i)});
    s.labels.push_back(0);
  }
  return s;
}

}  // namespace

TEST_CASE("proximity examples") {
  const auto x = TimeSeries::univariate({0, 0});
  const auto p = proximity(x, TimeSeries::univariate({3, -4}));
  CHECK(p.l1 == 7.0);
  CHECK(p.l2 == 5.0);
  CHECK(p.linf == 4.0);
  const auto z = proximity(x, x);
  CHECK(z.l1 == 0.0);
  CHECK(z.l2 == 0.0);
  CHECK(z.linf == 0.0);
  CHECK_THROWS_AS(proximity(x, TimeSeries::univariate({1, 2, 3})), ContractError);
}

TEST_CASE("l0 examples") {
  const auto x = TimeSeries::univariate({0, 1, 2, 3});
  CHECK(sparsity_l0(x, x) == 0.0);
  CHECK(sparsity_l0(x, TimeSeries::univariate({0, 1, 2.5, 3})) == 0.25);
}

TEST_CASE("thresh l0 examples") {
  const auto x = TimeSeries::univariate({0, 1, 2, 3});
  SparsityConfig cfg;
  CHECK(change_thresholds(x, cfg)[0] == doctest::Approx(0.0075));
  CHECK(thresh_l0(x, x, cfg) == 0.0);
  CHECK(thresh_l0(x, TimeSeries::univariate({0, 1.5, 2, 3}), cfg) == 0.25);

  std::vector<double> v(150);
  for (std::size_t t = 0; t < 150; ++t) v[t] = std::sin(t * 0.05);
  const auto g = TimeSeries::univariate(v);
  auto cf = g;
  for (auto& u : cf.flat()) u += 1e-5;  // imperceptible everywhere
  cf(0, 40) += 0.5;
  cf(0, 100) -= 0.5;
  CHECK(sparsity_l0(g, cf) == 1.0);
  CHECK(thresh_l0_count(g, cf, cfg) == 2);
  CHECK(thresh_l0(g, cf, cfg) == doctest::Approx(0.013).epsilon(0.03));
}

TEST_CASE("constant channel counts every nonzero change") {
  const TimeSeries x(2, 3, {5, 5, 5, 0, 1, 2});
  TimeSeries y = x;
  y(0, 1) += 1e-12;
  y(1, 1) += 1e-12;
  SparsityConfig cfg;
  CHECK(thresh_l0_count(x, y, cfg) == 1);
  cfg.global_range = true;
  CHECK(thresh_l0_count(x, y, cfg) == 0);
}

TEST_CASE("tolerance in steps") {
  SparsityConfig cfg;
  CHECK(tolerance_steps(100, cfg) == 1);
  CHECK(tolerance_steps(150, cfg) == 2);
  CHECK(tolerance_steps(24, cfg) == 1);
  cfg.tolerance_frac = 0.0;
  CHECK(tolerance_steps(150, cfg) == 0);
}

TEST_CASE("num segments examples") {
  SparsityConfig cfg;
  std::vector<double> v(100);
  for (std::size_t t = 0; t < 100; ++t) v[t] = static_cast<double>(t % 7);
  const auto x = TimeSeries::univariate(v);
  CHECK(num_segments(x, x, cfg) == 0);
  auto y = x;
  for (std::size_t t : {0, 1, 9, 10}) y(0, t) += 1.0;
  CHECK(num_segments(x, y, cfg) == 2);
}

TEST_CASE("full replacement with two short resemblance gaps") {
  std::vector<double> v(150);
  for (std::size_t t = 0; t < 150; ++t) v[t] = std::cos(t * 0.1);
  const auto x = TimeSeries::univariate(v);
  auto y = x;
  for (auto& u : y.flat()) u += 0.8;
  y(0, 50) = x(0, 50);
  y(0, 90) = x(0, 90);
  y(0, 91) = x(0, 91) + 1e-4;
  SparsityConfig cfg;
  CHECK(num_segments(x, y, cfg) == 1);
  cfg.tolerance_frac = 0.0;
  CHECK(num_segments(x, y, cfg) == 3);
}

TEST_CASE("metrics match brute force on random instances") {
  Rng rng(2024);
  const double taus[] = {0.0, 0.0025, 0.05, 0.3};
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(3);
    const std::size_t t = 2 + rng.index(49);
    const auto [x, y] = testing::random_cf_pair(rng, n, t);
    SparsityConfig cfg;
    cfg.tau = taus[rng.index(4)];
    cfg.tolerance_frac = rng.bernoulli(0.3) ? 0.0 : rng.uniform(0.0, 0.2);
    cfg.global_range = rng.bernoulli(0.2);

    const auto p = proximity(x, y);
    const auto o = oracle::proximity(x, y);
    CHECK(rel_err(p.l1, o.l1) < 1e-10);
    CHECK(rel_err(p.l2, o.l2) < 1e-10);
    CHECK(p.linf == o.linf);

    const auto count = oracle::thresh_count(x, y, cfg.tau, cfg.global_range);
    CHECK(thresh_l0_count(x, y, cfg) == count);
    CHECK(thresh_l0(x, y, cfg) == static_cast<double>(count) / (n * t));

    std::size_t tol = 0;
    if (cfg.tolerance_frac > 0) {
      while (static_cast<double>(tol) < cfg.tolerance_frac * t) ++tol;
      tol = std::max<std::size_t>(tol, 1);
    }
    CHECK(num_segments(x, y, cfg) == oracle::num_segments(x, y, cfg.tau, tol, cfg.global_range));
  }
}

TEST_CASE("sparsity invariants") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const auto [x, y] = testing::random_cf_pair(rng, 1 + rng.index(3), 5 + rng.index(60));
    SparsityConfig cfg;
    cfg.tau = rng.uniform(0.0, 0.2);
    CHECK(thresh_l0(x, y, cfg) <= sparsity_l0(x, y));
    CHECK((num_segments(x, y, cfg) == 0) == (thresh_l0(x, y, cfg) == 0.0));
    SparsityConfig zero = cfg;
    zero.tau = 0.0;
    CHECK(thresh_l0(x, y, zero) == sparsity_l0(x, y));

    SparsityConfig wide = cfg, narrow = cfg;
    wide.tolerance_frac = rng.uniform(0.0, 0.3);
    narrow.tolerance_frac = rng.uniform(0.0, wide.tolerance_frac);
    CHECK(num_segments(x, y, wide) <= num_segments(x, y, narrow));
    CHECK(num_segments(x, y, cfg) == num_segments(x, y, cfg));
  }
}

TEST_CASE("sensitivity forced cases over random masks") {
  Rng rng(31);
  SparsityConfig cfg;
  int supra = 0, sub = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.index(3), t = 5 + rng.index(40);
    const auto x = testing::random_series(rng, n, t);
    std::vector<double> diff(x.size());
    for (auto& d : diff) d = rng.normal();
    const auto th = oracle::thresholds(x, cfg.tau, false);
    const bool perceptible = trial % 2 == 0;
    auto y = x;
    double push = 0.0;
    bool any = false;
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t s = 0; s < t; ++s) {
        if (!rng.bernoulli(0.5)) continue;
        const double mag = th[c] * (perceptible ? rng.uniform(1.01, 3.0) : rng.uniform(0.1, 0.9));
        const std::size_t i = c * t + s;
        y(c, s) += diff[i] > 0 ? mag : -mag;
        push += std::abs(diff[i]) * mag;
        any = true;
      }
    }
    if (!any) continue;
    const auto m = testing::boundary_model(x, diff, push / 2);
    REQUIRE(predict(m, x).predicted == 0);
    REQUIRE(predict(m, y).predicted == 1);
    const auto s = sensitivity(x, y, m, 1, cfg);
    REQUIRE(s.has_value());
    if (perceptible) {
      CHECK(*s == 0);
      ++supra;
    } else {
      CHECK(*s == 1);
      ++sub;
    }
    CHECK_FALSE(sensitivity(x, y, m, 0, cfg).has_value());
  }
  CHECK(supra > 100);
  CHECK(sub > 100);
}

TEST_CASE("sensitivity probe matches explicit masking") {
  Rng rng(4);
  const auto m = build_mlp(2, 20, 3, MlpShape{{12}, {}}, 8);
  SparsityConfig cfg;
  cfg.tau = 0.05;
  for (int trial = 0; trial < 200; ++trial) {
    const auto [x, y] = testing::random_cf_pair(rng, 2, 20);
    const auto th = oracle::thresholds(x, cfg.tau, false);
    TimeSeries probe = x;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t t = 0; t < 20; ++t)
        if (oracle::marked(x, y, th, c, t)) probe(c, t) = y(c, t);
    CHECK(sensitivity_probe(x, y, cfg) == probe);
    const auto target = predict(m, y).predicted;
    const auto s = sensitivity(x, y, m, target, cfg);
    REQUIRE(s.has_value());
    CHECK(*s == (predict(m, probe).predicted != target ? 1 : 0));
  }
}

TEST_CASE("dist_nbr examples") {
  LatentSet s;
  s.reps = {{0.0}, {2.0}, {10.0}};
  s.labels = {0, 0, 1};
  const std::vector<double> q{0.0};
  CHECK(dist_nbr(s, q, std::nullopt, 2) == 2.0);
  CHECK(dist_nbr(s, q, std::nullopt, 1, 0) == 4.0);
  CHECK(dist_nbr(s, q, 1, 5) == 100.0);
  CHECK_THROWS_AS(dist_nbr(s, q, 2, 5), MetricError);
  CHECK(dist_nbr(s, q, std::nullopt, 10) == doctest::Approx(104.0 / 3));
}

TEST_CASE("ratio on ten points along a line") {
  const auto s = line_reps(10);
  // self-excluded k=2: endpoints (1 + 4) / 2, interior (1 + 1) / 2
  const double denom = (2 * 2.5 + 8 * 1.0) / 10;
  const std::vector<double> q{12.0};
  const auto r = dist_all(s, q, 2);
  CHECK_FALSE(r.degenerate);
  CHECK(r.value == doctest::Approx(12.5 / denom));
  CHECK(dist_class(s, q, 0, 2).value == doctest::Approx(12.5 / denom));
  PlausibilityReference ref(s, PlausibilityConfig{2});
  CHECK(ref.denominator_all() == doctest::Approx(denom));
  CHECK(ref.dist_all(q).value == doctest::Approx(12.5 / denom));
}

TEST_CASE("plausibility against brute force") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
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

    CHECK(rel_err(dist_nbr(s, q, std::nullopt, k), oracle::dist_nbr(s.reps, s.labels, q, std::nullopt, k)) < 1e-10);
    CHECK(rel_err(dist_nbr(s, q, cls, k), oracle::dist_nbr(s.reps, s.labels, q, cls, k)) < 1e-10);

    const double all = oracle::dist_nbr(s.reps, s.labels, q, std::nullopt, k) /
                       oracle::mean_train_dist(s.reps, s.labels, std::nullopt, k);
    CHECK(rel_err(dist_all(s, q, k).value, all) < 1e-10);

    std::size_t members = 0;
    for (auto l : s.labels) members += l == cls;
    const auto rc = dist_class(s, q, cls, k);
    if (members < 2) {
      CHECK(rc.degenerate);
    } else {
      const double expect = oracle::dist_nbr(s.reps, s.labels, q, cls, k) /
                            oracle::mean_train_dist(s.reps, s.labels, cls, k);
      CHECK(rel_err(rc.value, expect) < 1e-10);
    }
  }
}

TEST_CASE("plausibility ratios are translation invariant") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    LatentSet s;
    for (std::size_t i = 0; i < 20; ++i) {
      s.reps.push_back({rng.normal(), rng.normal(), rng.normal()});
      s.labels.push_back(i % 2);
    }
    std::vector<double> q{rng.normal(), rng.normal(), rng.normal()};
    auto shifted = s;
    auto qs = q;
    const std::vector<double> offset{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    for (auto& r : shifted.reps)
      for (std::size_t j = 0; j < 3; ++j) r[j] += offset[j];
    for (std::size_t j = 0; j < 3; ++j) qs[j] += offset[j];
    CHECK(dist_all(s, q).value == doctest::Approx(dist_all(shifted, qs).value).epsilon(1e-9));
    CHECK(dist_class(s, q, 1).value == doctest::Approx(dist_class(shifted, qs, 1).value).epsilon(1e-9));
  }
}

TEST_CASE("fresh draws from the training cloud score about one") {
  Rng rng(12);
  LatentSet s;
  for (std::size_t i = 0; i < 400; ++i) {
    s.reps.push_back({rng.uniform(), rng.uniform()});
    s.labels.push_back(0);
  }
  PlausibilityReference ref(s);
  double total = 0.0;
  for (int i = 0; i < 400; ++i) total += ref.dist_all(std::vector<double>{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)}).value;
  CHECK(total / 400 == doctest::Approx(1.0).epsilon(0.2));
  CHECK(ref.dist_all(std::vector<double>{5.0, 5.0}).value > 100.0);
}

TEST_CASE("identical training representations are degenerate") {
  LatentSet s;
  for (int i = 0; i < 5; ++i) {
    s.reps.push_back({1.0, 1.0});
    s.labels.push_back(0);
  }
  const auto r = dist_all(s, std::vector<double>{1.0, 2.0});
  CHECK(r.degenerate);
  CHECK(std::isinf(r.value));
}

TEST_CASE("consistency definitions") {
  const auto x0 = TimeSeries::univariate({-1, -1});
  const auto x1 = TimeSeries::univariate({1, 1});
  ClassifierModel a;
  a.architecture = Architecture::mlp;
  a.channels = 1;
  a.steps = 2;
  a.num_classes = 2;
  a.layers.emplace_back(DenseLayer{2, 2, {-1, -1, 1, 1}, {0, 0}});
  ClassifierModel b = a;
  std::get<DenseLayer>(b.layers[0]).bias = {0, -5};  // class 1 needs a stronger push

  auto cf = [](const TimeSeries& o, const TimeSeries& p, std::size_t target) {
    Counterfactual c;
    c.original = o;
    c.perturbed = p;
    c.target = target;
    return c;
  };
  const std::vector<Counterfactual> cfs{
      cf(x0, TimeSeries::univariate({0.5, 0.5}), 1),  // valid under a only
      cf(x0, TimeSeries::univariate({3, 3}), 1),      // valid under both
      cf(x0, x0, 1),                                  // invalid
      cf(x1, x0, 0),                                  // x1 misclassified by b: not eligible
  };
  const std::vector<std::size_t> labels{0, 0, 0, 1};

  const auto same = consistency(cfs, labels, a, a);
  CHECK(same.eligible == 4);
  CHECK(*same.consist_bc == 0.75);
  CHECK(*same.consist_bv == 1.0);

  const auto r = consistency(cfs, labels, a, b);
  CHECK(r.eligible == 3);
  CHECK(r.valid == 2);
  CHECK(r.consistent == 1);
  CHECK(*r.consist_bc == doctest::Approx(1.0 / 3));
  CHECK(*r.consist_bv == 0.5);

  const std::vector<Counterfactual> none{cf(x0, x0, 1)};
  const auto n = consistency(none, std::vector<std::size_t>{0}, a, b);
  CHECK(*n.consist_bc == 0.0);
  CHECK_FALSE(n.consist_bv.has_value());

  const auto empty = consistency(none, std::vector<std::size_t>{1}, a, b);
  CHECK_FALSE(empty.consist_bc.has_value());
}

TEST_CASE("consistBV never below consistBC") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
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
    if (r.consist_bc && r.consist_bv) CHECK(*r.consist_bv >= *r.consist_bc);
  }
}

TEST_CASE("evaluate skips valid-only metrics for invalid counterfactuals") {
  const auto m = build_mlp(1, 8, 2, MlpShape{{4}, {}}, 3);
  Rng rng(1);
  LatentSet s;
  std::vector<LabeledInstance> train;
  for (int i = 0; i < 10; ++i) train.push_back({testing::random_series(rng, 1, 8), 0});
  PlausibilityReference ref(LatentSet::from_model(m, train));
  Counterfactual cf;
  cf.original = testing::random_series(rng, 1, 8);
  cf.perturbed = cf.original;
  const auto pred = predict(m, cf.original).predicted;
  cf.target = 1 - pred;
  const auto bad = evaluate(cf, m, ref, {});
  CHECK_FALSE(bad.valid);
  CHECK_FALSE(bad.l1.has_value());
  CHECK_FALSE(bad.thresh_l0.has_value());
  CHECK_FALSE(bad.dist_all.has_value());

  cf.target = pred;
  const auto ok = evaluate(cf, m, ref, {});
  CHECK(ok.valid);
  CHECK(*ok.l1 == 0.0);
  CHECK(*ok.num_seg == 0);
  CHECK(*ok.thresh_l0 <= *ok.l0);
  CHECK(ok.dist_all.has_value());
}
