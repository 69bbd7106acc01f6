#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include "oracles.hpp"
#include "support.hpp"
#include "tscf/errors.hpp"
#include "tscf/harness.hpp"

using namespace tscf;
using testing::TempDir;

namespace {

const Dataset& small_data() {
  static const Dataset d = load_dataset("synthetic:meanshift?train=24&test=30&steps=60&seed=5");
  return d;
}

const ClassifierModel& small_fcn() {
  static const ClassifierModel m = [] {
    auto tc = testing::toy_training(3, 15);
    tc.learning_rate = 0.01;
    return train(Architecture::fcn, small_data(), tc);
  }();
  return m;
}

std::vector<std::size_t> all_test(const Dataset& d) {
  std::vector<std::size_t> idx(d.test.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

Counterfactual echo(const CFRequest& req, CFStatus status) {
  Counterfactual cf;
  cf.original = req.instance;
  cf.perturbed = req.instance;
  cf.target = req.target;
  cf.status = status;
  return cf;
}

ExperimentConfig bench_config() {
  auto cfg = ExperimentConfig::parse(
      "datasets = synthetic:meanshift?train=20&test=16&steps=48&seed=2\n"
      "models = fcn:1, mlp:2\n"
      "methods = nun_cf, ng, tsevo\n"
      "seed = 11\n"
      "workers = 2\n"
      "sample_cap = 6\n"
      "epochs = 6\n"
      "learning_rate = 0.01\n"
      "fcn.filters = 4, 8, 4\n"
      "fcn.widths = 5, 3, 3\n"
      "mlp.hidden = 16\n"
      "mlp.dropout = 0, 0.1\n"
      "method.tsevo.population = 8\n"
      "method.tsevo.generations = 3\n");
  return cfg;
}

std::map<std::string, std::string> tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), root).generic_string();
    out[rel] = testing::slurp(e.path());
  }
  return out;
}

RunResult fake_run(const std::vector<std::string>& methods, std::size_t datasets) {
  RunResult run;
  run.config_text = "seed = 0\n";
  run.version = "test";
  Rng rng(9);
  for (std::size_t d = 0; d < datasets; ++d) {
    for (const auto& m : methods) {
      PairResult p;
      p.dataset = "d" + std::to_string(d);
      p.model = "fcn-s0";
      p.method = m;
      p.attempted = 2;
      run.pairs.push_back(p);
      for (std::size_t i = 0; i < 2; ++i) {
        InstanceRecord r;
        r.dataset = p.dataset;
        r.model = p.model;
        r.method = m;
        r.instance = i;
        r.target = 1;
        r.metrics.valid = true;
        r.metrics.status = CFStatus::ok;
        r.metrics.l1 = rng.uniform();
        r.metrics.l2 = rng.uniform();
        r.metrics.linf = rng.uniform();
        r.metrics.l0 = rng.uniform();
        r.metrics.thresh_l0 = rng.uniform();
        r.metrics.thresh_l0_count = rng.index(10);
        r.metrics.sens = static_cast<int>(rng.index(2));
        r.metrics.num_seg = 1 + rng.index(4);
        r.metrics.dist_all = rng.uniform();
        r.metrics.dist_class = rng.uniform();
        r.metrics.gen_time = 0.5;
        r.perturbed = {rng.normal(), rng.normal()};
        run.records.push_back(r);
      }
    }
  }
  return run;
}

}  // namespace

TEST_CASE("target selection") {
  const std::vector<double> a{0.7, 0.3};
  CHECK(select_target(a, 0) == 1);
  const std::vector<double> b{0.5, 0.25, 0.25};
  CHECK(select_target(b, 0) == 1);
  const std::vector<double> c{0.1, 0.2, 0.7};
  CHECK(select_target(c, 2) == 1);
}

TEST_CASE("config text round trip") {
  auto cfg = bench_config();
  cfg.sparsity.tau = 0.01;
  cfg.exclude_failed = true;
  const auto text = cfg.serialize();
  CHECK(ExperimentConfig::parse(text).serialize() == text);
  CHECK(cfg.models.size() == 2);
  CHECK(cfg.models[1].arch == Architecture::mlp);
  CHECK(cfg.models[1].seed == 2);
  CHECK(cfg.method_params.at("tsevo").at("population") == "8");
  CHECK_THROWS_AS(ExperimentConfig::parse("colour = blue\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("seed = minus one\n"), ConfigError);
  ExperimentConfig bad = cfg;
  bad.alpha = 0.01;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("a method that always times out is aborted after ten attempts") {
  const auto& data = small_data();
  REQUIRE(data.test.size() > 12);
  ExperimentConfig cfg;
  cfg.consistency = false;
  auto reg = MethodRegistry::builtin();

  SUBCASE("reported timeouts") {
    reg.add("stub", [](const CFRequest& r, const MethodContext&, std::uint64_t) {
      return echo(r, CFStatus::timed_out);
    });
  }
  SUBCASE("late answers") {
    cfg.timeout_s = 0.002;
    reg.add("stub", [](const CFRequest& r, const MethodContext&, std::uint64_t) {
      std::this_thread::sleep_for(std::chrono::milliseconds(15));
      return echo(r, CFStatus::ok);
    });
  }
  const auto run = evaluate_method(data, small_fcn(), "fcn", "stub", all_test(data), cfg, reg);
  REQUIRE(run.pairs.size() == 1);
  CHECK(run.pairs[0].state == PairState::aborted);
  CHECK(run.pairs[0].attempted == 10);
  CHECK(run.pairs[0].timeouts == 10);
  CHECK(run.records.size() == 10);
  for (const auto& r : run.records) {
    CHECK_FALSE(r.metrics.valid);
    CHECK_FALSE(r.metrics.l1.has_value());
  }
}

TEST_CASE("a success resets the timeout streak") {
  const auto& data = small_data();
  ExperimentConfig cfg;
  cfg.consistency = false;
  auto reg = MethodRegistry::builtin();
  auto calls = std::make_shared<std::size_t>(0);
  reg.add("stub", [calls](const CFRequest& r, const MethodContext&, std::uint64_t) {
    ++*calls;
    return echo(r, *calls == 10 ? CFStatus::no_cf_found : CFStatus::timed_out);
  });
  for (std::size_t workers : {1, 4}) {
    *calls = 0;
    cfg.workers = workers;
    const auto run = evaluate_method(data, small_fcn(), "fcn", "stub", all_test(data), cfg, reg);
    CHECK(run.pairs[0].state == PairState::aborted);
    CHECK(run.pairs[0].attempted == 20);
    CHECK(run.pairs[0].timeouts == 19);
  }
}

TEST_CASE("unchanged output is never valid") {
  const auto& data = small_data();
  ExperimentConfig cfg;
  auto reg = MethodRegistry::builtin();
  reg.add("identity", [](const CFRequest& r, const MethodContext&, std::uint64_t) {
    auto cf = echo(r, CFStatus::ok);
    cf.valid = true;
    return cf;
  });
  const auto run = evaluate_method(data, small_fcn(), "fcn", "identity", {0, 1, 2, 3}, cfg, reg);
  CHECK(run.pairs[0].state == PairState::completed);
  for (const auto& r : run.records) {
    CHECK_FALSE(r.metrics.valid);
    CHECK_FALSE(r.metrics.l2.has_value());
    CHECK_FALSE(r.metrics.num_seg.has_value());
  }
  const auto aggs = aggregate(run);
  REQUIRE(aggs.size() == 1);
  CHECK(*aggs[0].validity == 0.0);
  CHECK(aggs[0].metrics.at("l2").n == 0);
}

TEST_CASE("errors and unsupported inputs") {
  const auto& data = small_data();
  ExperimentConfig cfg;
  auto reg = MethodRegistry::builtin();
  reg.add("throws", [](const CFRequest&, const MethodContext&, std::uint64_t) -> Counterfactual {
    throw std::runtime_error("boom");
  });
  reg.add("refuses", [](const CFRequest&, const MethodContext&, std::uint64_t) -> Counterfactual {
    throw UnsupportedError("not for this input");
  });
  const auto failed = evaluate_method(data, small_fcn(), "fcn", "throws", {0, 1, 2}, cfg, reg);
  CHECK(failed.pairs[0].state == PairState::failed);
  CHECK(failed.records.size() == 3);
  CHECK(failed.records[0].error);
  CHECK(failed.records[0].note == "boom");
  const auto refused = evaluate_method(data, small_fcn(), "fcn", "refuses", {0, 1, 2}, cfg, reg);
  CHECK(refused.pairs[0].state == PairState::unsupported);
  CHECK(refused.records.empty());
  CHECK_THROWS_AS(evaluate_method(data, small_fcn(), "fcn", "nun_cf", {999}, cfg), ContractError);
  CHECK_THROWS_AS(MethodRegistry::builtin().get("nope"), ConfigError);
}

TEST_CASE("nun_cf through the harness") {
  const auto& data = small_data();
  ExperimentConfig cfg;
  const auto run = evaluate_method(data, small_fcn(), "fcn", "nun_cf", all_test(data), cfg,
                                   MethodRegistry::builtin(), &small_fcn());
  const auto aggs = aggregate(run);
  REQUIRE(aggs.size() == 1);
  CHECK(*aggs[0].validity == 1.0);
  CHECK(run.pairs[0].consist_bv == doctest::Approx(1.0));
  for (const auto& r : run.records) {
    CHECK(r.metrics.valid);
    CHECK(r.target != r.predicted);
    CHECK(r.perturbed.size() == data.test[r.instance].series.size());
  }
  const auto one = explain_instance(data, small_fcn(), "nun_cf", 3, cfg);
  CHECK(one.cf.valid);
  CHECK(one.metrics.l2 == doctest::Approx(*run.records[3].metrics.l2));
  CHECK_THROWS_AS(explain_instance(data, small_fcn(), "nun_cf", 500, cfg), ContractError);
}

TEST_CASE("stratified evaluation subset") {
  std::vector<std::size_t> labels;
  const std::vector<std::size_t> sizes{237, 141, 77, 33, 12};
  for (std::size_t c = 0; c < sizes.size(); ++c) labels.insert(labels.end(), sizes[c], c);
  REQUIRE(labels.size() == 500);
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto s = stratified_sample(labels, 160, seed);
    REQUIRE(s.indices.size() == 160);
    std::vector<std::size_t> got(sizes.size(), 0);
    for (auto i : s.indices) ++got[labels[i]];
    for (std::size_t c = 0; c < sizes.size(); ++c) {
      CHECK(std::abs(static_cast<double>(got[c]) - 160.0 * sizes[c] / 500.0) <= 1.0);
    }
  }
  ExperimentConfig cfg;
  cfg.sample_cap = 10;
  cfg.test_limit = 20;
  const auto& data = small_data();
  const auto all = benchmark_indices(data, cfg, false);
  const auto capped = benchmark_indices(data, cfg, true);
  CHECK(all.size() == 20);
  CHECK(capped.size() == 10);
  for (auto i : capped) CHECK(std::find(all.begin(), all.end(), i) != all.end());
}

TEST_CASE("mid ranks") {
  using O = std::vector<std::optional<double>>;
  CHECK(rank_row(O{1, 2, 3}, Direction::lower_is_better) == std::vector<double>{1, 2, 3});
  CHECK(rank_row(O{1, 1, 2}, Direction::lower_is_better) == std::vector<double>{1.5, 1.5, 3});
  CHECK(rank_row(O{1, 1, 2}, Direction::higher_is_better) == std::vector<double>{2.5, 2.5, 1});
  CHECK(rank_row(O{std::nullopt, 5, std::nullopt}, Direction::lower_is_better) == std::vector<double>{2.5, 1, 2.5});

  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 2 + rng.index(6);
    O v(m);
    for (auto& x : v) {
      if (rng.bernoulli(0.2)) continue;
      x = static_cast<double>(rng.index(4));
    }
    for (bool higher : {false, true}) {
      const auto dir = higher ? Direction::higher_is_better : Direction::lower_is_better;
      CHECK(rank_row(v, dir) == oracle::ranks(v, higher));
    }
  }
}

TEST_CASE("ranking table") {
  using O = std::vector<std::optional<double>>;
  const auto t = aggregate_rankings({"a", "b", "c", "d"}, {"x", "y", "z"},
                                    {O{1, 2, 3}, O{3, 2, 1}, O{std::nullopt, std::nullopt, std::nullopt}, O{1, 1, 2}},
                                    Direction::lower_is_better);
  CHECK(t.datasets == std::vector<std::string>{"a", "b", "d"});
  CHECK(t.notes.size() == 1);
  CHECK(t.average[0] == doctest::Approx((1 + 3 + 1.5) / 3.0));
  CHECK(t.average[2] == doctest::Approx((3 + 1 + 3) / 3.0));
  CHECK_THROWS_AS(aggregate_rankings({"a"}, {"x"}, {O{1}}, Direction::lower_is_better), ContractError);
}

TEST_CASE("critical difference") {
  CHECK(std::abs(critical_difference(5, 20, 0.05) - 2.728 * std::sqrt(30.0 / 120.0)) < 1e-6);
  CHECK(std::abs(critical_difference(2, 10, 0.05) - 1.960 * std::sqrt(6.0 / 60.0)) < 1e-12);
  CHECK(critical_difference(4, 7, 0.10) == doctest::Approx(2.291 * std::sqrt(20.0 / 42.0)));
  CHECK_THROWS_AS(critical_difference(5, 20, 0.01), ConfigError);
  CHECK_THROWS_AS(critical_difference(11, 20, 0.05), ConfigError);
  CHECK_THROWS_AS(critical_difference(5, 0, 0.05), ContractError);
}

TEST_CASE("friedman statistic") {
  SUBCASE("identical ranks") {
    const std::vector<std::vector<double>> r(6, {2, 2, 2});
    const auto f = friedman_nemenyi(r, 0.05);
    CHECK(f.chi2 == 0.0);
    CHECK_FALSE(f.significant);
    REQUIRE(f.groups.size() == 1);
    CHECK(f.groups[0].size() == 3);
  }
  SUBCASE("perfect agreement") {
    const std::vector<std::vector<double>> r(10, {1, 2, 3, 4});
    const auto f = friedman_nemenyi(r, 0.05);
    // 12 D / (M (M + 1)) * sum R^2 - 3 D (M + 1)
    CHECK(f.chi2 == doctest::Approx(12.0 * 10 / 20.0 * 30.0 - 3.0 * 10 * 5));
    CHECK(f.critical == doctest::Approx(7.8147).epsilon(1e-4));
    CHECK(f.significant);
    for (const auto& g : f.groups) {
      for (auto a : g)
        for (auto b : g) CHECK(std::abs(f.average[a] - f.average[b]) < f.cd);
    }
  }
  CHECK_THROWS_AS(friedman_nemenyi({{1, 2}}, 0.05), ContractError);
}

TEST_CASE("report formats") {
  CHECK(parse_report_format(to_string(ReportFormat::svg_cd)) == ReportFormat::svg_cd);
  CHECK_THROWS_AS(parse_report_format("pdf"), ConfigError);

  TempDir dir("report");
  RunResult empty;
  CHECK_THROWS_AS(emit_report(empty, ReportFormat::table_text, dir.path()), ContractError);

  const auto single = fake_run({"nun_cf"}, 2);
  emit_report(single, ReportFormat::radar_data, dir.path());
  const auto radar = testing::slurp(dir / "radar/fcn-s0.csv");
  CHECK(radar.substr(0, radar.find('\n')) == "metric,nun_cf");

  const auto many = fake_run({"a", "b", "c"}, 3);
  const auto files = emit_report(many, ReportFormat::svg_cd, dir / "many");
  CHECK_FALSE(files.empty());
  for (const auto& f : files) CHECK(testing::slurp(f).find("<svg") != std::string::npos);
}

TEST_CASE("results tree round trip") {
  TempDir dir("tree");
  const auto run = fake_run({"a", "b"}, 2);
  write_results(run, dir.path());
  for (const char* f : {"config.txt", "counterfactuals.jsonl", "results.json", "records.csv", "aggregates.csv",
                        "timing/records.csv", "timing/aggregates.csv", "radar/fcn-s0.csv"}) {
    CHECK_MESSAGE(std::filesystem::exists(dir / f), std::string(f));
  }
  const auto back = read_results(dir.path());
  REQUIRE(back.records.size() == run.records.size());
  CHECK(back.pairs.size() == run.pairs.size());
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    CHECK(back.records[i].perturbed == run.records[i].perturbed);
    CHECK(back.records[i].metrics.l2 == run.records[i].metrics.l2);
    CHECK(back.records[i].metrics.num_seg == run.records[i].metrics.num_seg);
    CHECK(back.records[i].metrics.gen_time == run.records[i].metrics.gen_time);
  }
  CHECK(run_to_json(back, true) == run_to_json(run, true));
  TempDir nothing("none");
  CHECK_THROWS_AS(read_results(nothing.path()), ContractError);
}

TEST_CASE("identical seeds give identical result trees") {
  const auto cfg = bench_config();
  TempDir a("bench_a"), b("bench_b");
  const auto r1 = run_benchmark(cfg);
  const auto r2 = run_benchmark(cfg);
  CHECK(r1.pairs.size() == 6);
  write_results(r1, a.path());
  write_results(r2, b.path());
  auto ta = tree(a.path());
  auto tb = tree(b.path());
  for (auto* t : {&ta, &tb}) {
    for (auto it = t->begin(); it != t->end();) {
      it = it->first.rfind("timing/", 0) == 0 ? t->erase(it) : std::next(it);
    }
  }
  CHECK(ta.size() > 8);
  REQUIRE(ta.size() == tb.size());
  for (const auto& [name, bytes] : ta) CHECK_MESSAGE(tb.at(name) == bytes, name);

  std::size_t capped = 0;
  for (const auto& r : r1.records) capped += r.method == "tsevo";
  CHECK(capped == 12);
}
