// Command-line front end: train, explain, evaluate, bench, report.
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tscf/errors.hpp"
#include "tscf/harness.hpp"

namespace fs = std::filesystem;
using namespace tscf;

namespace {

fs::path workspace() {
  const char* env = std::getenv("TSCF_WORKSPACE");
  return env && *env ? fs::path(env) : fs::current_path();
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const auto v = std::stoull(item, &used);
    if (used != item.size()) throw ConfigError("bad list entry '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

struct MetricFlags {
  double tau = 0.0025;
  double tolerance = 0.01;
  std::size_t k = 5;
  double timeout = 3600.0;
  std::uint64_t seed = 0;
  std::vector<std::string> params;

  void add(CLI::App* cmd) {
    cmd->add_option("--tau", tau, "Perceptibility threshold as a fraction of the channel range")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 0.999999));
    cmd->add_option("--tolerance", tolerance, "Segment gap tolerance as a fraction of the series length")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 0.999999));
    cmd->add_option("--k", k, "Neighbours for Dist_all / Dist_class")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--timeout", timeout, "Per-instance time budget in seconds")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Global seed")->capture_default_str();
    cmd->add_option("--param", params, "Method parameter as key=value (repeatable)");
  }

  ExperimentConfig config(const std::string& method) const {
    ExperimentConfig cfg;
    cfg.sparsity.tau = tau;
    cfg.sparsity.tolerance_frac = tolerance;
    cfg.plausibility.k = k;
    cfg.timeout_s = timeout;
    cfg.seed = seed;
    for (const auto& kv : params) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--param expects key=value, got '" + kv + "'");
      cfg.method_params[method][kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return cfg;
  }
};

nlohmann::ordered_json metrics_json(const MetricReport& m) {
  auto opt = [](const auto& v) -> nlohmann::ordered_json {
    if (!v) return nullptr;
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(*v)>>) {
      if (!std::isfinite(*v)) return nullptr;
    }
    return *v;
  };
  nlohmann::ordered_json j;
  j["valid"] = m.valid;
  j["status"] = to_string(m.status);
  j["l1"] = opt(m.l1);
  j["l2"] = opt(m.l2);
  j["linf"] = opt(m.linf);
  j["l0"] = opt(m.l0);
  j["thresh_l0"] = opt(m.thresh_l0);
  j["thresh_l0_count"] = opt(m.thresh_l0_count);
  j["sens"] = opt(m.sens);
  j["num_seg"] = opt(m.num_seg);
  j["dist_all"] = opt(m.dist_all);
  j["dist_all_degenerate"] = m.dist_all_degenerate;
  j["dist_class"] = opt(m.dist_class);
  j["dist_class_degenerate"] = m.dist_class_degenerate;
  j["gen_time"] = m.gen_time;
  return j;
}

void print_summary(const RunResult& run) {
  for (const auto& a : aggregate(run)) {
    std::cout << a.dataset << " / " << a.model << " / " << a.method << ": " << to_string(a.state) << ", "
              << a.valid << "/" << a.attempted << " valid";
    if (a.timeouts) std::cout << ", " << a.timeouts << " timeouts";
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual explanations for time-series classifiers"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "tscf 0.1.0");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a classifier and save it");
  std::string t_dataset, t_arch = "fcn", t_out, t_filters, t_hidden;
  std::size_t t_epochs = 100, t_batch = 16;
  double t_lr = 1e-3;
  std::uint64_t t_seed = 0;
  train_cmd->add_option("--dataset", t_dataset, "Dataset path or synthetic:<kind>")->required();
  train_cmd->add_option("--arch", t_arch, "Architecture")->capture_default_str()->check(CLI::IsMember({"fcn", "mlp"}));
  train_cmd->add_option("--epochs", t_epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--batch", t_batch, "Minibatch size")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", t_lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", t_seed, "Initialisation and shuffling seed")->capture_default_str();
  train_cmd->add_option("--filters", t_filters, "FCN filters per block, comma separated (default 128,256,128)");
  train_cmd->add_option("--hidden", t_hidden, "MLP hidden widths, comma separated (default 500,500,500)");
  train_cmd->add_option("--out", t_out, "Model file (default $TSCF_WORKSPACE/models/<dataset>_<arch>.model)");

  // explain
  auto* explain_cmd = app.add_subcommand("explain", "Explain one test instance");
  std::string e_model, e_dataset, e_method, e_out, e_svg;
  std::size_t e_instance = 0;
  bool e_trace = false;
  MetricFlags e_flags;
  explain_cmd->add_option("--model", e_model, "Model file")->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--dataset", e_dataset, "Dataset path or synthetic:<kind>")->required();
  explain_cmd->add_option("--instance", e_instance, "Test instance index")->capture_default_str();
  explain_cmd->add_option("--method", e_method, "nun_cf, ng, comte, sets, wcf or tsevo")->required();
  explain_cmd->add_option("--out", e_out, "Counterfactual record (JSON); stdout when omitted");
  explain_cmd->add_option("--svg", e_svg, "Write an overlay plot of original and counterfactual");
  explain_cmd->add_flag("--trace", e_trace, "Record the per-iteration loss (wcf)");
  e_flags.add(explain_cmd);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Run one method over a dataset's test split with a saved model");
  std::string v_model, v_dataset, v_method, v_out;
  std::size_t v_cap = 160, v_workers = 1;
  MetricFlags v_flags;
  eval_cmd->add_option("--model", v_model, "Model file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--dataset", v_dataset, "Dataset path or synthetic:<kind>")->required();
  eval_cmd->add_option("--method", v_method, "nun_cf, ng, comte, sets, wcf or tsevo")->required();
  eval_cmd->add_option("--sample-cap", v_cap, "Stratified sample size")->capture_default_str()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--workers", v_workers, "Concurrent instances")->capture_default_str()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", v_out, "Results directory (default $TSCF_WORKSPACE/results/<dataset>_<method>)");
  v_flags.add(eval_cmd);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Run a benchmark described by a config file");
  std::string b_config, b_out;
  std::optional<std::size_t> b_cap, b_workers;
  std::optional<double> b_timeout;
  std::optional<std::uint64_t> b_seed;
  bench_cmd->add_option("config", b_config, "Experiment config (key = value lines)")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", b_out, "Results directory (default $TSCF_WORKSPACE/results/<config name>)");
  bench_cmd->add_option("--sample-cap", b_cap, "Override sample_cap");
  bench_cmd->add_option("--workers", b_workers, "Override workers");
  bench_cmd->add_option("--timeout", b_timeout, "Override timeout (seconds)");
  bench_cmd->add_option("--seed", b_seed, "Override seed");

  // report
  auto* report_cmd = app.add_subcommand("report", "Emit a report from a results directory");
  std::string r_dir, r_format = "table-text", r_out;
  report_cmd->add_option("results", r_dir, "Results directory")->required();
  report_cmd->add_option("--format", r_format, "Report format")
      ->capture_default_str()
      ->check(CLI::IsMember({"table-text", "delimited", "structured", "svg-cd", "radar-data"}));
  report_cmd->add_option("--out", r_out, "Output directory (default: the results directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) {
      const Dataset data = load_dataset(t_dataset);
      TrainConfig tc;
      tc.epochs = t_epochs;
      tc.batch = t_batch;
      tc.learning_rate = t_lr;
      tc.seed = t_seed;
      if (!t_filters.empty()) tc.fcn.filters = parse_size_list(t_filters);
      if (!t_hidden.empty()) {
        tc.mlp.hidden = parse_size_list(t_hidden);
        tc.mlp.dropout.assign(tc.mlp.hidden.size() + 1, 0.1);
      }
      const fs::path out = t_out.empty() ? workspace() / "models" / (data.name + "_" + t_arch + ".model") : fs::path(t_out);
      const auto model = train(parse_architecture(t_arch), data, tc);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      save_model(model, out);
      std::cout << "train accuracy " << format_double(model.train_accuracy.value_or(0.0)) << " test accuracy "
                << format_double(model.test_accuracy.value_or(0.0)) << '\n';
      std::cout << "saved " << out.string() << '\n';
    } else if (*explain_cmd) {
      const Dataset data = load_dataset(e_dataset);
      const auto model = load_model(e_model);
      auto cfg = e_flags.config(e_method);
      if (e_trace) cfg.method_params[e_method]["trace"] = "1";
      const auto res = explain_instance(data, model, e_method, e_instance, cfg);
      nlohmann::ordered_json j;
      j["dataset"] = data.name;
      j["instance"] = e_instance;
      j["method"] = e_method;
      j["label"] = data.test[e_instance].label;
      j["predicted"] = res.predicted;
      j["target"] = res.cf.target;
      j["note"] = res.cf.note;
      j["metrics"] = metrics_json(res.metrics);
      j["channels"] = res.cf.original.channels();
      j["steps"] = res.cf.original.steps();
      j["original"] = res.cf.original.values();
      j["perturbed"] = res.cf.perturbed.values();
      if (!res.cf.loss_trace.empty()) j["loss_trace"] = res.cf.loss_trace;
      const std::string text = j.dump(1) + "\n";
      if (e_out.empty()) {
        std::cout << text;
      } else {
        const fs::path p(e_out);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream(p) << text;
        std::cout << (res.metrics.valid ? "valid" : "invalid") << " counterfactual (" << to_string(res.metrics.status)
                  << ") written to " << p.string() << '\n';
      }
      if (!e_svg.empty()) {
        const fs::path p(e_svg);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream(p) << render_overlay_svg(res.cf.original, res.cf.perturbed, cfg.sparsity,
                                               data.name + " #" + std::to_string(e_instance) + " (" + e_method + ")");
      }
    } else if (*eval_cmd) {
      Dataset data = load_dataset(v_dataset);
      const auto model = load_model(v_model);
      auto cfg = v_flags.config(v_method);
      cfg.sample_cap = v_cap;
      cfg.workers = v_workers;
      cfg.datasets = {v_dataset};
      cfg.methods = {v_method};
      cfg.models = {ModelSpec{model.architecture, 0}};
      cfg.consistency = false;
      const auto indices = benchmark_indices(data, cfg, true);
      auto run = evaluate_method(data, model, to_string(model.architecture), v_method, indices, cfg);
      run.config_text = cfg.serialize();
      run.version = "tscf 0.1.0";
      const fs::path out = v_out.empty() ? workspace() / "results" / (data.name + "_" + v_method) : fs::path(v_out);
      write_results(run, out);
      print_summary(run);
      std::cout << "results written to " << out.string() << '\n';
    } else if (*bench_cmd) {
      auto cfg = ExperimentConfig::load(b_config);
      if (b_cap) cfg.sample_cap = *b_cap;
      if (b_workers) cfg.workers = *b_workers;
      if (b_timeout) cfg.timeout_s = *b_timeout;
      if (b_seed) cfg.seed = *b_seed;
      const fs::path out = b_out.empty() ? workspace() / "results" / fs::path(b_config).stem() : fs::path(b_out);
      const auto run = run_benchmark(cfg, MethodRegistry::builtin(),
                                     [](const std::string& msg) { std::cerr << msg << '\n'; });
      write_results(run, out);
      print_summary(run);
      std::cout << "results written to " << out.string() << '\n';
    } else if (*report_cmd) {
      const auto run = read_results(r_dir);
      const fs::path out = r_out.empty() ? fs::path(r_dir) : fs::path(r_out);
      const auto files = emit_report(run, parse_report_format(r_format), out);
      if (r_format == "table-text" && !files.empty()) {
        std::ifstream in(files.front());
        std::cout << in.rdbuf();
      } else {
        for (const auto& f : files) std::cout << f.string() << '\n';
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
