#include "tscf/harness.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include "tscf/errors.hpp"
#include "tscf/rng.hpp"

namespace tscf {

std::size_t select_target(std::span<const double> probs, std::size_t predicted) {
  if (probs.size() < 2) throw ContractError("target selection needs at least two classes");
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (c == predicted) continue;
    if (!best || probs[c] > probs[*best]) best = c;
  }
  return *best;
}

std::size_t select_target(const ClassifierModel& model, const TimeSeries& x) {
  const auto p = predict(model, x);
  return select_target(p.probs, p.predicted);
}

double param_double(const MethodParams& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  if (it == p.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("parameter '" + key + "' expects a number, got '" + it->second + "'");
  }
}

std::size_t param_size(const MethodParams& p, const std::string& key, std::size_t fallback) {
  const auto it = p.find(key);
  if (it == p.end()) return fallback;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(it->second, &used);
    if (used != it->second.size() || it->second.starts_with('-')) throw std::invalid_argument(key);
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw ConfigError("parameter '" + key + "' expects a non-negative integer, got '" + it->second + "'");
  }
}

MethodContext::MethodContext(const Dataset& data, const ClassifierModel& model, MethodParams params,
                             std::uint64_t seed)
    : data_(data), model_(model), pool_(data.train, model), params_(std::move(params)), seed_(seed) {}

const ShapeletSet& MethodContext::shapelets() const {
  std::call_once(shapelets_once_, [this] {
    SetsConfig cfg;
    cfg.detect_quantile = param_double(params_, "detect_quantile", cfg.detect_quantile);
    cfg.per_class = param_size(params_, "per_class", cfg.per_class);
    cfg.max_candidates_per_channel =
        param_size(params_, "max_candidates", cfg.max_candidates_per_channel);
    cfg.mining_budget = param_double(params_, "mining_budget", cfg.mining_budget);
    cfg.seed = seed_;
    shapelets_ = sets_mine(data_.train, model_, cfg);
  });
  return shapelets_;
}

const std::vector<double>& MethodContext::mad() const {
  std::call_once(mad_once_, [this] { mad_ = median_absolute_deviation(data_.train); });
  return mad_;
}

MethodRegistry MethodRegistry::builtin() {
  MethodRegistry r;
  r.add("nun_cf", [](const CFRequest& req, const MethodContext& ctx, std::uint64_t) {
    return nun_cf(req, ctx.pool(), ctx.model());
  });
  r.add("ng", [](const CFRequest& req, const MethodContext& ctx, std::uint64_t) {
    NativeGuideConfig cfg;
    cfg.growth = param_double(ctx.params(), "growth", cfg.growth);
    return native_guide(req, ctx.pool(), ctx.model(), cfg);
  });
  r.add("comte", [](const CFRequest& req, const MethodContext& ctx, std::uint64_t seed) {
    ComteConfig cfg;
    const auto& p = ctx.params();
    cfg.lambda = param_double(p, "lambda", cfg.lambda);
    cfg.sigma = param_size(p, "sigma", cfg.sigma);
    cfg.tau = param_double(p, "tau", cfg.tau);
    cfg.restarts = param_size(p, "restarts", cfg.restarts);
    cfg.max_steps = param_size(p, "max_steps", cfg.max_steps);
    cfg.seed = seed;
    return comte(req, ctx.pool(), ctx.model(), cfg);
  });
  r.add("sets", [](const CFRequest& req, const MethodContext& ctx, std::uint64_t) {
    return sets(req, ctx.shapelets(), ctx.pool(), ctx.model());
  });
  r.add("wcf", [](const CFRequest& req, const MethodContext& ctx, std::uint64_t) {
    WachterConfig cfg;
    const auto& p = ctx.params();
    cfg.lambda_init = param_double(p, "lambda", cfg.lambda_init);
    cfg.lambda_growth = param_double(p, "lambda_growth", cfg.lambda_growth);
    cfg.growth_every = param_size(p, "growth_every", cfg.growth_every);
    cfg.max_iters = param_size(p, "max_iters", cfg.max_iters);
    cfg.step_size = param_double(p, "step_size", cfg.step_size);
    cfg.target_prob = param_double(p, "target_prob", cfg.target_prob);
    cfg.record_trace = param_size(p, "trace", 0) != 0;
    cfg.mad = ctx.mad();
    return wachter(req, ctx.model(), cfg);
  });
  r.add("tsevo", [](const CFRequest& req, const MethodContext& ctx, std::uint64_t seed) {
    TsevoConfig cfg;
    const auto& p = ctx.params();
    cfg.population = param_size(p, "population", cfg.population);
    cfg.generations = param_size(p, "generations", cfg.generations);
    cfg.p_opposing = param_double(p, "p_opposing", cfg.p_opposing);
    cfg.p_frequency = param_double(p, "p_frequency", cfg.p_frequency);
    cfg.p_gaussian = param_double(p, "p_gaussian", cfg.p_gaussian);
    cfg.seed = seed;
    return tsevo(req, ctx.model(), ctx.pool(), cfg);
  });
  return r;
}

void MethodRegistry::add(const std::string& name, MethodFn fn) {
  if (name.empty() || name.find_first_of(" ,=\t") != std::string::npos) {
    throw ConfigError("bad method name '" + name + "'");
  }
  methods_[name] = std::move(fn);
}

const MethodFn& MethodRegistry::get(const std::string& name) const {
  const auto it = methods_.find(name);
  if (it == methods_.end()) throw ConfigError("unknown method '" + name + "'");
  return it->second;
}

std::vector<std::string> MethodRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, fn] : methods_) out.push_back(name);
  return out;
}

std::string ModelSpec::label() const { return to_string(arch) + "-s" + std::to_string(seed); }

// --- config ------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += f(v[i]);
  }
  return out;
}

std::string join_strings(const std::vector<std::string>& v) {
  return join<std::string>(v, [](const std::string& s) { return s; });
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  MethodParams tmp;
  for (const auto& item : split_list(v)) {
    tmp[key] = item;
    out.push_back(param_size(tmp, key, 0));
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  MethodParams tmp;
  for (const auto& item : split_list(v)) {
    tmp[key] = item;
    out.push_back(param_double(tmp, key, 0.0));
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    MethodParams one{{key, val}};
    auto num = [&] { return param_double(one, key, 0.0); };
    auto count = [&] { return param_size(one, key, 0); };

    if (key == "datasets") {
      cfg.datasets = split_list(val);
    } else if (key == "models") {
      cfg.models.clear();
      for (const auto& item : split_list(val)) {
        ModelSpec m;
        const auto colon = item.find(':');
        m.arch = parse_architecture(item.substr(0, colon));
        if (colon != std::string::npos) {
          MethodParams s{{key, item.substr(colon + 1)}};
          m.seed = param_size(s, key, 0);
        }
        cfg.models.push_back(m);
      }
    } else if (key == "methods") {
      cfg.methods = split_list(val);
    } else if (key == "sample_cap") {
      cfg.sample_cap = count();
    } else if (key == "capped_methods") {
      const auto v = split_list(val);
      cfg.capped_methods = std::set<std::string>(v.begin(), v.end());
    } else if (key == "timeout") {
      cfg.timeout_s = num();
    } else if (key == "abort_after") {
      cfg.abort_after = count();
    } else if (key == "seed") {
      cfg.seed = count();
    } else if (key == "workers") {
      cfg.workers = count();
    } else if (key == "test_limit") {
      cfg.test_limit = count();
    } else if (key == "stop_prob") {
      cfg.stop_prob = num();
    } else if (key == "consistency") {
      cfg.consistency = parse_bool(key, val);
    } else if (key == "consistency_seed_offset") {
      cfg.consistency_seed_offset = count();
    } else if (key == "exclude_failed") {
      cfg.exclude_failed = parse_bool(key, val);
    } else if (key == "alpha") {
      cfg.alpha = num();
    } else if (key == "tau") {
      cfg.sparsity.tau = num();
    } else if (key == "tolerance") {
      cfg.sparsity.tolerance_frac = num();
    } else if (key == "global_range") {
      cfg.sparsity.global_range = parse_bool(key, val);
    } else if (key == "k") {
      cfg.plausibility.k = count();
    } else if (key == "epochs") {
      cfg.training.epochs = count();
    } else if (key == "batch") {
      cfg.training.batch = count();
    } else if (key == "learning_rate") {
      cfg.training.learning_rate = num();
    } else if (key == "mlp.hidden") {
      cfg.training.mlp.hidden = parse_sizes(key, val);
    } else if (key == "mlp.dropout") {
      cfg.training.mlp.dropout = parse_doubles(key, val);
    } else if (key == "fcn.filters") {
      cfg.training.fcn.filters = parse_sizes(key, val);
    } else if (key == "fcn.widths") {
      cfg.training.fcn.widths = parse_sizes(key, val);
    } else if (key.starts_with("method.")) {
      const auto dot = key.find('.', 7);
      if (dot == std::string::npos || dot == 7 || dot + 1 == key.size()) {
        throw ConfigError("config line " + std::to_string(lineno) + ": expected method.<name>.<param>");
      }
      cfg.method_params[key.substr(7, dot - 7)][key.substr(dot + 1)] = val;
    } else {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream out;
  auto sizes = [](const std::vector<std::size_t>& v) {
    return join<std::size_t>(v, [](const std::size_t& x) { return std::to_string(x); });
  };
  out << "datasets = " << join_strings(datasets) << '\n';
  out << "models = "
      << join<ModelSpec>(models, [](const ModelSpec& m) { return to_string(m.arch) + ":" + std::to_string(m.seed); })
      << '\n';
  out << "methods = " << join_strings(methods) << '\n';
  out << "sample_cap = " << sample_cap << '\n';
  out << "capped_methods = "
      << join_strings(std::vector<std::string>(capped_methods.begin(), capped_methods.end())) << '\n';
  out << "timeout = " << format_double(timeout_s) << '\n';
  out << "abort_after = " << abort_after << '\n';
  out << "seed = " << seed << '\n';
  out << "workers = " << workers << '\n';
  out << "test_limit = " << test_limit << '\n';
  out << "stop_prob = " << format_double(stop_prob) << '\n';
  out << "consistency = " << (consistency ? "true" : "false") << '\n';
  out << "consistency_seed_offset = " << consistency_seed_offset << '\n';
  out << "exclude_failed = " << (exclude_failed ? "true" : "false") << '\n';
  out << "alpha = " << format_double(alpha) << '\n';
  out << "tau = " << format_double(sparsity.tau) << '\n';
  out << "tolerance = " << format_double(sparsity.tolerance_frac) << '\n';
  out << "global_range = " << (sparsity.global_range ? "true" : "false") << '\n';
  out << "k = " << plausibility.k << '\n';
  out << "epochs = " << training.epochs << '\n';
  out << "batch = " << training.batch << '\n';
  out << "learning_rate = " << format_double(training.learning_rate) << '\n';
  out << "mlp.hidden = " << sizes(training.mlp.hidden) << '\n';
  out << "mlp.dropout = "
      << join<double>(training.mlp.dropout, [](const double& d) { return format_double(d); }) << '\n';
  out << "fcn.filters = " << sizes(training.fcn.filters) << '\n';
  out << "fcn.widths = " << sizes(training.fcn.widths) << '\n';
  for (const auto& [method, params] : method_params) {
    for (const auto& [k, v] : params) out << "method." << method << '.' << k << " = " << v << '\n';
  }
  return out.str();
}

void ExperimentConfig::validate() const {
  if (datasets.empty()) throw ConfigError("config lists no datasets");
  if (models.empty()) throw ConfigError("config lists no models");
  if (methods.empty()) throw ConfigError("config lists no methods");
  if (sample_cap < 1) throw ConfigError("sample_cap must be at least 1");
  if (!(timeout_s > 0.0)) throw ConfigError("timeout must be positive");
  if (abort_after < 1) throw ConfigError("abort_after must be at least 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (!(stop_prob > 0.0 && stop_prob < 1.0)) throw ConfigError("stop_prob must lie in (0, 1)");
  if (!(sparsity.tau >= 0.0 && sparsity.tau < 1.0)) throw ConfigError("tau must lie in [0, 1)");
  if (!(sparsity.tolerance_frac >= 0.0 && sparsity.tolerance_frac < 1.0)) {
    throw ConfigError("tolerance must lie in [0, 1)");
  }
  if (plausibility.k < 1) throw ConfigError("k must be at least 1");
  nemenyi_q(2, alpha);
  std::set<std::string> seen;
  for (const auto& m : methods) {
    if (!seen.insert(m).second) throw ConfigError("method '" + m + "' listed twice");
  }
}

// --- benchmark ---------------------------------------------------------------

namespace {

struct Outcome {
  Counterfactual cf;
  double elapsed = 0.0;
  bool error = false;
  bool unsupported = false;
  std::string message;
};

Outcome generate(const MethodFn& fn, const CFRequest& req, const MethodContext& ctx, std::uint64_t seed) {
  Outcome out;
  const Deadline clock(std::numeric_limits<double>::max());
  try {
    out.cf = fn(req, ctx, seed);
  } catch (const UnsupportedError& e) {
    out.unsupported = true;
    out.message = e.what();
  } catch (const std::exception& e) {
    out.error = true;
    out.message = e.what();
  }
  out.elapsed = clock.elapsed();
  if (out.error || out.unsupported) {
    out.cf.original = req.instance;
    out.cf.perturbed = req.instance;
    out.cf.target = req.target;
    out.cf.status = CFStatus::no_cf_found;
  }
  return out;
}

CFRequest make_request(const ClassifierModel& model, const TimeSeries& x, const ExperimentConfig& cfg,
                       std::size_t& predicted) {
  const auto p = predict(model, x);
  predicted = p.predicted;
  CFRequest req;
  req.instance = x;
  req.original_pred = p.predicted;
  req.target = select_target(p.probs, p.predicted);
  req.stop_prob = cfg.stop_prob;
  req.time_budget = cfg.timeout_s;
  return req;
}

MetricReport score(Outcome& o, const ClassifierModel& model, const PlausibilityReference& plaus,
                   const ExperimentConfig& cfg) {
  o.cf.gen_time = o.elapsed;
  if (o.elapsed > cfg.timeout_s) {
    o.cf.status = CFStatus::timed_out;
    o.cf.valid = false;
  }
  if (!o.cf.perturbed.same_shape(o.cf.original)) {
    o.error = true;
    o.message = "method returned a series of the wrong shape";
    o.cf.perturbed = o.cf.original;
  }
  MetricReport m;
  try {
    m = evaluate(o.cf, model, plaus, cfg.sparsity);
  } catch (const std::exception& e) {
    o.error = true;
    o.message = e.what();
    m.gen_time = o.elapsed;
    m.status = o.cf.status;
  }
  if (o.cf.status == CFStatus::timed_out) {
    // A late answer is not accepted.
    MetricReport late;
    late.gen_time = m.gen_time;
    late.status = CFStatus::timed_out;
    m = late;
  }
  return m;
}

std::vector<std::size_t> evaluation_indices(const Dataset& data, const ExperimentConfig& cfg) {
  std::vector<std::size_t> idx(data.test.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (cfg.test_limit > 0 && cfg.test_limit < data.test.size()) {
    idx = stratified_sample(data.test, cfg.test_limit, mix_seed(cfg.seed, 0x7e57)).indices;
  }
  return idx;
}

std::vector<std::size_t> capped_indices(const Dataset& data, const std::vector<std::size_t>& pool,
                                        const ExperimentConfig& cfg) {
  if (pool.size() <= cfg.sample_cap) return pool;
  std::vector<std::size_t> labels;
  for (auto i : pool) labels.push_back(data.test[i].label);
  const auto picked = stratified_sample(labels, cfg.sample_cap, mix_seed(cfg.seed, 0xca9)).indices;
  std::vector<std::size_t> out;
  for (auto p : picked) out.push_back(pool[p]);
  return out;
}

}  // namespace

std::vector<std::size_t> benchmark_indices(const Dataset& data, const ExperimentConfig& cfg, bool capped) {
  const auto all = evaluation_indices(data, cfg);
  return capped ? capped_indices(data, all, cfg) : all;
}

RunResult evaluate_method(const Dataset& data, const ClassifierModel& model, const std::string& model_label,
                          const std::string& method, const std::vector<std::size_t>& indices,
                          const ExperimentConfig& cfg, const MethodRegistry& registry,
                          const ClassifierModel* partner) {
  const MethodFn& fn = registry.get(method);
  const auto params_it = cfg.method_params.find(method);
  const MethodContext ctx(data, model, params_it == cfg.method_params.end() ? MethodParams{} : params_it->second,
                          cfg.seed);
  const PlausibilityReference plaus(LatentSet::from_model(model, data.train), cfg.plausibility);
  const std::string dname = data.name;

  RunResult run;
  PairResult pr;
  pr.dataset = dname;
  pr.model = model_label;
  pr.method = method;
  std::vector<Counterfactual> cfs;
  std::vector<std::size_t> labels;
  std::size_t consecutive = 0;
  std::size_t errors = 0;
  bool stop = false;

  for (std::size_t start = 0; start < indices.size() && !stop; start += cfg.workers) {
    const std::size_t end = std::min(indices.size(), start + cfg.workers);
    std::vector<Outcome> outcomes(end - start);
    std::vector<CFRequest> requests(end - start);
    std::vector<std::size_t> predicted(end - start);
    for (std::size_t j = start; j < end; ++j) {
      if (indices[j] >= data.test.size()) throw ContractError("instance index out of range");
      requests[j - start] = make_request(model, data.test[indices[j]].series, cfg, predicted[j - start]);
    }
    auto task = [&](std::size_t j) {
      outcomes[j - start] = generate(fn, requests[j - start], ctx, mix_seed(cfg.seed, indices[j]));
    };
    if (end - start == 1) {
      task(start);
    } else {
      std::vector<std::thread> threads;
      for (std::size_t j = start; j < end; ++j) threads.emplace_back(task, j);
      for (auto& t : threads) t.join();
    }

    // Outcomes are consumed in instance order so aborts do not depend on thread timing.
    for (std::size_t j = start; j < end; ++j) {
      Outcome& o = outcomes[j - start];
      if (o.unsupported) {
        pr.state = PairState::unsupported;
        pr.note = o.message;
        stop = true;
        break;
      }
      InstanceRecord rec;
      rec.dataset = dname;
      rec.model = model_label;
      rec.method = method;
      rec.instance = indices[j];
      rec.label = data.test[indices[j]].label;
      rec.predicted = predicted[j - start];
      rec.target = requests[j - start].target;
      rec.metrics = score(o, model, plaus, cfg);
      rec.error = o.error;
      rec.note = o.error ? o.message : o.cf.note;
      const auto flat = o.cf.perturbed.flat();
      rec.perturbed.assign(flat.begin(), flat.end());
      errors += rec.error;
      ++pr.attempted;
      const bool timed_out = rec.metrics.status == CFStatus::timed_out;
      run.records.push_back(std::move(rec));
      cfs.push_back(std::move(o.cf));
      labels.push_back(data.test[indices[j]].label);

      if (timed_out) {
        ++pr.timeouts;
        if (++consecutive >= cfg.abort_after) {
          pr.state = PairState::aborted;
          pr.note = std::to_string(consecutive) + " consecutive timeouts";
          stop = true;
          break;
        }
      } else {
        consecutive = 0;
      }
    }
  }
  if (pr.state == PairState::completed && pr.attempted > 0 && errors == pr.attempted) {
    pr.state = PairState::failed;
    pr.note = "every instance raised an error";
  }
  if (partner && pr.state == PairState::completed) {
    const auto cons = consistency(cfs, labels, model, *partner);
    pr.consist_bc = cons.consist_bc;
    pr.consist_bv = cons.consist_bv;
  }
  run.pairs.push_back(std::move(pr));
  return run;
}

RunResult run_benchmark(const ExperimentConfig& cfg, const MethodRegistry& registry, const ProgressFn& progress) {
  cfg.validate();
  for (const auto& m : cfg.methods) registry.get(m);
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  RunResult run;
  run.config_text = cfg.serialize();
  run.version = "tscf 0.1.0";

  std::vector<Dataset> loaded;
  for (const auto& ref : cfg.datasets) {
    loaded.push_back(load_dataset(ref));
    loaded.back().validate();
    if (loaded.back().name.empty()) loaded.back().name = ref;
  }
  for (const Dataset& data : loaded) {
    const auto all_idx = benchmark_indices(data, cfg, false);
    const auto cap_idx = benchmark_indices(data, cfg, true);

    for (const auto& spec : cfg.models) {
      TrainConfig tc = cfg.training;
      tc.seed = spec.seed;
      say(data.name + ": training " + spec.label());
      const ClassifierModel model = train(spec.arch, data, tc);
      std::optional<ClassifierModel> partner;
      if (cfg.consistency) {
        tc.seed = spec.seed + cfg.consistency_seed_offset;
        say(data.name + ": training consistency partner for " + spec.label());
        partner = train(spec.arch, data, tc);
      }
      for (const auto& method : cfg.methods) {
        const auto& indices = cfg.capped_methods.count(method) ? cap_idx : all_idx;
        say(data.name + ": " + spec.label() + " / " + method + " on " + std::to_string(indices.size()) +
            " instances");
        auto part = evaluate_method(data, model, spec.label(), method, indices, cfg, registry,
                                    partner ? &*partner : nullptr);
        for (auto& r : part.records) run.records.push_back(std::move(r));
        for (auto& p : part.pairs) {
          if (p.state != PairState::completed) say("  " + to_string(p.state) + ": " + p.note);
          run.pairs.push_back(std::move(p));
        }
      }
    }
  }
  return run;
}

ExplainResult explain_instance(const Dataset& data, const ClassifierModel& model, const std::string& method,
                               std::size_t instance, const ExperimentConfig& cfg, const MethodRegistry& registry) {
  if (instance >= data.test.size()) {
    throw ContractError("instance index " + std::to_string(instance) + " out of range (test split has " +
                        std::to_string(data.test.size()) + ")");
  }
  const auto params_it = cfg.method_params.find(method);
  const MethodContext ctx(data, model, params_it == cfg.method_params.end() ? MethodParams{} : params_it->second,
                          cfg.seed);
  const MethodFn& fn = registry.get(method);
  ExplainResult out;
  const CFRequest req = make_request(model, data.test[instance].series, cfg, out.predicted);
  const Deadline clock(std::numeric_limits<double>::max());
  out.cf = fn(req, ctx, mix_seed(cfg.seed, instance));
  Outcome o;
  o.cf = std::move(out.cf);
  o.elapsed = clock.elapsed();
  const PlausibilityReference plaus(LatentSet::from_model(model, data.train), cfg.plausibility);
  out.metrics = score(o, model, plaus, cfg);
  out.cf = std::move(o.cf);
  out.cf.valid = out.metrics.valid;
  return out;
}

}  // namespace tscf
