#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tscf/cf_methods.hpp"
#include "tscf/classifier.hpp"
#include "tscf/dataset.hpp"
#include "tscf/metrics.hpp"

namespace tscf {

/// Highest-probability class other than `predicted` (ties: lowest index).
std::size_t select_target(std::span<const double> probs, std::size_t predicted);
std::size_t select_target(const ClassifierModel& model, const TimeSeries& x);

using MethodParams = std::map<std::string, std::string>;

double param_double(const MethodParams& p, const std::string& key, double fallback);
std::size_t param_size(const MethodParams& p, const std::string& key, std::size_t fallback);

/// Everything a generator may need for one (dataset, model) pair. The
/// shapelet set and MAD vector are built on first use and shared.
class MethodContext {
 public:
  MethodContext(const Dataset& data, const ClassifierModel& model, MethodParams params,
                std::uint64_t seed);

  const Dataset& data() const { return data_; }
  const ClassifierModel& model() const { return model_; }
  const ReferencePool& pool() const { return pool_; }
  const MethodParams& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }

  const ShapeletSet& shapelets() const;
  const std::vector<double>& mad() const;

 private:
  const Dataset& data_;
  const ClassifierModel& model_;
  ReferencePool pool_;
  MethodParams params_;
  std::uint64_t seed_;
  mutable std::once_flag shapelets_once_, mad_once_;
  mutable ShapeletSet shapelets_;
  mutable std::vector<double> mad_;
};

/// `seed` is the per-invocation seed derived from the global seed and the
/// instance index.
using MethodFn = std::function<Counterfactual(const CFRequest&, const MethodContext&, std::uint64_t seed)>;

class MethodRegistry {
 public:
  /// nun_cf, ng, comte, sets, wcf, tsevo.
  static MethodRegistry builtin();

  void add(const std::string& name, MethodFn fn);
  bool contains(const std::string& name) const { return methods_.count(name) > 0; }
  const MethodFn& get(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, MethodFn> methods_;
};

struct ModelSpec {
  Architecture arch = Architecture::fcn;
  std::uint64_t seed = 0;

  std::string label() const;
};

struct ExperimentConfig {
  std::vector<std::string> datasets;
  std::vector<ModelSpec> models;
  std::vector<std::string> methods;
  std::size_t sample_cap = 160;
  std::set<std::string> capped_methods{"wcf", "tsevo"};
  double timeout_s = 3600.0;
  std::size_t abort_after = 10;  ///< consecutive timeouts
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t test_limit = 0;   ///< 0 keeps the whole test split
  double stop_prob = 0.5;
  bool consistency = true;
  std::uint64_t consistency_seed_offset = 1000;
  bool exclude_failed = false;  ///< drop failed pairs from rankings instead of ranking them last
  double alpha = 0.05;
  SparsityConfig sparsity;
  PlausibilityConfig plausibility;
  TrainConfig training;
  /// Per-method parameters, e.g. "wcf.max_iters = 200".
  std::map<std::string, MethodParams> method_params;

  /// key = value lines, '#' comments. Throws ConfigError on unknown keys.
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Canonical text form; parse(serialize()) round-trips.
  std::string serialize() const;
  void validate() const;
};

/// One explained test instance.
struct InstanceRecord {
  std::string dataset;
  std::string model;
  std::string method;
  std::size_t instance = 0;  ///< index into the test split
  std::size_t label = 0;
  std::size_t predicted = 0;
  std::size_t target = 0;
  MetricReport metrics;
  bool error = false;
  std::string note;
  std::vector<double> perturbed;  ///< flattened N x T
};

enum class PairState { completed, aborted, unsupported, failed };
std::string to_string(PairState s);
PairState parse_pair_state(const std::string& s);

struct PairResult {
  std::string dataset;
  std::string model;
  std::string method;
  PairState state = PairState::completed;
  std::string note;
  std::size_t attempted = 0;
  std::size_t timeouts = 0;
  std::optional<double> consist_bc, consist_bv;
};

struct RunResult {
  std::string config_text;
  std::string version;
  std::vector<InstanceRecord> records;
  std::vector<PairResult> pairs;
};

/// Observes progress; called from the orchestrating thread only.
using ProgressFn = std::function<void(const std::string&)>;

RunResult run_benchmark(const ExperimentConfig& cfg, const MethodRegistry& registry = MethodRegistry::builtin(),
                        const ProgressFn& progress = {});

/// One method over chosen test instances of an already trained model, with
/// the same timeout/abort/re-verification rules as run_benchmark. `partner`
/// enables the consistency metrics.
RunResult evaluate_method(const Dataset& data, const ClassifierModel& model, const std::string& model_label,
                          const std::string& method, const std::vector<std::size_t>& indices,
                          const ExperimentConfig& cfg, const MethodRegistry& registry = MethodRegistry::builtin(),
                          const ClassifierModel* partner = nullptr);

/// Test indices a method is evaluated on: all (or test_limit stratified),
/// further capped to sample_cap for capped methods.
std::vector<std::size_t> benchmark_indices(const Dataset& data, const ExperimentConfig& cfg, bool capped);

/// Explains one instance with one method, re-verifying validity.
struct ExplainResult {
  Counterfactual cf;
  MetricReport metrics;
  std::size_t predicted = 0;
};
ExplainResult explain_instance(const Dataset& data, const ClassifierModel& model, const std::string& method,
                               std::size_t instance, const ExperimentConfig& cfg,
                               const MethodRegistry& registry = MethodRegistry::builtin());

// --- aggregation -------------------------------------------------------------

struct Summary {
  std::optional<double> mean, std;
  std::size_t n = 0;
};
Summary summarize(const std::vector<double>& values);

struct PairAggregate {
  std::string dataset, model, method;
  PairState state = PairState::completed;
  std::size_t attempted = 0;
  std::size_t valid = 0;
  std::size_t timeouts = 0;
  std::size_t errors = 0;
  std::optional<double> validity;
  /// Valid-only averages keyed by metric name.
  std::map<std::string, Summary> metrics;
  Summary gen_time_all, gen_time_valid;
  std::optional<double> consist_bc, consist_bv;
};

/// Metrics ranked by default (gen_time needs timing data).
const std::vector<std::string>& ranked_metrics();
enum class Direction { higher_is_better, lower_is_better };
Direction metric_direction(const std::string& metric);

std::vector<PairAggregate> aggregate(const RunResult& run);

/// Rows are datasets, columns are methods. Missing values rank last.
struct RankTable {
  std::vector<std::string> datasets;  ///< rows kept
  std::vector<std::string> methods;
  std::vector<std::vector<double>> ranks;
  std::vector<double> average;
  std::vector<std::string> notes;  ///< excluded datasets
};

/// Mid-rank per row; absent entries share the last places.
std::vector<double> rank_row(const std::vector<std::optional<double>>& values, Direction dir);

RankTable aggregate_rankings(const std::vector<std::string>& datasets, const std::vector<std::string>& methods,
                             const std::vector<std::vector<std::optional<double>>>& values, Direction dir);

/// Ranking table for one (model, metric) from aggregates.
RankTable rank_metric(const std::vector<PairAggregate>& aggs, const std::string& model,
                      const std::vector<std::string>& methods, const std::string& metric,
                      bool exclude_failed);

/// Studentized range statistic divided by sqrt(2), M in [2, 10].
double nemenyi_q(std::size_t methods, double alpha);
double critical_difference(std::size_t methods, std::size_t datasets, double alpha);

struct FriedmanResult {
  double chi2 = 0.0;
  double critical = 0.0;  ///< chi-square quantile at 1 - alpha, M-1 dof
  bool significant = false;
  double cd = 0.0;
  std::vector<double> average;
  /// Cliques of methods (column indices) whose rank gaps are below CD.
  std::vector<std::vector<std::size_t>> groups;
};

FriedmanResult friedman_nemenyi(const std::vector<std::vector<double>>& ranks, double alpha);

// --- reports -----------------------------------------------------------------

enum class ReportFormat { table_text, delimited, structured, svg_cd, radar_data };
ReportFormat parse_report_format(const std::string& s);
std::string to_string(ReportFormat f);

/// Writes the chosen format under `dir`. Throws ContractError when the run has no methods.
std::vector<std::filesystem::path> emit_report(const RunResult& run, ReportFormat format,
                                               const std::filesystem::path& dir);

/// Static SVG of the critical-difference diagram.
std::string render_cd_svg(const std::vector<std::string>& methods, const FriedmanResult& stats,
                          const std::string& title);

/// Static SVG overlaying original and counterfactual channels; perceptible
/// changes are marked.
std::string render_overlay_svg(const TimeSeries& original, const TimeSeries& perturbed,
                               const SparsityConfig& sparsity, const std::string& title);

/// Full results tree: config snapshot, records, counterfactuals, aggregates,
/// rankings, figures, plus a timing/ subdirectory for wall-clock data.
void write_results(const RunResult& run, const std::filesystem::path& dir);
RunResult read_results(const std::filesystem::path& dir);

/// Deterministic JSON encoding of the whole run (timing omitted unless asked).
std::string run_to_json(const RunResult& run, bool include_timing);
RunResult run_from_json(const std::string& text);

}  // namespace tscf
