#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "tscf/classifier.hpp"
#include "tscf/counterfactual.hpp"
#include "tscf/dataset.hpp"

namespace tscf {

using DistanceFn = std::function<double(const TimeSeries&, const TimeSeries&)>;

/// Euclidean distance over the flattened N x T values.
double euclidean(const TimeSeries& a, const TimeSeries& b);

/// Training series paired with the model's predictions on them. Candidate
/// neighbours are filtered by prediction, not by ground-truth label.
class ReferencePool {
 public:
  ReferencePool(std::span<const LabeledInstance> train, const ClassifierModel& model);
  ReferencePool(std::vector<TimeSeries> series, std::vector<std::size_t> predicted);

  std::size_t size() const { return series_.size(); }
  const TimeSeries& series(std::size_t i) const { return series_[i]; }
  std::size_t predicted(std::size_t i) const { return predicted_[i]; }
  std::vector<std::size_t> predicted_as(std::size_t cls) const;

 private:
  std::vector<TimeSeries> series_;
  std::vector<std::size_t> predicted_;
};

/// Index of the nearest pool member predicted as `target` (ties: lowest index).
std::optional<std::size_t> nun_index(const ReferencePool& pool, const TimeSeries& x,
                                     std::size_t target, const DistanceFn& distance = euclidean);

/// Nearest unlike neighbour, or nullopt if no training instance is predicted as target.
std::optional<TimeSeries> nun(std::span<const LabeledInstance> train, const ClassifierModel& model,
                              const TimeSeries& x, std::size_t target);

/// argmax == target and p_target >= stop_prob.
bool accepts(const Prediction& p, std::size_t target, double stop_prob);

// --- heuristic methods ------------------------------------------------------

Counterfactual nun_cf(const CFRequest& req, const ReferencePool& pool, const ClassifierModel& model);

struct NativeGuideConfig {
  /// 1.0 grows the window by one step per iteration; >1 grows geometrically.
  double growth = 1.0;
};

/// CAM-guided window replacement from the NUN. Univariate FCN only.
Counterfactual native_guide(const CFRequest& req, const ReferencePool& pool,
                            const ClassifierModel& model, const NativeGuideConfig& cfg = {});

/// Best window [start, start + length) maximising the summed weights
/// (earliest start on ties).
std::size_t best_window(std::span<const double> weights, std::size_t length);

struct ComteConfig {
  double lambda = 1.0;
  std::size_t sigma = 3;
  double tau = 0.95;
  std::size_t restarts = 5;
  std::size_t max_steps = 200;
  std::uint64_t seed = 0;
};

/// (tau - p_target)^2 + lambda * max(0, swapped - sigma)
double comte_loss(double target_prob, std::size_t swapped, const ComteConfig& cfg);

/// Channel swaps from the NUN chosen by restarted hill climbing with a
/// greedy fallback. Multivariate only.
Counterfactual comte(const CFRequest& req, const ReferencePool& pool, const ClassifierModel& model,
                     const ComteConfig& cfg = {});

struct Shapelet {
  std::vector<double> values;
  std::size_t channel = 0;
  std::size_t source_class = 0;
  std::size_t source_instance = 0;
  std::size_t source_start = 0;
  double quality = 0.0;           ///< information gain
  double detect_threshold = 0.0;  ///< min-distance at or below which it is "present"
};

struct ShapeletSet {
  std::vector<Shapelet> shapelets;
};

struct SetsConfig {
  double detect_quantile = 0.05;
  std::size_t per_class = 5;
  std::vector<double> length_fracs{0.1, 0.2, 0.3};
  std::size_t max_candidates_per_channel = 400;
  double mining_budget = 60.0;  ///< seconds, split evenly across channels
  std::uint64_t seed = 0;
};

/// Length-normalised Euclidean distance between z-normalised windows,
/// minimised over every placement. Returns (distance, start).
std::pair<double, std::size_t> min_sliding_distance(std::span<const double> series,
                                                    std::span<const double> shapelet);

/// Information gain of the best threshold split of `distances` for the
/// binary labels `positive`.
double information_gain(std::span<const double> distances, std::span<const std::uint8_t> positive);

/// Mines class-specific shapelets from the training split, labelled by the
/// model's predictions.
ShapeletSet sets_mine(std::span<const LabeledInstance> train, const ClassifierModel& model,
                      const SetsConfig& cfg = {});

/// Rescales `shapelet` so its min/max land on the window's min/max. A
/// constant window translates the centred shapelet onto that level.
std::vector<double> scale_to_window(std::span<const double> shapelet, std::span<const double> window);

Counterfactual sets(const CFRequest& req, const ShapeletSet& shapelets, const ReferencePool& pool,
                    const ClassifierModel& model);

// --- optimisation methods ---------------------------------------------------

struct WachterConfig {
  double lambda_init = 10.0;
  double lambda_growth = 1.5;
  std::size_t growth_every = 50;
  std::size_t max_iters = 500;
  double step_size = 2e-4;
  /// Scalar target for the probability term; negative means use stop_prob.
  double target_prob = 1.0;
  std::vector<double> mad;  ///< per feature point; empty means 1
  bool record_trace = false;
};

/// Per feature point median absolute deviation over the training split,
/// floored at 1e-6 * channel range (1e-6 for a constant channel).
std::vector<double> median_absolute_deviation(std::span<const LabeledInstance> train);

Counterfactual wachter(const CFRequest& req, const ClassifierModel& model, const WachterConfig& cfg);

struct TsevoConfig {
  std::size_t population = 60;
  std::size_t generations = 100;
  double p_opposing = 0.2;
  double p_frequency = 0.2;
  double p_gaussian = 0.2;
  std::uint64_t seed = 0;
};

/// NSGA-II over (L1, L0 / (N T), |1 - p_target|).
Counterfactual tsevo(const CFRequest& req, const ClassifierModel& model, const ReferencePool& pool,
                     const TsevoConfig& cfg = {});

}  // namespace tscf
