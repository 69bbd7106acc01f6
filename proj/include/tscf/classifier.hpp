#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tscf/dataset.hpp"
#include "tscf/time_series.hpp"

namespace tscf {

enum class Architecture { mlp, fcn };

std::string to_string(Architecture arch);
/// Throws ConfigError for anything other than "mlp" or "fcn".
Architecture parse_architecture(const std::string& name);

// Layer weights. Matrices are row-major.

struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weight;  ///< outputs x inputs
  std::vector<double> bias;    ///< outputs
};

/// Same-padded 1-D convolution: output length equals input length.
struct Conv1dLayer {
  std::size_t in_channels = 0;
  std::size_t filters = 0;
  std::size_t width = 0;
  std::vector<double> kernel;  ///< filters x in_channels x width
  std::vector<double> bias;    ///< filters
};

struct BatchNormLayer {
  std::size_t channels = 0;
  double epsilon = 1e-3;
  double momentum = 0.9;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

struct ReluLayer {};

/// Mean over time; (B, C, L) -> (B, C, 1).
struct GlobalAvgPoolLayer {};

/// Inverted dropout; identity at inference.
struct DropoutLayer {
  double rate = 0.0;
};

using Layer = std::variant<DenseLayer, Conv1dLayer, BatchNormLayer, ReluLayer,
                           GlobalAvgPoolLayer, DropoutLayer>;

struct ClassifierModel {
  Architecture architecture = Architecture::mlp;
  std::vector<Layer> layers;
  std::size_t num_classes = 0;
  std::size_t channels = 0;  ///< input N
  std::size_t steps = 0;     ///< input T
  std::optional<double> train_accuracy;
  std::optional<double> test_accuracy;

  /// Checks layer compatibility and the final C-logit layer; throws ContractError.
  void validate() const;
  /// Index of the final dense layer (the classification head).
  std::size_t head_index() const;
  /// Length of the activation vector feeding the head.
  std::size_t latent_dim() const;
};

struct Prediction {
  std::vector<double> probs;
  std::size_t predicted = 0;
};

using LatentRep = std::vector<double>;

struct MlpShape {
  std::vector<std::size_t> hidden{500, 500, 500};
  /// Dropout rates before each dense layer (input, hidden..., head).
  std::vector<double> dropout{0.1, 0.2, 0.2, 0.3};
};

struct FcnShape {
  std::vector<std::size_t> filters{128, 256, 128};
  std::vector<std::size_t> widths{8, 5, 3};
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  MlpShape mlp;
  FcnShape fcn;
};

/// Untrained, Glorot-initialised networks.
ClassifierModel build_mlp(std::size_t channels, std::size_t steps, std::size_t classes,
                          const MlpShape& shape, std::uint64_t seed);
ClassifierModel build_fcn(std::size_t channels, std::size_t steps, std::size_t classes,
                          const FcnShape& shape, std::uint64_t seed);

/// Adam on softmax cross-entropy. Deterministic given cfg.seed.
ClassifierModel train(Architecture arch, const Dataset& data, const TrainConfig& cfg);

std::vector<double> logits(const ClassifierModel& model, const TimeSeries& x);
Prediction predict(const ClassifierModel& model, const TimeSeries& x);
std::vector<std::size_t> predict_labels(const ClassifierModel& model,
                                        std::span<const LabeledInstance> instances);
double accuracy(const ClassifierModel& model, std::span<const LabeledInstance> instances);

/// Scalar objective for input_gradient:
///   weight * (p_target(x) - target_prob)^2 + sum_i |x_i - reference_i| / scale_i
/// The distance term is dropped when `reference` is null.
struct GradientObjective {
  std::size_t target = 0;
  double weight = 1.0;
  double target_prob = 1.0;
  const TimeSeries* reference = nullptr;
  std::span<const double> scale;  ///< per feature point; empty means 1
};

struct GradientResult {
  double loss = 0.0;
  double target_prob = 0.0;
  TimeSeries gradient;
};

GradientResult input_gradient(const ClassifierModel& model, const TimeSeries& x,
                              const GradientObjective& objective);

/// Activations feeding the classification head.
LatentRep latent(const ClassifierModel& model, const TimeSeries& x);

/// CAM(t) = sum_k w[class, k] * A_k(t) over the final feature maps. FCN only.
std::vector<double> class_activation_map(const ClassifierModel& model, const TimeSeries& x,
                                         std::size_t cls);

/// Sign pattern of every ReLU input at inference, used to tell whether two
/// inputs lie in the same linear region.
std::vector<std::uint8_t> relu_pattern(const ClassifierModel& model, const TimeSeries& x);

void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

std::vector<double> softmax(std::span<const double> z);

}  // namespace tscf
