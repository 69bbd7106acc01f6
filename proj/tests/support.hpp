#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <utility>

#include "tscf/classifier.hpp"
#include "tscf/rng.hpp"
#include "tscf/synthetic.hpp"
#include "tscf/time_series.hpp"

namespace testing {

inline tscf::TimeSeries random_series(tscf::Rng& rng, std::size_t channels, std::size_t steps,
                                      double scale = 1.0) {
  tscf::TimeSeries x(channels, steps, 0.0);
  for (auto& v : x.flat()) v = scale * rng.normal();
  return x;
}

/// Original and perturbed pair mixing untouched points, changes straddling
/// typical thresholds, large edits and the odd constant channel.
inline std::pair<tscf::TimeSeries, tscf::TimeSeries> random_cf_pair(tscf::Rng& rng, std::size_t channels,
                                                                    std::size_t steps) {
  auto x = random_series(rng, channels, steps);
  for (std::size_t c = 0; c < channels; ++c) {
    if (rng.bernoulli(0.1)) {
      const double level = rng.normal();
      for (auto& v : x.channel(c)) v = level;
    }
  }
  auto y = x;
  for (auto& v : y.flat()) {
    const double u = rng.uniform();
    if (u < 0.4) continue;
    if (u < 0.7) {
      v += rng.normal() * 0.01;
    } else if (u < 0.9) {
      v += rng.normal();
    } else {
      v = rng.normal() * 3;
    }
  }
  return {x, y};
}

/// Two-class linear model: logit 1 minus logit 0 is diff . x + margin_at_x
/// evaluated relative to `x`, so x sits exactly `margin` on class 0's side.
inline tscf::ClassifierModel boundary_model(const tscf::TimeSeries& x, const std::vector<double>& diff,
                                            double margin) {
  tscf::ClassifierModel m;
  m.architecture = tscf::Architecture::mlp;
  m.channels = x.channels();
  m.steps = x.steps();
  m.num_classes = 2;
  const std::size_t n = x.size();
  tscf::DenseLayer head{n, 2, std::vector<double>(2 * n, 0.0), {0.0, 0.0}};
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    head.weight[n + i] = diff[i];
    dot += diff[i] * x.flat()[i];
  }
  head.bias[1] = -dot - margin;
  m.layers.emplace_back(std::move(head));
  m.validate();
  return m;
}

/// Small networks that train in well under a second on one core.
inline tscf::TrainConfig toy_training(std::uint64_t seed, std::size_t epochs = 40) {
  tscf::TrainConfig tc;
  tc.seed = seed;
  tc.epochs = epochs;
  tc.fcn.filters = {8, 16, 8};
  tc.fcn.widths = {7, 5, 3};
  tc.mlp.hidden = {32, 32};
  tc.mlp.dropout = {0.0, 0.1, 0.1};
  return tc;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tscf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace testing
