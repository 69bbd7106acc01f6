#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tscf/time_series.hpp"

namespace tscf {

struct LabeledInstance {
  TimeSeries series;
  std::size_t label = 0;
};

/// Train/test splits sharing one (channels, steps) shape and a contiguous
/// label space [0, num_classes). Immutable once loaded.
struct Dataset {
  std::string name;
  std::vector<LabeledInstance> train;
  std::vector<LabeledInstance> test;
  std::size_t num_classes = 0;
  /// Original file label for each contiguous class index (univariate loads).
  std::vector<double> original_labels;

  std::size_t channels() const;
  std::size_t steps() const;
  /// m_c for each class over the train split.
  std::vector<std::size_t> class_counts() const;

  /// Checks the shape/label/finiteness invariants; throws DataError.
  void validate() const;
};

/// Parses one UCR-style split (label first, tab- or comma-separated).
/// Labels are returned raw; remapping happens when splits are combined.
struct RawSplit {
  std::vector<double> labels;
  std::vector<std::vector<double>> rows;
};
RawSplit read_univariate_split(const std::filesystem::path& path);

/// Loads a univariate dataset from one file per split. Labels from both
/// splits are remapped to [0, C) in ascending order of the original value.
Dataset load_univariate_tsv(const std::filesystem::path& train_path,
                            const std::filesystem::path& test_path, std::string name = {});

/// Loads a single-split file as a dataset whose test split is empty.
Dataset load_univariate_tsv(const std::filesystem::path& path);

struct MultivariateManifest {
  std::string name;
  std::size_t channels = 0;
  std::size_t steps = 0;
  std::size_t classes = 0;
  std::string train_file = "train.txt";
  std::string test_file = "test.txt";
};
MultivariateManifest read_manifest(const std::filesystem::path& path);

/// `path` is either the manifest file or the directory holding manifest.txt.
Dataset load_multivariate(const std::filesystem::path& path);

/// Resolves a dataset reference used by the CLI and experiment configs:
///   * a directory with manifest.txt          -> multivariate
///   * a directory <dir>/<Name>_TRAIN.tsv ... -> univariate UCR layout
///   * synthetic:<kind>[?key=value&...]       -> generated toy dataset
Dataset load_dataset(const std::string& reference);

void write_univariate_tsv(const Dataset& d, const std::filesystem::path& train_path,
                          const std::filesystem::path& test_path);
void write_multivariate(const Dataset& d, const std::filesystem::path& dir);

/// Per-channel z-normalisation using train-split statistics. Channels with
/// zero spread are only centred.
Dataset z_normalize(const Dataset& d);

struct StratifiedSample {
  std::vector<std::size_t> indices;  ///< ascending
  bool truncated = false;            ///< n exceeded the population
};

/// Seeded class-stratified subset. Per-class quotas follow largest-remainder
/// rounding with ties broken by ascending class index.
StratifiedSample stratified_sample(const std::vector<LabeledInstance>& instances,
                                   std::size_t n, std::uint64_t seed);
StratifiedSample stratified_sample(const std::vector<std::size_t>& labels, std::size_t n,
                                   std::uint64_t seed);

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

}  // namespace tscf
