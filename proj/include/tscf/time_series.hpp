#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tscf {

/// An N-channel, T-step real-valued series stored channel-major
/// (value(c, t) lives at c * steps + t).
class TimeSeries {
 public:
  TimeSeries() = default;
  TimeSeries(std::size_t channels, std::size_t steps, double fill = 0.0);
  TimeSeries(std::size_t channels, std::size_t steps, std::vector<double> values);

  /// Single-channel convenience constructor.
  static TimeSeries univariate(std::vector<double> values);

  std::size_t channels() const { return channels_; }
  std::size_t steps() const { return steps_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t c, std::size_t t) { return values_[c * steps_ + t]; }
  double operator()(std::size_t c, std::size_t t) const { return values_[c * steps_ + t]; }

  std::span<double> channel(std::size_t c) { return {values_.data() + c * steps_, steps_}; }
  std::span<const double> channel(std::size_t c) const {
    return {values_.data() + c * steps_, steps_};
  }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const TimeSeries& other) const {
    return channels_ == other.channels_ && steps_ == other.steps_;
  }
  bool all_finite() const;

  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t steps_ = 0;
  std::vector<double> values_;
};

/// Per-channel max - min. A constant channel yields 0.
std::vector<double> instance_range(const TimeSeries& x);

/// Throws ContractError unless the two series have identical shapes.
void require_same_shape(const TimeSeries& a, const TimeSeries& b, const char* what);

}  // namespace tscf
