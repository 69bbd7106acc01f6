#include "tscf/time_series.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tscf/errors.hpp"

namespace tscf {

TimeSeries::TimeSeries(std::size_t channels, std::size_t steps, double fill)
    : channels_(channels), steps_(steps), values_(channels * steps, fill) {}

TimeSeries::TimeSeries(std::size_t channels, std::size_t steps, std::vector<double> values)
    : channels_(channels), steps_(steps), values_(std::move(values)) {
  if (values_.size() != channels_ * steps_) {
    throw ContractError("TimeSeries: " + std::to_string(values_.size()) +
                        " values do not fill a " + std::to_string(channels_) + "x" +
                        std::to_string(steps_) + " series");
  }
}

TimeSeries TimeSeries::univariate(std::vector<double> values) {
  const std::size_t n = values.size();
  return TimeSeries(1, n, std::move(values));
}

bool TimeSeries::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<double> instance_range(const TimeSeries& x) {
  std::vector<double> out(x.channels(), 0.0);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const auto ch = x.channel(c);
    if (ch.empty()) continue;
    const auto [lo, hi] = std::minmax_element(ch.begin(), ch.end());
    out[c] = *hi - *lo;
  }
  return out;
}

void require_same_shape(const TimeSeries& a, const TimeSeries& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ContractError(std::string(what) + ": shape mismatch (" + std::to_string(a.channels()) +
                        "x" + std::to_string(a.steps()) + " vs " +
                        std::to_string(b.channels()) + "x" + std::to_string(b.steps()) + ")");
  }
}

}  // namespace tscf
