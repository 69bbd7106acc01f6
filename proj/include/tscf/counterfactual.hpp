#pragma once

#include <chrono>
#include <cstdint>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "tscf/time_series.hpp"

namespace tscf {

enum class CFStatus { ok, no_cf_found, timed_out };

std::string to_string(CFStatus status);

/// What to explain: move `instance` from `original_pred` to `target`.
struct CFRequest {
  TimeSeries instance;
  std::size_t original_pred = 0;
  std::size_t target = 1;
  double stop_prob = 0.5;
  double time_budget = 3600.0;  ///< seconds

  /// Throws ContractError when target == original_pred or stop_prob is outside (0, 1).
  void validate() const;
};

struct Counterfactual {
  TimeSeries original;
  TimeSeries perturbed;
  std::size_t target = 0;
  bool valid = false;
  double gen_time = 0.0;  ///< seconds
  std::string method;
  CFStatus status = CFStatus::no_cf_found;
  std::string note;                 ///< diagnostic for failures
  std::vector<double> loss_trace;   ///< per-iteration loss, when the method records one
};

/// Cooperative wall-clock budget checked inside generators.
class Deadline {
 public:
  using Clock = std::chrono::steady_clock;

  explicit Deadline(double seconds)
      : start_(Clock::now()),
        limit_(seconds >= std::numeric_limits<double>::max() / 2 ? std::chrono::nanoseconds::max()
                                                                  : to_ns(seconds)) {}

  double elapsed() const {
    return std::chrono::duration<double>(Clock::now() - start_).count();
  }
  bool expired() const { return Clock::now() - start_ >= limit_; }

 private:
  static std::chrono::nanoseconds to_ns(double s) {
    return std::chrono::nanoseconds(static_cast<std::int64_t>(s * 1e9));
  }
  Clock::time_point start_;
  std::chrono::nanoseconds limit_;
};

}  // namespace tscf
