#include "tscf/counterfactual.hpp"

#include "tscf/errors.hpp"

namespace tscf {

std::string to_string(CFStatus status) {
  switch (status) {
    case CFStatus::ok:
      return "ok";
    case CFStatus::no_cf_found:
      return "no_cf_found";
    case CFStatus::timed_out:
      return "timed_out";
  }
  return "unknown";
}

void CFRequest::validate() const {
  if (target == original_pred) {
    throw ContractError("counterfactual target equals the original prediction");
  }
  if (!(stop_prob > 0.0 && stop_prob < 1.0)) {
    throw ContractError("stop_prob must lie in (0, 1)");
  }
  if (!(time_budget > 0.0)) throw ContractError("time budget must be positive");
}

}  // namespace tscf
