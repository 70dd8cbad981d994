#pragma once

#include <chrono>
#include <functional>
#include <string>

#include "memrec/error.hpp"

namespace memrec {

// Bounded retries with exponential backoff: attempt 1, wait initial_backoff,
// attempt 2, wait initial_backoff * multiplier, ...
struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  // Replaced in tests to avoid real sleeping.
  std::function<void(std::chrono::milliseconds)> sleep;

  std::chrono::milliseconds delay_before(int attempt) const;
};

// Runs `attempt` until it returns. Errors with code provider_unavailable are
// retried; any other exception propagates immediately. When attempts run
// out, throws provider_unavailable naming the last failure.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, const std::string& what, Fn&& attempt)
    -> decltype(attempt()) {
  std::string last_error;
  for (int i = 1; i <= policy.max_attempts; ++i) {
    if (i > 1) {
      const auto delay = policy.delay_before(i);
      if (policy.sleep) policy.sleep(delay);
    }
    try {
      return attempt();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::provider_unavailable) throw;
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::provider_unavailable, what + " failed after " +
                                                   std::to_string(policy.max_attempts) +
                                                   " attempts: " + last_error);
}

RetryPolicy default_retry_policy();

}  // namespace memrec
