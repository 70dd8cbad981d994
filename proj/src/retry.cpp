#include "memrec/retry.hpp"

#include <cmath>
#include <thread>

namespace memrec {

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
  if (attempt <= 1) return std::chrono::milliseconds{0};
  const double factor = std::pow(multiplier, attempt - 2);
  return std::chrono::milliseconds{
      static_cast<std::int64_t>(static_cast<double>(initial_backoff.count()) * factor)};
}

RetryPolicy default_retry_policy() {
  RetryPolicy p;
  p.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  return p;
}

}  // namespace memrec
