#pragma once

#include "ev3/losses.hpp"

namespace ev3 {

enum class ZTestOutcome { ASignificantlyBetter, NotSignificant };

/// One-sided standard normal critical value for confidence `alpha` in (0.5, 1).
/// 0.95 gives 1.6449.
double z_critical(double alpha);

/// Pooled two-proportion z statistic for accuracy(a) - accuracy(b). Returns 0
/// when the pooled proportion is 0 or 1 (no variance).
double z_score(const EvalRecord& a, const EvalRecord& b);

/// Whether `a` is significantly more accurate than `b` at confidence `alpha`.
ZTestOutcome z_test(const EvalRecord& a, const EvalRecord& b, double alpha = 0.95);

inline bool significantly_better(const EvalRecord& a, const EvalRecord& b, double alpha = 0.95) {
  return z_test(a, b, alpha) == ZTestOutcome::ASignificantlyBetter;
}

}  // namespace ev3
