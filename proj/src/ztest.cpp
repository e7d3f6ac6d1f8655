#include "ev3/ztest.hpp"

#include <cmath>

#include <boost/math/distributions/normal.hpp>

namespace ev3 {

double z_critical(double alpha) {
  if (!(alpha > 0.5 && alpha < 1.0)) throw ContractError("z_critical: alpha must be in (0.5, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), alpha);
}

double z_score(const EvalRecord& a, const EvalRecord& b) {
  if (a.n == 0 || b.n == 0) throw ContractError("z_test: sample counts must be positive");
  if (a.correct > a.n || b.correct > b.n) throw ContractError("z_test: correct exceeds n");
  const double na = static_cast<double>(a.n);
  const double nb = static_cast<double>(b.n);
  const double pooled = static_cast<double>(a.correct + b.correct) / (na + nb);
  if (pooled <= 0.0 || pooled >= 1.0) return 0.0;
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb));
  return (a.accuracy() - b.accuracy()) / se;
}

ZTestOutcome z_test(const EvalRecord& a, const EvalRecord& b, double alpha) {
  const double crit = z_critical(alpha);
  return z_score(a, b) > crit ? ZTestOutcome::ASignificantlyBetter : ZTestOutcome::NotSignificant;
}

}  // namespace ev3
