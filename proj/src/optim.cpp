#include "ev3/optim.hpp"

#include <cmath>

namespace ev3 {

void OptimizerSpec::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ContractError("OptimizerSpec: learning rate must be finite and non-negative");
  }
  if (kind == OptimizerKind::Momentum && !(momentum >= 0.0 && momentum < 1.0)) {
    throw ContractError("OptimizerSpec: momentum must be in [0,1)");
  }
  if (kind == OptimizerKind::Adam) {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ContractError("OptimizerSpec: Adam betas must be in [0,1)");
    }
    if (!(epsilon > 0.0)) throw ContractError("OptimizerSpec: epsilon must be positive");
  }
}

Optimizer::Optimizer(OptimizerSpec spec) : spec_(spec) { spec_.validate(); }

void Optimizer::reset() {
  steps_ = 0;
  first_ = {};
  second_ = {};
}

ParameterSet Optimizer::step(const ParameterSet& params, const ParameterSet& grads) {
  if (!params.same_keys(grads)) throw ContractError("optimizer_step: gradient keys do not match parameters");
  if (!first_.empty() && !first_.same_keys(params)) {
    throw ContractError("optimizer_step: accumulator state belongs to a different graph");
  }
  ++steps_;
  ParameterSet out = params;
  const double lr = spec_.learning_rate;

  switch (spec_.kind) {
    case OptimizerKind::SGD:
      for (auto& [key, p] : out) {
        auto pv = p.values();
        auto gv = grads.at(key).values();
        for (std::size_t i = 0; i < pv.size(); ++i) pv[i] -= lr * gv[i];
      }
      break;

    case OptimizerKind::Momentum:
      if (first_.empty()) {
        for (const auto& [key, p] : params) first_.set(key, Tensor::zeros(p.rows(), p.cols()));
      }
      for (auto& [key, p] : out) {
        auto pv = p.values();
        auto gv = grads.at(key).values();
        auto vv = first_.at(key).values();
        for (std::size_t i = 0; i < pv.size(); ++i) {
          vv[i] = spec_.momentum * vv[i] + gv[i];
          pv[i] -= lr * vv[i];
        }
      }
      break;

    case OptimizerKind::Adam: {
      if (first_.empty()) {
        for (const auto& [key, p] : params) {
          first_.set(key, Tensor::zeros(p.rows(), p.cols()));
          second_.set(key, Tensor::zeros(p.rows(), p.cols()));
        }
      }
      const double t = static_cast<double>(steps_);
      const double c1 = 1.0 - std::pow(spec_.beta1, t);
      const double c2 = 1.0 - std::pow(spec_.beta2, t);
      for (auto& [key, p] : out) {
        auto pv = p.values();
        auto gv = grads.at(key).values();
        auto mv = first_.at(key).values();
        auto sv = second_.at(key).values();
        for (std::size_t i = 0; i < pv.size(); ++i) {
          mv[i] = spec_.beta1 * mv[i] + (1.0 - spec_.beta1) * gv[i];
          sv[i] = spec_.beta2 * sv[i] + (1.0 - spec_.beta2) * gv[i] * gv[i];
          const double m_hat = mv[i] / c1;
          const double v_hat = sv[i] / c2;
          pv[i] -= lr * m_hat / (std::sqrt(v_hat) + spec_.epsilon);
        }
      }
      break;
    }
  }
  for (const auto& [key, p] : out) ensure_finite(p, "optimizer_step");
  return out;
}

}  // namespace ev3
