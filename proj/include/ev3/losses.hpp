#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ev3/autodiff.hpp"
#include "ev3/model.hpp"
#include "ev3/tensor.hpp"

namespace ev3 {

enum class LossKind { KD, CE };

struct LossSpec {
  LossKind kind = LossKind::KD;
  double temperature = 4.0;
  std::string teacher_id;

  static LossSpec kd(std::string teacher, double temperature = 4.0) {
    return {LossKind::KD, temperature, std::move(teacher)};
  }
  static LossSpec ce() { return {LossKind::CE, 1.0, {}}; }

  void validate() const;
};

/// tau^2 * mean_i KL(softmax(teacher_i / tau) || softmax(student_i / tau)).
/// The teacher side is a constant; there is deliberately no label input.
ad::Var kd_loss(ad::Var student_logits, const Tensor& teacher_logits, double temperature);
double kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature);
/// Unaveraged per-row terms of kd_loss.
std::vector<double> kd_loss_per_example(const Tensor& student_logits,
                                        const Tensor& teacher_logits, double temperature);

/// Mean negative log-likelihood of `labels` under log_softmax(logits).
ad::Var ce_loss(ad::Var logits, std::span<const int> labels);
double ce_loss(const Tensor& logits, std::span<const int> labels);
std::vector<double> ce_loss_per_example(const Tensor& logits, std::span<const int> labels);

/// Classification outcome on one batch. The per-example bits are kept so
/// that two records can be compared by the significance test.
struct EvalRecord {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::vector<bool> per_example;

  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
  double error() const { return 1.0 - accuracy(); }

  /// Record built from correctness bits.
  static EvalRecord from_bits(std::vector<bool> bits);
  /// Record with counts only (no per-example detail).
  static EvalRecord from_counts(std::size_t n, std::size_t correct);

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

/// Index of the largest entry in each row; ties resolve to the lower index.
std::vector<int> argmax_rows(const Tensor& logits);

EvalRecord evaluate_logits(const Tensor& logits, std::span<const int> labels);
EvalRecord evaluate(const GraphSpec& spec, const ParameterSet& params, const Tensor& features,
                    std::span<const int> labels);

}  // namespace ev3
