#include "ev3/losses.hpp"

#include <cmath>

namespace ev3 {

namespace {

void require_kd_shapes(const Tensor& s, const Tensor& t, double temperature) {
  if (!s.same_shape(t)) {
    throw DimensionError("kd_loss: student " + s.shape_string() + " vs teacher " + t.shape_string());
  }
  if (!(temperature > 0.0)) throw ContractError("kd_loss: temperature must be positive");
}

void require_labels(const Tensor& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw DimensionError("ce_loss: label count != batch rows");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw ContractError("ce_loss: label " + std::to_string(y) + " out of range");
    }
  }
}

struct KdTerms {
  std::vector<double> per_row;
  Tensor student_probs;
  Tensor teacher_probs;
};

KdTerms kd_terms(const Tensor& s, const Tensor& t, double temperature) {
  require_kd_shapes(s, t, temperature);
  const double inv = 1.0 / temperature;
  const Tensor log_q = log_softmax(scale(s, inv));
  const Tensor log_p = log_softmax(scale(t, inv));
  KdTerms out{std::vector<double>(s.rows(), 0.0), log_q, log_p};
  for (double& v : out.student_probs.values()) v = std::exp(v);
  for (double& v : out.teacher_probs.values()) v = std::exp(v);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    auto lp = log_p.row(i);
    auto lq = log_q.row(i);
    auto p = out.teacher_probs.row(i);
    double kl = 0.0;
    for (std::size_t j = 0; j < lp.size(); ++j) kl += p[j] * (lp[j] - lq[j]);
    out.per_row[i] = temperature * temperature * kl;
  }
  return out;
}

}  // namespace

void LossSpec::validate() const {
  if (kind == LossKind::KD) {
    if (!(temperature > 0.0)) throw ContractError("LossSpec: KD temperature must be positive");
    if (teacher_id.empty()) throw ContractError("LossSpec: KD loss needs a teacher");
  } else if (!teacher_id.empty()) {
    throw ContractError("LossSpec: CE loss carries no teacher");
  }
}

std::vector<double> kd_loss_per_example(const Tensor& student_logits,
                                        const Tensor& teacher_logits, double temperature) {
  return kd_terms(student_logits, teacher_logits, temperature).per_row;
}

double kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature) {
  const auto rows = kd_loss_per_example(student_logits, teacher_logits, temperature);
  double total = 0.0;
  for (double r : rows) total += r;
  return total / static_cast<double>(rows.size());
}

ad::Var kd_loss(ad::Var student_logits, const Tensor& teacher_logits, double temperature) {
  KdTerms terms = kd_terms(student_logits.value(), teacher_logits, temperature);
  double total = 0.0;
  for (double r : terms.per_row) total += r;
  const double n = static_cast<double>(terms.per_row.size());
  // d/ds = tau * (q - p) / n
  Tensor grad = sub(terms.student_probs, terms.teacher_probs);
  grad = scale(grad, temperature / n);
  auto& tape = const_cast<ad::Tape&>(*student_logits.tape());
  return tape.record(ad::OpKind::Loss, Tensor::scalar(total / n), {student_logits},
                     [grad = std::move(grad)](const Tensor& g, std::span<Tensor* const> p) {
                       if (!p[0]) return;
                       const double up = g.item();
                       auto dst = p[0]->values();
                       auto src = grad.values();
                       for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += up * src[i];
                     });
}

std::vector<double> ce_loss_per_example(const Tensor& logits, std::span<const int> labels) {
  require_labels(logits, labels);
  const Tensor lsm = log_softmax(logits);
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = -lsm(i, static_cast<std::size_t>(labels[i]));
  return out;
}

double ce_loss(const Tensor& logits, std::span<const int> labels) {
  const auto rows = ce_loss_per_example(logits, labels);
  double total = 0.0;
  for (double r : rows) total += r;
  return total / static_cast<double>(rows.size());
}

ad::Var ce_loss(ad::Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require_labels(z, labels);
  const double n = static_cast<double>(labels.size());
  Tensor grad = softmax(z);
  for (std::size_t i = 0; i < labels.size(); ++i) grad(i, static_cast<std::size_t>(labels[i])) -= 1.0;
  grad = scale(grad, 1.0 / n);
  auto& tape = const_cast<ad::Tape&>(*logits.tape());
  return tape.record(ad::OpKind::Loss, Tensor::scalar(ce_loss(z, labels)), {logits},
                     [grad = std::move(grad)](const Tensor& g, std::span<Tensor* const> p) {
                       if (!p[0]) return;
                       const double up = g.item();
                       auto dst = p[0]->values();
                       auto src = grad.values();
                       for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += up * src[i];
                     });
}

EvalRecord EvalRecord::from_bits(std::vector<bool> bits) {
  EvalRecord r;
  r.n = bits.size();
  for (bool b : bits) r.correct += b ? 1 : 0;
  r.per_example = std::move(bits);
  return r;
}

EvalRecord EvalRecord::from_counts(std::size_t n, std::size_t correct) {
  if (correct > n) throw ContractError("EvalRecord: correct exceeds n");
  EvalRecord r;
  r.n = n;
  r.correct = correct;
  return r;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j)
      if (r[j] > r[best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

EvalRecord evaluate_logits(const Tensor& logits, std::span<const int> labels) {
  if (labels.empty()) throw ContractError("evaluate: empty batch");
  if (labels.size() != logits.rows()) throw DimensionError("evaluate: label count != batch rows");
  const auto pred = argmax_rows(logits);
  std::vector<bool> bits(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) bits[i] = pred[i] == labels[i];
  return EvalRecord::from_bits(std::move(bits));
}

EvalRecord evaluate(const GraphSpec& spec, const ParameterSet& params, const Tensor& features,
                    std::span<const int> labels) {
  return evaluate_logits(forward(spec, params, features), labels);
}

}  // namespace ev3
