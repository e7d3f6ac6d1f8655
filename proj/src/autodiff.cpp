#include "ev3/autodiff.hpp"

#include <cmath>

namespace ev3::ad {

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

const Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw ContractError("Var is not bound to a tape");
  return *a.tape();
}

Tape& mutable_tape_of(Var a) {
  // Ops append to the tape that owns their operands.
  return const_cast<Tape&>(tape_of(a));
}

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
}

}  // namespace

const Tensor& Var::value() const { return tape_of(*this).node(index_).value; }

Gradients::Gradients(std::vector<std::optional<Tensor>> grads, std::vector<bool> tracked,
                     std::vector<std::pair<std::size_t, std::size_t>> shapes)
    : grads_(std::move(grads)), tracked_(std::move(tracked)), shapes_(std::move(shapes)) {}

Tensor Gradients::of(Var v) const {
  const std::size_t i = v.index();
  if (i >= grads_.size()) throw ContractError("gradient requested for unknown node");
  if (!tracked_[i]) throw ContractError("gradient requested for an untracked constant");
  if (grads_[i]) return *grads_[i];
  return Tensor::zeros(shapes_[i].first, shapes_[i].second);
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back({OpKind::Leaf, {}, std::move(value), nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back({OpKind::Constant, {}, std::move(value), nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Tensor value, std::initializer_list<Var> parents,
                 BackwardFn backward) {
  Node n{kind, {}, std::move(value), std::move(backward), false};
  for (Var p : parents) {
    if (p.tape() != this) throw ContractError("parent recorded on a different tape");
    if (p.index() >= nodes_.size()) throw ContractError("parent index out of range");
    n.parents.push_back(p.index());
    n.tracked = n.tracked || nodes_[p.index()].tracked;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var output) const {
  if (output.tape() != this) throw ContractError("backward: output belongs to another tape");
  const std::size_t out = output.index();
  const Tensor& out_value = nodes_.at(out).value;
  if (out_value.rows() != 1 || out_value.cols() != 1) {
    throw ContractError("backward: output must be scalar, got " + out_value.shape_string());
  }

  std::vector<std::optional<Tensor>> grads(nodes_.size());
  std::vector<bool> tracked(nodes_.size());
  std::vector<std::pair<std::size_t, std::size_t>> shapes(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    tracked[i] = nodes_[i].tracked;
    shapes[i] = {nodes_[i].value.rows(), nodes_[i].value.cols()};
  }
  if (!tracked[out]) return Gradients(std::move(grads), std::move(tracked), std::move(shapes));

  grads[out] = Tensor::scalar(1.0);
  std::vector<Tensor*> slots;
  for (std::size_t i = out + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!grads[i] || n.parents.empty() || !n.backward) continue;
    slots.clear();
    for (std::size_t p : n.parents) {
      if (!tracked[p]) {
        slots.push_back(nullptr);
        continue;
      }
      if (!grads[p]) grads[p] = Tensor::zeros(shapes[p].first, shapes[p].second);
      slots.push_back(&*grads[p]);
    }
    n.backward(*grads[i], slots);
  }
  for (std::size_t i = 0; i <= out; ++i) {
    if (grads[i]) ensure_finite(*grads[i], "backward");
  }
  return Gradients(std::move(grads), std::move(tracked), std::move(shapes));
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tape* tape = a.tape();
  const std::size_t ia = a.index(), ib = b.index();
  return mutable_tape_of(a).record(
      OpKind::MatMul, ev3::matmul(a.value(), b.value()), {a, b},
      [tape, ia, ib](const Tensor& g, std::span<Tensor* const> p) {
        if (p[0]) add_into(*p[0], matmul_nt(g, tape->node(ib).value));
        if (p[1]) add_into(*p[1], matmul_tn(tape->node(ia).value, g));
      });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  return mutable_tape_of(a).record(OpKind::Add, ev3::add(a.value(), b.value()), {a, b},
                                   [](const Tensor& g, std::span<Tensor* const> p) {
                                     if (p[0]) add_into(*p[0], g);
                                     if (p[1]) add_into(*p[1], g);
                                   });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  return mutable_tape_of(a).record(OpKind::Sub, ev3::sub(a.value(), b.value()), {a, b},
                                   [](const Tensor& g, std::span<Tensor* const> p) {
                                     if (p[0]) add_into(*p[0], g);
                                     if (p[1]) add_into(*p[1], ev3::scale(g, -1.0));
                                   });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  return mutable_tape_of(a).record(OpKind::AddRow, ev3::add_row(a.value(), row.value()),
                                   {a, row}, [](const Tensor& g, std::span<Tensor* const> p) {
                                     if (p[0]) add_into(*p[0], g);
                                     if (p[1]) add_into(*p[1], sum_rows(g));
                                   });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  const Tape* tape = a.tape();
  const std::size_t ia = a.index(), ib = b.index();
  return mutable_tape_of(a).record(
      OpKind::Mul, hadamard(a.value(), b.value()), {a, b},
      [tape, ia, ib](const Tensor& g, std::span<Tensor* const> p) {
        if (p[0]) add_into(*p[0], hadamard(g, tape->node(ib).value));
        if (p[1]) add_into(*p[1], hadamard(g, tape->node(ia).value));
      });
}

Var scale(Var a, double factor) {
  return mutable_tape_of(a).record(OpKind::Scale, ev3::scale(a.value(), factor), {a},
                                   [factor](const Tensor& g, std::span<Tensor* const> p) {
                                     if (p[0]) add_into(*p[0], ev3::scale(g, factor));
                                   });
}

Var relu(Var a) {
  Tensor out = ev3::relu(a.value());
  Tensor mask = out;
  for (double& v : mask.values()) v = v > 0.0 ? 1.0 : 0.0;
  return mutable_tape_of(a).record(
      OpKind::Relu, std::move(out), {a},
      [mask = std::move(mask)](const Tensor& g, std::span<Tensor* const> p) {
        if (p[0]) add_into(*p[0], hadamard(g, mask));
      });
}

Var log_softmax(Var a) {
  Tensor out = ev3::log_softmax(a.value());
  Tensor probs = out;
  for (double& v : probs.values()) v = std::exp(v);
  return mutable_tape_of(a).record(
      OpKind::LogSoftmax, std::move(out), {a},
      [probs = std::move(probs)](const Tensor& g, std::span<Tensor* const> p) {
        if (!p[0]) return;
        // d/dx_j = g_j - softmax_j * sum_k g_k, row by row.
        Tensor d = g;
        for (std::size_t i = 0; i < d.rows(); ++i) {
          auto gr = g.row(i);
          double total = 0.0;
          for (double v : gr) total += v;
          auto dr = d.row(i);
          auto pr = probs.row(i);
          for (std::size_t j = 0; j < dr.size(); ++j) dr[j] -= pr[j] * total;
        }
        add_into(*p[0], d);
      });
}

Var sum(Var a) {
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  return mutable_tape_of(a).record(OpKind::Sum, Tensor::scalar(ev3::sum(a.value())), {a},
                                   [rows, cols](const Tensor& g, std::span<Tensor* const> p) {
                                     if (p[0]) add_into(*p[0], Tensor(rows, cols, g.item()));
                                   });
}

Var mean(Var a) {
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  const double n = static_cast<double>(rows * cols);
  return mutable_tape_of(a).record(
      OpKind::Mean, Tensor::scalar(ev3::sum(a.value()) / n), {a},
      [rows, cols, n](const Tensor& g, std::span<Tensor* const> p) {
        if (p[0]) add_into(*p[0], Tensor(rows, cols, g.item() / n));
      });
}

}  // namespace ev3::ad
