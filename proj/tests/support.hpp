#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ev3/data.hpp"
#include "ev3/model.hpp"
#include "ev3/rng.hpp"
#include "ev3/tensor.hpp"

namespace ev3::testing {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(rows, cols);
  for (double& v : t.values()) v = u(rng);
  return t;
}

/// Textbook triple loop, summing in k order.
inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

/// Relative error with an absolute fallback near zero.
inline bool grad_close(double analytic, double numeric, double rel = 1e-4, double abs = 1e-7) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs) return true;
  return diff / std::max(std::abs(analytic), std::abs(numeric)) <= rel;
}

inline GraphSpec tiny_spec(int input_dim, int classes, std::vector<StageSpec> stages) {
  GraphSpec s;
  s.input_dim = input_dim;
  s.num_classes = classes;
  s.stages = std::move(stages);
  return s;
}

/// Rows [offset, offset + n) of one fixed mixture, tagged as `tag`. Slices
/// taken with the same (dim, classes, seed) share a distribution.
inline DataSplit toy_split(SplitTag tag, std::size_t n, int dim, int classes, std::uint64_t seed,
                           std::size_t offset = 0) {
  GeneratorConfig g;
  g.num_classes = classes;
  g.dim = dim;
  g.n = offset + n;
  g.noise = 0.5;
  g.seed = seed;
  const Dataset full = gen_dataset(g);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = offset + i;
  Dataset ds{take_rows(full.features, rows), {}, g};
  for (std::size_t r : rows) ds.labels.push_back(full.labels[r]);
  DataSplit s;
  s.tag = tag;
  s.num_classes = classes;
  s.features = ds.features;
  s.labels = ds.labels;
  s.source_indices.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.source_indices[i] = offset + i;
  return s;
}

}  // namespace ev3::testing
