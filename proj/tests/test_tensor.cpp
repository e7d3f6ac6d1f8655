#include <doctest.h>

#include <cmath>
#include <limits>

#include "ev3/tensor.hpp"
#include "support.hpp"

using namespace ev3;
using ev3::testing::naive_matmul;
using ev3::testing::random_tensor;

TEST_CASE("matmul identity and hand cases") {
  const Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
  const Tensor b = Tensor::from_rows({{3, 4}, {5, 6}});
  CHECK(matmul(eye, b) == b);
  CHECK(matmul(Tensor::from_rows({{1, 2}}), Tensor::from_rows({{3}, {4}})).item() == 11.0);
}

TEST_CASE("matmul agrees with the naive triple loop") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor(5, 7, rng);
    const Tensor b = random_tensor(7, 3, rng);
    CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) <= 1e-12);
    CHECK(max_abs_diff(matmul_tn(transpose(a), b), naive_matmul(a, b)) <= 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), naive_matmul(a, b)) <= 1e-12);
  }
}

TEST_CASE("matmul rejects mismatched extents") {
  CHECK_THROWS_AS(matmul(Tensor(2, 3), Tensor(2, 3)), DimensionError);
  CHECK_THROWS_AS(add(Tensor(2, 3), Tensor(3, 2)), DimensionError);
  CHECK_THROWS_AS(add_row(Tensor(2, 3), Tensor(1, 2)), DimensionError);
}

TEST_CASE("tensor construction validates") {
  CHECK_THROWS_AS(Tensor(0, 3), DimensionError);
  CHECK_THROWS_AS(Tensor(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor(1, 1, std::numeric_limits<double>::quiet_NaN()), NonFiniteError);
  CHECK_THROWS_AS(Tensor::from_rows({{1, 2}, {3}}), DimensionError);
  CHECK_THROWS_AS(Tensor(2, 2).item(), ContractError);
}

TEST_CASE("relu") {
  CHECK(relu(Tensor::from_rows({{-1, 0, 2}})) == Tensor::from_rows({{0, 0, 2}}));
  CHECK(relu(Tensor(3, 4, -0.5)) == Tensor(3, 4));
  Rng rng(3);
  const Tensor x = random_tensor(6, 9, rng);
  const Tensor y = relu(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == std::max(0.0, x[i]));
}

TEST_CASE("log_softmax") {
  const Tensor half = log_softmax(Tensor::from_rows({{0, 0}}));
  CHECK(half(0, 0) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(half(0, 1) == doctest::Approx(std::log(0.5)).epsilon(1e-15));

  Rng rng(5);
  const Tensor x = random_tensor(4, 6, rng);
  Tensor shifted = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (double& v : shifted.row(r)) v += 37.5 * static_cast<double>(r + 1);
  CHECK(max_abs_diff(log_softmax(x), log_softmax(shifted)) <= 1e-9);

  const Tensor ls = log_softmax(x);
  for (std::size_t r = 0; r < ls.rows(); ++r) {
    double s = 0.0;
    for (double v : ls.row(r)) s += std::exp(v);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }

  const Tensor big = log_softmax(Tensor::from_rows({{1000, 0}}));
  CHECK(big.all_finite());
  CHECK(big(0, 0) == doctest::Approx(0.0));
  CHECK(big(0, 1) == doctest::Approx(-1000.0));
}

TEST_CASE("reductions and row helpers") {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  CHECK(sum(a) == 10.0);
  CHECK(sum_rows(a) == Tensor::from_rows({{4, 6}}));
  CHECK(add_row(a, Tensor::from_rows({{10, 20}})) == Tensor::from_rows({{11, 22}, {13, 24}}));
  const std::vector<std::size_t> idx{1, 1, 0};
  CHECK(take_rows(a, idx) == Tensor::from_rows({{3, 4}, {3, 4}, {1, 2}}));
  CHECK(hadamard(a, a) == Tensor::from_rows({{1, 4}, {9, 16}}));
  CHECK(transpose(a) == Tensor::from_rows({{1, 3}, {2, 4}}));
}

TEST_CASE("overflowing results are rejected") {
  const Tensor big(1, 1, 1e300);
  CHECK_THROWS_AS(matmul(big, big), NonFiniteError);
  CHECK_THROWS_AS(scale(big, 1e300), NonFiniteError);
}
