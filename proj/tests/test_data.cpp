#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "ev3/data.hpp"
#include "ev3/losses.hpp"
#include "support.hpp"

using namespace ev3;

namespace {

GeneratorConfig mixture(std::size_t n, double noise, std::uint64_t seed = 5) {
  GeneratorConfig g;
  g.num_classes = 5;
  g.dim = 8;
  g.n = n;
  g.noise = noise;
  g.seed = seed;
  return g;
}

}  // namespace

TEST_CASE("noise-free mixture is separable by nearest centroid") {
  const Dataset ds = gen_dataset(mixture(1000, 0.0));
  const std::size_t c = 5, d = ds.features.cols();
  std::vector<std::vector<double>> centroid(c, std::vector<double>(d, 0.0));
  std::vector<double> count(c, 0.0);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    const auto k = static_cast<std::size_t>(ds.labels[i]);
    count[k] += 1;
    for (std::size_t j = 0; j < d; ++j) centroid[k][j] += ds.features(i, j);
  }
  for (std::size_t k = 0; k < c; ++k)
    for (double& v : centroid[k]) v /= count[k];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < c; ++k) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) dist += (ds.features(i, j) - centroid[k][j]) * (ds.features(i, j) - centroid[k][j]);
      if (dist < best_d) best_d = dist, best = k;
    }
    correct += static_cast<int>(best) == ds.labels[i];
  }
  CHECK(correct == ds.labels.size());
}

TEST_CASE("generation is deterministic, balanced and standardized") {
  for (DatasetKind kind : {DatasetKind::GaussianMixture, DatasetKind::Spirals}) {
    GeneratorConfig g = mixture(1003, 0.4);
    g.kind = kind;
    g.clusters_per_class = 3;
    g.latent_dim = kind == DatasetKind::Spirals ? 0 : 4;
    const Dataset a = gen_dataset(g);
    std::stringstream sa, sb;
    write_dataset(sa, a);
    write_dataset(sb, gen_dataset(g));
    CHECK(sa.str() == sb.str());

    std::vector<int> counts(5, 0);
    for (int y : a.labels) counts[static_cast<std::size_t>(y)]++;
    CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);

    for (std::size_t j = 0; j < a.features.cols(); ++j) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < a.features.rows(); ++i) mean += a.features(i, j);
      mean /= static_cast<double>(a.features.rows());
      for (std::size_t i = 0; i < a.features.rows(); ++i) var += (a.features(i, j) - mean) * (a.features(i, j) - mean);
      var /= static_cast<double>(a.features.rows());
      CHECK(std::abs(mean) <= 1e-9);
      CHECK(std::abs(var - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("dataset export round trip") {
  const Dataset a = gen_dataset(mixture(50, 0.2));
  std::stringstream ss;
  write_dataset(ss, a);
  const Dataset b = read_dataset(ss);
  CHECK(b.features == a.features);
  CHECK(b.labels == a.labels);
  CHECK(b.config == a.config);
}

TEST_CASE("generator rejects bad parameters") {
  CHECK_THROWS_AS(gen_dataset(mixture(3, 0.1)), ContractError);
  GeneratorConfig g = mixture(100, -1.0);
  CHECK_THROWS_AS(gen_dataset(g), ContractError);
  g = mixture(100, 0.1);
  g.num_classes = 1;
  CHECK_THROWS_AS(gen_dataset(g), ContractError);
  g = mixture(100, 0.1);
  g.latent_dim = 9;
  CHECK_THROWS_AS(gen_dataset(g), ContractError);
}

TEST_CASE("split sizes, disjointness and stratification") {
  const Dataset ds = gen_dataset(mixture(1000, 0.3));
  const SplitData s = split(ds, {0.8, 0.1, 0.1, 3});
  CHECK(s.train.size() == 800);
  CHECK(s.val.size() == 100);
  CHECK(s.test.size() == 100);
  CHECK(s.train.tag == SplitTag::Train);
  CHECK(s.val.tag == SplitTag::Val);
  CHECK(s.test.tag == SplitTag::Test);

  std::set<std::size_t> seen;
  for (const DataSplit* part : {&s.train, &s.val, &s.test}) {
    for (std::size_t i = 0; i < part->size(); ++i) {
      const std::size_t src = part->source_indices[i];
      CHECK(seen.insert(src).second);
      CHECK(part->labels[i] == ds.labels[src]);
      CHECK(part->features(i, 0) == ds.features(src, 0));
    }
    std::vector<double> freq(5, 0.0);
    for (int y : part->labels) freq[static_cast<std::size_t>(y)] += 1.0 / static_cast<double>(part->size());
    for (double f : freq) CHECK(std::abs(f - 0.2) <= 0.02);
  }
  CHECK(seen.size() == 1000);

  CHECK_THROWS_AS(split(ds, {1.0, 0.0, 0.0, 1}), ContractError);
  CHECK_THROWS_AS(split(ds, {0.5, 0.2, 0.2, 1}), ContractError);
  CHECK_THROWS_AS(split(gen_dataset(mixture(5, 0.3)), {0.8, 0.1, 0.1, 1}), ContractError);
}

TEST_CASE("iid sampling") {
  const DataSplit one = ev3::testing::toy_split(SplitTag::Train, 2, 3, 2, 1);
  DataSplit single = one;
  single.features = take_rows(one.features, std::vector<std::size_t>{1});
  single.labels = {one.labels[1]};
  single.source_indices = {1};
  Rng r0(1);
  const Batch b = sample_iid(single, 1, r0);
  CHECK(b.indices == std::vector<std::size_t>{0});
  CHECK(b.labels == single.labels);

  const DataSplit s = ev3::testing::toy_split(SplitTag::Train, 103, 4, 3, 2);
  Rng a(derive_seed(1, {1})), a2(derive_seed(1, {1})), c(derive_seed(1, {2}));
  const Batch ba = sample_iid(s, 64, a), ba2 = sample_iid(s, 64, a2), bc = sample_iid(s, 64, c);
  CHECK(ba.indices == ba2.indices);
  CHECK(ba.indices != bc.indices);
  CHECK(ba.source == SplitTag::Train);

  std::vector<double> expected(3, 0.0), got(3, 0.0);
  for (int y : s.labels) expected[static_cast<std::size_t>(y)] += 1.0 / static_cast<double>(s.size());
  Rng big(7);
  const Batch many = sample_iid(s, 100000, big);
  for (int y : many.labels) got[static_cast<std::size_t>(y)] += 1e-5;
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(got[k] - expected[k]) <= 0.01);

  CHECK_THROWS_AS(sample_iid(s, 0, big), ContractError);
}

TEST_CASE("loss-proportional weights") {
  std::vector<std::size_t> pool{0, 1, 2, 3};
  const SamplingWeights u = weights_from_losses(pool, std::vector<double>{2, 2, 2, 2});
  for (double p : u.probs) CHECK(p == 0.25);
  const SamplingWeights z = weights_from_losses(pool, std::vector<double>{0, 0, 0, 0});
  for (double p : z.probs) CHECK(p == 0.25);
  const SamplingWeights f = weights_from_losses(pool, std::vector<double>{1, 0, 0, 0});
  for (double p : f.probs) CHECK(p > 0.0);
  CHECK_THROWS_AS(weights_from_losses(pool, std::vector<double>{1, 2}), DimensionError);
  CHECK_THROWS_AS(weights_from_losses(pool, std::vector<double>{1, -2, 1, 1}), ContractError);
}

TEST_CASE("a 10x loss example is drawn about 10x as often") {
  const DataSplit s = ev3::testing::toy_split(SplitTag::Train, 20, 3, 2, 4);
  std::vector<std::size_t> pool(20);
  std::vector<double> losses(20, 1.0);
  for (std::size_t i = 0; i < 20; ++i) pool[i] = i;
  losses[7] = 10.0;
  const SamplingWeights w = weights_from_losses(pool, losses);
  Rng rng(5);
  const Batch b = sample_weighted(s, w, 100000, rng);
  std::vector<double> counts(20, 0.0);
  for (std::size_t i : b.indices) counts[i] += 1.0;
  double others = 0.0;
  for (std::size_t i = 0; i < 20; ++i)
    if (i != 7) others += counts[i];
  others /= 19.0;
  CHECK(std::abs(counts[7] / others - 10.0) <= 1.5);
}

TEST_CASE("boosted sampling with uniform losses equals iid distribution") {
  const DataSplit s = ev3::testing::toy_split(SplitTag::Train, 30, 3, 3, 8);
  const GraphSpec spec = ev3::testing::tiny_spec(3, 3, {{4, 1}});
  ParameterSet p = init_params(spec, 2);
  p.set({1, -1, ParamRole::HeadWeight}, Tensor(4, 3));  // constant logits -> equal CE for every row
  Rng rng(3);
  const SamplingWeights w = boosted_weights(s, spec, p, LossSpec::ce(), nullptr, rng);
  CHECK(w.pool.size() == 30);
  double kl = 0.0;
  for (double q : w.probs) kl += q * std::log(q * 30.0);
  CHECK(std::abs(kl) <= 1e-12);

  const Tensor teacher = forward(spec, p, s.features);
  Rng r2(3);
  const SamplingWeights kd = boosted_weights(s, spec, p, LossSpec::kd("t"), &teacher, r2);
  for (double q : kd.probs) CHECK(q == doctest::Approx(1.0 / 30.0));
  CHECK_THROWS_AS(boosted_weights(s, spec, p, LossSpec::kd("t"), nullptr, r2), ContractError);
}

TEST_CASE("boosted pool is capped") {
  const DataSplit s = ev3::testing::toy_split(SplitTag::Train, 300, 3, 3, 8);
  const GraphSpec spec = ev3::testing::tiny_spec(3, 3, {{4, 1}});
  Rng rng(1);
  const SamplingWeights w = boosted_weights(s, spec, init_params(spec, 1), LossSpec::ce(), nullptr, rng, 64);
  CHECK(w.pool.size() == 64);
  std::set<std::size_t> uniq(w.pool.begin(), w.pool.end());
  CHECK(uniq.size() == 64);
  const Batch b = sample_weighted(s, w, 500, rng);
  for (std::size_t i : b.indices) CHECK(uniq.contains(i));
}
