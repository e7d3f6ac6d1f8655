#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ev3/losses.hpp"
#include "ev3/model.hpp"
#include "ev3/rng.hpp"
#include "ev3/tensor.hpp"

namespace ev3 {

enum class DatasetKind { GaussianMixture, Spirals };

std::string_view dataset_kind_name(DatasetKind kind);
DatasetKind dataset_kind_from_name(std::string_view name);

struct GeneratorConfig {
  DatasetKind kind = DatasetKind::GaussianMixture;
  int num_classes = 8;
  int dim = 32;
  std::size_t n = 20000;
  double noise = 1.0;
  /// Mixture components per class (gaussian_mixture only).
  int clusters_per_class = 1;
  /// Dimension of the latent space the class structure lives in before it is
  /// linearly embedded into `dim` features. 0 means `dim`.
  int latent_dim = 0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct Dataset {
  Tensor features;
  std::vector<int> labels;
  GeneratorConfig config;
};

/// Class-balanced synthetic data with per-dimension standardized features.
Dataset gen_dataset(const GeneratorConfig& config);

void write_dataset(std::ostream& os, const Dataset& ds);
Dataset read_dataset(std::istream& is);

enum class SplitTag { Train, Val, Test };
std::string_view split_tag_name(SplitTag tag);

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DataSplit {
  SplitTag tag = SplitTag::Train;
  int num_classes = 0;
  Tensor features;
  std::vector<int> labels;
  /// Row index of each example in the source Dataset.
  std::vector<std::size_t> source_indices;

  std::size_t size() const { return labels.size(); }
};

struct SplitData {
  DataSplit train;
  DataSplit val;
  DataSplit test;
};

/// Disjoint, covering, class-stratified split. Throws ContractError if any
/// split would be empty.
SplitData split(const Dataset& dataset, const SplitSpec& spec);

/// Rows drawn from one split. `indices` address rows of that split, and
/// `source` records which split it was, so callers can assert hygiene.
struct Batch {
  SplitTag source = SplitTag::Train;
  std::vector<std::size_t> indices;
  Tensor features;
  std::vector<int> labels;

  std::size_t size() const { return indices.size(); }
};

Batch gather(const DataSplit& split, std::vector<std::size_t> indices);

/// Uniform with replacement.
Batch sample_iid(const DataSplit& split, std::size_t batch_size, Rng& rng);

/// A discrete sampling distribution over a pool of split rows.
struct SamplingWeights {
  std::vector<std::size_t> pool;
  std::vector<double> probs;
};

constexpr double kBoostFloor = 1e-6;
constexpr std::size_t kBoostPoolLimit = 4096;

/// Probabilities proportional to `losses`, floored at `floor` and renormalized.
/// All-zero losses give the uniform distribution.
SamplingWeights weights_from_losses(std::vector<std::size_t> pool, std::span<const double> losses,
                                    double floor = kBoostFloor);

/// Per-example loss weights over a seeded subsample of at most `pool_limit`
/// rows. `teacher_logits` holds teacher outputs for every row of `split` and
/// is required for KD losses.
SamplingWeights boosted_weights(const DataSplit& split, const GraphSpec& spec,
                                const ParameterSet& params, const LossSpec& loss,
                                const Tensor* teacher_logits, Rng& rng,
                                std::size_t pool_limit = kBoostPoolLimit);

Batch sample_weighted(const DataSplit& split, const SamplingWeights& weights,
                      std::size_t batch_size, Rng& rng);

/// Loss-proportional sampling: boosted_weights followed by sample_weighted.
Batch sample_boosted(const DataSplit& split, const GraphSpec& spec, const ParameterSet& params,
                     const LossSpec& loss, const Tensor* teacher_logits, std::size_t batch_size,
                     Rng& rng);

}  // namespace ev3
