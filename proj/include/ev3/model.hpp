#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ev3/autodiff.hpp"
#include "ev3/tensor.hpp"

namespace ev3 {

struct StageSpec {
  int width = 0;
  int block_count = 0;

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

/// Residual dense network: linear stem, stages of residual blocks joined by
/// linear width projections, linear head.
struct GraphSpec {
  int input_dim = 0;
  int num_classes = 0;
  std::vector<StageSpec> stages;

  /// Throws ContractError if any extent is out of range.
  void validate() const;
  /// Total residual blocks across stages.
  int depth() const;
  /// Block counts, e.g. "(2,2)".
  std::string block_string() const;

  friend bool operator==(const GraphSpec&, const GraphSpec&) = default;
};

enum class ParamRole {
  StemWeight,
  StemBias,
  TransitionWeight,
  TransitionBias,
  ProjIn,
  BiasIn,
  ProjOut,
  BiasOut,
  HeadWeight,
  HeadBias,
};

std::string_view role_name(ParamRole role);
ParamRole role_from_name(std::string_view name);

/// Identifies one tensor of a ParameterSet. Non-block tensors use block = -1;
/// the stem and head use stage = -1 and stage = stages.size() respectively.
struct ParamKey {
  int stage = 0;
  int block = -1;
  ParamRole role = ParamRole::StemWeight;

  auto operator<=>(const ParamKey&) const = default;
  std::string to_string() const;
};

struct ParamShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  friend bool operator==(const ParamShape&, const ParamShape&) = default;
};

/// Trainable tensors keyed by their position in a GraphSpec.
class ParameterSet {
 public:
  using Map = std::map<ParamKey, Tensor>;

  ParameterSet() = default;
  explicit ParameterSet(Map entries) : entries_(std::move(entries)) {}

  const Tensor& at(const ParamKey& key) const;
  Tensor& at(const ParamKey& key);
  bool contains(const ParamKey& key) const { return entries_.contains(key); }
  void set(const ParamKey& key, Tensor value) { entries_.insert_or_assign(key, std::move(value)); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t scalar_count() const;
  bool same_keys(const ParameterSet& other) const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  Map entries_;
};

/// Every key the spec demands, with its shape, in key order.
std::vector<std::pair<ParamKey, ParamShape>> parameter_layout(const GraphSpec& spec);

/// Throws ContractError unless `params` has exactly the keys and shapes of
/// `spec`.
void check_params(const GraphSpec& spec, const ParameterSet& params);

/// He-scaled uniform weights, zero biases.
ParameterSet init_params(const GraphSpec& spec, std::uint64_t seed);

/// Exact number of scalars implied by `spec`.
std::size_t param_count(const GraphSpec& spec);

/// Logits for a batch of inputs (n x input_dim -> n x num_classes).
Tensor forward(const GraphSpec& spec, const ParameterSet& params, const Tensor& inputs);

/// A ParameterSet recorded as leaves of a tape.
struct BoundParams {
  std::map<ParamKey, ad::Var> vars;
};

BoundParams bind(ad::Tape& tape, const ParameterSet& params);
/// Traced forward pass; arithmetic is identical to forward().
ad::Var forward(const GraphSpec& spec, const BoundParams& params, ad::Var inputs);
/// Gradients of the tape output, shaped like the bound ParameterSet.
ParameterSet collect_gradients(const BoundParams& params, const ad::Gradients& grads);

/// Central-difference gradient of `f` at `params`, one coordinate at a time.
ParameterSet finite_diff_grad(const std::function<double(const ParameterSet&)>& f,
                              const ParameterSet& params, double h);

// Snapshot checkpoint format: a text header listing keys and shapes, then all
// values as little-endian 64-bit floats in header order.
void write_params(std::ostream& os, const ParameterSet& params);
ParameterSet read_params(std::istream& is);
void save_params(const std::string& path, const ParameterSet& params);
ParameterSet load_params(const std::string& path);

/// Writes raw little-endian doubles.
void write_f64_le(std::ostream& os, std::span<const double> values);
void read_f64_le(std::istream& is, std::span<double> values);

}  // namespace ev3
