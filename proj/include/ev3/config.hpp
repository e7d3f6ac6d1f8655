#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ev3/data.hpp"
#include "ev3/engine.hpp"
#include "ev3/optim.hpp"

namespace ev3 {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& all_regimes() {
  static const std::vector<std::string> kRegimes{"vanilla", "morphism", "ev3_base", "ev3_sat"};
  return kRegimes;
}

struct TeacherConfig {
  int steps = 6000;
  std::size_t batch_size = 128;
  OptimizerSpec optimizer = OptimizerSpec::adam(2e-3);
  /// Minimum test accuracy; below it the run aborts.
  double floor = 0.92;
};

struct StudentConfig {
  std::vector<int> widths{32, 32};
  int base_blocks = 1;
  int ladder_steps = 3;
  double temperature = 4.0;
  std::size_t batch_size = 64;
  OptimizerSpec optimizer = OptimizerSpec::adam(1e-3);
  SamplerKind sampler = SamplerKind::Iid;
};

struct Ev3Params {
  int patience = 20;
  double alpha = 0.95;
  int steps_per_iteration = 50;
  std::size_t assess_batch = 2048;
  int passes = 2;
  bool assess_on_train = false;
  double morph_noise = 0.0;
};

/// Everything one `ev3 run` needs. Serialized as flat key=value text with
/// dotted keys (see to_text()).
struct ExperimentConfig {
  GeneratorConfig dataset;
  SplitSpec split_spec;
  TeacherConfig teacher;
  StudentConfig student;
  /// Optimizer steps each ladder size is trained for by the fixed-schedule
  /// regimes; EV3 regimes get the same total.
  std::size_t steps_per_size = 5000;
  Ev3Params ev3;
  /// Rows of the training split used for train_err.
  std::size_t train_eval_rows = 4096;
  std::vector<std::string> regimes = all_regimes();
  std::uint64_t seed = 1;

  void validate() const;

  GraphSpec base_spec() const;
  std::vector<GraphSpec> ladder() const;
  std::size_t regime_budget() const { return steps_per_size * ladder().size(); }
};

/// The default desk-scale task.
ExperimentConfig desk_preset();
/// Tiny configuration for fast checks.
ExperimentConfig smoke_preset();
ExperimentConfig preset(const std::string& name);

std::string to_text(const ExperimentConfig& config);
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Splits "a,b,c" into validated regime names.
std::vector<std::string> parse_regimes(const std::string& list);

}  // namespace ev3
