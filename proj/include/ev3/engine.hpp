#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ev3/data.hpp"
#include "ev3/losses.hpp"
#include "ev3/model.hpp"
#include "ev3/optim.hpp"
#include "ev3/ztest.hpp"

namespace ev3 {

class TeacherLookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Teacher outputs cached over every row of the training split, so KD steps
/// never run the teacher network.
class TeacherRegistry {
 public:
  void add(const std::string& id, const GraphSpec& spec, const ParameterSet& params,
           const DataSplit& train);
  void add_logits(const std::string& id, Tensor train_logits);
  const Tensor& train_logits(const std::string& id) const;
  bool contains(const std::string& id) const { return logits_.contains(id); }
  std::size_t size() const { return logits_.size(); }

 private:
  std::map<std::string, Tensor> logits_;
};

enum class SamplerKind { Iid, Boosted };
std::string_view sampler_name(SamplerKind kind);
SamplerKind sampler_from_name(std::string_view name);

/// One way of proposing an update: which teacher, which loss, which
/// optimizer, which batch sampler, and how many steps per EV3 iteration.
struct Arm {
  LossSpec loss = LossSpec::kd("teacher");
  OptimizerSpec optimizer = OptimizerSpec::adam(1e-3);
  SamplerKind sampler = SamplerKind::Iid;
  int steps_per_iteration = 50;
  std::size_t batch_size = 64;

  const std::string& teacher_id() const { return loss.teacher_id; }
  void validate() const;
};

struct CandidateUpdate {
  int arm_id = 0;
  ParameterSet params;
  EvalRecord eval;  // filled by assess()
};

struct Snapshot {
  GraphSpec spec;
  ParameterSet params;
  EvalRecord eval;
  /// Assess-split rows `eval` was measured on.
  std::vector<std::size_t> eval_indices;
  std::size_t created_at = 0;
};

struct IterationRecord {
  std::size_t t = 0;
  int pass = 1;
  int depth = 0;
  std::size_t param_count = 0;
  int arm_id = 0;
  bool accepted = false;
  bool expanded = false;
  bool snapshot_updated = false;
  std::size_t cum_steps = 0;
  std::size_t assess_n = 0;
  std::size_t incumbent_correct = 0;
  std::size_t candidate_correct = 0;
  double snapshot_accuracy = 0.0;
};

struct EV3State {
  std::size_t t = 0;
  GraphSpec spec;
  ParameterSet params_current;
  Snapshot snapshot;
  int patience_counter = 0;
  /// Best snapshot seen per depth.
  std::map<int, Snapshot> size_collection;
  int pass_index = 1;
  std::vector<IterationRecord> trace;
  std::size_t cum_steps = 0;
  /// One optimizer per arm, index-aligned with the arm list.
  std::vector<Optimizer> arm_optimizers;
};

struct Ev3Config {
  int patience = 20;
  double alpha = 0.95;
  std::size_t assess_batch = 2048;
  /// Expansion stops once the graph depth reaches this.
  int max_depth = 8;
  std::size_t iterations = 0;
  double morph_noise = 0.0;
  std::uint64_t seed = 0;
  bool parallel_arms = false;

  void validate() const;
};

/// The data and teachers one EV3 run may touch. The test split is never part
/// of it.
struct Ev3Env {
  const DataSplit& train;
  const DataSplit& assess;
  const TeacherRegistry& teachers;
};

struct AssessResult {
  int best_index = 0;
  std::vector<CandidateUpdate> candidates;
  /// params_current measured on the same batch.
  EvalRecord incumbent;
  std::vector<std::size_t> batch_indices;
};

/// Where a pass starts in the global iteration and step counters.
struct PassStart {
  int pass_index = 1;
  std::size_t t = 0;
  std::size_t cum_steps = 0;
};

/// Initial state: w^s = w_1, measured on a fresh assess batch.
EV3State init_state(const Ev3Env& env, const Ev3Config& config, std::span<const Arm> arms,
                    GraphSpec spec, ParameterSet params, PassStart start = {});

/// `steps` optimizer steps of `arm`'s loss starting from `params`, drawing
/// batches from `train` only.
ParameterSet descend(const DataSplit& train, const TeacherRegistry& teachers, const GraphSpec& spec,
                     ParameterSet params, const Arm& arm, Optimizer& optimizer, int steps, Rng& rng);

/// Runs every arm from a copy of params_current. `arm_seeds` gives each arm
/// its own random stream. Only the arms' optimizer state in `state` changes.
std::vector<CandidateUpdate> explore(const Ev3Env& env, EV3State& state, std::span<const Arm> arms,
                                     std::span<const std::uint64_t> arm_seeds, bool parallel = false);

/// Evaluates every candidate and the incumbent on the same batch; best is
/// the highest accuracy, ties to the lower arm id.
AssessResult assess(const Ev3Env& env, const EV3State& state, std::vector<CandidateUpdate> candidates,
                    const Batch& assess_batch);

/// Accept/reject, snapshot update, patience, expansion, trace append.
EV3State adapt(const Ev3Env& env, EV3State state, const AssessResult& assessed,
               const Ev3Config& config, std::span<const Arm> arms);

/// Optimizer steps one iteration charges: the sum over arms.
std::size_t steps_per_iteration(std::span<const Arm> arms);

using IterationObserver = std::function<void(const EV3State&, const IterationRecord&)>;

struct RunTrace {
  std::vector<IterationRecord> rows;
  std::map<int, Snapshot> size_collection;
  Snapshot final_snapshot;
  std::size_t cum_steps = 0;
};

RunTrace run(const Ev3Env& env, const Ev3Config& config, std::span<const Arm> arms,
             const GraphSpec& spec, const ParameterSet& params, const IterationObserver& observer = {});

/// Continues from an existing state for `config.iterations` more iterations.
EV3State run_from(const Ev3Env& env, const Ev3Config& config, std::span<const Arm> arms, EV3State state,
                  const IterationObserver& observer = {});

struct SatConfig {
  Ev3Config ev3;
  int passes = 2;
  /// Optimizer steps charged to each pass.
  std::size_t pass_budget_steps = 0;
  /// Copied for every teacher; its loss names the original teacher.
  Arm arm_template;
};

/// Pass 1 is a base run with the template arm. Later passes restart from the
/// initial parameters with one arm for the original teacher plus one per
/// snapshot collected so far. `teachers` gains an entry per student teacher.
RunTrace run_student_as_teacher(const DataSplit& train, const DataSplit& assess,
                                TeacherRegistry& teachers, const SatConfig& config,
                                const GraphSpec& spec, const ParameterSet& params,
                                const IterationObserver& observer = {});

/// Arms of a student-as-teacher pass >= 2.
std::vector<Arm> sat_arms(const Arm& arm_template, const std::vector<std::string>& student_teachers);

}  // namespace ev3
