#include "ev3/engine.hpp"

#include <algorithm>
#include <future>

#include "ev3/morphism.hpp"
#include "ev3/rng.hpp"

namespace ev3 {

namespace {

constexpr std::uint64_t kExploreTag = tag_of("explore");
constexpr std::uint64_t kAssessTag = tag_of("assess");
constexpr std::uint64_t kInitTag = tag_of("init");
constexpr std::uint64_t kExpandTag = tag_of("expand");

void require_not_test(const Batch& batch, const char* where) {
  if (batch.source == SplitTag::Test) {
    throw ContractError(std::string(where) + ": received a test-split batch");
  }
}

Batch draw_assess_batch(const Ev3Env& env, const Ev3Config& config, std::uint64_t seed) {
  Rng rng(seed);
  Batch b = sample_iid(env.assess, config.assess_batch, rng);
  require_not_test(b, "assess");
  return b;
}

/// Stores `snap` if its depth is new or it beats the stored accuracy.
void offer(std::map<int, Snapshot>& collection, const Snapshot& snap) {
  const int depth = snap.spec.depth();
  auto it = collection.find(depth);
  if (it == collection.end() || snap.eval.accuracy() > it->second.eval.accuracy()) {
    collection.insert_or_assign(depth, snap);
  }
}

std::vector<Optimizer> make_optimizers(std::span<const Arm> arms) {
  std::vector<Optimizer> out;
  out.reserve(arms.size());
  for (const Arm& a : arms) out.emplace_back(a.optimizer);
  return out;
}

void validate_arms(std::span<const Arm> arms, const TeacherRegistry& teachers) {
  if (arms.empty()) throw ContractError("EV3 needs at least one arm");
  for (const Arm& a : arms) {
    a.validate();
    if (a.loss.kind == LossKind::KD && !teachers.contains(a.teacher_id())) {
      throw TeacherLookupError("unknown teacher '" + a.teacher_id() + "'");
    }
  }
}

}  // namespace

void TeacherRegistry::add(const std::string& id, const GraphSpec& spec, const ParameterSet& params,
                          const DataSplit& train) {
  add_logits(id, forward(spec, params, train.features));
}

void TeacherRegistry::add_logits(const std::string& id, Tensor train_logits) {
  if (id.empty()) throw ContractError("TeacherRegistry: empty teacher id");
  logits_.insert_or_assign(id, std::move(train_logits));
}

const Tensor& TeacherRegistry::train_logits(const std::string& id) const {
  auto it = logits_.find(id);
  if (it == logits_.end()) throw TeacherLookupError("unknown teacher '" + id + "'");
  return it->second;
}

std::string_view sampler_name(SamplerKind kind) { return kind == SamplerKind::Iid ? "iid" : "boosted"; }

SamplerKind sampler_from_name(std::string_view name) {
  if (name == "iid") return SamplerKind::Iid;
  if (name == "boosted") return SamplerKind::Boosted;
  throw ContractError("unknown sampler: " + std::string(name));
}

void Arm::validate() const {
  loss.validate();
  optimizer.validate();
  if (steps_per_iteration < 1) throw ContractError("Arm: steps_per_iteration must be >= 1");
  if (batch_size < 1) throw ContractError("Arm: batch_size must be >= 1");
}

void Ev3Config::validate() const {
  if (patience < 1) throw ContractError("Ev3Config: patience must be >= 1");
  if (!(alpha > 0.5 && alpha < 1.0)) throw ContractError("Ev3Config: alpha must be in (0.5, 1)");
  if (assess_batch < 1) throw ContractError("Ev3Config: assess_batch must be >= 1");
  if (max_depth < 1) throw ContractError("Ev3Config: max_depth must be >= 1");
  if (morph_noise < 0.0) throw ContractError("Ev3Config: morph_noise must be >= 0");
}

std::size_t steps_per_iteration(std::span<const Arm> arms) {
  std::size_t n = 0;
  for (const Arm& a : arms) n += static_cast<std::size_t>(a.steps_per_iteration);
  return n;
}

EV3State init_state(const Ev3Env& env, const Ev3Config& config, std::span<const Arm> arms,
                    GraphSpec spec, ParameterSet params, PassStart start) {
  config.validate();
  validate_arms(arms, env.teachers);
  check_params(spec, params);
  EV3State state;
  state.t = start.t;
  state.pass_index = start.pass_index;
  state.cum_steps = start.cum_steps;
  state.arm_optimizers = make_optimizers(arms);

  const Batch batch = draw_assess_batch(
      env, config, derive_seed(config.seed, {static_cast<std::uint64_t>(start.pass_index), kInitTag}));
  Snapshot snap;
  snap.eval = evaluate(spec, params, batch.features, batch.labels);
  snap.eval_indices = batch.indices;
  snap.created_at = start.t;
  snap.spec = spec;
  snap.params = params;
  state.spec = std::move(spec);
  state.params_current = std::move(params);
  state.snapshot = std::move(snap);
  offer(state.size_collection, state.snapshot);
  return state;
}

ParameterSet descend(const DataSplit& train, const TeacherRegistry& teachers, const GraphSpec& spec,
                     ParameterSet params, const Arm& arm, Optimizer& optimizer, int steps, Rng& rng) {
  if (train.tag == SplitTag::Test) throw ContractError("descend: refusing to train on the test split");
  const bool kd = arm.loss.kind == LossKind::KD;
  const Tensor* teacher = kd ? &teachers.train_logits(arm.teacher_id()) : nullptr;
  if (teacher && teacher->rows() != train.size()) {
    throw ContractError("descend: teacher logits do not cover the training split");
  }
  SamplingWeights weights;
  if (arm.sampler == SamplerKind::Boosted) {
    weights = boosted_weights(train, spec, params, arm.loss, teacher, rng);
  }
  for (int s = 0; s < steps; ++s) {
    Batch batch = arm.sampler == SamplerKind::Boosted ? sample_weighted(train, weights, arm.batch_size, rng)
                                                      : sample_iid(train, arm.batch_size, rng);
    ad::Tape tape;
    const BoundParams bound = bind(tape, params);
    const ad::Var logits = forward(spec, bound, tape.constant(std::move(batch.features)));
    const ad::Var loss = kd ? kd_loss(logits, take_rows(*teacher, batch.indices), arm.loss.temperature)
                            : ce_loss(logits, batch.labels);
    const ParameterSet grads = collect_gradients(bound, tape.backward(loss));
    params = optimizer.step(params, grads);
  }
  return params;
}

std::vector<CandidateUpdate> explore(const Ev3Env& env, EV3State& state, std::span<const Arm> arms,
                                     std::span<const std::uint64_t> arm_seeds, bool parallel) {
  validate_arms(arms, env.teachers);
  if (arm_seeds.size() != arms.size()) throw ContractError("explore: one seed per arm required");
  bool stale = state.arm_optimizers.size() != arms.size();
  for (std::size_t i = 0; !stale && i < arms.size(); ++i) stale = !(state.arm_optimizers[i].spec() == arms[i].optimizer);
  if (stale) state.arm_optimizers = make_optimizers(arms);

  auto propose = [&](std::size_t i) {
    Rng rng(arm_seeds[i]);
    CandidateUpdate c;
    c.arm_id = static_cast<int>(i);
    c.params = descend(env.train, env.teachers, state.spec, state.params_current, arms[i],
                       state.arm_optimizers[i], arms[i].steps_per_iteration, rng);
    return c;
  };

  std::vector<CandidateUpdate> out(arms.size());
  if (parallel && arms.size() > 1) {
    std::vector<std::future<CandidateUpdate>> jobs;
    for (std::size_t i = 0; i < arms.size(); ++i) jobs.push_back(std::async(std::launch::async, propose, i));
    for (std::size_t i = 0; i < arms.size(); ++i) out[i] = jobs[i].get();
  } else {
    for (std::size_t i = 0; i < arms.size(); ++i) out[i] = propose(i);
  }
  return out;
}

AssessResult assess(const Ev3Env& env, const EV3State& state, std::vector<CandidateUpdate> candidates,
                    const Batch& assess_batch) {
  (void)env;
  if (candidates.empty()) throw ContractError("assess: no candidates");
  require_not_test(assess_batch, "assess");
  AssessResult out;
  out.batch_indices = assess_batch.indices;
  out.incumbent = evaluate(state.spec, state.params_current, assess_batch.features, assess_batch.labels);
  for (auto& c : candidates) c.eval = evaluate(state.spec, c.params, assess_batch.features, assess_batch.labels);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& best = candidates[static_cast<std::size_t>(out.best_index)];
    const auto& c = candidates[i];
    if (c.eval.correct > best.eval.correct ||
        (c.eval.correct == best.eval.correct && c.arm_id < best.arm_id)) {
      out.best_index = static_cast<int>(i);
    }
  }
  out.candidates = std::move(candidates);
  return out;
}

EV3State adapt(const Ev3Env& env, EV3State state, const AssessResult& assessed, const Ev3Config& config,
               std::span<const Arm> arms) {
  if (assessed.candidates.empty()) throw ContractError("adapt: no candidates");
  const CandidateUpdate& best = assessed.candidates.at(static_cast<std::size_t>(assessed.best_index));
  if (best.eval.n == 0) throw ContractError("adapt: best candidate has not been assessed");

  IterationRecord rec;
  rec.arm_id = best.arm_id;
  rec.assess_n = best.eval.n;
  rec.incumbent_correct = assessed.incumbent.correct;
  rec.candidate_correct = best.eval.correct;
  const std::size_t next_t = state.t + 1;

  // 1. Accept unless the incumbent is significantly better than the proposal.
  rec.accepted = !significantly_better(assessed.incumbent, best.eval, config.alpha);
  if (rec.accepted) state.params_current = best.params;

  // 2. Snapshot update or patience tick.
  if (significantly_better(best.eval, state.snapshot.eval, config.alpha)) {
    state.snapshot = Snapshot{state.spec, best.params, best.eval, assessed.batch_indices, next_t};
    state.patience_counter = 0;
    offer(state.size_collection, state.snapshot);
    rec.snapshot_updated = true;
  } else {
    state.patience_counter = std::min(config.patience, state.patience_counter + 1);
  }

  // 3. Expand from the snapshot once patience runs out.
  if (state.patience_counter >= config.patience && state.spec.depth() < config.max_depth) {
    const std::uint64_t seed =
        derive_seed(config.seed, {static_cast<std::uint64_t>(state.pass_index), next_t, kExpandTag});
    auto [grown, grown_params] = deepen(state.snapshot.spec, state.snapshot.params, seed, config.morph_noise);
    const Batch same = gather(env.assess, state.snapshot.eval_indices);
    EvalRecord re_eval = evaluate(grown, grown_params, same.features, same.labels);
    if (config.morph_noise == 0.0 && re_eval != state.snapshot.eval) {
      throw std::logic_error("adapt: expansion changed the snapshot's measured accuracy");
    }
    state.snapshot = Snapshot{grown, grown_params, std::move(re_eval), state.snapshot.eval_indices, next_t};
    state.spec = std::move(grown);
    state.params_current = std::move(grown_params);
    state.patience_counter = 0;
    offer(state.size_collection, state.snapshot);
    for (auto& opt : state.arm_optimizers) opt.reset();
    rec.expanded = true;
  }

  // 4. Book-keeping.
  state.t = next_t;
  state.cum_steps += steps_per_iteration(arms);
  rec.t = state.t;
  rec.pass = state.pass_index;
  rec.depth = state.spec.depth();
  rec.param_count = param_count(state.spec);
  rec.cum_steps = state.cum_steps;
  rec.snapshot_accuracy = state.snapshot.eval.accuracy();
  state.trace.push_back(rec);
  return state;
}

EV3State run_from(const Ev3Env& env, const Ev3Config& config, std::span<const Arm> arms, EV3State state,
                  const IterationObserver& observer) {
  config.validate();
  validate_arms(arms, env.teachers);
  const auto pass = static_cast<std::uint64_t>(state.pass_index);
  for (std::size_t i = 0; i < config.iterations; ++i) {
    const std::uint64_t t = state.t + 1;
    std::vector<std::uint64_t> seeds(arms.size());
    for (std::size_t a = 0; a < arms.size(); ++a) seeds[a] = derive_seed(config.seed, {pass, t, a, kExploreTag});
    auto candidates = explore(env, state, arms, seeds, config.parallel_arms);
    const Batch batch = draw_assess_batch(env, config, derive_seed(config.seed, {pass, t, kAssessTag}));
    const AssessResult assessed = assess(env, state, std::move(candidates), batch);
    state = adapt(env, std::move(state), assessed, config, arms);
    if (observer) observer(state, state.trace.back());
  }
  return state;
}

RunTrace run(const Ev3Env& env, const Ev3Config& config, std::span<const Arm> arms, const GraphSpec& spec,
             const ParameterSet& params, const IterationObserver& observer) {
  EV3State state = run_from(env, config, arms, init_state(env, config, arms, spec, params), observer);
  return RunTrace{std::move(state.trace), std::move(state.size_collection), std::move(state.snapshot),
                  state.cum_steps};
}

std::vector<Arm> sat_arms(const Arm& arm_template, const std::vector<std::string>& student_teachers) {
  std::vector<Arm> arms{arm_template};
  for (const auto& id : student_teachers) {
    Arm a = arm_template;
    a.loss.teacher_id = id;
    arms.push_back(std::move(a));
  }
  return arms;
}

RunTrace run_student_as_teacher(const DataSplit& train, const DataSplit& assess_split,
                                TeacherRegistry& teachers, const SatConfig& config, const GraphSpec& spec,
                                const ParameterSet& params, const IterationObserver& observer) {
  if (config.passes < 1) throw ContractError("student-as-teacher: passes must be >= 1");
  config.arm_template.validate();
  if (config.arm_template.loss.kind != LossKind::KD) {
    throw ContractError("student-as-teacher: template arm must distill");
  }
  const Ev3Env env{train, assess_split, teachers};

  RunTrace out;
  std::map<int, Snapshot> collection;
  PassStart start;
  for (int pass = 1; pass <= config.passes; ++pass) {
    std::vector<std::string> students;
    for (const auto& [depth, snap] : collection) {
      const std::string id = "student-p" + std::to_string(pass) + "-d" + std::to_string(depth);
      teachers.add(id, snap.spec, snap.params, train);
      students.push_back(id);
    }
    const std::vector<Arm> arms = sat_arms(config.arm_template, students);
    Ev3Config pass_config = config.ev3;
    pass_config.iterations = config.pass_budget_steps / steps_per_iteration(arms);

    start.pass_index = pass;
    EV3State state = init_state(env, pass_config, arms, spec, params, start);
    for (const auto& [depth, snap] : collection) offer(state.size_collection, snap);
    state = run_from(env, pass_config, arms, std::move(state), observer);

    collection = state.size_collection;
    out.rows.insert(out.rows.end(), state.trace.begin(), state.trace.end());
    out.final_snapshot = state.snapshot;
    start.t = state.t;
    start.cum_steps = state.cum_steps;
  }
  out.size_collection = std::move(collection);
  out.cum_steps = start.cum_steps;
  return out;
}

}  // namespace ev3
