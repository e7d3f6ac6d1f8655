#include "ev3/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "ev3/morphism.hpp"
#include "ev3/rng.hpp"

namespace ev3 {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Arm student_arm(const ExperimentConfig& config) {
  Arm arm;
  arm.loss = LossSpec::kd("teacher", config.student.temperature);
  arm.optimizer = config.student.optimizer;
  arm.sampler = config.student.sampler;
  arm.steps_per_iteration = config.ev3.steps_per_iteration;
  arm.batch_size = config.student.batch_size;
  return arm;
}

Ev3Config engine_config(const ExperimentConfig& config) {
  Ev3Config e;
  e.patience = config.ev3.patience;
  e.alpha = config.ev3.alpha;
  e.assess_batch = config.ev3.assess_batch;
  e.max_depth = config.ladder().back().depth();
  e.morph_noise = config.ev3.morph_noise;
  e.seed = derive_seed(config.seed, {tag_of("ev3")});
  return e;
}

/// Best test error among the snapshots seen at each ladder depth.
std::vector<ParetoRow> snapshot_pareto(const std::string& regime, const std::vector<TraceRow>& rows,
                                       const std::vector<GraphSpec>& ladder) {
  std::map<int, double> best;
  for (const auto& r : rows) {
    auto it = best.find(r.depth);
    if (it == best.end() || r.test_err < it->second) best[r.depth] = r.test_err;
  }
  std::vector<ParetoRow> out;
  for (const auto& spec : ladder) {
    auto it = best.find(spec.depth());
    out.push_back({regime, spec.depth(), param_count(spec), it == best.end() ? kNaN : it->second});
  }
  return out;
}

/// Trains ladder sizes on a fixed schedule. With `grow` the model is carried
/// over and deepened between sizes; without it every size starts fresh.
RegimeResult fixed_schedule(const std::string& regime, bool grow, const ExperimentConfig& config,
                            const PreparedData& data, const TeacherRegistry& registry) {
  RegimeResult out;
  out.regime = regime;
  const auto ladder = config.ladder();
  const Arm arm = student_arm(config);
  const std::uint64_t regime_tag = tag_of(regime);
  const auto chunk = static_cast<std::size_t>(config.ev3.steps_per_iteration);

  GraphSpec spec = ladder.front();
  ParameterSet params = initial_student(config);
  std::size_t t = 0;
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    if (!grow) {
      spec = ladder[k];
      params = k == 0 ? initial_student(config) : init_params(spec, derive_seed(config.seed, {regime_tag, k}));
    }
    Optimizer opt(arm.optimizer);
    ErrorTriple errs{};
    for (std::size_t done = 0; done < config.steps_per_size;) {
      const std::size_t steps = std::min(chunk, config.steps_per_size - done);
      Rng rng(derive_seed(config.seed, {regime_tag, k, t}));
      params = descend(data.splits.train, registry, spec, std::move(params), arm, opt, static_cast<int>(steps), rng);
      done += steps;
      out.cum_steps += steps;
      ++t;
      errs = measure_errors(spec, params, data);
      TraceRow row;
      row.regime = regime;
      row.seed = config.seed;
      row.t = t;
      row.depth = spec.depth();
      row.param_count = param_count(spec);
      row.train_err = errs.train;
      row.val_err = errs.val;
      row.test_err = errs.test;
      row.cum_steps = out.cum_steps;
      out.rows.push_back(row);
    }
    out.pareto.push_back({regime, spec.depth(), param_count(spec), errs.test});
    out.collection.push_back({spec.depth(), param_count(spec), 1.0 - errs.val, errs.train, errs.test});
    if (grow && k + 1 < ladder.size()) {
      auto [grown, grown_params] = deepen(spec, params, derive_seed(config.seed, {regime_tag, tag_of("expand"), k}),
                                          config.ev3.morph_noise);
      spec = std::move(grown);
      params = std::move(grown_params);
      out.rows.back().expanded = true;
      out.rows.back().depth = spec.depth();
      out.rows.back().param_count = param_count(spec);
      ++out.expansions;
    }
  }
  return out;
}

/// Trace rows and size summaries for an EV3 run.
class Ev3Recorder {
 public:
  Ev3Recorder(std::string regime, const ExperimentConfig& config, const PreparedData& data)
      : regime_(std::move(regime)), config_(config), data_(data) {}

  IterationObserver observer() {
    return [this](const EV3State& state, const IterationRecord& rec) {
      if (!have_errs_ || rec.snapshot_updated || rec.expanded || rec.pass != last_pass_) {
        errs_ = measure_errors(state.snapshot.spec, state.snapshot.params, data_);
        have_errs_ = true;
        last_pass_ = rec.pass;
      }
      TraceRow row;
      row.regime = regime_;
      row.seed = config_.seed;
      row.t = rec.t;
      row.depth = rec.depth;
      row.param_count = rec.param_count;
      row.train_err = errs_.train;
      row.val_err = 1.0 - rec.snapshot_accuracy;
      row.test_err = errs_.test;
      row.arm_id = rec.arm_id;
      row.accepted = rec.accepted;
      row.expanded = rec.expanded;
      row.cum_steps = rec.cum_steps;
      row.pass = rec.pass;
      row.assess_n = rec.assess_n;
      row.incumbent_correct = rec.incumbent_correct;
      row.candidate_correct = rec.candidate_correct;
      rows_.push_back(row);
    };
  }

  RegimeResult finish(const RunTrace& trace) {
    RegimeResult out;
    out.regime = regime_;
    out.rows = std::move(rows_);
    out.cum_steps = trace.cum_steps;
    for (const auto& r : out.rows) out.expansions += r.expanded ? 1 : 0;
    out.pareto = snapshot_pareto(regime_, out.rows, config_.ladder());
    for (const auto& [depth, snap] : trace.size_collection) {
      const ErrorTriple e = measure_errors(snap.spec, snap.params, data_);
      out.collection.push_back({depth, param_count(snap.spec), snap.eval.accuracy(), e.train, e.test});
    }
    return out;
  }

 private:
  std::string regime_;
  const ExperimentConfig& config_;
  const PreparedData& data_;
  std::vector<TraceRow> rows_;
  ErrorTriple errs_{};
  bool have_errs_ = false;
  int last_pass_ = 0;
};

const DataSplit& assess_split(const ExperimentConfig& config, const PreparedData& data) {
  return config.ev3.assess_on_train ? data.splits.train : data.splits.val;
}

RegimeResult ev3_base(const ExperimentConfig& config, const PreparedData& data, const TeacherRegistry& registry) {
  const Ev3Env env{data.splits.train, assess_split(config, data), registry};
  const std::vector<Arm> arms{student_arm(config)};
  Ev3Config ec = engine_config(config);
  ec.iterations = config.regime_budget() / steps_per_iteration(arms);
  Ev3Recorder recorder("ev3_base", config, data);
  const RunTrace trace = run(env, ec, arms, config.base_spec(), initial_student(config), recorder.observer());
  return recorder.finish(trace);
}

RegimeResult ev3_sat(const ExperimentConfig& config, const PreparedData& data, TeacherRegistry registry) {
  SatConfig sc;
  sc.ev3 = engine_config(config);
  sc.passes = config.ev3.passes;
  sc.pass_budget_steps = config.regime_budget();
  sc.arm_template = student_arm(config);
  Ev3Recorder recorder("ev3_sat", config, data);
  const RunTrace trace = run_student_as_teacher(data.splits.train, assess_split(config, data), registry, sc,
                                                config.base_spec(), initial_student(config), recorder.observer());
  return recorder.finish(trace);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << content;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  config.validate();
  PreparedData out;
  out.dataset = gen_dataset(config.dataset);
  out.splits = split(out.dataset, config.split_spec);
  const std::size_t rows = std::min(config.train_eval_rows, out.splits.train.size());
  std::vector<std::size_t> idx(rows);
  for (std::size_t i = 0; i < rows; ++i) idx[i] = i;
  out.train_eval = gather(out.splits.train, std::move(idx));
  return out;
}

ErrorTriple measure_errors(const GraphSpec& spec, const ParameterSet& params, const PreparedData& data) {
  const auto& s = data.splits;
  return {evaluate(spec, params, data.train_eval.features, data.train_eval.labels).error(),
          evaluate(spec, params, s.val.features, s.val.labels).error(),
          evaluate(spec, params, s.test.features, s.test.labels).error()};
}

TeacherResult train_teacher(const ExperimentConfig& config, const PreparedData& data) {
  TeacherResult out;
  out.spec = config.ladder().back();
  Arm arm;
  arm.loss = LossSpec::ce();
  arm.optimizer = config.teacher.optimizer;
  arm.batch_size = config.teacher.batch_size;
  Optimizer opt(arm.optimizer);
  Rng rng(derive_seed(config.seed, {tag_of("teacher-batches")}));
  const TeacherRegistry none;
  out.params = descend(data.splits.train, none, out.spec,
                       init_params(out.spec, derive_seed(config.seed, {tag_of("teacher-init")})), arm, opt,
                       config.teacher.steps, rng);
  const auto& s = data.splits;
  out.train_acc = evaluate(out.spec, out.params, s.train.features, s.train.labels).accuracy();
  out.test_acc = evaluate(out.spec, out.params, s.test.features, s.test.labels).accuracy();
  if (out.test_acc < config.teacher.floor) {
    throw CalibrationError("teacher test accuracy " + format_float(out.test_acc) + " is below the floor " +
                           format_float(config.teacher.floor));
  }
  return out;
}

TeacherRegistry make_registry(const TeacherResult& teacher, const PreparedData& data) {
  TeacherRegistry r;
  r.add("teacher", teacher.spec, teacher.params, data.splits.train);
  return r;
}

ParameterSet initial_student(const ExperimentConfig& config) {
  return init_params(config.base_spec(), derive_seed(config.seed, {tag_of("student-init")}));
}

RegimeResult run_regime(const std::string& regime, const ExperimentConfig& config, const PreparedData& data,
                        const TeacherResult& teacher) {
  config.validate();
  const TeacherRegistry registry = make_registry(teacher, data);
  if (regime == "vanilla") return fixed_schedule(regime, false, config, data, registry);
  if (regime == "morphism") return fixed_schedule(regime, true, config, data, registry);
  if (regime == "ev3_base") return ev3_base(config, data, registry);
  if (regime == "ev3_sat") return ev3_sat(config, data, registry);
  throw ConfigError("unknown regime '" + regime + "'");
}

ExperimentResult run_experiment(const ExperimentConfig& config, const PreparedData& data, bool parallel) {
  ExperimentResult out;
  out.config = config;
  out.teacher = train_teacher(config, data);
  out.regimes.resize(config.regimes.size());
  if (parallel && config.regimes.size() > 1) {
    std::vector<std::exception_ptr> errors(config.regimes.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < config.regimes.size(); ++i) {
      workers.emplace_back([&, i] {
        try {
          out.regimes[i] = run_regime(config.regimes[i], config, data, out.teacher);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t i = 0; i < config.regimes.size(); ++i) {
      out.regimes[i] = run_regime(config.regimes[i], config, data, out.teacher);
    }
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, bool parallel) {
  const PreparedData data = prepare_data(config);
  return run_experiment(config, data, parallel);
}

std::string format_float(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string trace_csv(const std::vector<RegimeResult>& regimes) {
  std::ostringstream os;
  os << kTraceHeader << '\n';
  for (const auto& r : regimes) {
    for (const auto& row : r.rows) {
      os << row.regime << ',' << row.seed << ',' << row.t << ',' << row.depth << ',' << row.param_count << ','
         << format_float(row.train_err) << ',' << format_float(row.val_err) << ',' << format_float(row.test_err)
         << ',' << row.arm_id << ',' << (row.accepted ? 1 : 0) << ',' << (row.expanded ? 1 : 0) << ','
         << row.cum_steps << ',' << row.pass << ',' << row.assess_n << ',' << row.incumbent_correct << ','
         << row.candidate_correct << '\n';
    }
  }
  return os.str();
}

std::string pareto_csv(const std::vector<RegimeResult>& regimes) {
  std::ostringstream os;
  os << kParetoHeader << '\n';
  for (const auto& r : regimes) {
    for (const auto& p : r.pareto) {
      os << p.regime << ',' << p.depth << ',' << p.param_count << ',' << format_float(p.best_test_err) << '\n';
    }
  }
  return os.str();
}

std::string summary_text(const ExperimentResult& result) {
  const auto& c = result.config;
  std::ostringstream os;
  os << "ev3 experiment summary\n";
  os << "seed=" << c.seed << '\n';
  os << "dataset kind=" << dataset_kind_name(c.dataset.kind) << " classes=" << c.dataset.num_classes
     << " dim=" << c.dataset.dim << " n=" << c.dataset.n << " noise=" << format_float(c.dataset.noise) << '\n';
  os << "ladder";
  for (const auto& s : c.ladder()) os << ' ' << s.block_string() << ':' << param_count(s);
  os << '\n';
  os << "teacher depth=" << result.teacher.spec.depth() << " param_count=" << param_count(result.teacher.spec)
     << " train_acc=" << format_float(result.teacher.train_acc) << " test_acc=" << format_float(result.teacher.test_acc)
     << '\n';
  for (const auto& r : result.regimes) {
    os << "regime=" << r.regime << " cum_steps=" << r.cum_steps << " expansions=" << r.expansions << '\n';
    for (const auto& s : r.collection) {
      os << "collection regime=" << r.regime << " depth=" << s.depth << " param_count=" << s.param_count
         << " val_acc=" << format_float(s.val_acc) << " train_err=" << format_float(s.train_err)
         << " test_err=" << format_float(s.test_err) << '\n';
    }
  }
  return os.str();
}

void emit_results(const ExperimentResult& result, const std::string& out_dir) {
  if (result.regimes.empty()) throw ContractError("emit_results: no regime traces to write");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_file(dir / "trace.csv", trace_csv(result.regimes));
  write_file(dir / "pareto.csv", pareto_csv(result.regimes));
  write_file(dir / "summary.txt", summary_text(result));
  save_params((dir / "teacher.params").string(), result.teacher.params);
}

}  // namespace ev3
