#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ev3/config.hpp"
#include "ev3/data.hpp"
#include "ev3/engine.hpp"
#include "ev3/model.hpp"

namespace ev3 {

/// The teacher is too weak to distill from.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One line of trace.csv. For EV3 regimes the error columns describe the
/// current snapshot (val_err is its assess-batch error); for the fixed
/// schedules they describe the model being trained (val_err on the full
/// validation split).
struct TraceRow {
  std::string regime;
  std::uint64_t seed = 0;
  std::size_t t = 0;
  int depth = 0;
  std::size_t param_count = 0;
  double train_err = 0.0;
  double val_err = 0.0;
  double test_err = 0.0;
  int arm_id = 0;
  bool accepted = true;
  bool expanded = false;
  std::size_t cum_steps = 0;
  int pass = 1;
  std::size_t assess_n = 0;
  std::size_t incumbent_correct = 0;
  std::size_t candidate_correct = 0;
};

struct ParetoRow {
  std::string regime;
  int depth = 0;
  std::size_t param_count = 0;
  double best_test_err = 0.0;  // NaN when the regime never reached this size
};

/// The model a regime delivers at one size.
struct SizeSummary {
  int depth = 0;
  std::size_t param_count = 0;
  double val_acc = 0.0;
  double train_err = 0.0;
  double test_err = 0.0;
};

struct RegimeResult {
  std::string regime;
  std::vector<TraceRow> rows;
  std::vector<ParetoRow> pareto;
  std::vector<SizeSummary> collection;
  std::size_t cum_steps = 0;
  std::size_t expansions = 0;
};

struct TeacherResult {
  GraphSpec spec;
  ParameterSet params;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct PreparedData {
  Dataset dataset;
  SplitData splits;
  /// Fixed subset of the training split used for train_err.
  Batch train_eval;
};

struct ErrorTriple {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

PreparedData prepare_data(const ExperimentConfig& config);

/// Errors of a model on the train-eval subset and the full val/test splits.
/// Reporting only; never feeds a decision.
ErrorTriple measure_errors(const GraphSpec& spec, const ParameterSet& params, const PreparedData& data);

/// CE-trains the largest ladder model. Throws CalibrationError if its test
/// accuracy is below config.teacher.floor.
TeacherResult train_teacher(const ExperimentConfig& config, const PreparedData& data);

TeacherRegistry make_registry(const TeacherResult& teacher, const PreparedData& data);

/// The student parameters every growing regime starts from.
ParameterSet initial_student(const ExperimentConfig& config);

RegimeResult run_regime(const std::string& regime, const ExperimentConfig& config, const PreparedData& data,
                        const TeacherResult& teacher);

struct ExperimentResult {
  ExperimentConfig config;
  TeacherResult teacher;
  std::vector<RegimeResult> regimes;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const PreparedData& data, bool parallel = false);
ExperimentResult run_experiment(const ExperimentConfig& config, bool parallel = false);

inline const char* kTraceHeader =
    "regime,seed,t,depth,param_count,train_err,val_err,test_err,arm_id,accepted,expanded,cum_steps,"
    "pass,assess_n,incumbent_correct,candidate_correct";
inline const char* kParetoHeader = "regime,depth,param_count,best_test_err";

/// Floats with 9 significant digits; NaN as "nan".
std::string format_float(double v);

std::string trace_csv(const std::vector<RegimeResult>& regimes);
std::string pareto_csv(const std::vector<RegimeResult>& regimes);
std::string summary_text(const ExperimentResult& result);

/// Writes trace.csv, pareto.csv, summary.txt and teacher.params into
/// `out_dir` (created if missing). Rewriting the same result yields identical
/// bytes.
void emit_results(const ExperimentResult& result, const std::string& out_dir);

}  // namespace ev3
