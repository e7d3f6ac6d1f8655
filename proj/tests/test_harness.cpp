#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ev3/config.hpp"
#include "ev3/harness.hpp"

using namespace ev3;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

/// Smallest config that still exercises every regime.
ExperimentConfig micro() {
  ExperimentConfig c = smoke_preset();
  c.dataset.n = 600;
  c.teacher.steps = 150;
  c.teacher.floor = 0.3;
  c.steps_per_size = 60;
  c.ev3.steps_per_iteration = 10;
  c.ev3.patience = 2;
  c.ev3.assess_batch = 64;
  c.train_eval_rows = 128;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ev3-test-" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config text round trip") {
  for (const char* name : {"desk", "smoke"}) {
    const ExperimentConfig c = preset(name);
    const std::string text = to_text(c);
    const ExperimentConfig back = parse_config_text(text);
    CHECK(to_text(back) == text);
  }
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config_text("nonsense.key=1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("ev3.alpha=0.4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("ev3.alpha=1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("budget.steps_per_size=0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("run.regimes=vanilla,bogus\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("run.regimes=\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("ev3.patience=abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(preset("huge"), ConfigError);
  CHECK(parse_regimes("ev3_sat,vanilla") == std::vector<std::string>{"ev3_sat", "vanilla"});
  const ExperimentConfig c = parse_config_text("# comment\n\nrun.seed = 9\nstudent.widths=4,5,6\n");
  CHECK(c.seed == 9);
  CHECK(c.base_spec().stages.size() == 3);
}

TEST_CASE("ladder and budget") {
  const ExperimentConfig c = desk_preset();
  const auto ladder = c.ladder();
  REQUIRE(ladder.size() == 4);
  CHECK(ladder.front().block_string() == "(1,1)");
  CHECK(ladder.back().block_string() == "(4,4)");
  CHECK(c.regime_budget() == 4 * c.steps_per_size);
}

TEST_CASE("teacher calibration failure") {
  ExperimentConfig c = micro();
  c.teacher.floor = 1.01;
  const PreparedData data = prepare_data(c);
  CHECK_THROWS_AS(train_teacher(c, data), CalibrationError);
}

TEST_CASE("separable data gives a strong, reproducible teacher") {
  ExperimentConfig c = micro();
  c.dataset.noise = 0.0;
  c.dataset.clusters_per_class = 1;
  c.teacher.steps = 400;
  c.teacher.floor = 0.99;
  const PreparedData data = prepare_data(c);
  const TeacherResult t = train_teacher(c, data);
  CHECK(t.test_acc >= 0.99);
  CHECK(train_teacher(c, data).params == t.params);
}

TEST_CASE("regimes: structure, budgets and emitted files") {
  const ExperimentConfig c = micro();
  const PreparedData data = prepare_data(c);
  const ExperimentResult result = run_experiment(c, data);
  const std::size_t sizes = c.ladder().size();
  REQUIRE(result.regimes.size() == 4);

  const auto& vanilla = result.regimes[0];
  const auto& morph = result.regimes[1];
  const auto& base = result.regimes[2];
  const auto& sat = result.regimes[3];
  CHECK(vanilla.expansions == 0);
  CHECK(vanilla.pareto.size() == sizes);
  CHECK(morph.expansions == sizes - 1);
  CHECK(base.expansions <= sizes - 1);

  // fixed schedule: one sub-trace per size, expansions at the size boundaries
  const std::size_t per_size = c.steps_per_size / static_cast<std::size_t>(c.ev3.steps_per_iteration);
  for (std::size_t i = 0; i < morph.rows.size(); ++i) {
    CHECK(morph.rows[i].expanded == ((i + 1) % per_size == 0 && i + 1 < morph.rows.size()));
    CHECK(vanilla.rows[i].depth == c.ladder()[i / per_size].depth());
  }

  // budget fairness within one EV3 iteration
  const auto spi = static_cast<std::size_t>(c.ev3.steps_per_iteration);
  for (const auto* r : {&vanilla, &morph, &base}) {
    CHECK(r->cum_steps <= c.regime_budget());
    CHECK(c.regime_budget() - r->cum_steps < spi);
  }
  std::size_t pass1 = 0;
  for (const auto& row : sat.rows)
    if (row.pass == 1) pass1 = row.cum_steps;
  CHECK(pass1 == base.cum_steps);

  for (const auto& r : result.regimes) {
    for (std::size_t i = 1; i < r.rows.size(); ++i) {
      CHECK(r.rows[i].t > r.rows[i - 1].t);
      CHECK(r.rows[i].cum_steps >= r.rows[i - 1].cum_steps);
    }
  }

  const fs::path out = scratch("emit");
  emit_results(result, out.string());
  const std::string trace = slurp(out / "trace.csv");
  const std::string pareto = slurp(out / "pareto.csv");
  CHECK(trace.rfind(std::string(kTraceHeader) + "\n", 0) == 0);
  CHECK(pareto.rfind(std::string(kParetoHeader) + "\n", 0) == 0);
  const auto header = split_line(kTraceHeader);
  const std::vector<std::string> leading{"regime", "seed", "t", "depth", "param_count", "train_err",
                                         "val_err", "test_err", "arm_id", "accepted", "expanded", "cum_steps"};
  CHECK(std::vector<std::string>(header.begin(), header.begin() + 12) == leading);

  std::stringstream ps(pareto);
  std::string line;
  std::getline(ps, line);
  std::size_t rows = 0;
  while (std::getline(ps, line)) {
    CHECK(split_line(line).size() == 4);
    ++rows;
  }
  CHECK(rows == 4 * sizes);
  std::stringstream ts(trace);
  std::getline(ts, line);
  while (std::getline(ts, line)) CHECK(split_line(line).size() == header.size());

  CHECK(fs::exists(out / "summary.txt"));
  CHECK(load_params((out / "teacher.params").string()) == result.teacher.params);

  emit_results(result, out.string());
  CHECK(slurp(out / "trace.csv") == trace);
  CHECK(slurp(out / "pareto.csv") == pareto);

  const ExperimentResult again = run_experiment(c, data);
  CHECK(trace_csv(again.regimes) == trace);
  CHECK(pareto_csv(again.regimes) == pareto);
  const ExperimentResult threaded = run_experiment(c, data, true);
  CHECK(trace_csv(threaded.regimes) == trace);

  fs::remove_all(out);
}

TEST_CASE("emit with no regimes is an error") {
  ExperimentResult empty;
  CHECK_THROWS_AS(emit_results(empty, scratch("none").string()), ContractError);
}

TEST_CASE("float formatting") {
  CHECK(format_float(0.1) == "0.1");
  CHECK(format_float(1.0 / 3.0) == "0.333333333");
  CHECK(format_float(std::nan("")) == "nan");
  CHECK(format_float(0.0) == "0");
}
