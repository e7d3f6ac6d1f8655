#include "ev3/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "ev3/morphism.hpp"

namespace ev3 {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string optimizer_kind_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::SGD: return "sgd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::Adam: return "adam";
  }
  return "?";
}

OptimizerKind optimizer_kind_from(const std::string& s) {
  if (s == "sgd") return OptimizerKind::SGD;
  if (s == "momentum") return OptimizerKind::Momentum;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  if constexpr (std::is_same_v<T, double>) {
    try {
      std::size_t used = 0;
      const double d = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing");
      return d;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
    }
  } else {
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw ConfigError("key '" + key + "': expected an integer, got '" + value + "'");
    }
    return out;
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + value + "'");
}

/// Binds each dotted key to a field for both reading and writing.
struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

std::vector<Field> fields() {
  std::vector<Field> f;
  auto num = [&f](std::string key, auto getter) {
    using T = std::remove_reference_t<decltype(getter(std::declval<ExperimentConfig&>()))>;
    f.push_back({key,
                 [getter](const ExperimentConfig& c) {
                   auto& v = getter(const_cast<ExperimentConfig&>(c));
                   if constexpr (std::is_same_v<T, double>) return fmt_double(v);
                   else return std::to_string(v);
                 },
                 [getter, key](ExperimentConfig& c, const std::string& s) { getter(c) = parse_number<T>(key, s); }});
  };
  auto flag = [&f](std::string key, auto getter) {
    f.push_back({key, [getter](const ExperimentConfig& c) {
                   return std::string(getter(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
                 },
                 [getter, key](ExperimentConfig& c, const std::string& s) { getter(c) = parse_bool(key, s); }});
  };
  auto optimizer = [&f, &num](const std::string& prefix, auto getter) {
    f.push_back({prefix + ".optimizer",
                 [getter](const ExperimentConfig& c) {
                   return optimizer_kind_name(getter(const_cast<ExperimentConfig&>(c)).kind);
                 },
                 [getter](ExperimentConfig& c, const std::string& s) { getter(c).kind = optimizer_kind_from(s); }});
    num(prefix + ".lr", [getter](ExperimentConfig& c) -> double& { return getter(c).learning_rate; });
    num(prefix + ".momentum", [getter](ExperimentConfig& c) -> double& { return getter(c).momentum; });
    num(prefix + ".beta1", [getter](ExperimentConfig& c) -> double& { return getter(c).beta1; });
    num(prefix + ".beta2", [getter](ExperimentConfig& c) -> double& { return getter(c).beta2; });
    num(prefix + ".epsilon", [getter](ExperimentConfig& c) -> double& { return getter(c).epsilon; });
  };

  f.push_back({"dataset.kind", [](const ExperimentConfig& c) { return std::string(dataset_kind_name(c.dataset.kind)); },
               [](ExperimentConfig& c, const std::string& s) { c.dataset.kind = dataset_kind_from_name(s); }});
  num("dataset.num_classes", [](ExperimentConfig& c) -> int& { return c.dataset.num_classes; });
  num("dataset.dim", [](ExperimentConfig& c) -> int& { return c.dataset.dim; });
  num("dataset.n", [](ExperimentConfig& c) -> std::size_t& { return c.dataset.n; });
  num("dataset.noise", [](ExperimentConfig& c) -> double& { return c.dataset.noise; });
  num("dataset.clusters_per_class", [](ExperimentConfig& c) -> int& { return c.dataset.clusters_per_class; });
  num("dataset.latent_dim", [](ExperimentConfig& c) -> int& { return c.dataset.latent_dim; });
  num("dataset.seed", [](ExperimentConfig& c) -> std::uint64_t& { return c.dataset.seed; });

  num("split.train", [](ExperimentConfig& c) -> double& { return c.split_spec.train; });
  num("split.val", [](ExperimentConfig& c) -> double& { return c.split_spec.val; });
  num("split.test", [](ExperimentConfig& c) -> double& { return c.split_spec.test; });
  num("split.seed", [](ExperimentConfig& c) -> std::uint64_t& { return c.split_spec.seed; });

  num("teacher.steps", [](ExperimentConfig& c) -> int& { return c.teacher.steps; });
  num("teacher.batch_size", [](ExperimentConfig& c) -> std::size_t& { return c.teacher.batch_size; });
  optimizer("teacher", [](ExperimentConfig& c) -> OptimizerSpec& { return c.teacher.optimizer; });
  num("teacher.floor", [](ExperimentConfig& c) -> double& { return c.teacher.floor; });

  f.push_back({"student.widths",
               [](const ExperimentConfig& c) {
                 std::string out;
                 for (std::size_t i = 0; i < c.student.widths.size(); ++i) {
                   if (i) out += ",";
                   out += std::to_string(c.student.widths[i]);
                 }
                 return out;
               },
               [](ExperimentConfig& c, const std::string& s) {
                 c.student.widths.clear();
                 std::stringstream ss(s);
                 std::string item;
                 while (std::getline(ss, item, ',')) c.student.widths.push_back(parse_number<int>("student.widths", trim(item)));
               }});
  num("student.base_blocks", [](ExperimentConfig& c) -> int& { return c.student.base_blocks; });
  num("student.ladder_steps", [](ExperimentConfig& c) -> int& { return c.student.ladder_steps; });
  num("student.temperature", [](ExperimentConfig& c) -> double& { return c.student.temperature; });
  num("student.batch_size", [](ExperimentConfig& c) -> std::size_t& { return c.student.batch_size; });
  optimizer("student", [](ExperimentConfig& c) -> OptimizerSpec& { return c.student.optimizer; });
  f.push_back({"student.sampler", [](const ExperimentConfig& c) { return std::string(sampler_name(c.student.sampler)); },
               [](ExperimentConfig& c, const std::string& s) { c.student.sampler = sampler_from_name(s); }});

  num("budget.steps_per_size", [](ExperimentConfig& c) -> std::size_t& { return c.steps_per_size; });

  num("ev3.patience", [](ExperimentConfig& c) -> int& { return c.ev3.patience; });
  num("ev3.alpha", [](ExperimentConfig& c) -> double& { return c.ev3.alpha; });
  num("ev3.steps_per_iteration", [](ExperimentConfig& c) -> int& { return c.ev3.steps_per_iteration; });
  num("ev3.assess_batch", [](ExperimentConfig& c) -> std::size_t& { return c.ev3.assess_batch; });
  num("ev3.passes", [](ExperimentConfig& c) -> int& { return c.ev3.passes; });
  flag("ev3.assess_on_train", [](ExperimentConfig& c) -> bool& { return c.ev3.assess_on_train; });
  num("ev3.morph_noise", [](ExperimentConfig& c) -> double& { return c.ev3.morph_noise; });

  num("report.train_eval_rows", [](ExperimentConfig& c) -> std::size_t& { return c.train_eval_rows; });
  f.push_back({"run.regimes",
               [](const ExperimentConfig& c) {
                 std::string out;
                 for (std::size_t i = 0; i < c.regimes.size(); ++i) out += (i ? "," : "") + c.regimes[i];
                 return out;
               },
               [](ExperimentConfig& c, const std::string& s) { c.regimes = parse_regimes(s); }});
  num("run.seed", [](ExperimentConfig& c) -> std::uint64_t& { return c.seed; });
  return f;
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    dataset.validate();
    split_spec.validate();
    teacher.optimizer.validate();
    student.optimizer.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (teacher.steps < 1 || teacher.batch_size < 1) throw ConfigError("teacher budget must be positive");
  if (student.widths.empty()) throw ConfigError("student.widths must list at least one stage");
  for (int w : student.widths)
    if (w < 1) throw ConfigError("student.widths entries must be >= 1");
  if (student.base_blocks < 1) throw ConfigError("student.base_blocks must be >= 1");
  if (student.ladder_steps < 0) throw ConfigError("student.ladder_steps must be >= 0");
  if (!(student.temperature > 0.0)) throw ConfigError("student.temperature must be positive");
  if (student.batch_size < 1) throw ConfigError("student.batch_size must be >= 1");
  if (steps_per_size < 1) throw ConfigError("budget.steps_per_size must be positive");
  if (ev3.patience < 1) throw ConfigError("ev3.patience must be >= 1");
  if (!(ev3.alpha > 0.5 && ev3.alpha < 1.0)) throw ConfigError("ev3.alpha must be in (0.5, 1)");
  if (ev3.steps_per_iteration < 1) throw ConfigError("ev3.steps_per_iteration must be >= 1");
  if (static_cast<std::size_t>(ev3.steps_per_iteration) > steps_per_size) {
    throw ConfigError("ev3.steps_per_iteration must not exceed budget.steps_per_size");
  }
  if (ev3.assess_batch < 1) throw ConfigError("ev3.assess_batch must be >= 1");
  if (ev3.passes < 1) throw ConfigError("ev3.passes must be >= 1");
  if (ev3.morph_noise < 0.0) throw ConfigError("ev3.morph_noise must be >= 0");
  if (train_eval_rows < 1) throw ConfigError("report.train_eval_rows must be >= 1");
  if (regimes.empty()) throw ConfigError("run.regimes must name at least one regime");
  for (const auto& r : regimes) {
    if (std::find(all_regimes().begin(), all_regimes().end(), r) == all_regimes().end()) {
      throw ConfigError("unknown regime '" + r + "'");
    }
  }
}

GraphSpec ExperimentConfig::base_spec() const {
  GraphSpec spec;
  spec.input_dim = dataset.dim;
  spec.num_classes = dataset.num_classes;
  for (int w : student.widths) spec.stages.push_back({w, student.base_blocks});
  return spec;
}

std::vector<GraphSpec> ExperimentConfig::ladder() const { return size_ladder(base_spec(), student.ladder_steps); }

ExperimentConfig desk_preset() {
  ExperimentConfig c;
  c.dataset.kind = DatasetKind::GaussianMixture;
  c.dataset.num_classes = 8;
  c.dataset.dim = 32;
  c.dataset.n = 20000;
  c.dataset.noise = 0.25;
  c.dataset.clusters_per_class = 16;
  c.dataset.latent_dim = 8;
  c.dataset.seed = 2024;
  c.split_spec = {0.2, 0.4, 0.4, 7};
  c.student.widths = {16, 16};
  c.student.optimizer = OptimizerSpec::adam(3e-3);
  c.ev3.patience = 30;
  c.ev3.assess_batch = 4096;
  return c;
}

ExperimentConfig smoke_preset() {
  ExperimentConfig c = desk_preset();
  c.dataset.n = 2000;
  c.dataset.noise = 0.2;
  c.dataset.clusters_per_class = 2;
  c.dataset.latent_dim = 4;
  c.split_spec = {0.8, 0.1, 0.1, 7};
  c.student.widths = {12, 12};
  c.student.ladder_steps = 2;
  c.student.optimizer = OptimizerSpec::adam(1e-3);
  c.teacher.steps = 600;
  c.teacher.floor = 0.5;
  c.steps_per_size = 200;
  c.ev3.patience = 3;
  c.ev3.steps_per_iteration = 20;
  c.ev3.assess_batch = 256;
  c.train_eval_rows = 512;
  return c;
}

ExperimentConfig preset(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "smoke") return smoke_preset();
  throw ConfigError("unknown preset '" + name + "' (expected desk or smoke)");
}

std::string to_text(const ExperimentConfig& config) {
  std::string out = "# ev3 experiment configuration (key=value, '#' starts a comment)\n";
  for (const Field& f : fields()) out += f.key + "=" + f.get(config) + "\n";
  return out;
}

ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig c = desk_preset();
  const auto table = fields();
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->set(c, value);
  }
  c.validate();
  return c;
}

ExperimentConfig parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  return parse_config(is);
}

std::vector<std::string> parse_regimes(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    if (std::find(all_regimes().begin(), all_regimes().end(), item) == all_regimes().end()) {
      throw ConfigError("unknown regime '" + item + "'");
    }
    if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty regime list");
  return out;
}

}  // namespace ev3
