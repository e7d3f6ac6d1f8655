#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "ev3/config.hpp"
#include "ev3/data.hpp"
#include "ev3/harness.hpp"
#include "ev3/model.hpp"
#include "ev3/morphism.hpp"
#include "ev3/ztest.hpp"

namespace py = pybind11;
using namespace ev3;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0));
  const auto c = static_cast<std::size_t>(a.shape(1));
  return Tensor(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::dict regime_dict(const RegimeResult& r) {
  py::dict d;
  d["regime"] = r.regime;
  d["cum_steps"] = r.cum_steps;
  d["expansions"] = r.expansions;
  d["rows"] = r.rows.size();
  py::list coll;
  for (const auto& s : r.collection) {
    py::dict c;
    c["depth"] = s.depth;
    c["param_count"] = s.param_count;
    c["val_acc"] = s.val_acc;
    c["train_err"] = s.train_err;
    c["test_err"] = s.test_err;
    coll.append(c);
  }
  d["collection"] = coll;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ev3, m) {
  m.doc() = "Bindings for the ev3 core library";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CalibrationError>(m, "CalibrationError", PyExc_RuntimeError);

  py::class_<StageSpec>(m, "StageSpec")
      .def(py::init([](int width, int blocks) { return StageSpec{width, blocks}; }), py::arg("width"),
           py::arg("block_count"))
      .def_readwrite("width", &StageSpec::width)
      .def_readwrite("block_count", &StageSpec::block_count);

  py::class_<GraphSpec>(m, "GraphSpec")
      .def(py::init([](int input_dim, int num_classes, std::vector<StageSpec> stages) {
             GraphSpec s{input_dim, num_classes, std::move(stages)};
             s.validate();
             return s;
           }),
           py::arg("input_dim"), py::arg("num_classes"), py::arg("stages"))
      .def_readonly("input_dim", &GraphSpec::input_dim)
      .def_readonly("num_classes", &GraphSpec::num_classes)
      .def_readonly("stages", &GraphSpec::stages)
      .def("depth", &GraphSpec::depth)
      .def("block_string", &GraphSpec::block_string)
      .def("__eq__", [](const GraphSpec& a, const GraphSpec& b) { return a == b; })
      .def("__repr__", [](const GraphSpec& s) { return "GraphSpec" + s.block_string(); });

  py::class_<ParameterSet>(m, "ParameterSet")
      .def("__len__", &ParameterSet::size)
      .def("scalar_count", &ParameterSet::scalar_count)
      .def("__eq__", [](const ParameterSet& a, const ParameterSet& b) { return a == b; })
      .def("save", [](const ParameterSet& p, const std::string& path) { save_params(path, p); })
      .def_static("load", &load_params);

  m.def("init_params", &init_params, py::arg("spec"), py::arg("seed"));
  m.def("param_count", &param_count, py::arg("spec"));
  m.def(
      "forward", [](const GraphSpec& s, const ParameterSet& p, const Array& x) { return to_array(forward(s, p, to_tensor(x))); },
      py::arg("spec"), py::arg("params"), py::arg("inputs"));
  m.def("deepen", &deepen, py::arg("spec"), py::arg("params"), py::arg("seed"), py::arg("noise") = 0.0);
  m.def("size_ladder", &size_ladder, py::arg("base"), py::arg("steps"));

  m.def("z_critical", &z_critical, py::arg("alpha"));
  m.def(
      "z_score",
      [](std::size_t na, std::size_t ca, std::size_t nb, std::size_t cb) {
        return z_score(EvalRecord::from_counts(na, ca), EvalRecord::from_counts(nb, cb));
      },
      py::arg("n_a"), py::arg("correct_a"), py::arg("n_b"), py::arg("correct_b"));
  m.def(
      "significantly_better",
      [](std::size_t na, std::size_t ca, std::size_t nb, std::size_t cb, double alpha) {
        return significantly_better(EvalRecord::from_counts(na, ca), EvalRecord::from_counts(nb, cb), alpha);
      },
      py::arg("n_a"), py::arg("correct_a"), py::arg("n_b"), py::arg("correct_b"), py::arg("alpha") = 0.95);

  m.def("preset", [](const std::string& name) { return to_text(preset(name)); }, py::arg("name"),
        "Config text of a named preset (desk or smoke).");
  m.def("normalize_config", [](const std::string& text) { return to_text(parse_config_text(text)); },
        py::arg("text"));

  m.def(
      "generate_dataset",
      [](const std::string& config_text) {
        const ExperimentConfig c = parse_config_text(config_text);
        const Dataset ds = gen_dataset(c.dataset);
        return py::make_tuple(to_array(ds.features), ds.labels);
      },
      py::arg("config"), "Features and labels of the configured dataset.");

  m.def(
      "run",
      [](const std::string& config_text, std::optional<std::vector<std::string>> regimes,
         std::optional<std::uint64_t> seed, std::optional<std::string> out_dir) {
        ExperimentConfig c = parse_config_text(config_text);
        if (regimes) c.regimes = *regimes;
        if (seed) c.seed = *seed;
        c.validate();
        ExperimentResult result;
        {
          py::gil_scoped_release release;
          result = run_experiment(c);
          if (out_dir) emit_results(result, *out_dir);
        }
        py::dict d;
        d["teacher_train_acc"] = result.teacher.train_acc;
        d["teacher_test_acc"] = result.teacher.test_acc;
        py::list regs;
        for (const auto& r : result.regimes) regs.append(regime_dict(r));
        d["regimes"] = regs;
        d["trace_csv"] = trace_csv(result.regimes);
        d["pareto_csv"] = pareto_csv(result.regimes);
        d["summary"] = summary_text(result);
        return d;
      },
      py::arg("config"), py::arg("regimes") = py::none(), py::arg("seed") = py::none(),
      py::arg("out_dir") = py::none(), "Runs an experiment; optionally writes the result files.");
}
