#include "ev3/model.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "ev3/rng.hpp"

namespace ev3 {

namespace {

constexpr std::array<std::pair<ParamRole, std::string_view>, 10> kRoleNames{{
    {ParamRole::StemWeight, "stem-in"},
    {ParamRole::StemBias, "stem-bias"},
    {ParamRole::TransitionWeight, "transition"},
    {ParamRole::TransitionBias, "transition-bias"},
    {ParamRole::ProjIn, "proj-in"},
    {ParamRole::BiasIn, "bias-in"},
    {ParamRole::ProjOut, "proj-out"},
    {ParamRole::BiasOut, "bias-out"},
    {ParamRole::HeadWeight, "head"},
    {ParamRole::HeadBias, "head-bias"},
}};

bool is_bias(ParamRole r) {
  return r == ParamRole::StemBias || r == ParamRole::TransitionBias || r == ParamRole::BiasIn ||
         r == ParamRole::BiasOut || r == ParamRole::HeadBias;
}

std::uint64_t key_tag(const ParamKey& k) {
  return derive_seed(static_cast<std::uint64_t>(k.stage + 1),
                     {static_cast<std::uint64_t>(k.block + 1), static_cast<std::uint64_t>(k.role)});
}

}  // namespace

void GraphSpec::validate() const {
  if (input_dim < 1) throw ContractError("GraphSpec: input_dim must be >= 1");
  if (num_classes < 2) throw ContractError("GraphSpec: num_classes must be >= 2");
  if (stages.empty()) throw ContractError("GraphSpec: at least one stage required");
  for (const auto& s : stages) {
    if (s.width < 1) throw ContractError("GraphSpec: stage width must be >= 1");
    if (s.block_count < 1) throw ContractError("GraphSpec: stage block_count must be >= 1");
  }
}

int GraphSpec::depth() const {
  int d = 0;
  for (const auto& s : stages) d += s.block_count;
  return d;
}

std::string GraphSpec::block_string() const {
  std::string out = "(";
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(stages[i].block_count);
  }
  return out + ")";
}

std::string_view role_name(ParamRole role) {
  for (const auto& [r, name] : kRoleNames)
    if (r == role) return name;
  throw ContractError("unknown parameter role");
}

ParamRole role_from_name(std::string_view name) {
  for (const auto& [r, n] : kRoleNames)
    if (n == name) return r;
  throw ContractError("unknown parameter role name: " + std::string(name));
}

std::string ParamKey::to_string() const {
  return std::to_string(stage) + ":" + std::to_string(block) + ":" + std::string(role_name(role));
}

const Tensor& ParameterSet::at(const ParamKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ContractError("ParameterSet: missing key " + key.to_string());
  return it->second;
}

Tensor& ParameterSet::at(const ParamKey& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ContractError("ParameterSet: missing key " + key.to_string());
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [k, t] : entries_) n += t.size();
  return n;
}

bool ParameterSet::same_keys(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || !a->second.same_shape(b->second)) return false;
  }
  return true;
}

std::vector<std::pair<ParamKey, ParamShape>> parameter_layout(const GraphSpec& spec) {
  spec.validate();
  using R = ParamRole;
  std::vector<std::pair<ParamKey, ParamShape>> out;
  const auto w0 = static_cast<std::size_t>(spec.stages.front().width);
  out.push_back({{-1, -1, R::StemWeight}, {static_cast<std::size_t>(spec.input_dim), w0}});
  out.push_back({{-1, -1, R::StemBias}, {1, w0}});
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const int si = static_cast<int>(s);
    const auto w = static_cast<std::size_t>(spec.stages[s].width);
    if (s > 0) {
      const auto prev = static_cast<std::size_t>(spec.stages[s - 1].width);
      out.push_back({{si, -1, R::TransitionWeight}, {prev, w}});
      out.push_back({{si, -1, R::TransitionBias}, {1, w}});
    }
    for (int b = 0; b < spec.stages[s].block_count; ++b) {
      out.push_back({{si, b, R::ProjIn}, {w, w}});
      out.push_back({{si, b, R::BiasIn}, {1, w}});
      out.push_back({{si, b, R::ProjOut}, {w, w}});
      out.push_back({{si, b, R::BiasOut}, {1, w}});
    }
  }
  const int head_stage = static_cast<int>(spec.stages.size());
  const auto wl = static_cast<std::size_t>(spec.stages.back().width);
  const auto c = static_cast<std::size_t>(spec.num_classes);
  out.push_back({{head_stage, -1, R::HeadWeight}, {wl, c}});
  out.push_back({{head_stage, -1, R::HeadBias}, {1, c}});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

void check_params(const GraphSpec& spec, const ParameterSet& params) {
  const auto layout = parameter_layout(spec);
  if (layout.size() != params.size()) {
    throw ContractError("ParameterSet has " + std::to_string(params.size()) + " tensors, spec " +
                        spec.block_string() + " needs " + std::to_string(layout.size()));
  }
  for (const auto& [key, shape] : layout) {
    const Tensor& t = params.at(key);
    if (t.rows() != shape.rows || t.cols() != shape.cols) {
      throw ContractError("ParameterSet: " + key.to_string() + " has shape " + t.shape_string());
    }
  }
}

ParameterSet init_params(const GraphSpec& spec, std::uint64_t seed) {
  ParameterSet params;
  for (const auto& [key, shape] : parameter_layout(spec)) {
    Tensor t(shape.rows, shape.cols);
    if (!is_bias(key.role)) {
      const double bound = std::sqrt(6.0 / static_cast<double>(shape.rows));
      Rng rng(derive_seed(seed, {key_tag(key)}));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.values()) v = dist(rng);
    }
    params.set(key, std::move(t));
  }
  return params;
}

std::size_t param_count(const GraphSpec& spec) {
  std::size_t n = 0;
  for (const auto& [key, shape] : parameter_layout(spec)) n += shape.rows * shape.cols;
  return n;
}

Tensor forward(const GraphSpec& spec, const ParameterSet& params, const Tensor& inputs) {
  check_params(spec, params);
  if (inputs.cols() != static_cast<std::size_t>(spec.input_dim)) {
    throw ContractError("forward: inputs have " + std::to_string(inputs.cols()) +
                        " features, spec expects " + std::to_string(spec.input_dim));
  }
  using R = ParamRole;
  Tensor x = add_row(matmul(inputs, params.at({-1, -1, R::StemWeight})),
                     params.at({-1, -1, R::StemBias}));
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const int si = static_cast<int>(s);
    if (s > 0) {
      x = add_row(matmul(x, params.at({si, -1, R::TransitionWeight})),
                  params.at({si, -1, R::TransitionBias}));
    }
    for (int b = 0; b < spec.stages[s].block_count; ++b) {
      Tensor h = relu(add_row(matmul(x, params.at({si, b, R::ProjIn})), params.at({si, b, R::BiasIn})));
      x = add(x, add_row(matmul(h, params.at({si, b, R::ProjOut})), params.at({si, b, R::BiasOut})));
    }
  }
  const int hs = static_cast<int>(spec.stages.size());
  return add_row(matmul(x, params.at({hs, -1, R::HeadWeight})), params.at({hs, -1, R::HeadBias}));
}

BoundParams bind(ad::Tape& tape, const ParameterSet& params) {
  BoundParams out;
  for (const auto& [key, t] : params) out.vars.emplace(key, tape.leaf(t));
  return out;
}

ad::Var forward(const GraphSpec& spec, const BoundParams& params, ad::Var inputs) {
  spec.validate();
  if (inputs.value().cols() != static_cast<std::size_t>(spec.input_dim)) {
    throw ContractError("forward: input width does not match spec");
  }
  using R = ParamRole;
  auto p = [&](int stage, int block, R role) {
    auto it = params.vars.find({stage, block, role});
    if (it == params.vars.end()) {
      throw ContractError("forward: missing bound key " + ParamKey{stage, block, role}.to_string());
    }
    return it->second;
  };
  ad::Var x = ad::add_row(ad::matmul(inputs, p(-1, -1, R::StemWeight)), p(-1, -1, R::StemBias));
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const int si = static_cast<int>(s);
    if (s > 0) {
      x = ad::add_row(ad::matmul(x, p(si, -1, R::TransitionWeight)), p(si, -1, R::TransitionBias));
    }
    for (int b = 0; b < spec.stages[s].block_count; ++b) {
      ad::Var h = ad::relu(ad::add_row(ad::matmul(x, p(si, b, R::ProjIn)), p(si, b, R::BiasIn)));
      x = ad::add(x, ad::add_row(ad::matmul(h, p(si, b, R::ProjOut)), p(si, b, R::BiasOut)));
    }
  }
  const int hs = static_cast<int>(spec.stages.size());
  return ad::add_row(ad::matmul(x, p(hs, -1, R::HeadWeight)), p(hs, -1, R::HeadBias));
}

ParameterSet collect_gradients(const BoundParams& params, const ad::Gradients& grads) {
  ParameterSet out;
  for (const auto& [key, var] : params.vars) out.set(key, grads.of(var));
  return out;
}

ParameterSet finite_diff_grad(const std::function<double(const ParameterSet&)>& f,
                              const ParameterSet& params, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
  ParameterSet probe = params;
  ParameterSet grad;
  for (const auto& [key, t] : params) {
    Tensor g(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      probe.at(key)[i] = orig + h;
      const double up = f(probe);
      probe.at(key)[i] = orig - h;
      const double down = f(probe);
      probe.at(key)[i] = orig;
      g[i] = (up - down) / (2.0 * h);
    }
    grad.set(key, std::move(g));
  }
  return grad;
}

void write_f64_le(std::ostream& os, std::span<const double> values) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(buf, 8);
  }
}

void read_f64_le(std::istream& is, std::span<double> values) {
  for (double& v : values) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8)) throw std::runtime_error("truncated float data");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
}

void write_params(std::ostream& os, const ParameterSet& params) {
  os << "ev3-params v1\n" << "entries " << params.size() << "\n";
  for (const auto& [key, t] : params) {
    os << key.stage << ' ' << key.block << ' ' << role_name(key.role) << ' ' << t.rows() << ' '
       << t.cols() << '\n';
  }
  os << "data\n";
  for (const auto& [key, t] : params) write_f64_le(os, t.values());
  if (!os) throw std::runtime_error("write_params: stream failure");
}

ParameterSet read_params(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "ev3-params v1") {
    throw std::runtime_error("read_params: bad magic line");
  }
  std::string word;
  std::size_t count = 0;
  if (!std::getline(is, line)) throw std::runtime_error("read_params: missing entry count");
  std::istringstream(line) >> word >> count;
  if (word != "entries") throw std::runtime_error("read_params: expected 'entries'");
  std::vector<std::pair<ParamKey, ParamShape>> layout;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw std::runtime_error("read_params: truncated header");
    std::istringstream ls(line);
    ParamKey key;
    std::string role;
    ParamShape shape;
    if (!(ls >> key.stage >> key.block >> role >> shape.rows >> shape.cols)) {
      throw std::runtime_error("read_params: malformed header line: " + line);
    }
    key.role = role_from_name(role);
    layout.push_back({key, shape});
  }
  if (!std::getline(is, line) || line != "data") throw std::runtime_error("read_params: expected 'data'");
  ParameterSet out;
  for (const auto& [key, shape] : layout) {
    std::vector<double> vals(shape.rows * shape.cols);
    read_f64_le(is, vals);
    out.set(key, Tensor(shape.rows, shape.cols, std::move(vals)));
  }
  return out;
}

void save_params(const std::string& path, const ParameterSet& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_params(os, params);
}

ParameterSet load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_params(is);
}

}  // namespace ev3
