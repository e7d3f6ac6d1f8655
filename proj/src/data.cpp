#include "ev3/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace ev3 {

namespace {

void standardize(Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = x(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const double inv_sd = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    for (std::size_t i = 0; i < n; ++i) x(i, j) = (x(i, j) - mean) * inv_sd;
  }
}

/// Random linear map latent -> ambient; identity when the two match.
Tensor embedding(std::size_t latent, std::size_t ambient, Rng& rng) {
  Tensor a(latent, ambient);
  if (latent == ambient) {
    for (std::size_t i = 0; i < latent; ++i) a(i, i) = 1.0;
    return a;
  }
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(latent)));
  for (double& v : a.values()) v = g(rng);
  return a;
}

}  // namespace

std::string_view dataset_kind_name(DatasetKind kind) {
  return kind == DatasetKind::GaussianMixture ? "gaussian_mixture" : "spirals";
}

DatasetKind dataset_kind_from_name(std::string_view name) {
  if (name == "gaussian_mixture") return DatasetKind::GaussianMixture;
  if (name == "spirals") return DatasetKind::Spirals;
  throw ContractError("unknown dataset kind: " + std::string(name));
}

std::string_view split_tag_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::Test: return "test";
  }
  return "?";
}

void GeneratorConfig::validate() const {
  if (num_classes < 2) throw ContractError("gen_dataset: num_classes must be >= 2");
  if (dim < 1) throw ContractError("gen_dataset: dim must be >= 1");
  if (n < static_cast<std::size_t>(num_classes)) throw ContractError("gen_dataset: N must be >= num_classes");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ContractError("gen_dataset: noise must be >= 0");
  if (clusters_per_class < 1) throw ContractError("gen_dataset: clusters_per_class must be >= 1");
  if (latent_dim < 0 || latent_dim > dim) throw ContractError("gen_dataset: latent_dim must be in [0, dim]");
  if (kind == DatasetKind::Spirals && dim < 2) throw ContractError("gen_dataset: spirals need dim >= 2");
}

Dataset gen_dataset(const GeneratorConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n = config.n;
  const std::size_t classes = static_cast<std::size_t>(config.num_classes);
  const std::size_t ambient = static_cast<std::size_t>(config.dim);

  Dataset ds{Tensor(n, ambient), std::vector<int>(n), config};

  if (config.kind == DatasetKind::GaussianMixture) {
    const std::size_t latent = config.latent_dim == 0 ? ambient : static_cast<std::size_t>(config.latent_dim);
    const std::size_t k = static_cast<std::size_t>(config.clusters_per_class);
    Tensor centers(classes * k, latent);
    for (double& v : centers.values()) v = gauss(rng);
    const Tensor embed = embedding(latent, ambient, rng);
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    Tensor z(n, latent);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i % classes;
      const std::size_t comp = c * k + pick(rng);
      ds.labels[i] = static_cast<int>(c);
      for (std::size_t j = 0; j < latent; ++j) z(i, j) = centers(comp, j) + config.noise * gauss(rng);
    }
    ds.features = matmul(z, embed);
  } else {
    const Tensor embed = embedding(2, ambient, rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    constexpr double turns = 1.5;
    Tensor z(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i % classes;
      const double t = unit(rng);
      const double angle = 2.0 * std::numbers::pi * (static_cast<double>(c) / static_cast<double>(classes) + turns * t);
      ds.labels[i] = static_cast<int>(c);
      z(i, 0) = t * std::cos(angle) + config.noise * gauss(rng);
      z(i, 1) = t * std::sin(angle) + config.noise * gauss(rng);
    }
    ds.features = matmul(z, embed);
  }
  standardize(ds.features);
  ensure_finite(ds.features, "gen_dataset");
  return ds;
}

void write_dataset(std::ostream& os, const Dataset& ds) {
  const auto& c = ds.config;
  std::ostringstream noise;
  noise.precision(17);
  noise << c.noise;
  os << "ev3-dataset v1\n"
     << "kind=" << dataset_kind_name(c.kind) << "\n"
     << "num_classes=" << c.num_classes << "\n"
     << "dim=" << c.dim << "\n"
     << "n=" << c.n << "\n"
     << "noise=" << noise.str() << "\n"
     << "clusters_per_class=" << c.clusters_per_class << "\n"
     << "latent_dim=" << c.latent_dim << "\n"
     << "seed=" << c.seed << "\n"
     << "rows=" << ds.features.rows() << "\n"
     << "cols=" << ds.features.cols() << "\n"
     << "data\n";
  write_f64_le(os, ds.features.values());
  for (int y : ds.labels) {
    const auto u = static_cast<std::uint32_t>(y);
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xff);
    os.write(buf, 4);
  }
  if (!os) throw std::runtime_error("write_dataset: stream failure");
}

Dataset read_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "ev3-dataset v1") throw std::runtime_error("read_dataset: bad magic line");
  std::map<std::string, std::string> kv;
  while (std::getline(is, line) && line != "data") {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("read_dataset: malformed header line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (line != "data") throw std::runtime_error("read_dataset: missing data section");
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("read_dataset: missing header key " + key);
    return it->second;
  };
  Dataset ds;
  ds.config.kind = dataset_kind_from_name(need("kind"));
  ds.config.num_classes = std::stoi(need("num_classes"));
  ds.config.dim = std::stoi(need("dim"));
  ds.config.n = std::stoull(need("n"));
  ds.config.noise = std::stod(need("noise"));
  ds.config.clusters_per_class = std::stoi(need("clusters_per_class"));
  ds.config.latent_dim = std::stoi(need("latent_dim"));
  ds.config.seed = std::stoull(need("seed"));
  const std::size_t rows = std::stoull(need("rows"));
  const std::size_t cols = std::stoull(need("cols"));
  std::vector<double> vals(rows * cols);
  read_f64_le(is, vals);
  ds.features = Tensor(rows, cols, std::move(vals));
  ds.labels.resize(rows);
  for (auto& y : ds.labels) {
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4)) throw std::runtime_error("read_dataset: truncated labels");
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    y = static_cast<int>(u);
    if (y < 0 || y >= ds.config.num_classes) throw std::runtime_error("read_dataset: label out of range");
  }
  return ds;
}

void SplitSpec::validate() const {
  if (!(train >= 0.0 && val >= 0.0 && test >= 0.0)) throw ContractError("SplitSpec: fractions must be >= 0");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ContractError("SplitSpec: fractions must sum to 1");
}

SplitData split(const Dataset& dataset, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = dataset.labels.size();
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(n)));
  if (n_train + n_val > n) throw ContractError("SplitSpec: rounding overflow");
  const std::size_t n_test = n - n_train - n_val;
  if (n_train == 0 || n_val == 0 || n_test == 0) {
    throw ContractError("SplitSpec: every split must be non-empty (got " + std::to_string(n_train) + "/" +
                        std::to_string(n_val) + "/" + std::to_string(n_test) + ")");
  }

  // Shuffle within each class, then deal classes round-robin so that every
  // prefix of the order is class-balanced.
  const int classes = dataset.config.num_classes;
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
  Rng rng(spec.seed);
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t round = 0; order.size() < n; ++round) {
    for (const auto& members : by_class)
      if (round < members.size()) order.push_back(members[round]);
  }

  auto make = [&](SplitTag tag, std::size_t begin, std::size_t count) {
    DataSplit s;
    s.tag = tag;
    s.num_classes = classes;
    s.source_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                            order.begin() + static_cast<std::ptrdiff_t>(begin + count));
    s.features = take_rows(dataset.features, s.source_indices);
    s.labels.reserve(count);
    for (std::size_t i : s.source_indices) s.labels.push_back(dataset.labels[i]);
    return s;
  };
  return {make(SplitTag::Train, 0, n_train), make(SplitTag::Val, n_train, n_val),
          make(SplitTag::Test, n_train + n_val, n_test)};
}

Batch gather(const DataSplit& split, std::vector<std::size_t> indices) {
  Batch b;
  b.source = split.tag;
  b.features = take_rows(split.features, indices);
  b.labels.reserve(indices.size());
  for (std::size_t i : indices) b.labels.push_back(split.labels[i]);
  b.indices = std::move(indices);
  return b;
}

Batch sample_iid(const DataSplit& split, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ContractError("sample_iid: batch_size must be >= 1");
  if (split.size() == 0) throw ContractError("sample_iid: empty split");
  std::uniform_int_distribution<std::size_t> pick(0, split.size() - 1);
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = pick(rng);
  return gather(split, std::move(idx));
}

SamplingWeights weights_from_losses(std::vector<std::size_t> pool, std::span<const double> losses,
                                    double floor) {
  if (pool.empty()) throw ContractError("weights_from_losses: empty pool");
  if (pool.size() != losses.size()) throw DimensionError("weights_from_losses: pool/loss size mismatch");
  double total = 0.0;
  for (double l : losses) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ContractError("weights_from_losses: losses must be finite and >= 0");
    total += l;
  }
  std::vector<double> probs(pool.size());
  const double uniform = 1.0 / static_cast<double>(pool.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = total > 0.0 ? std::max(losses[i] / total, floor) : uniform;
  }
  double z = 0.0;
  for (double p : probs) z += p;
  for (double& p : probs) p /= z;
  return {std::move(pool), std::move(probs)};
}

SamplingWeights boosted_weights(const DataSplit& split, const GraphSpec& spec,
                                const ParameterSet& params, const LossSpec& loss,
                                const Tensor* teacher_logits, Rng& rng, std::size_t pool_limit) {
  loss.validate();
  if (split.size() == 0) throw ContractError("boosted_weights: empty split");
  std::vector<std::size_t> pool(split.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  if (pool.size() > pool_limit) {
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(pool_limit);
    std::sort(pool.begin(), pool.end());
  }
  const Tensor logits = forward(spec, params, take_rows(split.features, pool));
  std::vector<double> losses;
  if (loss.kind == LossKind::KD) {
    if (teacher_logits == nullptr || teacher_logits->rows() != split.size()) {
      throw ContractError("boosted_weights: KD loss needs teacher logits for every split row");
    }
    losses = kd_loss_per_example(logits, take_rows(*teacher_logits, pool), loss.temperature);
  } else {
    std::vector<int> labels;
    labels.reserve(pool.size());
    for (std::size_t i : pool) labels.push_back(split.labels[i]);
    losses = ce_loss_per_example(logits, labels);
  }
  for (double& l : losses) l = std::max(l, 0.0);  // KL can round to -0
  return weights_from_losses(std::move(pool), losses);
}

Batch sample_weighted(const DataSplit& split, const SamplingWeights& weights,
                      std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ContractError("sample_weighted: batch_size must be >= 1");
  std::discrete_distribution<std::size_t> pick(weights.probs.begin(), weights.probs.end());
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = weights.pool[pick(rng)];
  return gather(split, std::move(idx));
}

Batch sample_boosted(const DataSplit& split, const GraphSpec& spec, const ParameterSet& params,
                     const LossSpec& loss, const Tensor* teacher_logits, std::size_t batch_size,
                     Rng& rng) {
  const SamplingWeights w = boosted_weights(split, spec, params, loss, teacher_logits, rng);
  return sample_weighted(split, w, batch_size, rng);
}

}  // namespace ev3
