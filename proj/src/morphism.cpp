#include "ev3/morphism.hpp"

#include <cmath>
#include <random>

#include "ev3/rng.hpp"

namespace ev3 {

GraphSpec deepen_spec(const GraphSpec& spec) {
  spec.validate();
  GraphSpec out = spec;
  for (auto& stage : out.stages) ++stage.block_count;
  return out;
}

std::pair<GraphSpec, ParameterSet> deepen(const GraphSpec& spec, const ParameterSet& params,
                                          std::uint64_t seed, double proj_out_noise) {
  check_params(spec, params);
  if (proj_out_noise < 0.0) throw ContractError("deepen: noise must be non-negative");
  GraphSpec grown = deepen_spec(spec);
  ParameterSet out = params;
  using R = ParamRole;
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const int si = static_cast<int>(s);
    const int b = spec.stages[s].block_count;  // index of the appended block
    const auto w = static_cast<std::size_t>(spec.stages[s].width);

    Tensor proj_in(w, w);
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(si), static_cast<std::uint64_t>(b)}));
    const double bound = std::sqrt(6.0 / static_cast<double>(w));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (double& v : proj_in.values()) v = uni(rng);

    Tensor proj_out(w, w);
    if (proj_out_noise > 0.0) {
      std::normal_distribution<double> gauss(0.0, proj_out_noise);
      for (double& v : proj_out.values()) v = gauss(rng);
    }

    out.set({si, b, R::ProjIn}, std::move(proj_in));
    out.set({si, b, R::BiasIn}, Tensor::zeros(1, w));
    out.set({si, b, R::ProjOut}, std::move(proj_out));
    out.set({si, b, R::BiasOut}, Tensor::zeros(1, w));
  }
  check_params(grown, out);
  return {std::move(grown), std::move(out)};
}

std::vector<GraphSpec> size_ladder(const GraphSpec& base, int steps) {
  if (steps < 0) throw ContractError("size_ladder: steps must be >= 0");
  base.validate();
  std::vector<GraphSpec> ladder{base};
  for (int i = 0; i < steps; ++i) ladder.push_back(deepen_spec(ladder.back()));
  return ladder;
}

}  // namespace ev3
