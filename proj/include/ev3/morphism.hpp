#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ev3/model.hpp"

namespace ev3 {

/// Appends one residual block to the end of every stage. The new block's
/// proj-in is He-initialized from `seed`; proj-out and both biases are zero,
/// so the deepened network computes exactly the same function.
///
/// `proj_out_noise` > 0 replaces the zero proj-out with N(0, noise^2)
/// entries. That breaks exact preservation and exists for ablations only.
std::pair<GraphSpec, ParameterSet> deepen(const GraphSpec& spec, const ParameterSet& params,
                                          std::uint64_t seed, double proj_out_noise = 0.0);

/// Spec obtained by one deepen step (no parameters).
GraphSpec deepen_spec(const GraphSpec& spec);

/// [base, deepen(base), deepen^2(base), ...], `steps` + 1 entries.
std::vector<GraphSpec> size_ladder(const GraphSpec& base, int steps);

}  // namespace ev3
