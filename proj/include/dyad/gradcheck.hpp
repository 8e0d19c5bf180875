#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dyad/graph.hpp"

namespace dyad::numerics {

class GradientCheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradientCheckOptions {
  double epsilon = 1e-6;
  /// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  /// 0 checks every component; otherwise a seeded sample of this many per leaf.
  std::size_t max_components = 0;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of the scalar `loss` against central finite
/// differences for each named leaf. Returns the maximum relative error per leaf.
std::map<std::string, double> gradient_check(const Graph& graph, const NamedTensors& bindings,
                                             Var loss, const std::vector<std::string>& leaves,
                                             const GradientCheckOptions& options = {});

}  // namespace dyad::numerics
