#include "dyad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dyad::numerics {

std::map<std::string, double> gradient_check(const Graph& graph, const NamedTensors& bindings,
                                             Var loss, const std::vector<std::string>& leaves,
                                             const GradientCheckOptions& options) {
  if (!(options.epsilon >= 1e-7 && options.epsilon <= 1e-3)) {
    throw std::invalid_argument("gradient_check: epsilon must lie in [1e-7, 1e-3]");
  }
  const NamedTensors analytic = backward(graph, evaluate(graph, bindings), loss);

  NamedTensors probe = bindings;
  auto loss_at = [&]() {
    const double v = evaluate(graph, probe)[loss](0, 0);
    if (!std::isfinite(v)) throw GradientCheckError("gradient_check: non-finite loss at perturbed point");
    return v;
  };

  std::mt19937_64 rng(options.seed);
  std::map<std::string, double> result;
  for (const std::string& name : leaves) {
    auto it = probe.find(name);
    if (it == probe.end()) throw GraphError("gradient_check: leaf '" + name + "' is not bound");
    Tensor& x = it->second;
    const Tensor& grad = analytic.at(name);

    std::vector<Index> components(static_cast<std::size_t>(x.size()));
    std::iota(components.begin(), components.end(), Index{0});
    if (options.max_components > 0 && components.size() > options.max_components) {
      std::shuffle(components.begin(), components.end(), rng);
      components.resize(options.max_components);
    }

    double worst = 0.0;
    for (Index c : components) {
      double& slot = x.data()[c];
      const double saved = slot;
      slot = saved + options.epsilon;
      const double up = loss_at();
      slot = saved - options.epsilon;
      const double down = loss_at();
      slot = saved;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double a = grad.data()[c];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    result[name] = worst;
  }
  return result;
}

}  // namespace dyad::numerics
