#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>

#include "dyad/conditioning.hpp"
#include "dyad/graph.hpp"

namespace dyad::net {

using numerics::Graph;
using numerics::Shape;
using numerics::Var;

struct UNetConfig {
  Index embed_dim = 64;
  Index num_blocks = 2;
  Index subblocks_per_block = 2;
  int attention_heads = 4;
  Index temporal_stride = 2;
  Index kernel = 3;
  Index input_dim = 78;
  Index audio_dim = 64;
  Index role_dim = 16;
  Index time_dim = 16;
  bool zero_init_output = true;
  bool zero_init_film = true;

  void validate() const;
  /// Width of the full per-frame condition, timestep embedding included.
  Index condition_dim() const { return audio_dim + 2 * role_dim + 2 + 6 + time_dim; }
};

/// Sequence length at each U-Net level (level 0 is the input length).
std::vector<Index> level_lengths(const UNetConfig& cfg, Index length);

std::map<std::string, Shape> parameter_shapes(const UNetConfig& cfg);

/// Seeded initialization. Convolution and projection weights are N(0, 1/fan_in);
/// FiLM heads and the output head start at zero when so configured.
NamedTensors init_params(const UNetConfig& cfg, std::uint64_t seed);

/// Graph leaves for one stream's inputs, self-first.
struct StreamVars {
  Var x;           // L x 78 noisy motion
  Var audio;       // L x D_a
  Var mask_self;   // L x 1
  Var mask_other;  // L x 1
  Var t0;          // 1 x 6: (t0_self, t0_other)
};

struct DualVars {
  std::map<std::string, Var> params;
  StreamVars a;
  StreamVars b;
  Var time;  // 1 x time_dim
  Var pred_a;
  Var pred_b;
};

/// Leaf names of the network inputs, e.g. "a.x", "b.mask_self", "time".
std::string input_name(char stream, const char* field);

/// Builds the dual-stream denoiser into `g` for sequences of `length` frames.
DualVars build_dual_net(Graph& g, const UNetConfig& cfg, Index length);

/// Input bindings for one forward call. Audio is zeroed when the condition says so.
NamedTensors bind_inputs(const UNetConfig& cfg, const Tensor& x_a, const Tensor& x_b, double t,
                         const cond::DyadCondition& c);

/// FiLM with residual scaling: (gamma + 1) * h + beta.
Var film(Var h, Var gamma, Var beta);

/// Attention(Q_a, K_b, V_b) and Attention(Q_b, K_a, V_a) with shared projections.
std::pair<Var, Var> cross_attend(Var h_a, Var h_b, Var w_q, Var w_k, Var w_v, int heads);

/// A compiled network for a fixed sequence length.
class DualNet {
 public:
  DualNet(UNetConfig cfg, Index length);

  const UNetConfig& config() const { return cfg_; }
  Index length() const { return length_; }
  const Graph& graph() const { return *graph_; }

  /// (x0_hat_a, x0_hat_b).
  std::pair<Tensor, Tensor> forward(const NamedTensors& params, const Tensor& x_a, const Tensor& x_b, double t,
                                    const cond::DyadCondition& c) const;

 private:
  UNetConfig cfg_;
  Index length_;
  std::unique_ptr<Graph> graph_;
};

}  // namespace dyad::net
