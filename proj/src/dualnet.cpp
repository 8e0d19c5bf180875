#include "dyad/dualnet.hpp"

#include <random>

#include "dyad/ops.hpp"

namespace dyad::net {
namespace {

using namespace numerics;

std::string level_name(const char* part, Index level) { return std::string(part) + std::to_string(level); }

std::string sub_name(const char* part, Index level, Index sub) {
  return level_name(part, level) + "." + std::to_string(sub);
}

// Nearest-neighbour repeat from `from` rows to `to` rows.
Tensor upsample_matrix(Index to, Index from, Index stride) {
  Tensor u = Tensor::Zero(to, from);
  for (Index i = 0; i < to; ++i) u(i, std::min(i / stride, from - 1)) = 1.0;
  return u;
}

// Averages consecutive windows of `span` input rows into each output row.
Tensor pool_matrix(Index to, Index from, Index span) {
  Tensor p = Tensor::Zero(to, from);
  for (Index i = 0; i < to; ++i) {
    const Index lo = i * span, hi = std::min(from, lo + span);
    for (Index j = lo; j < hi; ++j) p(i, j) = 1.0 / static_cast<double>(hi - lo);
  }
  return p;
}

struct Builder {
  Graph& g;
  const UNetConfig& cfg;
  std::map<std::string, Var>& p;

  Var w(const std::string& name) const { return p.at(name); }

  Var linear(Var x, const std::string& name) const { return matmul(x, w(name + ".w")) + w(name + ".b"); }
  Var conv(Var x, const std::string& name, Index stride = 1) const {
    return conv1d(x, w(name + ".w"), cfg.kernel, stride) + w(name + ".b");
  }

  Var self_attention(Var h, const std::string& name) const {
    Var n = layer_norm(h);
    Var a = attention(matmul(n, w(name + ".q")), matmul(n, w(name + ".k")), matmul(n, w(name + ".v")),
                      cfg.attention_heads);
    return h + matmul(a, w(name + ".o"));
  }

  // LN -> FiLM -> SiLU -> conv, residual.
  Var film_conv(Var h, Var c, const std::string& name) const {
    Var n = layer_norm(h);
    Var m = film(n, linear(c, name + ".gamma"), linear(c, name + ".beta"));
    return h + conv(silu(m), name + ".conv");
  }

  // Condition rows: [audio | e_self | e_other | m_self m_other | t0 | time].
  Var condition(const StreamVars& s, Var time, Index len) const {
    Var ones = g.constant(Tensor::Ones(len, 1));
    Var speak = w("role.speak"), listen = w("role.listen");
    auto role = [&](Var m) { return matmul(m, speak) + matmul(add_scalar(-m, 1.0), listen); };
    return concat_cols({s.audio, role(s.mask_self), role(s.mask_other), s.mask_self, s.mask_other,
                        matmul(ones, s.t0), matmul(ones, time)});
  }
};

}  // namespace

void UNetConfig::validate() const {
  if (embed_dim < 1 || attention_heads < 1 || embed_dim % attention_heads != 0) {
    throw std::invalid_argument("UNetConfig: embed_dim must be a positive multiple of attention_heads");
  }
  if (num_blocks < 1 || subblocks_per_block < 1) throw std::invalid_argument("UNetConfig: block counts must be >= 1");
  if (temporal_stride < 1) throw std::invalid_argument("UNetConfig: temporal_stride must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("UNetConfig: kernel must be odd");
  if (input_dim != 78) throw std::invalid_argument("UNetConfig: input_dim must be 63 + 12 + 3");
  if (audio_dim < 1 || role_dim < 1 || time_dim < 2 || time_dim % 2 != 0) {
    throw std::invalid_argument("UNetConfig: condition widths invalid");
  }
}

std::vector<Index> level_lengths(const UNetConfig& cfg, Index length) {
  std::vector<Index> lens{length};
  for (Index l = 1; l < cfg.num_blocks; ++l) {
    lens.push_back((lens.back() + cfg.temporal_stride - 1) / cfg.temporal_stride);
  }
  return lens;
}

std::map<std::string, Shape> parameter_shapes(const UNetConfig& cfg) {
  cfg.validate();
  const Index e = cfg.embed_dim, k = cfg.kernel;
  std::map<std::string, Shape> s;
  auto linear = [&](const std::string& n, Index in, Index out) {
    s[n + ".w"] = {in, out};
    s[n + ".b"] = {1, out};
  };
  auto conv = [&](const std::string& n, Index in, Index out) { linear(n, k * in, out); };
  auto attn = [&](const std::string& n, bool with_out) {
    for (const char* part : {".q", ".k", ".v"}) s[n + part] = {e, e};
    if (with_out) s[n + ".o"] = {e, e};
  };
  auto subblock = [&](const std::string& n) {
    linear(n + ".gamma", e, e);
    linear(n + ".beta", e, e);
    conv(n + ".conv", e, e);
  };

  s["role.speak"] = {1, cfg.role_dim};
  s["role.listen"] = {1, cfg.role_dim};
  linear("cond", cfg.condition_dim(), e);
  conv("in", cfg.input_dim + cfg.condition_dim(), e);
  for (Index l = 0; l < cfg.num_blocks; ++l) {
    if (l > 0) conv(level_name("down", l), e, e);
    for (Index j = 0; j < cfg.subblocks_per_block; ++j) {
      subblock(sub_name("enc", l, j));
      if (l > 0) attn(sub_name("enc", l, j) + ".attn", true);
    }
  }
  for (Index l = cfg.num_blocks - 1; l >= 0; --l) {
    if (l < cfg.num_blocks - 1) conv(level_name("up", l), 2 * e, e);
    for (Index j = 0; j < cfg.subblocks_per_block; ++j) {
      subblock(sub_name("dec", l, j));
      if (l > 0) attn(sub_name("dec", l, j) + ".attn", true);
      attn(sub_name("dec", l, j) + ".xattn", true);
    }
  }
  linear("out", e, cfg.input_dim);
  return s;
}

NamedTensors init_params(const UNetConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  NamedTensors params;
  for (const auto& [name, shape] : parameter_shapes(cfg)) {
    Tensor t = Tensor::Zero(shape.rows, shape.cols);
    const bool bias = name.ends_with(".b");
    const bool film_head = name.find(".gamma.") != std::string::npos || name.find(".beta.") != std::string::npos;
    const bool out_head = name.starts_with("out.");
    const bool zero = bias || (film_head && cfg.zero_init_film) || (out_head && cfg.zero_init_output);
    if (!zero) {
      const double scale = name.starts_with("role.") ? 1.0 : 1.0 / std::sqrt(static_cast<double>(shape.rows));
      for (Index i = 0; i < t.size(); ++i) t.data()[i] = scale * n(rng);
    }
    params.emplace(name, std::move(t));
  }
  return params;
}

std::string input_name(char stream, const char* field) {
  return std::string(1, stream) + "." + field;
}

Var film(Var h, Var gamma, Var beta) { return h + h * gamma + beta; }

std::pair<Var, Var> cross_attend(Var h_a, Var h_b, Var w_q, Var w_k, Var w_v, int heads) {
  Var qa = matmul(h_a, w_q), ka = matmul(h_a, w_k), va = matmul(h_a, w_v);
  Var qb = matmul(h_b, w_q), kb = matmul(h_b, w_k), vb = matmul(h_b, w_v);
  return {attention(qa, kb, vb, heads), attention(qb, ka, va, heads)};
}

DualVars build_dual_net(Graph& g, const UNetConfig& cfg, Index length) {
  cfg.validate();
  if (length < 1) throw std::invalid_argument("build_dual_net: length must be >= 1");
  DualVars d;
  for (const auto& [name, shape] : parameter_shapes(cfg)) d.params.emplace(name, g.parameter(name, shape));
  auto stream = [&](char s) {
    return StreamVars{g.input(input_name(s, "x"), {length, cfg.input_dim}),
                      g.input(input_name(s, "audio"), {length, cfg.audio_dim}),
                      g.input(input_name(s, "mask_self"), {length, 1}),
                      g.input(input_name(s, "mask_other"), {length, 1}),
                      g.input(input_name(s, "t0"), {1, 6})};
  };
  d.a = stream('a');
  d.b = stream('b');
  d.time = g.input("time", {1, cfg.time_dim});

  const Builder b{g, cfg, d.params};
  const std::vector<Index> lens = level_lengths(cfg, length);
  const Index levels = cfg.num_blocks;

  // Per-stream encoder; identical weights for both streams.
  struct StreamState {
    Var h;
    std::vector<Var> cond;  // pooled condition embedding per level
    std::vector<Var> skip;
  };
  auto encode = [&](const StreamVars& s) {
    StreamState st;
    Var c = b.condition(s, d.time, length);
    Var ce = silu(b.linear(c, "cond"));
    Index span = 1;
    for (Index l = 0; l < levels; ++l) {
      st.cond.push_back(l == 0 ? ce : matmul(g.constant(pool_matrix(lens[l], length, span)), ce));
      span *= cfg.temporal_stride;
    }
    Var h = b.conv(concat_cols({s.x, c}), "in");
    for (Index l = 0; l < levels; ++l) {
      if (l > 0) h = b.conv(h, level_name("down", l), cfg.temporal_stride);
      for (Index j = 0; j < cfg.subblocks_per_block; ++j) {
        const std::string name = sub_name("enc", l, j);
        h = b.film_conv(h, st.cond[l], name);
        if (l > 0) h = b.self_attention(h, name + ".attn");
      }
      st.skip.push_back(h);
    }
    st.h = h;
    return st;
  };
  StreamState sa = encode(d.a), sb = encode(d.b);

  for (Index l = levels - 1; l >= 0; --l) {
    if (l < levels - 1) {
      Var up = g.constant(upsample_matrix(lens[l], lens[l + 1], cfg.temporal_stride));
      for (StreamState* st : {&sa, &sb}) {
        st->h = b.conv(concat_cols({matmul(up, st->h), st->skip[l]}), level_name("up", l));
      }
    }
    for (Index j = 0; j < cfg.subblocks_per_block; ++j) {
      const std::string name = sub_name("dec", l, j);
      for (StreamState* st : {&sa, &sb}) {
        st->h = b.film_conv(st->h, st->cond[l], name);
        if (l > 0) st->h = b.self_attention(st->h, name + ".attn");
      }
      const std::string x = name + ".xattn";
      auto [xa, xb] = cross_attend(layer_norm(sa.h), layer_norm(sb.h), b.w(x + ".q"), b.w(x + ".k"),
                                   b.w(x + ".v"), cfg.attention_heads);
      sa.h = sa.h + matmul(xa, b.w(x + ".o"));
      sb.h = sb.h + matmul(xb, b.w(x + ".o"));
    }
  }
  d.pred_a = b.linear(layer_norm(sa.h), "out");
  d.pred_b = b.linear(layer_norm(sb.h), "out");
  return d;
}

NamedTensors bind_inputs(const UNetConfig& cfg, const Tensor& x_a, const Tensor& x_b, double t,
                         const cond::DyadCondition& c) {
  NamedTensors in;
  auto stream = [&](char s, const Tensor& x, const cond::StreamCondition& sc) {
    in[input_name(s, "x")] = x;
    in[input_name(s, "audio")] = sc.audio_dropped ? Tensor::Zero(sc.audio.rows(), sc.audio.cols()) : sc.audio;
    in[input_name(s, "mask_self")] = sc.mask_self;
    in[input_name(s, "mask_other")] = sc.mask_other;
    Tensor t0(1, 6);
    t0 << sc.t0_self.transpose(), sc.t0_other.transpose();
    in[input_name(s, "t0")] = t0;
  };
  stream('a', x_a, c.a);
  stream('b', x_b, c.b);
  in["time"] = cond::timestep_embedding(t, cfg.time_dim);
  return in;
}

DualNet::DualNet(UNetConfig cfg, Index length)
    : cfg_(cfg), length_(length), graph_(std::make_unique<Graph>()) {
  DualVars d = build_dual_net(*graph_, cfg_, length_);
  graph_->set_output("pred_a", d.pred_a);
  graph_->set_output("pred_b", d.pred_b);
}

std::pair<Tensor, Tensor> DualNet::forward(const NamedTensors& params, const Tensor& x_a, const Tensor& x_b,
                                           double t, const cond::DyadCondition& c) const {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("DualNet::forward: t must lie in [0, 1]");
  const NamedTensors inputs = bind_inputs(cfg_, x_a, x_b, t, c);
  const numerics::Evaluation ev = numerics::evaluate(*graph_, params, inputs);
  return {ev.value(*graph_->find_output("pred_a")), ev.value(*graph_->find_output("pred_b"))};
}

}  // namespace dyad::net
