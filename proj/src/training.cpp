#include "dyad/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "dyad/archive.hpp"
#include "dyad/binio.hpp"
#include "dyad/ops.hpp"
#include "dyad/rng.hpp"

namespace dyad::train {

using namespace numerics;

void optimizer_step(NamedTensors& params, const NamedTensors& grads, double lr, AdamState& state,
                    const AdamWConfig& cfg) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) continue;
    if (!g.allFinite()) throw NonFiniteGradient("optimizer_step: non-finite gradient for " + name);
  }
  const Index t = state.step + 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    Tensor& m = state.m.try_emplace(name, Tensor::Zero(p.rows(), p.cols())).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor::Zero(p.rows(), p.cols())).first->second;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Tensor step = (m / c1).array() / ((v / c2).array().sqrt() + cfg.eps);
    p = p * (1.0 - lr * cfg.weight_decay) - lr * step;
  }
  state.step = t;
}

void TrainConfig::validate() const {
  if (stage != 1 && stage != 2) throw std::invalid_argument("TrainConfig: stage must be 1 or 2");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (warmup_steps < 0 || batch_size < 1 || total_steps < 0) {
    throw std::invalid_argument("TrainConfig: step counts invalid");
  }
  if (warmup_steps > total_steps) throw std::invalid_argument("TrainConfig: warmup exceeds total_steps");
  if (!(audio_dropout_p >= 0.0 && audio_dropout_p <= 1.0) || !(lip_fraction >= 0.0 && lip_fraction <= 1.0) ||
      !(listener_relabel_p >= 0.0 && listener_relabel_p <= 1.0)) {
    throw std::invalid_argument("TrainConfig: probabilities must lie in [0, 1]");
  }
}

double learning_rate_at(const TrainConfig& cfg, Index step) {
  if (cfg.warmup_steps <= 0) return cfg.learning_rate;
  return cfg.learning_rate * std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
}

cond::DyadCondition PreparedSample::condition(bool drop_audio) const {
  return cond::make_dyad_condition(features, mask_a, mask_b, t0_a, t0_b, drop_audio);
}

PreparedSample prepare(const data::DyadSample& s, const cond::AudioFeatureExtractor& features) {
  s.validate();
  PreparedSample p;
  p.target_a = diffusion::to_model_space(s.motion_a);
  p.target_b = diffusion::to_model_space(s.motion_b);
  p.features = features(s.mixed, s.motion_a.fps, s.length());
  p.mask_a = s.mask_a;
  p.mask_b = s.mask_b;
  p.t0_a = s.t0_a;
  p.t0_b = s.t0_b;
  p.identity_a = s.motion_a.identity;
  p.identity_b = s.motion_b.identity;
  p.fps = s.motion_a.fps;
  p.gaze_subset = s.gaze_subset;
  p.source = s.source;
  return p;
}

PreparedSample relabel_listener(const PreparedSample& s, bool stream_b, const std::vector<Index>& lip_indices) {
  PreparedSample out = s;
  Tensor& mask = stream_b ? out.mask_b : out.mask_a;
  Tensor& target = stream_b ? out.target_b : out.target_a;
  mask.setZero();
  for (Index j : lip_indices) target.col(j).setZero();
  return out;
}

Geometry make_geometry(const ModelConfig& cfg) {
  Geometry g;
  g.basis = face::make_synthetic_basis(cfg.vertices, cfg.basis_seed);
  g.rig = face::make_synthetic_rig(g.basis);
  return g;
}

namespace {

// Constant matrices shared by the mesh, gaze and lip terms of one graph.
struct LossConstants {
  Var expression_bases;               // 63 x 3V
  std::array<Var, face::kJointCount> pivots;   // 1 x 3V, pivot tiled per vertex
  std::array<Var, face::kJointCount> weights;  // 1 x 3V, skin weight per coordinate
  Var tile;                           // 3 x 3V
  Var difference;                     // (L-1) x L
  Var forward;                        // L x 3
  Var lip_select;                     // 78 x 20
};

LossConstants make_constants(Graph& g, Index length, const Geometry& geo) {
  const Index v3 = geo.basis.mean_shape.cols();
  const Index V = v3 / 3;
  LossConstants c;
  c.expression_bases = g.constant(geo.basis.expression_bases);
  for (Index j = 0; j < face::kJointCount; ++j) {
    Tensor pivot(1, v3), weight(1, v3);
    for (Index i = 0; i < V; ++i) {
      pivot.block(0, 3 * i, 1, 3) = geo.rig.rest[j].transpose();
      weight.block(0, 3 * i, 1, 3).setConstant(geo.rig.weights(i, j));
    }
    c.pivots[j] = g.constant(pivot);
    c.weights[j] = g.constant(weight);
  }
  Tensor tile = Tensor::Zero(3, v3);
  for (Index i = 0; i < V; ++i) tile.block(0, 3 * i, 3, 3).setIdentity();
  c.tile = g.constant(tile);
  if (length > 1) {
    Tensor d = Tensor::Zero(length - 1, length);
    for (Index k = 0; k + 1 < length; ++k) {
      d(k, k) = -1.0;
      d(k, k + 1) = 1.0;
    }
    c.difference = g.constant(d);
  }
  Tensor fwd(length, 3);
  for (Index k = 0; k < length; ++k) fwd.row(k) = face::kGazeForward.transpose();
  c.forward = g.constant(fwd);
  Tensor sel = Tensor::Zero(face::kMotionDim, face::kLipCount);
  for (Index i = 0; i < face::kLipCount; ++i) sel(geo.basis.lip_indices[static_cast<std::size_t>(i)], i) = 1.0;
  c.lip_select = g.constant(sel);
  return c;
}

Var joint_rotation(Var x, Index j) { return slice_cols(x, face::kRotationOffset + 3 * j, 3); }

// Posed vertices (L x 3V) of a model-space track; mirrors face::pose_mesh.
Var posed_vertices(Var x, Var base, const LossConstants& c, const Geometry& geo) {
  Var rest = matmul(slice_cols(x, face::kExpressionOffset, face::kExpressionDim), c.expression_bases) + base;
  auto local = [&](Index j, Var v) { return rotate_vectors(joint_rotation(x, j), v - c.pivots[j]) + c.pivots[j]; };
  Var posed;
  for (Index j = 0; j < face::kJointCount; ++j) {
    Var v = rest;
    for (int k = static_cast<int>(j); k >= 0; k = geo.rig.parent[static_cast<std::size_t>(k)]) v = local(k, v);
    Var term = v * c.weights[j];
    posed = posed.valid() ? posed + term : term;
  }
  return posed + matmul(slice_cols(x, face::kTranslationOffset, face::kTranslationDim), c.tile);
}

// Unnormalized gaze direction per frame: sum of both eyes' chained forward vectors.
Var gaze_directions(Var x, const LossConstants& c, const Geometry& geo) {
  auto eye = [&](face::Joint e) {
    Var v = c.forward;
    for (int k = static_cast<int>(e); k >= 0; k = geo.rig.parent[static_cast<std::size_t>(k)]) {
      v = rotate_vectors(joint_rotation(x, k), v);
    }
    return v;
  };
  return eye(face::Joint::kLeftEye) + eye(face::Joint::kRightEye);
}

Var block_mse(Var pred, Var target, Index offset, Index count) {
  return mean(square(slice_cols(pred, offset, count) - slice_cols(target, offset, count)));
}

}  // namespace

LossVars build_loss(Graph& g, Var pred_a, Var pred_b, Index length, LossKind kind, const Geometry& geo,
                    const LossWeights& w) {
  if (length < 2) throw std::invalid_argument("build_loss: sequences need at least two frames");
  const LossConstants c = make_constants(g, length, geo);
  const Index v3 = geo.basis.mean_shape.cols();
  Var target_a = g.input("target_a", {length, face::kMotionDim});
  Var target_b = g.input("target_b", {length, face::kMotionDim});
  LossVars out;

  if (kind == LossKind::kLipOnly) {
    auto lip = [&](Var pred, Var target, const char* p) {
      Var gate = g.input(std::string("gate_") + p, {length, 1});
      Var norm = g.input(std::string("lipnorm_") + p, {1, 1});
      return sum(square(matmul(pred - target, c.lip_select) * gate)) * norm;
    };
    out.total = lip(pred_a, target_a, "a") + lip(pred_b, target_b, "b");
    out.components["lip"] = out.total;
    return out;
  }

  auto both = [](Var a, Var b) { return 0.5 * (a + b); };
  out.components["expr"] = both(block_mse(pred_a, target_a, face::kExpressionOffset, face::kExpressionDim),
                                block_mse(pred_b, target_b, face::kExpressionOffset, face::kExpressionDim));
  out.components["rot"] = both(block_mse(pred_a, target_a, face::kRotationOffset, face::kRotationDim),
                               block_mse(pred_b, target_b, face::kRotationOffset, face::kRotationDim));
  out.components["trans"] = both(block_mse(pred_a, target_a, face::kTranslationOffset, face::kTranslationDim),
                                 block_mse(pred_b, target_b, face::kTranslationOffset, face::kTranslationDim));

  Var base_a = g.input("base_a", {1, v3});
  Var base_b = g.input("base_b", {1, v3});
  auto velocity = [&](Var pred, Var target, Var base) {
    Var diff = posed_vertices(pred, base, c, geo) - posed_vertices(target, base, c, geo);
    return mean(square(matmul(c.difference, diff)));
  };
  out.components["vel"] = both(velocity(pred_a, target_a, base_a), velocity(pred_b, target_b, base_b));

  out.total = w.expr * out.components["expr"] + w.rot * out.components["rot"] + w.trans * out.components["trans"] +
              w.vel * out.components["vel"];

  if (kind == LossKind::kComponentsGaze) {
    auto gaze = [&](Var pred, Var target) {
      return mean(add_scalar(-cosine_rows(gaze_directions(pred, c, geo), gaze_directions(target, c, geo)), 1.0));
    };
    out.components["gaze"] = both(gaze(pred_a, target_a), gaze(pred_b, target_b));
    out.total = out.total + w.gaze * out.components["gaze"];
  }
  return out;
}

NamedTensors loss_bindings(const PreparedSample& s, const Geometry& geo) {
  NamedTensors b;
  b["target_a"] = s.target_a;
  b["target_b"] = s.target_b;
  b["base_a"] = geo.basis.mean_shape + s.identity_a * geo.basis.identity_bases;
  b["base_b"] = geo.basis.mean_shape + s.identity_b * geo.basis.identity_bases;
  auto gate = [&](const Tensor& mask, const char* p) {
    Tensor gt = (mask.array() > 0.5).cast<double>();
    const double n = std::max(1.0, gt.sum());
    b[std::string("gate_") + p] = gt;
    b[std::string("lipnorm_") + p] = Tensor::Constant(1, 1, 1.0 / (n * static_cast<double>(face::kLipCount)));
  };
  gate(s.mask_a, "a");
  gate(s.mask_b, "b");
  return b;
}

namespace {

std::map<std::string, double> evaluate_loss(const Tensor& pred_a, const Tensor& pred_b, const PreparedSample& s,
                                            const Geometry& geo, const LossWeights& w, LossKind kind) {
  const Index L = s.length();
  if (pred_a.rows() != L || pred_b.rows() != L) throw std::invalid_argument("loss: prediction length mismatch");
  Graph g;
  Var pa = g.input("pred_a", {L, face::kMotionDim});
  Var pb = g.input("pred_b", {L, face::kMotionDim});
  const LossVars lv = build_loss(g, pa, pb, L, kind, geo, w);
  NamedTensors b = loss_bindings(s, geo);
  b["pred_a"] = pred_a;
  b["pred_b"] = pred_b;
  const Evaluation ev = evaluate(g, b);
  std::map<std::string, double> out;
  for (const auto& [name, v] : lv.components) out[name] = ev[v](0, 0);
  out["total"] = ev[lv.total](0, 0);
  return out;
}

}  // namespace

std::map<std::string, double> component_losses(const Tensor& pred_a, const Tensor& pred_b, const PreparedSample& s,
                                               const Geometry& geo, const LossWeights& w) {
  return evaluate_loss(pred_a, pred_b, s, geo, w,
                       s.gaze_subset ? LossKind::kComponentsGaze : LossKind::kComponents);
}

double lip_only_loss(const Tensor& pred_a, const Tensor& pred_b, const PreparedSample& s, const Geometry& geo) {
  return evaluate_loss(pred_a, pred_b, s, geo, {}, LossKind::kLipOnly).at("total");
}

LossKind loss_kind_for(const PreparedSample& s, int stage) {
  if (stage == 2 && s.source != data::Source::kConversation) return LossKind::kLipOnly;
  return s.gaze_subset ? LossKind::kComponentsGaze : LossKind::kComponents;
}

LossGraphCache::LossGraphCache(const ModelConfig& model, const LossWeights& weights, const Geometry& geo)
    : model_(model), weights_(weights), geo_(geo) {}

const LossGraphCache::Entry& LossGraphCache::get(Index length, LossKind kind) {
  auto key = std::make_pair(length, kind);
  auto it = entries_.find(key);
  if (it != entries_.end()) return it->second;
  Entry e;
  e.graph = std::make_unique<Graph>();
  e.net = net::build_dual_net(*e.graph, model_.unet, length);
  e.loss = build_loss(*e.graph, e.net.pred_a, e.net.pred_b, length, kind, geo_, weights_);
  return entries_.emplace(key, std::move(e)).first->second;
}

DiffusionDraw draw_diffusion(std::mt19937_64& rng, Index length, double audio_dropout_p) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  DiffusionDraw d;
  d.t = u(rng);
  d.eps_a.resize(length, face::kMotionDim);
  d.eps_b.resize(length, face::kMotionDim);
  for (Index i = 0; i < d.eps_a.size(); ++i) d.eps_a.data()[i] = n(rng);
  for (Index i = 0; i < d.eps_b.size(); ++i) d.eps_b.data()[i] = n(rng);
  d.drop_audio = u(rng) < audio_dropout_p;
  return d;
}

NamedTensors training_bindings(const PreparedSample& s, const DiffusionDraw& d, const ModelConfig& model,
                               const Geometry& geo, const diffusion::NoiseSchedule& schedule) {
  NamedTensors b = net::bind_inputs(model.unet, diffusion::noise(schedule, s.target_a, d.t, d.eps_a),
                                    diffusion::noise(schedule, s.target_b, d.t, d.eps_b), d.t,
                                    s.condition(d.drop_audio));
  b.merge(loss_bindings(s, geo));
  return b;
}

Trainer::Trainer(ModelConfig model, TrainConfig cfg, std::vector<PreparedSample> pool,
                 std::vector<PreparedSample> lip_pool, TrainState state)
    : model_(std::move(model)),
      cfg_(std::move(cfg)),
      geo_(make_geometry(model_)),
      pool_(std::move(pool)),
      lip_pool_(std::move(lip_pool)),
      state_(std::move(state)),
      cache_(model_, cfg_.weights, geo_) {
  cfg_.validate();
  model_.unet.validate();
  if (pool_.empty() && (cfg_.stage == 1 || lip_pool_.empty())) throw std::invalid_argument("Trainer: empty pool");
  if (cfg_.stage == 2 && lip_pool_.empty() && cfg_.lip_fraction > 0.0 && pool_.empty()) {
    throw std::invalid_argument("Trainer: stage 2 needs samples");
  }
  state_.stage = cfg_.stage;
}

std::pair<StepReport, NamedTensors> Trainer::loss_and_grads(Index step) {
  std::mt19937_64 rng = derived_rng(cfg_.seed, {static_cast<std::uint64_t>(step)});
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // Batch selection: a shuffled prefix of each pool, drawn from this step's stream.
  auto order = [&](std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
  };
  const std::vector<std::size_t> main_order = order(pool_.size());
  const std::vector<std::size_t> lip_order = order(lip_pool_.size());
  std::size_t next_main = 0, next_lip = 0;

  StepReport report;
  report.step = step;
  NamedTensors grads;
  for (const auto& [name, p] : state_.params) grads[name] = Tensor::Zero(p.rows(), p.cols());

  const double inv = 1.0 / static_cast<double>(cfg_.batch_size);
  for (Index i = 0; i < cfg_.batch_size; ++i) {
    bool lip = false;
    if (cfg_.stage == 2) {
      lip = pool_.empty() || (!lip_pool_.empty() && u(rng) < cfg_.lip_fraction);
    }
    const PreparedSample& picked =
        lip ? lip_pool_[lip_order[next_lip++ % lip_order.size()]] : pool_[main_order[next_main++ % main_order.size()]];
    const LossKind kind = lip ? LossKind::kLipOnly : loss_kind_for(picked, 1);
    const DiffusionDraw d = draw_diffusion(rng, picked.length(), cfg_.audio_dropout_p);
    // Both draws are always taken so the stream does not depend on the probability.
    const bool relabel = u(rng) < cfg_.listener_relabel_p && !lip;
    const bool relabel_b = u(rng) < 0.5;
    const PreparedSample s = relabel ? relabel_listener(picked, relabel_b, geo_.basis.lip_indices) : picked;
    const LossGraphCache::Entry& e = cache_.get(s.length(), kind);

    const NamedTensors inputs = training_bindings(s, d, model_, geo_);
    const Evaluation ev = evaluate(*e.graph, state_.params, inputs);
    for (const auto& [name, v] : e.loss.components) {
      const double value = ev[v](0, 0);
      if (!std::isfinite(value)) throw NonFiniteGradient("train: non-finite " + name + " loss at step " +
                                                         std::to_string(step));
      report.losses[name] += inv * value;
    }
    report.losses["total"] += inv * ev[e.loss.total](0, 0);
    const NamedTensors g = backward(*e.graph, ev, e.loss.total);
    for (auto& [name, acc] : grads) acc += inv * g.at(name);
  }
  return {report, grads};
}

StepReport Trainer::step() {
  const Index step = state_.adam.step + 1;
  auto [report, grads] = loss_and_grads(step);
  report.learning_rate = learning_rate_at(cfg_, step);
  optimizer_step(state_.params, grads, report.learning_rate, state_.adam, cfg_.adam);
  return report;
}

std::vector<StepReport> Trainer::run(Index steps, const std::function<void(const StepReport&)>& on_step) {
  std::vector<StepReport> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (Index i = 0; i < steps; ++i) {
    out.push_back(step());
    if (on_step) on_step(out.back());
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  NamedTensors t;
  for (const auto& [name, v] : state.params) t["param/" + name] = v;
  for (const auto& [name, v] : state.adam.m) t["adam.m/" + name] = v;
  for (const auto& [name, v] : state.adam.v) t["adam.v/" + name] = v;
  t["meta/step"] = Tensor::Constant(1, 1, static_cast<double>(state.adam.step));
  t["meta/stage"] = Tensor::Constant(1, 1, static_cast<double>(state.stage));
  save_archive(path, t);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const NamedTensors t = load_archive(path);
  TrainState s;
  for (const auto& [key, v] : t) {
    const auto slash = key.find('/');
    if (slash == std::string::npos) throw io::FormatError("checkpoint: unexpected record " + key);
    const std::string group = key.substr(0, slash), name = key.substr(slash + 1);
    if (group == "param") {
      s.params[name] = v;
    } else if (group == "adam.m") {
      s.adam.m[name] = v;
    } else if (group == "adam.v") {
      s.adam.v[name] = v;
    } else if (key == "meta/step") {
      s.adam.step = static_cast<Index>(v(0, 0));
    } else if (key == "meta/stage") {
      s.stage = static_cast<int>(v(0, 0));
    } else {
      throw io::FormatError("checkpoint: unexpected record " + key);
    }
  }
  if (s.params.empty()) throw io::FormatError("checkpoint: no parameters");
  return s;
}

TrainState initial_state(const ModelConfig& model, int stage) {
  TrainState s;
  s.params = net::init_params(model.unet, model.init_seed);
  s.stage = stage;
  return s;
}

namespace {

std::string number(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

}  // namespace

std::string loss_curve_csv(const std::vector<StepReport>& reports) {
  static const char* kColumns[] = {"expr", "rot", "trans", "vel", "gaze", "lip", "total"};
  std::ostringstream os;
  os << "step,lr";
  for (const char* c : kColumns) os << ',' << c;
  os << '\n';
  for (const StepReport& r : reports) {
    os << r.step << ',' << number(r.learning_rate, 6);
    for (const char* c : kColumns) {
      auto it = r.losses.find(c);
      os << ',';
      if (it != r.losses.end()) os << number(it->second, 9);
    }
    os << '\n';
  }
  return os.str();
}

std::pair<Tensor, Tensor> sample_dyad(const NamedTensors& params, const ModelConfig& model, const PreparedSample& s,
                                      const diffusion::SamplerConfig& sampler, bool zero_mask_a) {
  const net::DualNet dual(model.unet, s.length());
  cond::DyadCondition c = s.condition(false);
  if (zero_mask_a) {
    PreparedSample muted = s;
    muted.mask_a.setZero();
    c = muted.condition(false);
  }
  diffusion::Denoiser den = [&](const Tensor& xa, const Tensor& xb, double t, const cond::DyadCondition& cc) {
    return dual.forward(params, xa, xb, t, cc);
  };
  return diffusion::ddim_sample(den, c, s.length(), sampler);
}

}  // namespace dyad::train
