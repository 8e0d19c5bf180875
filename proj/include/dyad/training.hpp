#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dyad/conditioning.hpp"
#include "dyad/datagen.hpp"
#include "dyad/diffusion.hpp"
#include "dyad/dualnet.hpp"
#include "dyad/facemodel.hpp"

namespace dyad::train {

using numerics::Graph;
using numerics::Var;

struct LossWeights {
  double expr = 1.0;
  double rot = 8.0;
  double trans = 1.0;
  double vel = 1.0;
  double gaze = 5.0;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamState {
  NamedTensors m;
  NamedTensors v;
  Index step = 0;  // completed updates
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decoupled-weight-decay Adam update. Throws NonFiniteGradient (leaving
/// params and state untouched) when any gradient entry is not finite.
void optimizer_step(NamedTensors& params, const NamedTensors& grads, double lr, AdamState& state,
                    const AdamWConfig& cfg = {});

/// Everything needed to rebuild the model and its geometry.
struct ModelConfig {
  net::UNetConfig unet;
  Index vertices = 300;
  std::uint64_t basis_seed = 7;
  std::uint64_t projection_seed = 1234;
  double vad_threshold_db = -40.0;
  std::uint64_t init_seed = 0;
};

struct TrainConfig {
  int stage = 1;
  double learning_rate = 1e-4;
  Index warmup_steps = 2000;
  Index batch_size = 8;
  Index total_steps = 2000;
  double audio_dropout_p = 0.1;
  double lip_fraction = 0.5;  // stage-2 share of lip-only samples
  double listener_relabel_p = 0.0;  // see relabel_listener
  std::uint64_t seed = 0;
  LossWeights weights;
  AdamWConfig adam;

  void validate() const;
};

/// base * min(1, step / warmup); `step` counts updates from 1.
double learning_rate_at(const TrainConfig& cfg, Index step);

/// A DyadSample in the form the network consumes.
struct PreparedSample {
  Tensor target_a;  // L x 78, translation as deltas from frame 0
  Tensor target_b;
  Tensor features;  // L x D_a from the mixed waveform
  Tensor mask_a;
  Tensor mask_b;
  Vec3 t0_a = Vec3::Zero();
  Vec3 t0_b = Vec3::Zero();
  RowVector identity_a;
  RowVector identity_b;
  double fps = 25.0;
  bool gaze_subset = false;
  data::Source source = data::Source::kConversation;

  Index length() const { return target_a.rows(); }
  cond::DyadCondition condition(bool drop_audio) const;
};

PreparedSample prepare(const data::DyadSample& s, const cond::AudioFeatureExtractor& features);

/// The same clip with one participant turned into a silent listener: mask 0 and
/// lip components 0 on every frame, audio untouched. The audio then reads as an
/// off-screen voice, which separates "my mask is on" from "the other mask is off".
PreparedSample relabel_listener(const PreparedSample& s, bool stream_b, const std::vector<Index>& lip_indices);

enum class LossKind { kComponents, kComponentsGaze, kLipOnly };

struct LossVars {
  Var total;
  std::map<std::string, Var> components;  // expr, rot, trans, vel[, gaze] or lip
};

/// Geometry shared by all loss graphs.
struct Geometry {
  face::FaceBasis basis;
  face::Rig rig;
};

Geometry make_geometry(const ModelConfig& cfg);

/// Adds the loss of `kind` on (pred_a, pred_b) to `g`. Per-sample data enters
/// through inputs named by `loss_bindings`.
LossVars build_loss(Graph& g, Var pred_a, Var pred_b, Index length, LossKind kind, const Geometry& geo,
                    const LossWeights& w);

NamedTensors loss_bindings(const PreparedSample& s, const Geometry& geo);

/// Named component values and "total", evaluated directly on predictions.
std::map<std::string, double> component_losses(const Tensor& pred_a, const Tensor& pred_b, const PreparedSample& s,
                                               const Geometry& geo, const LossWeights& w = {});
double lip_only_loss(const Tensor& pred_a, const Tensor& pred_b, const PreparedSample& s, const Geometry& geo);

LossKind loss_kind_for(const PreparedSample& s, int stage);

/// One loss graph (network + loss) per (length, kind), built on demand.
class LossGraphCache {
 public:
  struct Entry {
    std::unique_ptr<Graph> graph;
    net::DualVars net;
    LossVars loss;
  };

  LossGraphCache(const ModelConfig& model, const LossWeights& weights, const Geometry& geo);
  const Entry& get(Index length, LossKind kind);

 private:
  const ModelConfig& model_;
  LossWeights weights_;
  const Geometry& geo_;
  std::map<std::pair<Index, LossKind>, Entry> entries_;
};

/// Noise, time and dropout draws for one sample in one step.
struct DiffusionDraw {
  double t = 0.0;
  Tensor eps_a;
  Tensor eps_b;
  bool drop_audio = false;
};

DiffusionDraw draw_diffusion(std::mt19937_64& rng, Index length, double audio_dropout_p);

/// Network + loss bindings for one sample under one draw.
NamedTensors training_bindings(const PreparedSample& s, const DiffusionDraw& d, const ModelConfig& model,
                               const Geometry& geo, const diffusion::NoiseSchedule& schedule = {});

struct StepReport {
  Index step = 0;  // 1-based update index
  double learning_rate = 0.0;
  std::map<std::string, double> losses;  // batch means; "total" always present
};

struct TrainState {
  NamedTensors params;
  AdamState adam;
  int stage = 1;
};

class Trainer {
 public:
  /// `lip_pool` is only used in stage 2.
  Trainer(ModelConfig model, TrainConfig cfg, std::vector<PreparedSample> pool, std::vector<PreparedSample> lip_pool,
          TrainState state);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  StepReport step();
  std::vector<StepReport> run(Index steps, const std::function<void(const StepReport&)>& on_step = {});

  const TrainState& state() const { return state_; }
  const ModelConfig& model() const { return model_; }
  const Geometry& geometry() const { return geo_; }

  /// Mean batch loss and gradients at the current parameters for a given step's draws.
  std::pair<StepReport, NamedTensors> loss_and_grads(Index step);

 private:
  ModelConfig model_;
  TrainConfig cfg_;
  Geometry geo_;
  std::vector<PreparedSample> pool_;
  std::vector<PreparedSample> lip_pool_;
  TrainState state_;
  LossGraphCache cache_;
};

/// Checkpoint archive: "param/<name>", "adam.m/<name>", "adam.v/<name>",
/// "meta/step", "meta/stage".
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

TrainState initial_state(const ModelConfig& model, int stage = 1);

std::string loss_curve_csv(const std::vector<StepReport>& reports);

/// Guided DDIM sample for one prepared condition; returns model-space (x0_a, x0_b).
std::pair<Tensor, Tensor> sample_dyad(const NamedTensors& params, const ModelConfig& model, const PreparedSample& s,
                                      const diffusion::SamplerConfig& sampler, bool zero_mask_a = false);

}  // namespace dyad::train
