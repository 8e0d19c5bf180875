#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dyad/datagen.hpp"
#include "dyad/diffusion.hpp"
#include "dyad/layout.hpp"
#include "dyad/training.hpp"

namespace dyad::pipeline {

struct Paths {
  std::filesystem::path dataset = "runs/tiny/data";
  std::filesystem::path checkpoints = "runs/tiny/ckpt";
  std::filesystem::path reports = "runs/tiny/reports";
};

struct MetricsConfig {
  Index feature_dim = 32;
  std::uint64_t feature_seed = 99;
  Index sid_k = 40;
};

struct LayoutConfig {
  std::filesystem::path bank = "data/layout_bank.jsonl";
  std::string prompt = "Standing face-to-face in a normal conversation.";
  layout::LlmClientConfig client;
};

/// Everything a run needs. The global seed drives data generation, parameter
/// initialization, training draws and sampling. Defaults are the tiny
/// single-core configuration of configs/tiny.json.
struct GlobalConfig {
  GlobalConfig();

  std::uint64_t seed = 0;
  Paths paths;
  train::ModelConfig model;
  data::DatasetConfig data;
  train::TrainConfig train;  // stage and total_steps are set per stage
  Index stage1_steps = 150;
  Index stage2_steps = 100;
  Index checkpoint_every = 50;
  diffusion::SamplerConfig sampler;
  MetricsConfig metrics;
  LayoutConfig layout;

  /// Pushes the global seed into every component.
  void apply_seed(std::uint64_t s);
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSON tree. Missing keys keep their defaults; unknown keys are rejected.
std::string encode_config(const GlobalConfig& cfg);
GlobalConfig decode_config(std::string_view text);
GlobalConfig load_config(const std::filesystem::path& path);

/// A pipeline stage failed; `stage` names it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Writes the dataset and its manifest under paths.dataset.
data::Manifest cmd_datagen(const GlobalConfig& cfg);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_curve;
  std::vector<train::StepReport> reports;
};

/// Stage 1 trains conversation samples from scratch; stage 2 continues from the
/// stage-1 checkpoint with the dub and single-speaker samples as the lip-only
/// pool. `resume` continues an interrupted run of the same stage.
TrainResult cmd_train(const GlobalConfig& cfg, int stage, const std::optional<std::filesystem::path>& resume = {});

std::filesystem::path checkpoint_path(const GlobalConfig& cfg, int stage);

struct SampledPair {
  face::MotionSequence a;
  face::MotionSequence b;
};

/// Samples every evaluation clip from the latest checkpoint and writes
/// samples/NNNNNN_{A,B}.dym under paths.reports. A layout, when given,
/// replaces the first-frame translations.
std::vector<SampledPair> cmd_sample(const GlobalConfig& cfg, const std::optional<layout::LayoutResult>& layout = {});

/// Metric report in the table-row schema; also written to report.json.
std::string cmd_eval(const GlobalConfig& cfg);

/// Layout for `prompt`, written to layout.json.
layout::LayoutResult cmd_layout(const GlobalConfig& cfg, const std::string& prompt, bool live);

enum class Stage { kDatagen, kTrain1, kTrain2, kSample, kEval, kLayout };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

/// datagen, train (stage 1), train (stage 2), sample, eval, layout; `from`
/// skips the earlier stages. Failures surface as StageError.
std::string cmd_pipeline(const GlobalConfig& cfg, Stage from = Stage::kDatagen);

/// Progress lines on standard error.
void set_verbose(bool on);

/// The evaluation split: "val" when present, otherwise every sample.
std::vector<data::DyadSample> evaluation_samples(const GlobalConfig& cfg);

}  // namespace dyad::pipeline
