#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dyad/types.hpp"

namespace dyad::cond {

inline constexpr int kSampleRate = 16000;
inline constexpr Index kMelBands = 40;

/// Mono audio at 16 kHz, amplitudes in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Samples per animation frame.
Index frame_hop(double fps);

/// Number of animation frames covered by a waveform (rounded to nearest).
Index frame_count(const Waveform& wave, double fps);

struct ConditionConfig {
  Index audio_dim = 64;     // D_a
  Index role_dim = 16;      // d_e
  Index time_dim = 16;      // sinusoidal timestep embedding width
  double vad_threshold_db = -40.0;
  std::uint64_t projection_seed = 1234;
};

/// Width of one assembled condition row (without the timestep embedding):
/// D_a + 2 d_e + 2 + 6.
inline Index condition_dim(const ConditionConfig& cfg) { return cfg.audio_dim + 2 * cfg.role_dim + 2 + 6; }

/// Per-frame speaking probability from frame RMS in dBFS, smoothed by a
/// two-frame box. Returns L x 1.
Tensor compute_vad_mask(const Waveform& wave, double fps, double threshold_db, Index frames);
Tensor compute_vad_mask(const Waveform& wave, double fps, double threshold_db);

/// Log mel-style band energies, L x 40. Each animation frame averages the log
/// energies of its 20 ms subframes.
Tensor log_band_energies(const Waveform& wave, double fps, Index frames);

/// Fixed seeded projection of band energies to D_a dims.
class AudioFeatureExtractor {
 public:
  AudioFeatureExtractor(Index audio_dim, std::uint64_t seed);

  Index dim() const { return projection_.rows(); }
  const Tensor& projection() const { return projection_; }  // D_a x 40

  /// L x D_a.
  Tensor operator()(const Waveform& wave, double fps, Index frames) const;
  Tensor project(const Tensor& log_energies) const;

 private:
  Tensor projection_;
};

struct RoleEmbeddings {
  RowVector speak;
  RowVector listen;
};

RoleEmbeddings make_role_embeddings(Index dim, std::uint64_t seed);

/// m e_speak + (1 - m) e_listen.
RowVector role_embed(double m, const RoleEmbeddings& emb);

class LengthMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raw per-stream condition signals, self first. The network builds the
/// role-embedding blocks from these in-graph so the embeddings can be trained.
struct StreamCondition {
  Tensor audio;       // L x D_a (zeros when dropped)
  Tensor mask_self;   // L x 1
  Tensor mask_other;  // L x 1
  Vec3 t0_self = Vec3::Zero();
  Vec3 t0_other = Vec3::Zero();
  bool audio_dropped = false;

  Index length() const { return audio.rows(); }
};

/// The pair (cond_A, cond_B): B's view swaps the self/other roles.
struct DyadCondition {
  StreamCondition a;
  StreamCondition b;
};

DyadCondition make_dyad_condition(const Tensor& features, const Tensor& mask_a, const Tensor& mask_b,
                                  const Vec3& t0_a, const Vec3& t0_b, bool drop_audio);

/// Assembled per-frame condition rows [a | e_self | e_other | m_self m_other | t0_self t0_other].
struct ConditionSequence {
  Tensor values;  // L x condition_dim
  bool audio_dropped = false;
};

ConditionSequence assemble_condition(const Tensor& features, const Tensor& mask_self, const Tensor& mask_other,
                                     const RoleEmbeddings& emb, const Vec3& t0_self, const Vec3& t0_other,
                                     bool drop_audio);
ConditionSequence assemble_condition(const StreamCondition& c, const RoleEmbeddings& emb);

/// Sinusoidal embedding of diffusion time t in [0, 1]: [sin(w_i t), cos(w_i t)].
RowVector timestep_embedding(double t, Index dim);

}  // namespace dyad::cond
