#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>

#include "dyad/conditioning.hpp"
#include "dyad/facemodel.hpp"

namespace dyad::diffusion {

/// Cosine logSNR schedule: logSNR(t) = -2 log tan(pi t / 2), clamped.
struct NoiseSchedule {
  double logsnr_min = -15.0;
  double logsnr_max = 15.0;

  double logsnr(double t) const;
  double alpha(double t) const;  // sqrt(sigmoid(logSNR))
  double sigma(double t) const;  // sqrt(sigmoid(-logSNR))
};

/// x_t = alpha(t) x0 + sigma(t) eps.
Tensor noise(const NoiseSchedule& s, const Tensor& x0, double t, const Tensor& eps);

/// uncond + w (cond - uncond).
Tensor cfg_combine(const Tensor& cond, const Tensor& uncond, double w);

struct SamplerConfig {
  int num_steps = 8;
  double guidance_weight = 2.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Clean-motion predictor for both streams: (x_a, x_b, t, condition) -> (x0_a, x0_b).
using Denoiser = std::function<std::pair<Tensor, Tensor>(const Tensor&, const Tensor&, double,
                                                         const cond::DyadCondition&)>;

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic DDIM over the uniform grid t = 1 -> 0 with classifier-free
/// guidance against the audio-dropped condition. Returns the final x0
/// predictions (L x 78, translation block as deltas from the first frame).
std::pair<Tensor, Tensor> ddim_sample(const Denoiser& model, const cond::DyadCondition& condition, Index length,
                                      const SamplerConfig& sampler, const NoiseSchedule& schedule = {});

/// The same condition with the audio block dropped.
cond::DyadCondition drop_audio(const cond::DyadCondition& c);

/// Model-space row layout [psi | theta | delta t] back to a motion sequence,
/// adding the first-frame translation to the deltas.
face::MotionSequence to_motion(const Tensor& x0, const Vec3& t0, double fps, const RowVector& identity);

/// Motion sequence to model space: translation replaced by deltas from frame 0.
Tensor to_model_space(const face::MotionSequence& motion);

}  // namespace dyad::diffusion
