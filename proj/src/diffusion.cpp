#include "dyad/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace dyad::diffusion {
namespace {

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

Tensor standard_normal(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

void check_finite(const Tensor& t, int step, const char* what) {
  if (!t.allFinite()) {
    throw NonFiniteError("ddim_sample: non-finite " + std::string(what) + " at step " + std::to_string(step));
  }
}

}  // namespace

double NoiseSchedule::logsnr(double t) const {
  if (t <= 0.0) return logsnr_max;
  if (t >= 1.0) return logsnr_min;
  const double v = -2.0 * std::log(std::tan(std::numbers::pi * t / 2.0));
  return std::clamp(v, logsnr_min, logsnr_max);
}

double NoiseSchedule::alpha(double t) const { return std::sqrt(sigmoid(logsnr(t))); }
double NoiseSchedule::sigma(double t) const { return std::sqrt(sigmoid(-logsnr(t))); }

Tensor noise(const NoiseSchedule& s, const Tensor& x0, double t, const Tensor& eps) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw std::invalid_argument("noise: shape mismatch");
  return s.alpha(t) * x0 + s.sigma(t) * eps;
}

Tensor cfg_combine(const Tensor& cond, const Tensor& uncond, double w) {
  if (cond.rows() != uncond.rows() || cond.cols() != uncond.cols()) {
    throw std::invalid_argument("cfg_combine: shape mismatch");
  }
  if (w == 1.0) return cond;  // u + (c - u) need not round back to c
  return uncond + w * (cond - uncond);
}

void SamplerConfig::validate() const {
  if (num_steps < 1) throw std::invalid_argument("sampler: num_steps must be >= 1");
  if (!(guidance_weight >= 0.0)) throw std::invalid_argument("sampler: guidance weight must be >= 0");
}

cond::DyadCondition drop_audio(const cond::DyadCondition& c) {
  cond::DyadCondition d = c;
  for (cond::StreamCondition* s : {&d.a, &d.b}) {
    s->audio.setZero();
    s->audio_dropped = true;
  }
  return d;
}

std::pair<Tensor, Tensor> ddim_sample(const Denoiser& model, const cond::DyadCondition& condition, Index length,
                                      const SamplerConfig& sampler, const NoiseSchedule& schedule) {
  sampler.validate();
  std::mt19937_64 rng(sampler.seed);
  Tensor xa = standard_normal(length, face::kMotionDim, rng);
  Tensor xb = standard_normal(length, face::kMotionDim, rng);
  const cond::DyadCondition uncond = drop_audio(condition);
  const bool guided = sampler.guidance_weight != 1.0;

  Tensor pa, pb;
  const int n = sampler.num_steps;
  for (int i = 0; i < n; ++i) {
    const double t = 1.0 - static_cast<double>(i) / n;
    const double t_next = 1.0 - static_cast<double>(i + 1) / n;
    std::tie(pa, pb) = model(xa, xb, t, condition);
    if (guided) {
      auto [ua, ub] = model(xa, xb, t, uncond);
      pa = cfg_combine(pa, ua, sampler.guidance_weight);
      pb = cfg_combine(pb, ub, sampler.guidance_weight);
    }
    check_finite(pa, i, "prediction");
    check_finite(pb, i, "prediction");
    if (i + 1 == n) break;
    const double a = schedule.alpha(t), s = schedule.sigma(t);
    const double an = schedule.alpha(t_next), sn = schedule.sigma(t_next);
    xa = an * pa + sn * ((xa - a * pa) / s);
    xb = an * pb + sn * ((xb - a * pb) / s);
    check_finite(xa, i, "state");
    check_finite(xb, i, "state");
  }
  return {pa, pb};
}

face::MotionSequence to_motion(const Tensor& x0, const Vec3& t0, double fps, const RowVector& identity) {
  face::MotionSequence m = face::MotionSequence::from_parameters(x0, fps, identity);
  m.translation = face::apply_translation_deltas(t0, m.translation);
  return m;
}

Tensor to_model_space(const face::MotionSequence& motion) {
  Tensor p = motion.parameters();
  p.middleCols(face::kTranslationOffset, face::kTranslationDim) = face::delta_translation(motion.translation).deltas;
  return p;
}

}  // namespace dyad::diffusion
