#include "dyad/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <unsupported/Eigen/FFT>

namespace dyad::cond {
namespace {

constexpr Index kSubframe = 320;  // 20 ms at 16 kHz
constexpr Index kFftSize = 512;
constexpr double kEnergyFloor = 1e-10;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters over the one-sided spectrum, 40 x (kFftSize/2 + 1).
const Tensor& mel_filters() {
  static const Tensor filters = [] {
    const Index bins = kFftSize / 2 + 1;
    Tensor f = Tensor::Zero(kMelBands, bins);
    const double top = hz_to_mel(kSampleRate / 2.0);
    std::vector<double> edges(kMelBands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(top * static_cast<double>(i) / (kMelBands + 1));
    }
    for (Index b = 0; b < kMelBands; ++b) {
      const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
      for (Index k = 0; k < bins; ++k) {
        const double hz = static_cast<double>(k) * kSampleRate / kFftSize;
        if (hz > lo && hz < mid) f(b, k) = (hz - lo) / (mid - lo);
        else if (hz >= mid && hz < hi) f(b, k) = (hi - hz) / (hi - mid);
      }
    }
    return f;
  }();
  return filters;
}

const std::vector<double>& hann() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kSubframe);
    for (Index i = 0; i < kSubframe; ++i) {
      v[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / kSubframe);
    }
    return v;
  }();
  return w;
}

double sample_at(const Waveform& wave, Index i) {
  return i < static_cast<Index>(wave.samples.size()) ? wave.samples[i] : 0.0;
}

void check_rate(const Waveform& wave) {
  if (wave.sample_rate != kSampleRate) throw std::invalid_argument("waveform must be sampled at 16 kHz");
}

void check_mask(const Tensor& m, Index len, const char* what) {
  if (m.rows() != len || m.cols() != 1) throw LengthMismatch(std::string(what) + ": expected L x 1 mask");
  if ((m.array() < 0.0).any() || (m.array() > 1.0).any()) {
    throw std::invalid_argument(std::string(what) + ": mask values must lie in [0, 1]");
  }
}

}  // namespace

Index frame_hop(double fps) {
  if (!(fps > 0.0)) throw std::invalid_argument("fps must be positive");
  return static_cast<Index>(std::llround(kSampleRate / fps));
}

Index frame_count(const Waveform& wave, double fps) {
  return static_cast<Index>(std::llround(static_cast<double>(wave.samples.size()) / frame_hop(fps)));
}

Tensor compute_vad_mask(const Waveform& wave, double fps, double threshold_db, Index frames) {
  check_rate(wave);
  if (wave.samples.empty()) throw std::invalid_argument("compute_vad_mask: empty waveform");
  if (frames < 1) throw std::invalid_argument("compute_vad_mask: frame count must be >= 1");
  const Index hop = frame_hop(fps);
  std::vector<double> active(frames);
  for (Index k = 0; k < frames; ++k) {
    double power = 0.0;
    for (Index i = k * hop; i < (k + 1) * hop; ++i) power += sample_at(wave, i) * sample_at(wave, i);
    const double rms = std::sqrt(power / static_cast<double>(hop));
    active[k] = rms > 0.0 && 20.0 * std::log10(rms) > threshold_db ? 1.0 : 0.0;
  }
  Tensor mask(frames, 1);
  for (Index k = 0; k < frames; ++k) mask(k, 0) = 0.5 * (active[k] + active[k > 0 ? k - 1 : 0]);
  return mask;
}

Tensor compute_vad_mask(const Waveform& wave, double fps, double threshold_db) {
  return compute_vad_mask(wave, fps, threshold_db, std::max<Index>(1, frame_count(wave, fps)));
}

Tensor log_band_energies(const Waveform& wave, double fps, Index frames) {
  check_rate(wave);
  const Index hop = frame_hop(fps);
  const Index per_frame = std::max<Index>(1, hop / kSubframe);
  const Tensor& filters = mel_filters();
  const auto& window = hann();
  Eigen::FFT<double> fft;
  std::vector<double> buf(kFftSize, 0.0);
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd power(kFftSize / 2 + 1);

  Tensor out = Tensor::Zero(frames, kMelBands);
  for (Index k = 0; k < frames; ++k) {
    for (Index s = 0; s < per_frame; ++s) {
      const Index start = k * hop + s * kSubframe;
      std::fill(buf.begin(), buf.end(), 0.0);
      for (Index i = 0; i < kSubframe; ++i) buf[i] = window[i] * sample_at(wave, start + i);
      fft.fwd(spec, buf);
      for (Index b = 0; b < power.size(); ++b) power(b) = std::norm(spec[b]);
      const Eigen::VectorXd bands = filters * power;
      out.row(k) += (bands.array() + kEnergyFloor).log().matrix().transpose();
    }
  }
  return out / static_cast<double>(per_frame);
}

AudioFeatureExtractor::AudioFeatureExtractor(Index audio_dim, std::uint64_t seed) {
  if (audio_dim < 1) throw std::invalid_argument("audio feature dim must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(kMelBands)));
  projection_.resize(audio_dim, kMelBands);
  for (Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = n(rng);
}

Tensor AudioFeatureExtractor::project(const Tensor& log_energies) const {
  // Center and scale log energies to roughly unit range before projecting.
  return ((log_energies.array() + 6.0) / 12.0).matrix() * projection_.transpose();
}

Tensor AudioFeatureExtractor::operator()(const Waveform& wave, double fps, Index frames) const {
  return project(log_band_energies(wave, fps, frames));
}

RoleEmbeddings make_role_embeddings(Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  RoleEmbeddings e{RowVector(dim), RowVector(dim)};
  for (Index i = 0; i < dim; ++i) e.speak(i) = n(rng);
  for (Index i = 0; i < dim; ++i) e.listen(i) = n(rng);
  return e;
}

RowVector role_embed(double m, const RoleEmbeddings& emb) {
  if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("role_embed: mask value outside [0, 1]");
  if (emb.speak.cols() != emb.listen.cols()) throw std::invalid_argument("role_embed: embedding size mismatch");
  return m * emb.speak + (1.0 - m) * emb.listen;
}

DyadCondition make_dyad_condition(const Tensor& features, const Tensor& mask_a, const Tensor& mask_b,
                                  const Vec3& t0_a, const Vec3& t0_b, bool drop_audio) {
  const Index len = features.rows();
  check_mask(mask_a, len, "make_dyad_condition");
  check_mask(mask_b, len, "make_dyad_condition");
  const Tensor audio = drop_audio ? Tensor::Zero(len, features.cols()) : features;
  return {{audio, mask_a, mask_b, t0_a, t0_b, drop_audio}, {audio, mask_b, mask_a, t0_b, t0_a, drop_audio}};
}

ConditionSequence assemble_condition(const Tensor& features, const Tensor& mask_self, const Tensor& mask_other,
                                     const RoleEmbeddings& emb, const Vec3& t0_self, const Vec3& t0_other,
                                     bool drop_audio) {
  const Index len = features.rows();
  check_mask(mask_self, len, "assemble_condition");
  check_mask(mask_other, len, "assemble_condition");
  const Index da = features.cols(), de = emb.speak.cols();
  ConditionSequence c;
  c.audio_dropped = drop_audio;
  c.values.resize(len, da + 2 * de + 8);
  for (Index k = 0; k < len; ++k) {
    auto row = c.values.row(k);
    if (drop_audio) row.head(da).setZero();
    else row.head(da) = features.row(k);
    row.segment(da, de) = role_embed(mask_self(k, 0), emb);
    row.segment(da + de, de) = role_embed(mask_other(k, 0), emb);
    row(da + 2 * de) = mask_self(k, 0);
    row(da + 2 * de + 1) = mask_other(k, 0);
    row.segment<3>(da + 2 * de + 2) = t0_self.transpose();
    row.segment<3>(da + 2 * de + 5) = t0_other.transpose();
  }
  return c;
}

ConditionSequence assemble_condition(const StreamCondition& c, const RoleEmbeddings& emb) {
  return assemble_condition(c.audio, c.mask_self, c.mask_other, emb, c.t0_self, c.t0_other, c.audio_dropped);
}

RowVector timestep_embedding(double t, Index dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("timestep embedding dim must be even");
  const Index half = dim / 2;
  RowVector e(dim);
  for (Index i = 0; i < half; ++i) {
    // Frequencies from 1 to 1000 rad per unit time, geometric.
    const double w = std::pow(1000.0, static_cast<double>(i) / std::max<Index>(1, half - 1));
    e(i) = std::sin(w * t);
    e(half + i) = std::cos(w * t);
  }
  return e;
}

}  // namespace dyad::cond
