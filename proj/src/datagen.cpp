#include "dyad/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"

#include "dyad/binio.hpp"
#include "dyad/rng.hpp"

namespace dyad::data {
namespace {

using json = nlohmann::json;

constexpr std::uint32_t kSampleVersion = 1;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Sum of a few random sinusoids with frequencies in [lo, hi] Hz, unit variance.
std::vector<double> band_limited(std::mt19937_64& rng, Index len, double fps, double lo, double hi, int parts = 4) {
  std::uniform_real_distribution<double> freq(lo, hi), phase(0.0, kTwoPi), amp(0.5, 1.0);
  std::vector<double> out(len, 0.0);
  double power = 0.0;
  for (int p = 0; p < parts; ++p) {
    const double f = freq(rng), ph = phase(rng), a = amp(rng);
    power += 0.5 * a * a;
    for (Index k = 0; k < len; ++k) out[k] += a * std::sin(kTwoPi * f * static_cast<double>(k) / fps + ph);
  }
  const double norm = 1.0 / std::sqrt(power);
  for (double& v : out) v *= norm;
  return out;
}

void fill_column(Tensor& t, Index col, const std::vector<double>& v, double scale, double offset = 0.0) {
  for (Index k = 0; k < t.rows(); ++k) t(k, col) = offset + scale * v[k];
}

void mute_frame(Waveform& w, Index frame, Index hop) {
  const auto lo = static_cast<std::size_t>(frame * hop);
  const auto hi = std::min(w.samples.size(), static_cast<std::size_t>((frame + 1) * hop));
  for (std::size_t i = lo; i < hi; ++i) w.samples[i] = 0.0;
}

SingleClip passing_clip(std::uint64_t seed, double duration, const ClipOptions& opt,
                        const QualityThresholds& quality) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    SingleClip c = generate_single_clip(derived_seed(seed, {attempt}), duration, opt);
    if (quality_filter(c, quality)) return c;
  }
}

void put_motion(io::ByteWriter& w, const MotionSequence& m) {
  const std::string bytes = face::encode_motion(m);
  w.u64(bytes.size());
  w.bytes(bytes);
}

MotionSequence get_motion(io::ByteReader& r) {
  const auto n = r.u64();
  if (n > r.remaining()) throw io::FormatError("sample file: motion record truncated");
  return face::decode_motion(r.bytes(static_cast<std::size_t>(n)));
}

void put_column(io::ByteWriter& w, const Tensor& t) { w.f64s({t.data(), static_cast<std::size_t>(t.size())}); }

}  // namespace

std::string_view to_string(Source s) {
  switch (s) {
    case Source::kConversation: return "conversation";
    case Source::kSyntheticDub: return "synthetic_dub";
    case Source::kSingleSpeaker: return "single_speaker";
  }
  throw std::invalid_argument("unknown source");
}

Source source_from_string(std::string_view s) {
  for (Source v : {Source::kConversation, Source::kSyntheticDub, Source::kSingleSpeaker}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown source '" + std::string(s) + "'");
}

SingleClip generate_single_clip(std::uint64_t seed, double duration_s, const ClipOptions& opt) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("generate_single_clip: duration must be positive");
  const Index len = std::max<Index>(2, static_cast<Index>(std::llround(duration_s * opt.fps)));
  const Index hop = cond::frame_hop(opt.fps);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SingleClip c;
  c.envelope = Tensor::Zero(len, 1);
  if (!opt.silent) {
    const auto s = band_limited(rng, len, opt.fps, 1.0, 5.0, 6);
    for (Index k = 0; k < len; ++k) c.envelope(k, 0) = std::clamp(0.3 + 0.5 * s[k], 0.0, 1.0);
  }

  MotionSequence& m = c.motion;
  m.fps = opt.fps;
  m.expression = Tensor::Zero(len, face::kExpressionDim);
  m.rotation = Tensor::Zero(len, face::kRotationDim);
  m.translation = Tensor::Zero(len, face::kTranslationDim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < face::kIdentityDim; ++i) m.identity(i) = 0.5 * normal(rng);

  std::vector<bool> is_lip(face::kExpressionDim, false);
  for (Index j : face::default_lip_indices()) is_lip[j] = true;
  std::uniform_real_distribution<double> jitter(-opt.lip_noise, opt.lip_noise);
  for (Index j = 0; j < face::kExpressionDim; ++j) {
    if (is_lip[j]) {
      const double loading = opt.lip_gain * normal(rng);
      for (Index k = 0; k < len; ++k) m.expression(k, j) = c.envelope(k, 0) * loading + jitter(rng);
    } else {
      fill_column(m.expression, j, band_limited(rng, len, opt.fps, 0.2, 2.0), 0.3);
    }
  }

  const double joint_scale[face::kJointCount] = {0.03, 0.08, 0.12, 0.12};
  std::vector<std::vector<double>> gaze(3);
  for (auto& g : gaze) g = band_limited(rng, len, opt.fps, 0.2, 1.5);
  for (Index j = 0; j < face::kJointCount; ++j) {
    for (Index a = 0; a < 3; ++a) {
      const Index col = 3 * j + a;
      if (j >= 2) {
        // Eyes share a gaze process plus a small independent vergence term.
        const auto own = band_limited(rng, len, opt.fps, 0.2, 1.5);
        for (Index k = 0; k < len; ++k) m.rotation(k, col) = joint_scale[j] * gaze[a][k] + 0.02 * own[k];
      } else {
        fill_column(m.rotation, col, band_limited(rng, len, opt.fps, 0.1, 1.0), joint_scale[j]);
      }
    }
  }
  for (Index a = 0; a < 3; ++a) {
    const auto drift = band_limited(rng, len, opt.fps, 0.1, 0.5);
    for (Index k = 0; k < len; ++k) m.translation(k, a) = 0.01 * (drift[k] - drift[0]);
  }

  // Harmonic carrier with amplitude following the envelope, interpolated per sample.
  c.waveform.samples.assign(static_cast<std::size_t>(len * hop), 0.0);
  if (!opt.silent) {
    const double f0 = 110.0 + 110.0 * unit(rng);
    double phases[5];
    for (double& p : phases) p = kTwoPi * unit(rng);
    for (Index n = 0; n < len * hop; ++n) {
      const double pos = (static_cast<double>(n) + 0.5) / hop - 0.5;
      const Index k0 = std::clamp<Index>(static_cast<Index>(std::floor(pos)), 0, len - 1);
      const Index k1 = std::min(k0 + 1, len - 1);
      const double frac = std::clamp(pos - static_cast<double>(k0), 0.0, 1.0);
      const double env = (1.0 - frac) * c.envelope(k0, 0) + frac * c.envelope(k1, 0);
      double carrier = 0.0;
      for (int h = 1; h <= 5; ++h) {
        carrier += std::sin(kTwoPi * h * f0 * static_cast<double>(n) / cond::kSampleRate + phases[h - 1]) / h;
      }
      c.waveform.samples[static_cast<std::size_t>(n)] = 0.7 * env * carrier / 2.3;
    }
  }

  c.landmark_confidence.resize(len, 1);
  c.face_bbox_size.resize(len, 1);
  const bool degraded = unit(rng) < opt.bad_clip_rate;
  const double size = 120.0 + 80.0 * unit(rng);
  for (Index k = 0; k < len; ++k) {
    c.landmark_confidence(k, 0) = degraded && unit(rng) < 0.3 ? 0.2 : 0.8 + 0.2 * unit(rng);
    c.face_bbox_size(k, 0) = size * (1.0 + 0.05 * std::sin(kTwoPi * static_cast<double>(k) / 50.0));
  }
  return c;
}

void DyadSample::validate() const {
  motion_a.validate();
  motion_b.validate();
  const Index len = length();
  if (motion_b.length() != len || mask_a.rows() != len || mask_b.rows() != len || mask_a.cols() != 1 ||
      mask_b.cols() != 1) {
    throw std::invalid_argument("DyadSample: track lengths disagree");
  }
  if (mixed.samples.size() != track_a.samples.size() || mixed.samples.size() != track_b.samples.size()) {
    throw std::invalid_argument("DyadSample: waveform lengths disagree");
  }
  for (const Tensor* m : {&mask_a, &mask_b}) {
    if ((m->array() < 0.0).any() || (m->array() > 1.0).any()) throw std::invalid_argument("DyadSample: mask outside [0, 1]");
  }
}

bool identical(const DyadSample& x, const DyadSample& y) {
  auto same = [](const Tensor& a, const Tensor& b) { return a.rows() == b.rows() && a.cols() == b.cols() && a == b; };
  return face::identical(x.motion_a, y.motion_a) && face::identical(x.motion_b, y.motion_b) &&
         x.mixed.samples == y.mixed.samples && x.track_a.samples == y.track_a.samples &&
         x.track_b.samples == y.track_b.samples && x.mixed.sample_rate == y.mixed.sample_rate &&
         same(x.mask_a, y.mask_a) && same(x.mask_b, y.mask_b) && x.t0_a == y.t0_a && x.t0_b == y.t0_b &&
         x.gaze_subset == y.gaze_subset && x.source == y.source;
}

Index TurnSchedule::total() const { return std::accumulate(turns.begin(), turns.end(), Index{0}); }

Index overlap_frames(double fraction, Index length) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("overlap fraction must lie in [0, 1]");
  return static_cast<Index>(std::llround(fraction * static_cast<double>(length)));
}

DyadSample dub_compose(const SingleClip& clip_1, const SingleClip& clip_2, const TurnSchedule& schedule,
                       double overlap_fraction, const Vec3& t0_a, const Vec3& t0_b) {
  const Index len = schedule.total();
  if (len < 2 || std::any_of(schedule.turns.begin(), schedule.turns.end(), [](Index t) { return t < 1; })) {
    throw std::invalid_argument("dub_compose: schedule needs positive turns covering >= 2 frames");
  }
  if (clip_1.motion.length() < len || clip_2.motion.length() < len) {
    throw std::invalid_argument("dub_compose: schedule exceeds clip length");
  }
  const double fps = clip_1.motion.fps;
  const Index hop = cond::frame_hop(fps);

  // Base speaker per frame, then overlap frames spread over turn starts.
  DyadSample s;
  s.mask_a = Tensor::Zero(len, 1);
  s.mask_b = Tensor::Zero(len, 1);
  std::vector<std::pair<Index, Index>> turns;  // (start, length)
  Index at = 0;
  for (std::size_t i = 0; i < schedule.turns.size(); ++i) {
    const bool a_turn = (i % 2 == 0) != schedule.b_first;
    (a_turn ? s.mask_a : s.mask_b).middleRows(at, schedule.turns[i]).setOnes();
    turns.emplace_back(at, schedule.turns[i]);
    at += schedule.turns[i];
  }
  Index remaining = overlap_frames(overlap_fraction, len);
  const Index longest = *std::max_element(schedule.turns.begin(), schedule.turns.end());
  for (Index j = 0; j < longest && remaining > 0; ++j) {
    for (const auto& [start, size] : turns) {
      if (j >= size || remaining == 0) continue;
      s.mask_a(start + j, 0) = 1.0;
      s.mask_b(start + j, 0) = 1.0;
      --remaining;
    }
  }

  auto take = [&](const SingleClip& clip, const Tensor& mask, const Vec3& t0, Waveform& track) {
    MotionSequence m = clip.motion;
    m.expression.conservativeResize(len, Eigen::NoChange);
    m.rotation.conservativeResize(len, Eigen::NoChange);
    m.translation.conservativeResize(len, Eigen::NoChange);
    for (Index j : face::default_lip_indices()) m.expression.col(j).array() *= mask.col(0).array();
    m.translation.rowwise() += t0.transpose();
    track = clip.waveform;
    track.samples.resize(static_cast<std::size_t>(len * hop), 0.0);
    for (Index k = 0; k < len; ++k) {
      if (mask(k, 0) == 0.0) mute_frame(track, k, hop);
    }
    return m;
  };
  s.motion_a = take(clip_1, s.mask_a, t0_a, s.track_a);
  s.motion_b = take(clip_2, s.mask_b, t0_b, s.track_b);
  s.mixed.samples.resize(s.track_a.samples.size());
  for (std::size_t i = 0; i < s.mixed.samples.size(); ++i) s.mixed.samples[i] = s.track_a.samples[i] + s.track_b.samples[i];
  s.t0_a = t0_a;
  s.t0_b = t0_b;
  s.source = Source::kSyntheticDub;
  return s;
}

TurnSchedule random_schedule(std::uint64_t seed, Index frames, Index min_turn, Index max_turn) {
  if (frames < 1 || min_turn < 1 || max_turn < min_turn) throw std::invalid_argument("random_schedule: bad bounds");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> turn(min_turn, max_turn);
  TurnSchedule s;
  s.b_first = std::bernoulli_distribution(0.5)(rng);
  Index left = frames;
  while (left > 0) {
    const Index t = std::min(left, turn(rng));
    s.turns.push_back(t);
    left -= t;
  }
  return s;
}

DyadSample generate_sample(std::uint64_t seed, Source source, const SampleOptions& opt) {
  const double duration = static_cast<double>(opt.frames) / opt.fps;
  ClipOptions clip_opt = opt.clip;
  clip_opt.fps = opt.fps;
  const SingleClip c1 = passing_clip(derived_seed(seed, {1}), duration, clip_opt, opt.quality);
  if (source == Source::kSingleSpeaker) clip_opt.silent = true;
  const SingleClip c2 = passing_clip(derived_seed(seed, {2}), duration, clip_opt, opt.quality);

  std::mt19937_64 rng = derived_rng(seed, {3});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TurnSchedule schedule{{opt.frames}, false};
  double overlap = 0.0;
  if (source != Source::kSingleSpeaker) {
    schedule = random_schedule(derived_seed(seed, {4}), opt.frames, opt.min_turn, opt.max_turn);
    overlap = opt.max_overlap * unit(rng);
  }
  DyadSample s = dub_compose(c1, c2, schedule, overlap, opt.t0_a, opt.t0_b);
  s.source = source;
  if (source == Source::kConversation) {
    // Listeners nod with the partner's speech; masks get mild detector noise.
    const Index len = s.length();
    const Tensor env_a = c1.envelope.topRows(len).cwiseProduct(s.mask_a);
    const Tensor env_b = c2.envelope.topRows(len).cwiseProduct(s.mask_b);
    const Index pitch = face::joint_offset(face::Joint::kHead);
    s.motion_a.rotation.col(pitch) += 0.05 * env_b.col(0).cwiseProduct((Tensor::Ones(len, 1) - s.mask_a).col(0));
    s.motion_b.rotation.col(pitch) += 0.05 * env_a.col(0).cwiseProduct((Tensor::Ones(len, 1) - s.mask_b).col(0));
    std::uniform_real_distribution<double> jitter(-opt.mask_jitter, opt.mask_jitter);
    for (Tensor* m : {&s.mask_a, &s.mask_b}) {
      for (Index k = 0; k < len; ++k) (*m)(k, 0) = std::clamp((*m)(k, 0) + jitter(rng), 0.0, 1.0);
    }
  }
  return s;
}

bool quality_filter(const SingleClip& clip, double min_bbox, double min_confidence, Index max_bad_frames) {
  Index bad = 0;
  for (Index k = 0; k < clip.landmark_confidence.rows(); ++k) {
    if (clip.face_bbox_size(k, 0) < min_bbox || clip.landmark_confidence(k, 0) < min_confidence) ++bad;
  }
  return bad <= max_bad_frames;
}

bool quality_filter(const SingleClip& clip, const QualityThresholds& t) {
  const auto max_bad = static_cast<Index>(std::floor(t.max_bad_fraction * static_cast<double>(clip.landmark_confidence.rows())));
  return quality_filter(clip, t.min_bbox, t.min_confidence, max_bad);
}

double half_histogram_distance(const Image& img) {
  if (img.width < 2 || img.width % 2 != 0 || img.height < 1) throw std::invalid_argument("scenario_filter: width must be even");
  const Index half = img.width / 2;
  std::vector<double> left(512, 0.0), right(512, 0.0);
  for (Index y = 0; y < img.height; ++y) {
    for (Index x = 0; x < img.width; ++x) {
      const int bin = (img.at(x, y, 0) >> 5) * 64 + (img.at(x, y, 1) >> 5) * 8 + (img.at(x, y, 2) >> 5);
      (x < half ? left : right)[bin] += 1.0;
    }
  }
  const double n = static_cast<double>(half * img.height);
  double chi = 0.0;
  for (int b = 0; b < 512; ++b) {
    const double l = left[b] / n, r = right[b] / n;
    if (l + r > 0.0) chi += (l - r) * (l - r) / (l + r);
  }
  return 0.5 * chi;
}

double middle_seam_strength(const Image& img) {
  if (img.width < 2 || img.width % 2 != 0 || img.height < 1) throw std::invalid_argument("scenario_filter: width must be even");
  const Index x = img.width / 2;
  double total = 0.0;
  for (Index y = 0; y < img.height; ++y) {
    for (int c = 0; c < 3; ++c) total += std::abs(static_cast<double>(img.at(x, y, c)) - img.at(x - 1, y, c));
  }
  return total / static_cast<double>(img.height);
}

bool scenario_filter(const Image& img, const ScenarioThresholds& t) {
  return !(half_histogram_distance(img) > t.histogram && middle_seam_strength(img) > t.seam);
}

double head_rotation_variance(const MotionSequence& m) {
  const Tensor head = m.rotation.middleCols(face::joint_offset(face::Joint::kHead), 3);
  const RowVector mean = head.colwise().mean();
  return (head.rowwise() - mean).rowwise().squaredNorm().mean();
}

std::vector<bool> select_gaze_subset(const std::vector<double>& variances) {
  const std::size_t n = variances.size();
  if (n < 5) throw std::invalid_argument("select_gaze_subset: at least 5 samples required");
  const std::size_t keep = (n + 4) / 5;  // ceil(0.2 n)
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return variances[a] > variances[b]; });
  std::vector<bool> flags(n, false);
  for (std::size_t i = 0; i < keep; ++i) flags[order[i]] = true;
  return flags;
}

std::string encode_sample(const DyadSample& s) {
  s.validate();
  io::ByteWriter w;
  w.bytes(kSampleMagic);
  w.u32(kSampleVersion);
  w.u8(static_cast<std::uint8_t>(s.source));
  w.u8(s.gaze_subset ? 1 : 0);
  put_motion(w, s.motion_a);
  put_motion(w, s.motion_b);
  w.u32(static_cast<std::uint32_t>(s.mixed.sample_rate));
  w.u64(s.mixed.samples.size());
  for (const Waveform* wf : {&s.mixed, &s.track_a, &s.track_b}) w.f64s(wf->samples);
  put_column(w, s.mask_a);
  put_column(w, s.mask_b);
  w.f64s({s.t0_a.data(), 3});
  w.f64s({s.t0_b.data(), 3});
  return w.take();
}

DyadSample decode_sample(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kSampleMagic);
  if (r.u32() != kSampleVersion) throw io::FormatError("unsupported sample file version");
  DyadSample s;
  const std::uint8_t src = r.u8();
  if (src > 2) throw io::FormatError("sample file: unknown source tag");
  s.source = static_cast<Source>(src);
  s.gaze_subset = r.u8() != 0;
  s.motion_a = get_motion(r);
  s.motion_b = get_motion(r);
  const int rate = static_cast<int>(r.u32());
  const auto n = r.u64();
  if (n > r.remaining() / 24) throw io::FormatError("sample file: waveform truncated");
  for (Waveform* wf : {&s.mixed, &s.track_a, &s.track_b}) {
    wf->sample_rate = rate;
    wf->samples.resize(static_cast<std::size_t>(n));
    r.f64s(wf->samples);
  }
  const Index len = s.motion_a.length();
  s.mask_a.resize(len, 1);
  s.mask_b.resize(len, 1);
  r.f64s({s.mask_a.data(), static_cast<std::size_t>(len)});
  r.f64s({s.mask_b.data(), static_cast<std::size_t>(len)});
  r.f64s({s.t0_a.data(), 3});
  r.f64s({s.t0_b.data(), 3});
  if (!r.at_end()) throw io::FormatError("sample file: trailing bytes");
  s.validate();
  return s;
}

void save_sample(const std::filesystem::path& path, const DyadSample& s) { io::write_file(path, encode_sample(s)); }
DyadSample load_sample(const std::filesystem::path& path) { return decode_sample(io::read_file(path)); }

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  io::ByteWriter w;
  w.bytes("RIFF");
  w.u32(36 + 2 * n);
  w.bytes("WAVE");
  w.bytes("fmt ");
  w.u32(16);
  w.u16(1);  // PCM
  w.u16(1);  // mono
  w.u32(static_cast<std::uint32_t>(wave.sample_rate));
  w.u32(static_cast<std::uint32_t>(wave.sample_rate) * 2);
  w.u16(2);
  w.u16(16);
  w.bytes("data");
  w.u32(2 * n);
  for (double v : wave.samples) {
    const long q = std::lround(std::clamp(v, -1.0, 1.0) * 32767.0);
    w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  io::write_file(path, w.take());
}

Waveform read_wav(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  io::ByteReader r(bytes);
  r.expect_magic("RIFF");
  r.u32();
  r.expect_magic("WAVE");
  Waveform w;
  bool have_fmt = false;
  while (!r.at_end()) {
    const std::string id(r.bytes(4));
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      const std::string_view body = r.bytes(size);
      io::ByteReader f(body);
      const auto format = f.u16(), channels = f.u16();
      w.sample_rate = static_cast<int>(f.u32());
      f.u32();
      f.u16();
      const auto bits = f.u16();
      if (format != 1 || channels != 1 || bits != 16) throw io::FormatError("WAV must be 16-bit PCM mono");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw io::FormatError("WAV data chunk before fmt chunk");
      w.samples.resize(size / 2);
      for (double& v : w.samples) v = static_cast<std::int16_t>(r.u16()) / 32767.0;
      if (size % 2) r.bytes(1);
      return w;
    } else {
      r.bytes(size + (size % 2));
    }
  }
  throw io::FormatError("WAV file has no data chunk");
}

void Manifest::validate() const {
  std::set<std::string> paths;
  for (const ManifestRecord& r : records) {
    if (!paths.insert(r.path).second) throw std::invalid_argument("manifest: duplicate path '" + r.path + "'");
    if (r.split.empty()) throw std::invalid_argument("manifest: empty split tag");
  }
}

std::string encode_manifest(const Manifest& m) {
  m.validate();
  std::string out;
  for (const ManifestRecord& r : m.records) {
    const json j = {{"path", r.path},
                    {"source", std::string(to_string(r.source))},
                    {"duration", r.duration},
                    {"gaze_subset", r.gaze_subset},
                    {"split", r.split}};
    out += j.dump() + "\n";
  }
  return out;
}

Manifest decode_manifest(std::string_view jsonl) {
  Manifest m;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    std::size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const std::string_view line = jsonl.substr(start, end - start);
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const json j = json::parse(line);
      m.records.push_back({j.at("path").get<std::string>(), source_from_string(j.at("source").get<std::string>()),
                           j.at("duration").get<double>(), j.at("gaze_subset").get<bool>(),
                           j.at("split").get<std::string>()});
    } catch (const json::exception& e) {
      throw io::FormatError(std::string("manifest: ") + e.what());
    }
  }
  m.validate();
  return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& m) { io::write_file(path, encode_manifest(m)); }
Manifest load_manifest(const std::filesystem::path& path) { return decode_manifest(io::read_file(path)); }

Manifest generate_dataset(const std::filesystem::path& dir, const DatasetConfig& cfg) {
  std::vector<Source> plan;
  plan.insert(plan.end(), static_cast<std::size_t>(cfg.conversation), Source::kConversation);
  plan.insert(plan.end(), static_cast<std::size_t>(cfg.synthetic_dub), Source::kSyntheticDub);
  plan.insert(plan.end(), static_cast<std::size_t>(cfg.single_speaker), Source::kSingleSpeaker);

  std::vector<DyadSample> samples;
  std::vector<double> variances;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    samples.push_back(generate_sample(derived_seed(cfg.seed, {i}), plan[i], cfg.sample));
    const DyadSample& s = samples.back();
    variances.push_back(0.5 * (head_rotation_variance(s.motion_a) + head_rotation_variance(s.motion_b)));
  }
  std::vector<bool> gaze(samples.size(), false);
  if (samples.size() >= 5) gaze = select_gaze_subset(variances);

  std::filesystem::create_directories(dir / "samples");
  Manifest m;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].gaze_subset = gaze[i];
    char name[32];
    std::snprintf(name, sizeof name, "samples/%06zu.dyds", i);
    save_sample(dir / name, samples[i]);
    const bool val = cfg.val_every > 0 && (i + 1) % static_cast<std::size_t>(cfg.val_every) == 0;
    m.records.push_back({name, plan[i], samples[i].mixed.duration(), gaze[i], val ? "val" : "train"});
  }
  save_manifest(dir / "manifest.jsonl", m);
  return m;
}

std::vector<DyadSample> load_split(const std::filesystem::path& dir, const Manifest& m, const std::string& split) {
  std::vector<DyadSample> out;
  for (const ManifestRecord& r : m.records) {
    if (r.split == split) out.push_back(load_sample(dir / r.path));
  }
  return out;
}

}  // namespace dyad::data
