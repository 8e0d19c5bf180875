#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dyad/conditioning.hpp"
#include "dyad/facemodel.hpp"

namespace dyad::data {

using cond::Waveform;
using face::MotionSequence;

enum class Source : std::uint8_t { kConversation = 0, kSyntheticDub = 1, kSingleSpeaker = 2 };

std::string_view to_string(Source s);
Source source_from_string(std::string_view s);

struct SingleClip {
  MotionSequence motion;
  Waveform waveform;
  Tensor envelope;              // L x 1 speech energy envelope in [0, 1]
  Tensor landmark_confidence;   // L x 1
  Tensor face_bbox_size;        // L x 1, pixels
};

struct ClipOptions {
  double fps = 25.0;
  bool silent = false;
  double lip_gain = 1.5;     // std of each lip component's envelope loading
  double lip_noise = 0.02;   // uniform half-width of lip jitter
  double bad_clip_rate = 0.1;  // chance of a clip with degraded tracking
};

/// Deterministic synthetic talking-head clip. Lip components follow the
/// speech envelope that also drives the waveform's amplitude.
SingleClip generate_single_clip(std::uint64_t seed, double duration_s, const ClipOptions& opt = {});

struct DyadSample {
  MotionSequence motion_a;
  MotionSequence motion_b;
  Waveform mixed;
  Waveform track_a;
  Waveform track_b;
  Tensor mask_a;  // L x 1
  Tensor mask_b;  // L x 1
  Vec3 t0_a = Vec3::Zero();
  Vec3 t0_b = Vec3::Zero();
  bool gaze_subset = false;
  Source source = Source::kSyntheticDub;

  Index length() const { return motion_a.length(); }
  void validate() const;
};

bool identical(const DyadSample& x, const DyadSample& y);

/// Alternating turns, A first unless `b_first`. Lengths in frames.
struct TurnSchedule {
  std::vector<Index> turns;
  bool b_first = false;

  Index total() const;
};

/// Overlap frames requested for a fraction of the schedule: round(f L).
Index overlap_frames(double fraction, Index length);

/// Mutes each clip outside its turns (plus overlap windows at turn starts),
/// gates its lip components by the resulting mask, and mixes the tracks.
DyadSample dub_compose(const SingleClip& clip_1, const SingleClip& clip_2, const TurnSchedule& schedule,
                       double overlap_fraction, const Vec3& t0_a = Vec3(0, 0, -0.5),
                       const Vec3& t0_b = Vec3(0, 0, 0.5));

struct QualityThresholds {
  double min_bbox = 64.0;
  double min_confidence = 0.5;
  double max_bad_fraction = 0.05;
};

struct SampleOptions {
  Index frames = 64;
  double fps = 25.0;
  Index min_turn = 12;
  Index max_turn = 40;
  double max_overlap = 0.2;
  double mask_jitter = 0.15;
  Vec3 t0_a{0.0, 0.0, -0.5};
  Vec3 t0_b{0.0, 0.0, 0.5};
  ClipOptions clip;
  QualityThresholds quality;
};

/// One sample from the given source. Clips failing the quality filter are
/// regenerated from derived seeds.
DyadSample generate_sample(std::uint64_t seed, Source source, const SampleOptions& opt = {});

/// Random alternating schedule covering exactly `frames`.
TurnSchedule random_schedule(std::uint64_t seed, Index frames, Index min_turn, Index max_turn);

/// Accept unless more than `max_bad_frames` frames are too small or low-confidence.
bool quality_filter(const SingleClip& clip, double min_bbox, double min_confidence, Index max_bad_frames);
bool quality_filter(const SingleClip& clip, const QualityThresholds& t = {});

/// 8-bit RGB image, row-major, interleaved.
struct Image {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t at(Index x, Index y, int c) const { return rgb[static_cast<std::size_t>(3 * (y * width + x) + c)]; }
};

struct ScenarioThresholds {
  double histogram = 0.5;  // chi-squared distance on normalized 8x8x8 histograms
  double seam = 40.0;      // mean absolute RGB step across the middle column
};

double half_histogram_distance(const Image& img);
double middle_seam_strength(const Image& img);

/// True (accept) unless the halves' colors differ AND a seam splits them.
bool scenario_filter(const Image& img, const ScenarioThresholds& t = {});

/// Mean over frames of the squared deviation of the head joint's axis-angle from its mean.
double head_rotation_variance(const MotionSequence& m);

/// Flags exactly ceil(0.2 N) entries with the largest values; ties keep manifest order.
std::vector<bool> select_gaze_subset(const std::vector<double>& variances);

// Sample file: "DYDS", u32 version, u8 source, u8 gaze flag, two length-prefixed
// motion records, u32 sample rate, u64 sample count, mixed/track A/track B
// samples (f64), masks (L f64 each), t0 A and B (3 f64 each).
inline constexpr std::string_view kSampleMagic = "DYDS";
std::string encode_sample(const DyadSample& s);
DyadSample decode_sample(std::string_view bytes);
void save_sample(const std::filesystem::path& path, const DyadSample& s);
DyadSample load_sample(const std::filesystem::path& path);

/// 16 kHz mono PCM16 WAV.
void write_wav(const std::filesystem::path& path, const Waveform& w);
Waveform read_wav(const std::filesystem::path& path);

struct ManifestRecord {
  std::string path;  // relative to the dataset directory
  Source source = Source::kSyntheticDub;
  double duration = 0.0;
  bool gaze_subset = false;
  std::string split = "train";
};

struct Manifest {
  std::vector<ManifestRecord> records;

  void validate() const;
};

std::string encode_manifest(const Manifest& m);
Manifest decode_manifest(std::string_view jsonl);
void save_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest load_manifest(const std::filesystem::path& path);

struct DatasetConfig {
  Index conversation = 8;
  Index synthetic_dub = 0;
  Index single_speaker = 0;
  Index val_every = 0;  // every n-th sample goes to "val"; 0 keeps all in "train"
  std::uint64_t seed = 0;
  SampleOptions sample;
};

/// Writes samples/NNNNNN.dyds and manifest.jsonl under `dir`; gaze flags are
/// assigned over the whole set.
Manifest generate_dataset(const std::filesystem::path& dir, const DatasetConfig& cfg);

std::vector<DyadSample> load_split(const std::filesystem::path& dir, const Manifest& m, const std::string& split);

}  // namespace dyad::data
