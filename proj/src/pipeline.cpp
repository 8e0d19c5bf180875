#include "dyad/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "dyad/binio.hpp"
#include "dyad/metrics.hpp"
#include "dyad/rng.hpp"
#include "json.hpp"

namespace dyad::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool g_verbose = false;

void log(const std::string& line) {
  if (g_verbose) std::cerr << "[dyad] " << line << "\n";
}

// A JSON object view that records which keys were read so leftovers can be rejected.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: " + path_ + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: " + where(key) + " has the wrong type");
    }
  }

  void read(const char* key, fs::path& out) {
    std::string s = out.string();
    read(key, s);
    out = s;
  }

  void read(const char* key, Vec3& out) {
    std::vector<double> v;
    read(key, v);
    if (!j_.contains(key)) return;
    if (v.size() != 3) throw ConfigError("config: " + where(key) + " must hold 3 numbers");
    out = Vec3(v[0], v[1], v[2]);
  }

  std::optional<Node> child(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    seen_.insert(key);
    return Node(*it, where(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("config: unknown key " + where(key.c_str()));
    }
  }

 private:
  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

std::string_view mode_name(layout::Mode m) { return m == layout::Mode::kLive ? "live" : "stub"; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_file(path, text);
}

std::vector<train::PreparedSample> prepare_all(const std::vector<data::DyadSample>& samples,
                                               const train::ModelConfig& model) {
  const cond::AudioFeatureExtractor fx(model.unet.audio_dim, model.projection_seed);
  std::vector<train::PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(train::prepare(s, fx));
  return out;
}

fs::path sample_file(const GlobalConfig& cfg, std::size_t i, char who) {
  char name[32];
  std::snprintf(name, sizeof name, "%06zu_%c.dym", i, who);
  return cfg.paths.reports / "samples" / name;
}

// Loss curve rows after the header, so resumed runs can append.
std::string curve_rows(const std::vector<train::StepReport>& reports) {
  const std::string csv = train::loss_curve_csv(reports);
  return csv.substr(csv.find('\n') + 1);
}

}  // namespace

void set_verbose(bool on) { g_verbose = on; }

GlobalConfig::GlobalConfig() {
  auto& u = model.unet;
  u.embed_dim = 48;
  u.subblocks_per_block = 1;
  u.audio_dim = 16;
  u.role_dim = 8;
  model.vertices = 60;
  data.conversation = 8;
  data.synthetic_dub = 4;
  data.single_speaker = 4;
  data.val_every = 4;
  data.sample.frames = 32;
  data.sample.min_turn = 8;
  data.sample.max_turn = 16;
  train.learning_rate = 3e-3;
  train.warmup_steps = 50;
  train.listener_relabel_p = 0.5;
}

void GlobalConfig::apply_seed(std::uint64_t s) {
  seed = s;
  data.seed = s;
  train.seed = s;
  sampler.seed = s;
  model.init_seed = s;
}

void GlobalConfig::validate() const {
  model.unet.validate();
  if (model.vertices < 1) throw ConfigError("config: model.vertices must be positive");
  if (data.conversation < 0 || data.synthetic_dub < 0 || data.single_speaker < 0 || data.val_every < 0) {
    throw ConfigError("config: data counts must be >= 0");
  }
  if (data.sample.frames < 2) throw ConfigError("config: data.frames must be >= 2");
  if (stage1_steps < 0 || stage2_steps < 0) throw ConfigError("config: step counts must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("config: train.checkpoint_every must be positive");
  for (Index steps : {stage1_steps, stage2_steps}) {
    train::TrainConfig t = train;
    t.total_steps = steps;
    if (steps > 0) {
      try {
        t.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    }
  }
  sampler.validate();
  if (metrics.feature_dim < 1 || metrics.sid_k < 1) throw ConfigError("config: metrics dims must be positive");
  layout.client.validate();
}

std::string encode_config(const GlobalConfig& c) {
  const auto& u = c.model.unet;
  const auto& d = c.data;
  const auto& t = c.train;
  json j;
  j["seed"] = c.seed;
  j["paths"] = {{"dataset", c.paths.dataset.string()},
                {"checkpoints", c.paths.checkpoints.string()},
                {"reports", c.paths.reports.string()}};
  j["model"] = {{"embed_dim", u.embed_dim},
                {"num_blocks", u.num_blocks},
                {"subblocks_per_block", u.subblocks_per_block},
                {"attention_heads", u.attention_heads},
                {"temporal_stride", u.temporal_stride},
                {"kernel", u.kernel},
                {"audio_dim", u.audio_dim},
                {"role_dim", u.role_dim},
                {"time_dim", u.time_dim},
                {"vertices", c.model.vertices},
                {"basis_seed", c.model.basis_seed},
                {"projection_seed", c.model.projection_seed},
                {"vad_threshold_db", c.model.vad_threshold_db}};
  j["data"] = {{"conversation", d.conversation},
               {"synthetic_dub", d.synthetic_dub},
               {"single_speaker", d.single_speaker},
               {"val_every", d.val_every},
               {"frames", d.sample.frames},
               {"fps", d.sample.fps},
               {"min_turn", d.sample.min_turn},
               {"max_turn", d.sample.max_turn},
               {"max_overlap", d.sample.max_overlap},
               {"mask_jitter", d.sample.mask_jitter},
               {"t0_a", vec(d.sample.t0_a)},
               {"t0_b", vec(d.sample.t0_b)},
               {"lip_gain", d.sample.clip.lip_gain},
               {"lip_noise", d.sample.clip.lip_noise},
               {"bad_clip_rate", d.sample.clip.bad_clip_rate},
               {"quality",
                {{"min_bbox", d.sample.quality.min_bbox},
                 {"min_confidence", d.sample.quality.min_confidence},
                 {"max_bad_fraction", d.sample.quality.max_bad_fraction}}}};
  j["train"] = {{"optimizer", "adamw"},
                {"learning_rate", t.learning_rate},
                {"warmup_steps", t.warmup_steps},
                {"batch_size", t.batch_size},
                {"stage1_steps", c.stage1_steps},
                {"stage2_steps", c.stage2_steps},
                {"checkpoint_every", c.checkpoint_every},
                {"audio_dropout_p", t.audio_dropout_p},
                {"lip_fraction", t.lip_fraction},
                {"listener_relabel_p", t.listener_relabel_p},
                {"weights",
                 {{"expr", t.weights.expr},
                  {"rot", t.weights.rot},
                  {"trans", t.weights.trans},
                  {"vel", t.weights.vel},
                  {"gaze", t.weights.gaze}}},
                {"adam",
                 {{"beta1", t.adam.beta1},
                  {"beta2", t.adam.beta2},
                  {"eps", t.adam.eps},
                  {"weight_decay", t.adam.weight_decay}}}};
  j["sampler"] = {{"steps", c.sampler.num_steps}, {"guidance", c.sampler.guidance_weight}};
  j["metrics"] = {{"feature_dim", c.metrics.feature_dim},
                  {"feature_seed", c.metrics.feature_seed},
                  {"sid_k", c.metrics.sid_k}};
  const auto& l = c.layout.client;
  j["layout"] = {{"bank", c.layout.bank.string()},
                 {"prompt", c.layout.prompt},
                 {"mode", mode_name(l.mode)},
                 {"endpoint", l.endpoint},
                 {"api_key_env", l.api_key_env},
                 {"temperature", l.temperature},
                 {"max_tokens", l.max_tokens},
                 {"timeout_seconds", l.timeout_seconds}};
  return j.dump(2) + "\n";
}

GlobalConfig decode_config(std::string_view text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: not valid JSON");
  GlobalConfig c;
  Node root(j, "");
  std::uint64_t seed = c.seed;
  root.read("seed", seed);
  c.apply_seed(seed);
  if (auto n = root.child("paths")) {
    n->read("dataset", c.paths.dataset);
    n->read("checkpoints", c.paths.checkpoints);
    n->read("reports", c.paths.reports);
    n->finish();
  }
  if (auto n = root.child("model")) {
    auto& u = c.model.unet;
    n->read("embed_dim", u.embed_dim);
    n->read("num_blocks", u.num_blocks);
    n->read("subblocks_per_block", u.subblocks_per_block);
    n->read("attention_heads", u.attention_heads);
    n->read("temporal_stride", u.temporal_stride);
    n->read("kernel", u.kernel);
    n->read("audio_dim", u.audio_dim);
    n->read("role_dim", u.role_dim);
    n->read("time_dim", u.time_dim);
    n->read("vertices", c.model.vertices);
    n->read("basis_seed", c.model.basis_seed);
    n->read("projection_seed", c.model.projection_seed);
    n->read("vad_threshold_db", c.model.vad_threshold_db);
    n->finish();
  }
  if (auto n = root.child("data")) {
    auto& d = c.data;
    n->read("conversation", d.conversation);
    n->read("synthetic_dub", d.synthetic_dub);
    n->read("single_speaker", d.single_speaker);
    n->read("val_every", d.val_every);
    n->read("frames", d.sample.frames);
    n->read("fps", d.sample.fps);
    n->read("min_turn", d.sample.min_turn);
    n->read("max_turn", d.sample.max_turn);
    n->read("max_overlap", d.sample.max_overlap);
    n->read("mask_jitter", d.sample.mask_jitter);
    n->read("t0_a", d.sample.t0_a);
    n->read("t0_b", d.sample.t0_b);
    n->read("lip_gain", d.sample.clip.lip_gain);
    n->read("lip_noise", d.sample.clip.lip_noise);
    n->read("bad_clip_rate", d.sample.clip.bad_clip_rate);
    if (auto q = n->child("quality")) {
      q->read("min_bbox", d.sample.quality.min_bbox);
      q->read("min_confidence", d.sample.quality.min_confidence);
      q->read("max_bad_fraction", d.sample.quality.max_bad_fraction);
      q->finish();
    }
    n->finish();
  }
  if (auto n = root.child("train")) {
    auto& t = c.train;
    std::string optimizer = "adamw";
    n->read("optimizer", optimizer);
    if (optimizer != "adamw") throw ConfigError("config: train.optimizer must be \"adamw\"");
    n->read("learning_rate", t.learning_rate);
    n->read("warmup_steps", t.warmup_steps);
    n->read("batch_size", t.batch_size);
    n->read("stage1_steps", c.stage1_steps);
    n->read("stage2_steps", c.stage2_steps);
    n->read("checkpoint_every", c.checkpoint_every);
    n->read("audio_dropout_p", t.audio_dropout_p);
    n->read("lip_fraction", t.lip_fraction);
    n->read("listener_relabel_p", t.listener_relabel_p);
    if (auto w = n->child("weights")) {
      w->read("expr", t.weights.expr);
      w->read("rot", t.weights.rot);
      w->read("trans", t.weights.trans);
      w->read("vel", t.weights.vel);
      w->read("gaze", t.weights.gaze);
      w->finish();
    }
    if (auto a = n->child("adam")) {
      a->read("beta1", t.adam.beta1);
      a->read("beta2", t.adam.beta2);
      a->read("eps", t.adam.eps);
      a->read("weight_decay", t.adam.weight_decay);
      a->finish();
    }
    n->finish();
  }
  if (auto n = root.child("sampler")) {
    n->read("steps", c.sampler.num_steps);
    n->read("guidance", c.sampler.guidance_weight);
    n->finish();
  }
  if (auto n = root.child("metrics")) {
    n->read("feature_dim", c.metrics.feature_dim);
    n->read("feature_seed", c.metrics.feature_seed);
    n->read("sid_k", c.metrics.sid_k);
    n->finish();
  }
  if (auto n = root.child("layout")) {
    auto& l = c.layout.client;
    n->read("bank", c.layout.bank);
    n->read("prompt", c.layout.prompt);
    std::string mode(mode_name(l.mode));
    n->read("mode", mode);
    if (mode != "stub" && mode != "live") throw ConfigError("config: layout.mode must be \"stub\" or \"live\"");
    l.mode = mode == "live" ? layout::Mode::kLive : layout::Mode::kStub;
    n->read("endpoint", l.endpoint);
    n->read("api_key_env", l.api_key_env);
    n->read("temperature", l.temperature);
    n->read("max_tokens", l.max_tokens);
    n->read("timeout_seconds", l.timeout_seconds);
    n->finish();
  }
  root.finish();
  c.validate();
  return c;
}

GlobalConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("config: cannot read " + path.string());
  }
  return decode_config(text);
}

data::Manifest cmd_datagen(const GlobalConfig& cfg) {
  const fs::path& dir = cfg.paths.dataset;
  fs::remove_all(dir / "samples");
  fs::remove(dir / "manifest.jsonl");
  fs::create_directories(dir);
  log("datagen: " + std::to_string(cfg.data.conversation + cfg.data.synthetic_dub + cfg.data.single_speaker) +
      " samples into " + dir.string());
  return data::generate_dataset(dir, cfg.data);
}

fs::path checkpoint_path(const GlobalConfig& cfg, int stage) {
  return cfg.paths.checkpoints / ("stage" + std::to_string(stage) + ".dyd");
}

TrainResult cmd_train(const GlobalConfig& cfg, int stage, const std::optional<fs::path>& resume) {
  if (stage != 1 && stage != 2) throw std::invalid_argument("train: stage must be 1 or 2");
  const data::Manifest manifest = data::load_manifest(cfg.paths.dataset / "manifest.jsonl");
  std::vector<data::DyadSample> conversation, lip;
  for (const auto& r : manifest.records) {
    if (r.split != "train") continue;
    auto& dest = r.source == data::Source::kConversation ? conversation : lip;
    dest.push_back(data::load_sample(cfg.paths.dataset / r.path));
  }
  if (conversation.empty() && (stage == 1 || lip.empty())) {
    throw std::runtime_error("train: no conversation samples in the training split");
  }
  if (stage == 1) lip.clear();

  train::TrainConfig tc = cfg.train;
  tc.stage = stage;
  tc.total_steps = stage == 1 ? cfg.stage1_steps : cfg.stage2_steps;
  if (tc.total_steps == 0) tc.warmup_steps = 0;

  train::TrainState state;
  bool fresh_curve = true;
  if (resume) {
    state = train::load_checkpoint(*resume);
    if (state.stage != stage) throw std::runtime_error("train: --resume checkpoint belongs to another stage");
    fresh_curve = false;
  } else if (stage == 1) {
    state = train::initial_state(cfg.model, 1);
  } else {
    const fs::path previous = checkpoint_path(cfg, 1);
    if (!fs::exists(previous)) throw std::runtime_error("train: stage 2 needs " + previous.string());
    state = train::load_checkpoint(previous);
    state.adam = {};  // stage 2 starts a new schedule from the stage-1 weights
    state.stage = 2;
  }

  TrainResult out;
  out.checkpoint = checkpoint_path(cfg, stage);
  out.loss_curve = cfg.paths.reports / ("loss_stage" + std::to_string(stage) + ".csv");
  fs::create_directories(cfg.paths.checkpoints);
  fs::create_directories(cfg.paths.reports);
  if (fresh_curve || !fs::exists(out.loss_curve)) write_text(out.loss_curve, train::loss_curve_csv({}));

  const Index remaining = std::max<Index>(0, tc.total_steps - state.adam.step);
  log("train: stage " + std::to_string(stage) + ", " + std::to_string(remaining) + " steps");
  train::Trainer trainer(cfg.model, tc, prepare_all(conversation, cfg.model), prepare_all(lip, cfg.model),
                         std::move(state));
  std::vector<train::StepReport> pending;
  auto flush = [&] {
    std::ofstream(out.loss_curve, std::ios::app | std::ios::binary) << curve_rows(pending);
    train::save_checkpoint(out.checkpoint, trainer.state());
    pending.clear();
  };
  for (Index i = 0; i < remaining; ++i) {
    out.reports.push_back(trainer.step());
    pending.push_back(out.reports.back());
    const auto& r = out.reports.back();
    if (r.step % cfg.checkpoint_every == 0) {
      log("train: step " + std::to_string(r.step) + " total " + std::to_string(r.losses.at("total")));
      flush();
    }
  }
  flush();
  return out;
}

std::vector<data::DyadSample> evaluation_samples(const GlobalConfig& cfg) {
  const data::Manifest m = data::load_manifest(cfg.paths.dataset / "manifest.jsonl");
  std::vector<data::DyadSample> val = data::load_split(cfg.paths.dataset, m, "val");
  if (!val.empty()) return val;
  std::vector<data::DyadSample> all;
  for (const auto& r : m.records) all.push_back(data::load_sample(cfg.paths.dataset / r.path));
  return all;
}

std::vector<SampledPair> cmd_sample(const GlobalConfig& cfg, const std::optional<layout::LayoutResult>& lay) {
  fs::path ckpt = checkpoint_path(cfg, 2);
  if (!fs::exists(ckpt)) ckpt = checkpoint_path(cfg, 1);
  if (!fs::exists(ckpt)) throw std::runtime_error("sample: no checkpoint under " + cfg.paths.checkpoints.string());
  const train::TrainState state = train::load_checkpoint(ckpt);
  const std::vector<data::DyadSample> samples = evaluation_samples(cfg);
  if (samples.empty()) throw std::runtime_error("sample: the dataset is empty");
  std::vector<train::PreparedSample> prepared = prepare_all(samples, cfg.model);

  fs::remove_all(cfg.paths.reports / "samples");
  fs::create_directories(cfg.paths.reports / "samples");
  log("sample: " + std::to_string(prepared.size()) + " clips from " + ckpt.string());
  std::vector<SampledPair> out;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    train::PreparedSample& p = prepared[i];
    if (lay) {
      p.t0_a = lay->a;
      p.t0_b = lay->b;
    }
    diffusion::SamplerConfig sc = cfg.sampler;
    sc.seed = derived_seed(cfg.sampler.seed, {i});
    const auto [xa, xb] = train::sample_dyad(state.params, cfg.model, p, sc);
    SampledPair pair{diffusion::to_motion(xa, p.t0_a, p.fps, p.identity_a),
                     diffusion::to_motion(xb, p.t0_b, p.fps, p.identity_b)};
    face::save_motion(sample_file(cfg, i, 'A'), pair.a);
    face::save_motion(sample_file(cfg, i, 'B'), pair.b);
    out.push_back(std::move(pair));
  }
  return out;
}

std::string cmd_eval(const GlobalConfig& cfg) {
  const std::vector<data::DyadSample> samples = evaluation_samples(cfg);
  if (samples.empty()) throw std::runtime_error("eval: the dataset is empty");
  const train::Geometry geo = train::make_geometry(cfg.model);
  const auto& lips = geo.basis.lip_indices;

  std::vector<metrics::SequencePair> gen, real;
  std::vector<Tensor> gen_streams, real_streams;
  std::map<metrics::Region, double> mse;
  double spe = 0.0, lis = 0.0;
  int n_spe = 0, n_lis = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const fs::path fa = sample_file(cfg, i, 'A'), fb = sample_file(cfg, i, 'B');
    if (!fs::exists(fa) || !fs::exists(fb)) throw std::runtime_error("eval: missing sampled sequence " + fa.string());
    const face::MotionSequence a = face::load_motion(fa), b = face::load_motion(fb);
    const data::DyadSample& s = samples[i];
    if (a.length() != s.length() || b.length() != s.length()) {
      throw std::runtime_error("eval: sampled sequence length does not match " + fa.string());
    }
    gen.emplace_back(a.parameters(), b.parameters());
    real.emplace_back(s.motion_a.parameters(), s.motion_b.parameters());
    for (const auto* p : {&gen.back().first, &gen.back().second}) gen_streams.push_back(*p);
    for (const auto* p : {&real.back().first, &real.back().second}) real_streams.push_back(*p);
    for (auto r : {metrics::Region::kExp, metrics::Region::kTransl, metrics::Region::kRot, metrics::Region::kEye,
                   metrics::Region::kLip}) {
      mse[r] += 0.5 * (metrics::region_mse(gen.back().first, real.back().first, r, lips) +
                       metrics::region_mse(gen.back().second, real.back().second, r, lips));
    }
    const metrics::VmseResult v = metrics::vmse({a, b}, {s.motion_a, s.motion_b}, s.mask_a, s.mask_b, geo.basis, geo.rig);
    if (v.speaker) spe += *v.speaker, ++n_spe;
    if (v.listener) lis += *v.listener, ++n_lis;
  }
  const double n = static_cast<double>(samples.size());

  const metrics::FeatureExtractor fx = metrics::projection_extractor(cfg.metrics.feature_dim, cfg.metrics.feature_seed);
  const Index k = std::min<Index>(cfg.metrics.sid_k, static_cast<Index>(gen_streams.size()));
  json report;
  report["FD"] = metrics::fd(gen_streams, real_streams, fx);
  report["P-FD"] = metrics::paired_fd(gen, real, fx);
  for (const auto& [r, total] : mse) report["MSE"][std::string(metrics::to_string(r))] = total / n;
  report["vMSE"]["SPE"] = n_spe > 0 ? json(spe / n_spe) : json(nullptr);
  report["vMSE"]["LIS"] = n_lis > 0 ? json(lis / n_lis) : json(nullptr);
  report["SID"]["FULL"] = metrics::sid(gen_streams, fx, k, cfg.seed);
  report["SID"]["EXP"] = metrics::sid(gen_streams, metrics::block_extractor("exp", 0, face::kExpressionDim), k, cfg.seed);
  report["SID"]["ROT"] = metrics::sid(gen_streams, metrics::block_extractor("rot", 63, 12), k, cfg.seed);
  report["SID"]["TRANSL"] = metrics::sid(gen_streams, metrics::block_extractor("transl", 75, 3), k, cfg.seed);

  const std::string text = report.dump(2) + "\n";
  write_text(cfg.paths.reports / "report.json", text);
  log("eval: report written to " + (cfg.paths.reports / "report.json").string());
  return text;
}

layout::LayoutResult cmd_layout(const GlobalConfig& cfg, const std::string& prompt, bool live) {
  layout::LlmClientConfig client = cfg.layout.client;
  if (live) client.mode = layout::Mode::kLive;
  const auto bank = layout::load_bank(cfg.layout.bank);
  const layout::LayoutResult r = layout::request_layout(prompt, client, bank, cfg.seed);
  json out = json::parse(layout::serialize_layout(r));
  out["prompt"] = prompt;
  out["mode"] = mode_name(client.mode);
  write_text(cfg.paths.reports / "layout.json", out.dump(2) + "\n");
  return r;
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kDatagen: return "datagen";
    case Stage::kTrain1: return "train1";
    case Stage::kTrain2: return "train2";
    case Stage::kSample: return "sample";
    case Stage::kEval: return "eval";
    case Stage::kLayout: return "layout";
  }
  return "unknown";
}

Stage stage_from_string(std::string_view s) {
  for (Stage st : {Stage::kDatagen, Stage::kTrain1, Stage::kTrain2, Stage::kSample, Stage::kEval, Stage::kLayout}) {
    if (to_string(st) == s) return st;
  }
  throw std::invalid_argument("unknown pipeline stage \"" + std::string(s) + "\"");
}

std::string cmd_pipeline(const GlobalConfig& cfg, Stage from) {
  std::string report;
  auto run = [&](Stage st, const std::function<void()>& body) {
    if (st < from) return;
    try {
      body();
    } catch (const std::exception& e) {
      throw StageError(std::string(to_string(st)), e.what());
    }
  };
  run(Stage::kDatagen, [&] { cmd_datagen(cfg); });
  run(Stage::kTrain1, [&] { cmd_train(cfg, 1); });
  run(Stage::kTrain2, [&] { cmd_train(cfg, 2); });
  run(Stage::kSample, [&] { cmd_sample(cfg); });
  run(Stage::kEval, [&] { report = cmd_eval(cfg); });
  run(Stage::kLayout, [&] { cmd_layout(cfg, cfg.layout.prompt, false); });
  return report;
}

}  // namespace dyad::pipeline
