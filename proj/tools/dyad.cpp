// Command-line entry point: datagen, train, sample, eval, layout, pipeline.

#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "dyad/pipeline.hpp"
#include "json.hpp"

namespace {

using namespace dyad;
using nlohmann::json;

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// "conversation=2,synthetic_dub=1" -> per-source weights.
std::map<data::Source, double> parse_mix(const std::string& text) {
  std::map<data::Source, double> w;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    double v = 1.0;
    try {
      const data::Source s = data::source_from_string(item.substr(0, eq));
      if (eq != std::string::npos) v = std::stod(item.substr(eq + 1));
      w[s] = v;
    } catch (const std::exception&) {
      throw UsageError("--mix: cannot read \"" + item + "\"");
    }
    if (!(v >= 0.0)) throw UsageError("--mix: weights must be >= 0");
  }
  double total = 0.0;
  for (const auto& [s, v] : w) total += v;
  if (w.empty() || !(total > 0.0)) throw UsageError("--mix: needs a positive weight");
  return w;
}

// Splits n by weight with largest remainders, earlier sources first on ties.
void apply_mix(data::DatasetConfig& d, Index n, const std::map<data::Source, double>& w) {
  double total = 0.0;
  for (const auto& [s, v] : w) total += v;
  std::map<data::Source, Index> counts;
  std::vector<std::pair<double, data::Source>> rest;
  Index used = 0;
  for (const auto& [s, v] : w) {
    const double exact = static_cast<double>(n) * v / total;
    counts[s] = static_cast<Index>(std::floor(exact));
    used += counts[s];
    rest.emplace_back(exact - std::floor(exact), s);
  }
  std::stable_sort(rest.begin(), rest.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t i = 0; used < n; ++i, ++used) ++counts[rest[i % rest.size()].second];
  d.conversation = counts[data::Source::kConversation];
  d.synthetic_dub = counts[data::Source::kSyntheticDub];
  d.single_speaker = counts[data::Source::kSingleSpeaker];
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-stream diffusion for dyadic facial motion"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  app.add_option("--config", config_path, "Config file (JSON); built-in tiny defaults when omitted");
  app.add_option("--seed", seed, "Global seed, overriding the config");
  app.add_flag("--verbose", verbose, "Progress on standard error");

  auto* datagen = app.add_subcommand("datagen", "Generate a synthetic dataset and its manifest");
  std::optional<Index> n_samples;
  std::string mix;
  datagen->add_option("--n", n_samples, "Number of samples (default: the config's per-source counts)")
      ->check(CLI::NonNegativeNumber);
  datagen->add_option("--mix", mix, "Source weights, e.g. conversation=2,synthetic_dub=1,single_speaker=1");

  auto* train = app.add_subcommand("train", "Run one training stage");
  int stage = 1;
  std::string resume;
  std::optional<Index> train_steps;
  train->add_option("--stage", stage, "Training stage")->check(CLI::IsMember({1, 2}))->required();
  train->add_option("--resume", resume, "Continue this stage from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--steps", train_steps, "Total steps for the stage")->check(CLI::NonNegativeNumber);

  auto* sample = app.add_subcommand("sample", "Sample the evaluation clips from the latest checkpoint");
  std::optional<int> sample_steps;
  std::optional<double> guidance;
  std::string sample_prompt;
  bool sample_live = false;
  sample->add_option("--steps", sample_steps, "DDIM steps")->check(CLI::PositiveNumber);
  sample->add_option("--guidance", guidance, "Classifier-free guidance weight")->check(CLI::NonNegativeNumber);
  sample->add_option("--prompt", sample_prompt, "Layout description for the first-frame translations");
  sample->add_flag("--live", sample_live, "Query the configured LLM endpoint for --prompt");

  auto* eval = app.add_subcommand("eval", "Write the metric report for the sampled clips");

  auto* lay = app.add_subcommand("layout", "Head translations for a text description");
  std::string prompt;
  bool live = false;
  lay->add_option("--prompt", prompt, "Scene description")->required();
  lay->add_flag("--live", live, "Query the configured LLM endpoint instead of the offline stub");

  auto* pipe = app.add_subcommand("pipeline", "datagen, train 1, train 2, sample, eval, layout");
  std::string from = "datagen";
  pipe->add_option("--from", from, "First stage to run")
      ->check(CLI::IsMember({"datagen", "train1", "train2", "sample", "eval", "layout"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  pipeline::set_verbose(verbose);
  pipeline::GlobalConfig cfg;
  try {
    if (!config_path.empty()) cfg = pipeline::load_config(config_path);
    if (seed) cfg.apply_seed(*seed);
    if (n_samples || !mix.empty()) {
      const auto& d = cfg.data;
      const Index configured = d.conversation + d.synthetic_dub + d.single_speaker;
      std::map<data::Source, double> weights{{data::Source::kConversation, static_cast<double>(d.conversation)},
                                             {data::Source::kSyntheticDub, static_cast<double>(d.synthetic_dub)},
                                             {data::Source::kSingleSpeaker, static_cast<double>(d.single_speaker)}};
      if (configured == 0) weights = {{data::Source::kConversation, 1.0}};
      if (!mix.empty()) weights = parse_mix(mix);
      apply_mix(cfg.data, n_samples.value_or(configured), weights);
    }
    if (train_steps) (stage == 1 ? cfg.stage1_steps : cfg.stage2_steps) = *train_steps;
    if (sample_steps) cfg.sampler.num_steps = *sample_steps;
    if (guidance) cfg.sampler.guidance_weight = *guidance;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "dyad: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*datagen) {
      const data::Manifest m = pipeline::cmd_datagen(cfg);
      print({{"samples", m.records.size()}, {"manifest", (cfg.paths.dataset / "manifest.jsonl").string()}});
    } else if (*train) {
      std::optional<std::filesystem::path> from_ckpt;
      if (!resume.empty()) from_ckpt = resume;
      const pipeline::TrainResult r = pipeline::cmd_train(cfg, stage, from_ckpt);
      json out = {{"checkpoint", r.checkpoint.string()}, {"loss_curve", r.loss_curve.string()},
                  {"steps", r.reports.size()}};
      if (!r.reports.empty()) out["final_total"] = r.reports.back().losses.at("total");
      print(out);
    } else if (*sample) {
      std::optional<layout::LayoutResult> l;
      if (!sample_prompt.empty()) l = pipeline::cmd_layout(cfg, sample_prompt, sample_live);
      const auto pairs = pipeline::cmd_sample(cfg, l);
      print({{"sequences", pairs.size()}, {"directory", (cfg.paths.reports / "samples").string()}});
    } else if (*eval) {
      std::cout << pipeline::cmd_eval(cfg);
    } else if (*lay) {
      const layout::LayoutResult r = pipeline::cmd_layout(cfg, prompt, live);
      std::cout << layout::serialize_layout(r) << "\n";
    } else if (*pipe) {
      std::cout << pipeline::cmd_pipeline(cfg, pipeline::stage_from_string(from));
    }
  } catch (const pipeline::StageError& e) {
    std::cerr << "dyad: pipeline stage \"" << e.stage() << "\" failed: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "dyad: " << e.what() << "\n";
    return kRuntime;
  }
  return 0;
}
