#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dyad/types.hpp"

namespace dyad::layout {

/// First-frame head translations in meters; +z forward, +x right, origin at
/// the centre of the interaction.
struct LayoutResult {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();

  friend bool operator==(const LayoutResult& x, const LayoutResult& y) { return x.a == y.a && x.b == y.b; }
};

struct FewShotExample {
  std::string description;
  LayoutResult layout;
  std::string origin = "synthetic";  // "published" for the worked examples
};

/// No JSON object could be extracted from the text.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A JSON object was found but does not have the layout shape.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { kStub, kLive };

struct LlmClientConfig {
  std::string endpoint;  // http(s)://host[:port]/path
  std::string api_key_env = "DYAD_LLM_API_KEY";
  double temperature = 0.2;
  int max_tokens = 128;
  Mode mode = Mode::kStub;
  int timeout_seconds = 30;

  void validate() const;
};

inline constexpr double kCoordinateLimit = 10.0;
inline constexpr std::size_t kPromptExamples = 3;

extern const std::string_view kSystemInstruction;

/// {"A": [x, y, z], "B": [x, y, z]} with round-trip number formatting.
std::string serialize_layout(const LayoutResult& r);

/// Extracts the first balanced JSON object, tolerating prose and code fences.
LayoutResult parse_layout(std::string_view text);

/// Bank file: one JSON object per line, {"description", "A", "B"[, "origin"]}.
std::vector<FewShotExample> parse_bank(std::string_view jsonl);
std::vector<FewShotExample> load_bank(const std::filesystem::path& path);

/// Quotes and backslashes escaped so the query stays inside its quoted field.
std::string escape_query(std::string_view query);

/// System instruction, three seeded examples (in bank order) and the query.
std::string build_prompt(std::string_view query, const std::vector<FewShotExample>& bank, std::uint64_t seed);

/// Stub: the bank entry with the highest token overlap (earliest on ties).
/// Live: one POST of the prompt, retried once when the reply does not parse.
/// Coordinates beyond kCoordinateLimit are clamped with a warning.
LayoutResult request_layout(std::string_view query, const LlmClientConfig& client,
                            const std::vector<FewShotExample>& bank, std::uint64_t seed);

/// Lowercase alphanumeric tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Mean layout of the k bank entries nearest by bag-of-tokens cosine similarity.
LayoutResult knn_layout(std::string_view query, const std::vector<FewShotExample>& bank, std::size_t k = 5);

/// Mean over {A, B} of the squared translation error.
double tmse(const LayoutResult& pred, const LayoutResult& gt);

/// Clamps every coordinate to [-limit, limit]; returns whether anything changed.
bool clamp_layout(LayoutResult& r, double limit = kCoordinateLimit);

}  // namespace dyad::layout
