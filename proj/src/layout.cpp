#include "dyad/layout.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "dyad/binio.hpp"
#include "dyad/rng.hpp"
#include "httplib.h"
#include "json.hpp"

namespace dyad::layout {

using nlohmann::json;

const std::string_view kSystemInstruction =
    "System: You are a 3D scene layout assistant. Generate 3D head translation coordinates (in meters) for two "
    "people (A and B) based on a text description. The center of the conversation is (0,0,0). Output ONLY valid "
    "JSON.";

void LlmClientConfig::validate() const {
  if (!(temperature >= 0.0)) throw ConfigError("LlmClientConfig: temperature must be >= 0");
  if (max_tokens < 1) throw ConfigError("LlmClientConfig: max_tokens must be positive");
  if (mode == Mode::kLive && endpoint.empty()) throw ConfigError("LlmClientConfig: live mode needs an endpoint");
}

namespace {

std::string number(double v) {
  std::string s = json(v).dump();
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string vec(const Vec3& v) { return "[" + number(v.x()) + ", " + number(v.y()) + ", " + number(v.z()) + "]"; }

Vec3 read_vec(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(std::string("layout: missing key \"") + key + "\"");
  if (!it->is_array() || it->size() != 3) throw SchemaError(std::string("layout: \"") + key + "\" must hold 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    const json& x = (*it)[static_cast<std::size_t>(i)];
    if (!x.is_number()) throw SchemaError(std::string("layout: \"") + key + "\" must hold numbers");
    v[i] = x.get<double>();
    if (!std::isfinite(v[i])) throw SchemaError(std::string("layout: \"") + key + "\" has a non-finite value");
  }
  return v;
}

// End index (inclusive) of the object opening at `start`, or npos when unbalanced.
std::size_t balanced_end(std::string_view s, std::size_t start) {
  int depth = 0;
  bool in_string = false, escaped = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

}  // namespace

std::string serialize_layout(const LayoutResult& r) { return "{\"A\": " + vec(r.a) + ", \"B\": " + vec(r.b) + "}"; }

LayoutResult parse_layout(std::string_view text) {
  const std::size_t open = text.find('{');
  if (open == std::string_view::npos) throw ParseError("parse_layout: no JSON object in reply");
  const std::size_t close = balanced_end(text, open);
  if (close == std::string_view::npos) throw ParseError("parse_layout: unbalanced braces in reply");
  const json obj = json::parse(text.substr(open, close - open + 1), nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) throw ParseError("parse_layout: malformed JSON object");
  return {read_vec(obj, "A"), read_vec(obj, "B")};
}

std::vector<FewShotExample> parse_bank(std::string_view jsonl) {
  std::vector<FewShotExample> bank;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("description") || !obj["description"].is_string()) {
      throw ParseError("layout bank: bad record on line " + std::to_string(line_no));
    }
    FewShotExample e;
    e.description = obj["description"].get<std::string>();
    e.layout = {read_vec(obj, "A"), read_vec(obj, "B")};
    if (obj.contains("origin")) e.origin = obj["origin"].get<std::string>();
    bank.push_back(std::move(e));
  }
  return bank;
}

std::vector<FewShotExample> load_bank(const std::filesystem::path& path) { return parse_bank(io::read_file(path)); }

std::string escape_query(std::string_view query) {
  std::string out;
  out.reserve(query.size());
  for (char c : query) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string build_prompt(std::string_view query, const std::vector<FewShotExample>& bank, std::uint64_t seed) {
  if (bank.size() < kPromptExamples) {
    throw std::invalid_argument("build_prompt: the bank needs at least 3 examples");
  }
  std::vector<std::size_t> all(bank.size()), picked;
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::mt19937_64 rng = derived_rng(seed, {0x1a70});
  std::sample(all.begin(), all.end(), std::back_inserter(picked), kPromptExamples, rng);

  std::ostringstream os;
  os << kSystemInstruction << "\n";
  for (std::size_t i = 0; i < picked.size(); ++i) {
    const FewShotExample& e = bank[picked[i]];
    os << "\n[Example " << (i + 1) << "]\n"
       << "Input: \"" << escape_query(e.description) << "\"\n"
       << "Output: " << serialize_layout(e.layout) << "\n";
  }
  os << "\n[User Query]\nInput: \"" << escape_query(query) << "\"\nOutput:";
  return os.str();
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      cur += static_cast<char>(std::tolower(u));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

std::map<std::string, double> bag(std::string_view text) {
  std::map<std::string, double> b;
  for (auto& t : tokenize(text)) b[t] += 1.0;
  return b;
}

double cosine(const std::map<std::string, double>& x, const std::map<std::string, double>& y) {
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (const auto& [t, v] : x) {
    nx += v * v;
    auto it = y.find(t);
    if (it != y.end()) dot += v * it->second;
  }
  for (const auto& [t, v] : y) ny += v * v;
  return nx > 0.0 && ny > 0.0 ? dot / std::sqrt(nx * ny) : 0.0;
}

// Multiset Jaccard overlap of token counts.
double overlap(std::string_view a, std::string_view b) {
  auto x = bag(a), y = bag(b);
  double common = 0.0, total = 0.0;
  for (const auto& [t, v] : x) {
    auto it = y.find(t);
    const double w = it == y.end() ? 0.0 : it->second;
    common += std::min(v, w);
    total += std::max(v, w);
  }
  for (const auto& [t, w] : y) total += x.contains(t) ? 0.0 : w;
  return total == 0.0 ? 0.0 : common / total;
}

std::string completion_text(const std::string& body) {
  const json reply = json::parse(body, nullptr, false);
  if (reply.is_discarded()) return body;
  if (reply.is_string()) return reply.get<std::string>();
  auto text_at = [&](const json& j) -> const json* { return j.is_string() ? &j : nullptr; };
  for (const char* key : {"text", "completion", "output", "content"}) {
    if (reply.contains(key)) {
      if (const json* t = text_at(reply[key])) return t->get<std::string>();
    }
  }
  try {
    if (reply.contains("choices")) {
      const json& c = reply["choices"].at(0);
      if (c.contains("text")) return c["text"].get<std::string>();
      return c.at("message").at("content").get<std::string>();
    }
    if (reply.contains("candidates")) {
      return reply["candidates"].at(0).at("content").at("parts").at(0).at("text").get<std::string>();
    }
  } catch (const json::exception&) {
  }
  return body;
}

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("layout: endpoint must start with http:// or https://");
  const std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

std::string post_prompt(const LlmClientConfig& client, const std::string& prompt, const std::string& key) {
  const Endpoint ep = split_endpoint(client.endpoint);
  httplib::Client http(ep.origin);
  if (!http.is_valid()) throw ConfigError("layout: unsupported endpoint " + client.endpoint);
  http.set_connection_timeout(client.timeout_seconds, 0);
  http.set_read_timeout(client.timeout_seconds, 0);
  const json body = {{"prompt", prompt}, {"temperature", client.temperature}, {"max_tokens", client.max_tokens}};
  httplib::Headers headers{{"Authorization", "Bearer " + key}};
  const auto res = http.Post(ep.path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("layout: request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("layout: endpoint returned HTTP " + std::to_string(res->status));
  }
  return completion_text(res->body);
}

LayoutResult checked(LayoutResult r) {
  if (clamp_layout(r)) {
    std::cerr << "layout: coordinates beyond " << kCoordinateLimit << " m were clamped\n";
  }
  return r;
}

}  // namespace

LayoutResult request_layout(std::string_view query, const LlmClientConfig& client,
                            const std::vector<FewShotExample>& bank, std::uint64_t seed) {
  client.validate();
  if (client.mode == Mode::kStub) {
    if (bank.empty()) throw std::invalid_argument("request_layout: empty bank");
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      const double s = overlap(query, bank[i].description);
      if (s > best_score) best_score = s, best = i;
    }
    return checked(bank[best].layout);
  }

  const char* key = std::getenv(client.api_key_env.c_str());
  if (key == nullptr || *key == '\0') throw ConfigError("layout: environment variable " + client.api_key_env + " is not set");
  const std::string prompt = build_prompt(query, bank, seed);
  try {
    return checked(parse_layout(post_prompt(client, prompt, key)));
  } catch (const ParseError&) {
    return checked(parse_layout(post_prompt(client, prompt, key)));
  }
}

LayoutResult knn_layout(std::string_view query, const std::vector<FewShotExample>& bank, std::size_t k) {
  if (k == 0 || bank.size() < k) throw std::invalid_argument("knn_layout: bank smaller than k");
  const auto q = bag(query);
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < bank.size(); ++i) scored.emplace_back(cosine(q, bag(bank[i].description)), i);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  LayoutResult mean;
  for (std::size_t i = 0; i < k; ++i) {
    mean.a += bank[scored[i].second].layout.a;
    mean.b += bank[scored[i].second].layout.b;
  }
  mean.a /= static_cast<double>(k);
  mean.b /= static_cast<double>(k);
  return mean;
}

double tmse(const LayoutResult& pred, const LayoutResult& gt) {
  return 0.5 * ((pred.a - gt.a).squaredNorm() + (pred.b - gt.b).squaredNorm());
}

bool clamp_layout(LayoutResult& r, double limit) {
  const LayoutResult before = r;
  r.a = r.a.cwiseMax(-limit).cwiseMin(limit);
  r.b = r.b.cwiseMax(-limit).cwiseMin(limit);
  return !(r == before);
}

}  // namespace dyad::layout
