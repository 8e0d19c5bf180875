#include <atomic>
#include <cstdlib>
#include <regex>
#include <thread>

#include "doctest.h"
#include "dyad/layout.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace dyad;
using namespace dyad::layout;

namespace {

const std::filesystem::path kBank = std::filesystem::path(DYAD_SOURCE_DIR) / "data" / "layout_bank.jsonl";

std::vector<FewShotExample> small_bank() {
  return {{"one two", {Vec3(1, 0, 0), Vec3(0, 0, 1)}, "synthetic"},
          {"three four", {Vec3(2, 0, 0), Vec3(0, 0, 2)}, "synthetic"},
          {"five six", {Vec3(3, 0, 0), Vec3(0, 0, 3)}, "synthetic"}};
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

// Serves canned replies in order and records request bodies.
struct FakeEndpoint {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::vector<std::string> replies;
  std::vector<std::string> bodies;
  std::atomic<std::size_t> next{0};

  explicit FakeEndpoint(std::vector<std::string> r) : replies(std::move(r)) {
    server.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
      bodies.push_back(req.body);
      const std::size_t i = std::min(next++, replies.size() - 1);
      res.set_content(replies[i], "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeEndpoint() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1/generate"; }
};

}  // namespace

TEST_CASE("parse_layout: published example, fences, round trip") {
  const LayoutResult r = parse_layout(R"({"A": [0.0, 0.0, -0.5], "B": [0.0, 0.0, 0.5]})");
  CHECK(r.a == Vec3(0.0, 0.0, -0.5));
  CHECK(r.b == Vec3(0.0, 0.0, 0.5));

  const LayoutResult fenced = parse_layout("Sure! Here you go:\n```json\n{\"A\":[0,0,0],\"B\":[0,0,0]}\n```\nEnjoy.");
  CHECK(fenced.a == Vec3::Zero());
  CHECK(fenced.b == Vec3::Zero());

  const LayoutResult odd{Vec3(0.1, -1.0 / 3.0, 9.999999999999), Vec3(-7.25e-5, 0.0, 1e-300)};
  CHECK(parse_layout(serialize_layout(odd)) == odd);
  CHECK(serialize_layout(r) == R"({"A": [0.0, 0.0, -0.5], "B": [0.0, 0.0, 0.5]})");
  // Braces inside strings do not confuse the scanner.
  CHECK(parse_layout(R"({"note": "}{", "A": [1, 2, 3], "B": [4, 5, 6]})").b == Vec3(4, 5, 6));
}

TEST_CASE("parse_layout: malformed fixtures raise the right error") {
  const std::vector<std::string> parse_errors = {
      "",
      "no json here at all",
      R"({"A": [0, 0, 0], "B": [0, 0, 0])",
      R"({A: [0, 0, 0], B: [0, 0, 0]})",
      R"({"A": [0, 0, NaN], "B": [0, 0, 0]})",
  };
  const std::vector<std::string> schema_errors = {
      R"({"A":[1,2],"B":[0,0,0]})",
      R"({"A": [0, 0, 0]})",
      R"({"A": "0,0,0", "B": [0, 0, 0]})",
      R"({"A": [0, 0, "x"], "B": [0, 0, 0]})",
      R"({"a": [0, 0, 0], "b": [0, 0, 0]})",
  };
  for (const std::string& s : parse_errors) {
    INFO(s);
    CHECK_THROWS_AS(parse_layout(s), ParseError);
  }
  for (const std::string& s : schema_errors) {
    INFO(s);
    CHECK_THROWS_AS(parse_layout(s), SchemaError);
  }
  // The two error types are unrelated.
  CHECK_FALSE(std::is_base_of_v<ParseError, SchemaError>);
  CHECK_FALSE(std::is_base_of_v<SchemaError, ParseError>);
}

TEST_CASE("bank file holds the published examples and 27 synthetic entries") {
  const auto bank = load_bank(kBank);
  REQUIRE(bank.size() == 30);
  std::size_t published = 0;
  for (const auto& e : bank) {
    published += e.origin == "published" ? 1 : 0;
    CHECK(e.layout.a.cwiseAbs().maxCoeff() <= kCoordinateLimit);
    CHECK(e.layout.b.cwiseAbs().maxCoeff() <= kCoordinateLimit);
  }
  CHECK(published == 3);
  CHECK(bank[0].description == "Standing face-to-face in a normal conversation.");
  CHECK(bank[0].layout.a == Vec3(0.0, 0.0, -0.5));
  CHECK(bank[1].layout.a == Vec3(-0.3, -0.2, 0.0));
  CHECK(bank[2].layout.b == Vec3(0.15, 0.0, 0.1));
}

TEST_CASE("build_prompt: structure, determinism, forced sample, escaping") {
  const auto bank = load_bank(kBank);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::string p = build_prompt("Two friends at a picnic.", bank, seed);
    CHECK(count(p, "[Example ") == 3);
    CHECK(count(p, "[User Query]") == 1);
    CHECK(p.starts_with(std::string(kSystemInstruction)));
    CHECK(p.ends_with("Output:"));
    CHECK(p == build_prompt("Two friends at a picnic.", bank, seed));
  }
  CHECK(build_prompt("q", bank, 1) != build_prompt("q", bank, 2));

  const auto small = small_bank();
  const std::string forced = build_prompt("query", small, 123);
  const std::size_t p1 = forced.find("one two"), p2 = forced.find("three four"), p3 = forced.find("five six");
  CHECK(p1 < p2);
  CHECK(p2 < p3);
  CHECK(forced.find("[Example 1]\nInput: \"one two\"\nOutput: {\"A\": [1.0, 0.0, 0.0], \"B\": [0.0, 0.0, 1.0]}") !=
        std::string::npos);
  CHECK_THROWS_AS(build_prompt("q", {small[0], small[1]}, 0), std::invalid_argument);

  const std::string tricky = R"(He said "stand \ back" now)";
  const std::string p = build_prompt(tricky, small, 0);
  const std::regex field(R"re(\[User Query\]\nInput: "((?:[^"\\\n]|\\.)*)"\nOutput:$)re");
  std::smatch m;
  REQUIRE(std::regex_search(p, m, field));
  // Decoding the quoted field as a JSON string recovers the query.
  CHECK(nlohmann::json::parse("\"" + m[1].str() + "\"").get<std::string>() == tricky);
}

TEST_CASE("stub requests, kNN baseline and tMSE") {
  const auto bank = load_bank(kBank);
  LlmClientConfig stub;
  for (const auto& e : bank) CHECK(request_layout(e.description, stub, bank, 3) == e.layout);
  const LayoutResult r1 = request_layout("two people arguing at a table", stub, bank, 9);
  CHECK(r1 == request_layout("two people arguing at a table", stub, bank, 9));

  const auto small = small_bank();
  CHECK(knn_layout("three four", small, 1) == small[1].layout);
  const LayoutResult all = knn_layout("anything", small, 3);
  CHECK(all.a == Vec3(2, 0, 0));
  CHECK(all.b == Vec3(0, 0, 2));
  // "one" and "five" tie with the query; the earlier entry wins.
  CHECK(knn_layout("one five", small, 1) == small[0].layout);
  CHECK_THROWS_AS(knn_layout("x", small, 4), std::invalid_argument);

  const LayoutResult gt{Vec3(0, 0, -0.5), Vec3(0, 0, 0.5)};
  CHECK(tmse(gt, gt) == 0.0);
  CHECK(tmse({gt.a + Vec3(1, 0, 0), gt.b}, gt) == 0.5);
  CHECK(tmse({gt.a + Vec3(0, 0, 2), gt.b + Vec3(0, 0, 2)}, gt) == 4.0);
  const LayoutResult other{Vec3(1, -2, 0.25), Vec3(0.5, 0.5, -3)};
  CHECK(tmse(other, gt) == tmse(gt, other));
  CHECK(tmse(other, gt) > 0.0);

  LayoutResult far{Vec3(0, 0, -40), Vec3(12, 0, 1)};
  CHECK(clamp_layout(far));
  CHECK(far.a == Vec3(0, 0, -10));
  CHECK(far.b == Vec3(10, 0, 1));
  CHECK_FALSE(clamp_layout(far));
}

TEST_CASE("live mode against a local endpoint") {
  const auto bank = load_bank(kBank);
  LlmClientConfig live;
  live.mode = Mode::kLive;
  live.api_key_env = "DYAD_TEST_LAYOUT_KEY";

  {
    FakeEndpoint ep({R"({"text": "{\"A\": [0.0, 0.0, -0.5], \"B\": [0.0, 0.0, 0.5]}"})"});
    live.endpoint = ep.url();
    ::unsetenv("DYAD_TEST_LAYOUT_KEY");
    CHECK_THROWS_AS(request_layout("face to face", live, bank, 1), ConfigError);
    ::setenv("DYAD_TEST_LAYOUT_KEY", "secret", 1);
    const LayoutResult r = request_layout("face to face", live, bank, 1);
    CHECK(r.a == Vec3(0.0, 0.0, -0.5));
    CHECK(r.b == Vec3(0.0, 0.0, 0.5));
    REQUIRE(ep.bodies.size() == 1);
    const auto body = nlohmann::json::parse(ep.bodies[0]);
    CHECK(body["prompt"] == build_prompt("face to face", bank, 1));
    CHECK(body["temperature"] == 0.2);
    CHECK(body["max_tokens"] == 128);
  }
  {
    // One unparsable reply, then a good one: the retry succeeds with the same prompt.
    FakeEndpoint ep({R"({"text": "I cannot comply."})", R"({"text": "{\"A\": [1, 0, 0], \"B\": [0, 0, 1]}"})"});
    live.endpoint = ep.url();
    CHECK(request_layout("q", live, bank, 2).a == Vec3(1, 0, 0));
    REQUIRE(ep.bodies.size() == 2);
    CHECK(ep.bodies[0] == ep.bodies[1]);
  }
  {
    FakeEndpoint ep({R"({"text": "still no json"})"});
    live.endpoint = ep.url();
    CHECK_THROWS_AS(request_layout("q", live, bank, 2), ParseError);
    CHECK(ep.bodies.size() == 2);
  }
  {
    FakeEndpoint ep({R"({"text": "{\"A\": [1, 0], \"B\": [0, 0, 1]}"})"});
    live.endpoint = ep.url();
    CHECK_THROWS_AS(request_layout("q", live, bank, 2), SchemaError);
    CHECK(ep.bodies.size() == 1);
  }
  live.endpoint = "http://127.0.0.1:1/v1/generate";
  live.timeout_seconds = 2;
  CHECK_THROWS_AS(request_layout("q", live, bank, 2), TransportError);
  ::unsetenv("DYAD_TEST_LAYOUT_KEY");
}
