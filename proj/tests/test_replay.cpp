#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>

#include "huepot/analyzer.hpp"
#include "huepot/replay.hpp"
#include "huepot/rest_honeypot.hpp"
#include "huepot/util.hpp"
#include "support/test_util.hpp"

using namespace huepot;

namespace {

// Independent oracle: can the token be decomposed into a concatenation of
// SQL-admin keywords (after dropping digits/hyphens and lowercasing)?
bool in_keyword_closure(const std::string& raw_segment) {
  static const std::vector<std::string> keywords = {
      "db", "admin", "pma", "php", "sql", "web", "database", "my"};
  std::string token;
  for (char c : raw_segment) {
    if (c >= 'A' && c <= 'Z') token.push_back(char(c + 32));
    else if (c >= 'a' && c <= 'z') token.push_back(c);
    else if (c >= '0' && c <= '9') continue;
    else if (c == '-') continue;
    else return false;
  }
  if (token.empty()) return false;
  std::vector<bool> reachable(token.size() + 1, false);
  reachable[0] = true;
  for (std::size_t i = 0; i < token.size(); ++i) {
    if (!reachable[i]) continue;
    for (const auto& kw : keywords) {
      if (token.compare(i, kw.size(), kw) == 0) reachable[i + kw.size()] = true;
    }
  }
  return reachable[token.size()];
}

std::vector<std::string> path_segments(const std::string& path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    std::size_t start = i;
    while (i < path.size() && path[i] != '/') ++i;
    if (i > start) out.push_back(path.substr(start, i - start));
  }
  return out;
}

logstore::RequestRecord as_record(const replay::ReplayRequest& req) {
  logstore::RequestRecord rec;
  rec.ts = 1;
  rec.valid_http = true;
  rec.method = req.method;
  rec.url = req.target;
  rec.user_agent = req.user_agent;
  rec.src_ip = req.src_ip;
  rec.body_b64 = util::base64_encode(req.body);
  return rec;
}

const analyzer::SignatureRegistry& registry() {
  static auto reg = analyzer::SignatureRegistry::builtin();
  return reg;
}

}  // namespace

TEST_CASE("jorgee paths decompose into the keyword closure") {
  auto reqs = replay::gen_jorgee(200, 11);
  REQUIRE(reqs.size() == 200);
  for (const auto& req : reqs) {
    CHECK(req.method == "HEAD");
    CHECK(req.user_agent == "Mozilla/5.0 Jorgee");
    auto segments = path_segments(req.target);
    REQUIRE(!segments.empty());
    for (const auto& seg : segments) {
      CAPTURE(req.target);
      CHECK(in_keyword_closure(seg));
    }
    // Pipeline oracle: generic scanning, never targeted.
    CHECK(analyzer::classify(as_record(req), registry()) ==
          analyzer::Label::Untargeted);
  }
}

TEST_CASE("gen_jorgee n=0 yields nothing") {
  CHECK(replay::gen_jorgee(0, 1).empty());
}

TEST_CASE("shooter bodies stay inside the bulb-state schema") {
  static const std::set<std::string> schema = {
      "on", "bri", "hue", "sat", "reachable", "alert", "effect"};
  auto reqs = replay::gen_shooter(300, 21);
  std::set<std::string> ips;
  for (const auto& req : reqs) {
    CHECK(req.method == "POST");
    CHECK(req.target == "/api/");
    CHECK(req.user_agent == "shooter");
    auto body = nlohmann::json::parse(req.body);
    REQUIRE(body.is_object());
    CHECK(!body.empty());
    for (const auto& [key, value] : body.items()) {
      CHECK(schema.count(key) == 1);
    }
    ips.insert(req.src_ip);
    auto tags = registry().match(as_record(req));
    CHECK(std::find(tags.begin(), tags.end(), "shooter-control") !=
          tags.end());
  }
  // Round-robin source pool: exactly 92 distinct addresses.
  CHECK(ips.size() == 92);
  std::set<std::string> few_ips;
  for (const auto& req : replay::gen_shooter(50, 21)) {
    few_ips.insert(req.src_ip);
  }
  CHECK(few_ips.size() == 50);
}

TEST_CASE("same seed reproduces byte-identical corpora") {
  auto a = replay::gen_shooter(100, 42);
  auto b = replay::gen_shooter(100, 42);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].to_wire("honeypot", true) == b[i].to_wire("honeypot", true));
  }
  auto c = replay::gen_shooter(100, 43);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].to_wire("h", true) != c[i].to_wire("h", true)) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("multipart bodies follow the fuzz template") {
  const std::regex boundary("^-{26}[a-z0-9]{16}$");
  auto check_kind = [&](replay::MultipartPayload kind,
                        const std::string& must_contain,
                        const std::string& ua) {
    auto reqs = replay::gen_multipart_fuzz(50, 5, kind);
    for (const auto& req : reqs) {
      CHECK(req.user_agent == ua);
      CHECK(req.body.find("name=\"productid\"") != std::string::npos);
      if (!must_contain.empty()) {
        CHECK(req.body.find(must_contain) != std::string::npos);
      }
      std::string first_line = req.body.substr(0, req.body.find('\r'));
      CHECK(std::regex_match(first_line, boundary));
      auto tags = registry().match(as_record(req));
      CHECK(tags == std::vector<std::string>{"multipart-fuzz"});
    }
  };
  check_kind(replay::MultipartPayload::Botlight, "%0000", "botlight");
  check_kind(replay::MultipartPayload::ModScan000, "", "000modscan");
}

TEST_CASE("mass payload repeats its token 9944 times") {
  auto reqs = replay::gen_multipart_fuzz(3, 17, replay::MultipartPayload::Mass);
  for (const auto& req : reqs) {
    CHECK(req.user_agent == "mass");
    auto count = [&](const std::string& tok) {
      std::size_t n = 0, p = 0;
      while ((p = req.body.find(tok, p)) != std::string::npos) {
        ++n;
        p += tok.size();
      }
      return n;
    };
    const std::size_t telnet = count("%A/telnet");
    const std::size_t xmpp = count("%A/xmpp");
    const std::size_t upnp = count("%A/upnp");
    CHECK(telnet + xmpp + upnp == 9944);
    // One token kind per payload.
    CHECK((telnet == 9944 || xmpp == 9944 || upnp == 9944));
  }
}

TEST_CASE("boundary suffix distribution is well-formed over 1000 samples") {
  const std::regex suffix_re("^[a-z0-9]{16}$");
  auto reqs =
      replay::gen_multipart_fuzz(1000, 77, replay::MultipartPayload::Botlight);
  for (const auto& req : reqs) {
    std::string first_line = req.body.substr(0, req.body.find('\r'));
    REQUIRE(first_line.size() == 42);
    CHECK(std::regex_match(first_line.substr(26), suffix_re));
  }
}

TEST_CASE("url scan pattern 7 fills sequentially") {
  auto reqs = replay::gen_url_scan(7, 217, 1);
  REQUIRE(reqs.size() == 217);
  for (int i = 0; i < 217; ++i) {
    CHECK(reqs[i].target == "/api/hue/" + std::to_string(i));
    CHECK(reqs[i].user_agent == "ioscan");
    CHECK(reqs[i].method == "GET");
  }
}

TEST_CASE("unknown pattern and generator ids are usage errors") {
  CHECK_THROWS_AS(replay::gen_url_scan(0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(replay::gen_url_scan(11, 1, 1), std::invalid_argument);
  replay::ReplayPlan plan;
  plan.mix.push_back({"no-such-generator", 1});
  CHECK_THROWS_AS(replay::expand(plan), std::invalid_argument);
  CHECK_THROWS_AS(replay::generator_intended_tag("bogus"),
                  std::invalid_argument);
}

TEST_CASE("plan files load and expand deterministically") {
  testsupport::TempDir dir;
  auto path = dir.file("plan.json");
  {
    std::ofstream out(path);
    out << R"({"seed": 9, "pace": 0, "mix": [
      {"generator": "jorgee", "count": 5},
      {"generator": "url-scan-10", "count": 5}
    ]})";
  }
  auto plan = replay::load_plan(path);
  CHECK(plan.seed == 9);
  auto a = replay::expand(plan);
  auto b = replay::expand(plan);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].to_wire("h", true) == b[i].to_wire("h", true));
  }
}

TEST_CASE("replay against a live honeypot logs one record per request") {
  testsupport::TempDir dir;
  rest::HoneypotConfig cfg;
  cfg.bind = "127.0.0.1";
  cfg.port = 0;
  cfg.log_file = dir.file("rest.jsonl");
  cfg.read_timeout_ms = 2000;
  cfg.trust_replay_header = true;
  auto data = testsupport::data_dir();
  rest::RestHoneypot server(
      cfg, phue::load_data_resource(data / "template.json",
                                    data / "config.json",
                                    data / "tempfile.json"));
  server.start();

  replay::ReplayPlan plan;
  plan.seed = 2024;
  plan.mix = {{"jorgee", 30}, {"shooter", 30}, {"multipart-botlight", 20},
              {"url-scan-07", 10}, {"url-scan-10", 10}};
  auto corpus = replay::expand(plan);
  REQUIRE(corpus.size() == 100);

  replay::ReplayOptions opts;
  opts.parallel = 8;
  opts.include_replay_src = true;
  auto summary = replay::replay(corpus, "127.0.0.1", server.port(), opts);
  CHECK(summary.sent == 100);
  CHECK(summary.responded == 100);
  CHECK(summary.errors == 0);
  CHECK(summary.status_counts.at(200) == 100);

  server.stop();
  auto [records, skipped] = logstore::read_request_logs({cfg.log_file});
  CHECK(skipped == 0);
  CHECK(records.size() == 100);
  // Simulated sources came through the trusted header.
  std::set<std::string> ips;
  for (const auto& rec : records) ips.insert(rec.src_ip);
  CHECK(ips.size() > 10);
}

TEST_CASE("pace zero sends everything, summary totals match the plan") {
  testsupport::TempDir dir;
  rest::HoneypotConfig cfg;
  cfg.bind = "127.0.0.1";
  cfg.port = 0;
  cfg.log_file = dir.file("rest.jsonl");
  cfg.read_timeout_ms = 2000;
  auto data = testsupport::data_dir();
  rest::RestHoneypot server(
      cfg, phue::load_data_resource(data / "template.json",
                                    data / "config.json",
                                    data / "tempfile.json"));
  server.start();

  replay::ReplayPlan plan;
  plan.seed = 7;
  plan.pace = 0;
  plan.mix = {{"url-scan-01", 25}};
  auto corpus = replay::expand(plan);
  replay::ReplayOptions opts;
  auto summary = replay::replay(corpus, "127.0.0.1", server.port(), opts);
  CHECK(summary.sent == corpus.size());
  server.stop();
}

TEST_CASE("unreachable target aborts with a partial summary") {
  replay::ReplayPlan plan;
  plan.seed = 3;
  plan.mix = {{"url-scan-02", 5}};
  auto corpus = replay::expand(plan);
  replay::ReplayOptions opts;
  opts.timeout_ms = 500;
  // Port 1 on loopback is reliably closed.
  auto summary = replay::replay(corpus, "127.0.0.1", 1, opts);
  CHECK(summary.sent == 1);
  CHECK(summary.errors == 1);
  CHECK(summary.responded == 0);
}
