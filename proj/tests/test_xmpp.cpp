#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <regex>
#include <thread>

#include "huepot/logstore.hpp"
#include "huepot/rest_honeypot.hpp"
#include "huepot/xmpp_bridge.hpp"
#include "support/stub_xmpp_server.hpp"
#include "support/test_util.hpp"

using namespace huepot;
using xmpp::Verb;

namespace {

xmpp::BridgeClientConfig bridge_config(const testsupport::StubXmppServer& stub,
                                       const std::filesystem::path& log,
                                       const std::string& api_url = "") {
  xmpp::BridgeClientConfig cfg;
  cfg.server_host = "127.0.0.1";
  cfg.port = stub.port();
  cfg.jid = "bulb1@example.org/bulb";
  cfg.password = "hunter2";
  cfg.api_url = api_url;
  cfg.log_file = log;
  cfg.message_deadline_ms = 5000;
  cfg.reconnect_base_ms = 100;
  return cfg;
}

std::vector<logstore::XmppEvent> events_of(const std::filesystem::path& log) {
  auto [events, skipped] = logstore::read_xmpp_logs({log});
  CHECK(skipped == 0);
  return events;
}

struct LiveHoneypot {
  LiveHoneypot() {
    cfg.bind = "127.0.0.1";
    cfg.port = 0;
    cfg.log_file = dir.file("rest.jsonl");
    cfg.read_timeout_ms = 2000;
    auto data = testsupport::data_dir();
    server.emplace(cfg, phue::load_data_resource(data / "template.json",
                                                 data / "config.json",
                                                 data / "tempfile.json"));
    server->start();
  }
  ~LiveHoneypot() { server->stop(); }
  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(server->port());
  }
  testsupport::TempDir dir;
  rest::HoneypotConfig cfg;
  std::optional<rest::RestHoneypot> server;
};

}  // namespace

TEST_CASE("parse_command grammar") {
  CHECK(xmpp::parse_command("ON").verb == Verb::On);
  CHECK(xmpp::parse_command("on").verb == Verb::On);
  CHECK(xmpp::parse_command("Off").verb == Verb::Off);
  CHECK(xmpp::parse_command("status").verb == Verb::Status);

  auto bri = xmpp::parse_command("bri 128");
  CHECK(bri.verb == Verb::Bri);
  CHECK(bri.arg == 128);

  CHECK(xmpp::parse_command("bri 999").verb == Verb::Unknown);
  CHECK(xmpp::parse_command("bri").verb == Verb::Unknown);
  CHECK(xmpp::parse_command("bri -4").verb == Verb::Unknown);
  CHECK(xmpp::parse_command("hello there").verb == Verb::Unknown);
  CHECK(xmpp::parse_command("").verb == Verb::Unknown);
  CHECK(xmpp::parse_command("BRI 0").arg == 0);
  CHECK(xmpp::parse_command("bri 254").arg == 254);
}

TEST_CASE("make_shared_id is a truncated digest of jid|ts") {
  // Expected values computed with an independent sha256 implementation.
  CHECK(xmpp::make_shared_id("a@x", 1) == "a1f0c9eb2f80a2f6");
  CHECK(xmpp::make_shared_id("a@x", 2) == "b1ca7f7666209619");
  CHECK(xmpp::make_shared_id("bulb1@example.org", 1700000000123) ==
        "c75ebb955f9372a7");

  CHECK(xmpp::make_shared_id("a@x", 1) == xmpp::make_shared_id("a@x", 1));
  CHECK(xmpp::make_shared_id("a@x", 1) != xmpp::make_shared_id("a@x", 2));

  const std::regex format("^[0-9a-f]{16}$");
  for (int64_t ts = 0; ts < 50; ++ts) {
    CHECK(std::regex_match(xmpp::make_shared_id("j@d", ts), format));
  }
}

TEST_CASE("connect: happy path logs stream events and presence") {
  testsupport::StubXmppServer stub({});
  testsupport::TempDir dir;
  auto log = dir.file("xmpp.jsonl");
  xmpp::XmppBridge bridge(bridge_config(stub, log));
  REQUIRE(bridge.connect());
  bridge.stop();

  auto events = events_of(log);
  REQUIRE(!events.empty());
  bool saw_presence_out = false;
  for (const auto& e : events) {
    CHECK(e.local_jid == "bulb1@example.org");
    CHECK(e.kind == "stream");
    if (e.direction == "out" &&
        e.payload.find("<presence") != std::string::npos) {
      saw_presence_out = true;
    }
  }
  CHECK(saw_presence_out);
}

TEST_CASE("connect: wrong password logs the failure, no crash") {
  testsupport::StubXmppServer stub({.password = "other"});
  testsupport::TempDir dir;
  auto log = dir.file("xmpp.jsonl");
  xmpp::XmppBridge bridge(bridge_config(stub, log));
  CHECK_FALSE(bridge.connect());
  CHECK(bridge.last_error() == "authentication failed");

  bool logged = false;
  for (const auto& e : events_of(log)) {
    if (e.payload.find("authentication failed") != std::string::npos) {
      logged = true;
    }
  }
  CHECK(logged);
}

TEST_CASE("server-closed stream triggers a logged reconnect") {
  testsupport::StubXmppServer stub({.close_after_bind = true});
  testsupport::TempDir dir;
  auto log = dir.file("xmpp.jsonl");
  auto cfg = bridge_config(stub, log);
  xmpp::XmppBridge bridge(cfg);
  std::thread runner([&] { bridge.run_forever(); });
  // First session binds, the stub drops it, the bridge must come back.
  CHECK(testsupport::wait_until(
      [&] { return stub.sessions_bound() >= 2; }, 8000));
  bridge.stop();
  stub.stop();
  runner.join();

  bool reconnect_logged = false;
  for (const auto& e : events_of(log)) {
    if (e.payload.find("reconnect") != std::string::npos) {
      reconnect_logged = true;
    }
  }
  CHECK(reconnect_logged);
}

TEST_CASE("execute: on command drives the honeypot and replies") {
  LiveHoneypot honeypot;
  testsupport::StubXmppServer stub({});
  testsupport::TempDir dir;
  auto log = dir.file("xmpp.jsonl");
  auto cfg = bridge_config(stub, log, honeypot.url());
  xmpp::XmppBridge bridge(cfg);
  REQUIRE(bridge.connect());

  auto reply = bridge.handle_chat("visitor@example.org/home", "on");
  CHECK(reply.find("on") != std::string::npos);
  bridge.stop();
  honeypot.server->stop();

  // The REST side saw exactly the PUT this command mapped to.
  auto [records, skipped] =
      logstore::read_request_logs({honeypot.cfg.log_file});
  REQUIRE(records.size() == 1);
  CHECK(records[0].method == std::string("PUT"));
  CHECK(records[0].url ==
        std::string("/api/" + cfg.api_username + "/lights/1/state"));
  CHECK(records[0].body() == R"({"on":true})");
  REQUIRE(records[0].shared_id.has_value());

  // chat-in, api, chat-out all carry that same shared id.
  auto events = events_of(log);
  int chat_in = 0, api = 0, chat_out = 0;
  for (const auto& e : events) {
    if (e.shared_id != *records[0].shared_id) continue;
    if (e.kind == "chat" && e.direction == "in") ++chat_in;
    if (e.kind == "api") ++api;
    if (e.kind == "chat" && e.direction == "out") ++chat_out;
  }
  CHECK(chat_in == 1);
  CHECK(api == 1);
  CHECK(chat_out == 1);
}

TEST_CASE("execute: unknown command never touches the API") {
  LiveHoneypot honeypot;
  testsupport::StubXmppServer stub({});
  testsupport::TempDir dir;
  auto log = dir.file("xmpp.jsonl");
  xmpp::XmppBridge bridge(bridge_config(stub, log, honeypot.url()));
  REQUIRE(bridge.connect());
  auto reply = bridge.handle_chat("visitor@example.org/home", "hello");
  CHECK(reply.find("commands:") != std::string::npos);
  bridge.stop();
  honeypot.server->stop();

  // No connection ever reached the honeypot, so no log was even created.
  CHECK_FALSE(std::filesystem::exists(honeypot.cfg.log_file));
  CHECK(honeypot.server->metrics().connections.load() == 0);
}

TEST_CASE("execute: status reply embeds the live bri value") {
  LiveHoneypot honeypot;
  testsupport::StubXmppServer stub({});
  testsupport::TempDir dir;
  auto log = dir.file("xmpp.jsonl");
  xmpp::XmppBridge bridge(bridge_config(stub, log, honeypot.url()));
  REQUIRE(bridge.connect());

  bridge.handle_chat("visitor@example.org/home", "bri 77");
  auto reply = bridge.handle_chat("visitor@example.org/home", "status");
  CHECK(reply.find("bri 77") != std::string::npos);
  bridge.stop();
}

TEST_CASE("execute: unreachable API replies device unavailable") {
  testsupport::StubXmppServer stub({});
  testsupport::TempDir dir;
  auto log = dir.file("xmpp.jsonl");
  // Port 1: nothing listens there.
  auto cfg = bridge_config(stub, log, "http://127.0.0.1:1");
  cfg.message_deadline_ms = 1000;
  xmpp::XmppBridge bridge(cfg);
  REQUIRE(bridge.connect());
  auto reply = bridge.handle_chat("visitor@example.org/home", "on");
  CHECK(reply == "device unavailable");
  bridge.stop();

  bool error_logged = false;
  for (const auto& e : events_of(log)) {
    if (e.kind == "api" && e.payload.find("error") != std::string::npos) {
      error_logged = true;
    }
  }
  CHECK(error_logged);
}

TEST_CASE("end to end: chat commands over the stub server correlate 1:1") {
  LiveHoneypot honeypot;
  testsupport::StubXmppServer stub({});
  testsupport::TempDir dir;
  auto log = dir.file("xmpp.jsonl");
  auto cfg = bridge_config(stub, log, honeypot.url());
  xmpp::XmppBridge bridge(cfg);
  REQUIRE(bridge.connect());
  std::thread runner([&] { bridge.run(); });

  const std::vector<std::string> commands = {"on", "bri 10", "status", "off",
                                             "bri 200"};
  for (const auto& cmd : commands) {
    REQUIRE(stub.send_chat(cmd));
    auto reply = stub.wait_reply(5000);
    REQUIRE(reply.has_value());
  }
  bridge.stop();
  runner.join();
  honeypot.server->stop();

  auto [records, rskip] = logstore::read_request_logs({honeypot.cfg.log_file});
  auto [events, xskip] = logstore::read_xmpp_logs({log});
  auto result = logstore::correlate(records, events);
  CHECK(result.sessions.size() == commands.size());
  CHECK(result.orphans.empty());
  for (const auto& session : result.sessions) {
    CHECK(session.rest_records.size() == 1);
    CHECK(session.xmpp_events.size() >= 3);
  }
}
