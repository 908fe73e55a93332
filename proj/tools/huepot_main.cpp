#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "huepot/analyzer.hpp"
#include "huepot/logstore.hpp"
#include "huepot/phue_model.hpp"
#include "huepot/replay.hpp"
#include "huepot/rest_honeypot.hpp"
#include "huepot/xmpp_bridge.hpp"

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop = true; }

void wait_for_signal() {
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
}

int cmd_serve_rest(const huepot::rest::HoneypotConfig& config) {
  namespace fs = std::filesystem;
  huepot::phue::BridgeTemplate tpl;
  try {
    tpl = huepot::phue::load_data_resource(config.data_dir / "template.json",
                                           config.data_dir / "config.json",
                                           config.data_dir / "tempfile.json");
  } catch (const std::exception& e) {
    std::cerr << "startup failed: " << e.what() << "\n";
    return 1;
  }
  huepot::rest::RestHoneypot server(config, std::move(tpl));
  try {
    server.start();
  } catch (const std::exception& e) {
    std::cerr << "startup failed: " << e.what() << "\n";
    return 1;
  }
  std::cout << "rest-honeypot listening on " << config.bind << ":"
            << server.port() << " node=" << config.node_id << " log="
            << fs::absolute(config.log_file).string() << std::endl;
  wait_for_signal();
  server.stop();
  const auto& m = server.metrics();
  std::cout << "connections=" << m.connections << " records="
            << m.records_written << " raw=" << m.raw_captures
            << " log_failures=" << m.log_failures << std::endl;
  return 0;
}

int cmd_serve_xmpp(huepot::xmpp::BridgeClientConfig config,
                   const std::string& password_env) {
  const char* password = std::getenv(password_env.c_str());
  if (password == nullptr) {
    std::cerr << "environment variable " << password_env << " not set\n";
    return 1;
  }
  config.password = password;
  huepot::xmpp::XmppBridge bridge(config);
  std::cout << "xmpp-bridge " << config.jid << " -> " << config.server_host
            << ":" << config.port << " api=" << config.api_url << std::endl;
  std::thread runner([&bridge] { bridge.run_forever(); });
  wait_for_signal();
  bridge.stop();
  runner.join();
  return 0;
}

int cmd_analyze(const std::vector<std::string>& log_paths,
                const std::string& tor_list, const std::string& asn_map,
                std::size_t top, const std::string& format,
                const std::string& signatures) {
  using huepot::analyzer::EnrichmentDb;
  try {
    std::vector<std::filesystem::path> paths(log_paths.begin(),
                                             log_paths.end());
    auto [records, skipped] = huepot::logstore::read_request_logs(paths);

    huepot::analyzer::SignatureRegistry registry =
        huepot::analyzer::SignatureRegistry::builtin();
    if (!signatures.empty()) registry.load_file(signatures);

    huepot::analyzer::ReportOptions opts;
    opts.top = top;
    opts.registry = &registry;
    opts.enrichment = EnrichmentDb::load(
        tor_list.empty() ? std::nullopt
                         : std::optional<std::filesystem::path>(tor_list),
        asn_map.empty() ? std::nullopt
                        : std::optional<std::filesystem::path>(asn_map));

    auto doc = huepot::analyzer::report(records, opts, skipped);
    if (format == "json") {
      std::cout << doc.dump(2) << std::endl;
    } else {
      std::cout << huepot::analyzer::render_tsv(doc);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "analyze failed: " << e.what() << "\n";
    return 1;
  }
}

int cmd_replay(const std::string& plan_path, const std::string& target,
               std::optional<uint64_t> seed, std::optional<double> pace,
               bool trust_replay_header, int parallel,
               const std::string& dump_path, const std::string& expect_log) {
  using namespace huepot::replay;
  try {
    ReplayPlan plan = load_plan(plan_path);
    if (seed) plan.seed = *seed;
    if (pace) plan.pace = *pace;
    if (!target.empty()) plan.target = target;

    std::string host = "honeypot";
    int port = 80;
    bool have_target = false;
    if (!plan.target.empty()) {
      if (!huepot::xmpp::parse_http_url(plan.target, &host, &port)) {
        std::cerr << "bad target url: " << plan.target << "\n";
        return 1;
      }
      have_target = true;
    }

    auto corpus = expand(plan);

    if (!dump_path.empty()) {
      std::ofstream out(dump_path, std::ios::binary);
      if (!out) {
        std::cerr << "cannot write dump: " << dump_path << "\n";
        return 1;
      }
      for (const auto& req : corpus) {
        out << req.to_wire(host, trust_replay_header);
      }
    }

    if (!have_target) {
      std::cout << "expanded " << corpus.size()
                << " requests (no target; dump only)" << std::endl;
      return 0;
    }

    ReplayOptions opts;
    opts.parallel = parallel;
    opts.pace = plan.pace;
    opts.include_replay_src = trust_replay_header;
    ReplaySummary summary = replay(corpus, host, port, opts);

    std::cout << "sent=" << summary.sent << " responded=" << summary.responded
              << " errors=" << summary.errors << " statuses={";
    bool first = true;
    for (const auto& [status, count] : summary.status_counts) {
      if (!first) std::cout << ",";
      std::cout << status << ":" << count;
      first = false;
    }
    std::cout << "}" << std::endl;

    if (summary.sent != corpus.size() || summary.errors > 0) {
      std::cerr << "replay incomplete: " << summary.errors << " errors\n";
      return 2;
    }

    if (!expect_log.empty()) {
      auto [records, skipped] =
          huepot::logstore::read_request_logs({expect_log});
      std::cout << "log records=" << records.size()
                << " (skipped=" << skipped << ") expected=" << corpus.size()
                << std::endl;
      if (records.size() != corpus.size()) {
        std::cerr << "request/record bijection violated\n";
        return 3;
      }
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "replay failed: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Philips Hue bridge honeypot: emulator, bridge, analyzer"};
  app.require_subcommand(1);

  // serve-rest
  huepot::rest::HoneypotConfig rest_config;
  rest_config.seed = 0;
  std::string data_dir = "data";
  std::string rest_log = "rest.log.jsonl";
  auto* serve_rest = app.add_subcommand("serve-rest", "Run the REST honeypot");
  serve_rest->add_option("--bind", rest_config.bind, "Bind address");
  serve_rest->add_option("--port", rest_config.port,
                         "Listen port (0 = ephemeral)");
  serve_rest->add_option("--data-dir", data_dir,
                         "Directory with template/config/tempfile JSON");
  serve_rest->add_option("--log-file", rest_log, "JSONL request log path");
  serve_rest->add_option("--node-id", rest_config.node_id, "Node tag in records");
  serve_rest->add_option("--seed", rest_config.seed, "RNG seed");
  serve_rest->add_option("--read-timeout-ms", rest_config.read_timeout_ms,
                         "Per-connection read deadline");
  serve_rest->add_flag("--trust-replay-header",
                       rest_config.trust_replay_header,
                       "Trust X-Replay-Src as source ip (test mode)");

  // serve-xmpp
  huepot::xmpp::BridgeClientConfig xmpp_config;
  std::string password_env = "HUEPOT_XMPP_PASSWORD";
  std::string xmpp_log = "xmpp.log.jsonl";
  auto* serve_xmpp =
      app.add_subcommand("serve-xmpp", "Run the XMPP device bridge");
  serve_xmpp->add_option("--server", xmpp_config.server_host, "XMPP server host")
      ->required();
  serve_xmpp->add_option("--port", xmpp_config.port, "XMPP server port");
  serve_xmpp->add_option("--jid", xmpp_config.jid, "Bulb JID")->required();
  serve_xmpp->add_option("--password-env", password_env,
                         "Environment variable holding the password");
  serve_xmpp->add_option("--api-url", xmpp_config.api_url,
                         "REST honeypot base url")
      ->required();
  serve_xmpp->add_option("--api-username", xmpp_config.api_username,
                         "API token used for bridge calls");
  serve_xmpp->add_option("--light-id", xmpp_config.light_id,
                         "Light controlled by this JID");
  serve_xmpp->add_option("--log-file", xmpp_log, "JSONL event log path");

  // analyze
  std::vector<std::string> log_paths;
  std::string tor_list, asn_map, signatures;
  std::size_t top = 20;
  std::string format = "json";
  auto* analyze = app.add_subcommand("analyze", "Offline log analysis");
  analyze->add_option("--logs", log_paths, "Request log files")
      ->required()
      ->expected(-1);
  analyze->add_option("--tor-list", tor_list, "TOR exit list (one ip/line)");
  analyze->add_option("--asn-map", asn_map, "CSV of cidr,asn,rir");
  analyze->add_option("--top", top, "Rows per table");
  analyze->add_option("--format", format, "json or tsv")
      ->check(CLI::IsMember({"json", "tsv"}));
  analyze->add_option("--signatures", signatures,
                      "Extra signature registry (JSON)");

  // replay
  std::string plan_path, target, dump_path, expect_log;
  std::optional<uint64_t> seed;
  std::optional<double> pace;
  bool trust_replay_header = false;
  int parallel = 8;
  auto* replay_cmd =
      app.add_subcommand("replay", "Generate and fire attack traffic");
  replay_cmd->add_option("--plan", plan_path, "Plan JSON")->required();
  replay_cmd->add_option("--target", target, "Target url (http://host:port)");
  replay_cmd
      ->add_option("--seed",
                   [&seed](const std::vector<std::string>& v) {
                     seed = std::stoull(v[0]);
                     return true;
                   },
                   "Override plan seed")
      ->expected(1);
  replay_cmd
      ->add_option("--pace",
                   [&pace](const std::vector<std::string>& v) {
                     pace = std::stod(v[0]);
                     return true;
                   },
                   "Requests/s (0 = unthrottled)")
      ->expected(1);
  replay_cmd->add_flag("--trust-replay-header", trust_replay_header,
                       "Send X-Replay-Src simulated sources");
  replay_cmd->add_option("--parallel", parallel, "Concurrent senders");
  replay_cmd->add_option("--dump", dump_path, "Write wire bytes to file");
  replay_cmd->add_option("--expect-log", expect_log,
                         "Verify one record per request in this log");

  CLI11_PARSE(app, argc, argv);

  if (serve_rest->parsed()) {
    rest_config.data_dir = data_dir;
    rest_config.log_file = rest_log;
    return cmd_serve_rest(rest_config);
  }
  if (serve_xmpp->parsed()) {
    xmpp_config.log_file = xmpp_log;
    return cmd_serve_xmpp(xmpp_config, password_env);
  }
  if (analyze->parsed()) {
    return cmd_analyze(log_paths, tor_list, asn_map, top, format, signatures);
  }
  if (replay_cmd->parsed()) {
    return cmd_replay(plan_path, target, seed, pace, trust_replay_header,
                      parallel, dump_path, expect_log);
  }
  return 0;
}
