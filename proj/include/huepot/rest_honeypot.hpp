#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "huepot/http.hpp"
#include "huepot/logstore.hpp"
#include "huepot/phue_model.hpp"
#include "huepot/util.hpp"

namespace huepot::rest {

enum class RouteKind {
  ApiRoot,
  Register,
  FullState,
  Lights,
  LightState,
  Tempfile,
  Unknown,
};

std::string_view route_kind_name(RouteKind kind);

struct RouteTarget {
  RouteKind kind = RouteKind::Unknown;
  std::map<std::string, std::string> captures;  // username, light_id
};

// Total mapping from (method, percent-decoded path) to a route. Unknown is
// the fallback; no input fails to resolve.
RouteTarget route(std::string_view method, std::string_view path);

// Live bridge: the template is immutable after load except through
// apply_update, which runs under the lock.
class BridgeState {
 public:
  explicit BridgeState(phue::BridgeTemplate t) : tpl_(std::move(t)) {}

  phue::json full_state(std::string_view username) const;
  phue::json lights() const;
  phue::json tempfile() const;
  phue::json apply_update(const std::string& light_id,
                          const phue::json& update);

 private:
  mutable std::mutex mutex_;
  phue::BridgeTemplate tpl_;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// Dispatches one parsed request against the bridge. Every reply is a
// bridge-style JSON document with HTTP 200; unknown paths get a Phue
// error envelope, never an HTML error page.
Response handle_request(const http::ParsedRequest& req, BridgeState& bridge,
                        util::Rng& rng, std::mutex& rng_mutex);

struct HoneypotConfig {
  std::string bind = "0.0.0.0";
  int port = 80;
  std::filesystem::path data_dir = "data";
  std::filesystem::path log_file = "rest.log.jsonl";
  std::string node_id = "node-1";
  uint64_t seed = 1;
  int read_timeout_ms = 10000;
  std::size_t max_header_bytes = 64 * 1024;
  std::size_t max_body_bytes = 1024 * 1024;
  int max_connections = 256;  // concurrent handler cap
  // Test mode only: trust X-Replay-Src as the source address.
  bool trust_replay_header = false;
};

struct Metrics {
  std::atomic<uint64_t> connections{0};
  std::atomic<uint64_t> records_written{0};
  std::atomic<uint64_t> log_failures{0};
  std::atomic<uint64_t> raw_captures{0};
};

// Builds the log record for one connection. Exposed for tests.
logstore::RequestRecord make_record(const http::RawCapture& cap,
                                    const std::string& src_ip, int src_port,
                                    const std::string& node_id,
                                    const Response* response,
                                    bool head_request,
                                    bool trust_replay_header);

class RestHoneypot {
 public:
  RestHoneypot(HoneypotConfig config, phue::BridgeTemplate tpl);
  ~RestHoneypot();

  RestHoneypot(const RestHoneypot&) = delete;
  RestHoneypot& operator=(const RestHoneypot&) = delete;

  // Binds and starts the accept loop. Throws on bind failure.
  void start();
  void stop();

  int port() const { return port_; }
  const Metrics& metrics() const { return metrics_; }
  const HoneypotConfig& config() const { return config_; }

 private:
  void accept_loop();
  void serve_connection(int fd, std::string peer_ip, int peer_port);

  HoneypotConfig config_;
  BridgeState bridge_;
  util::Rng rng_;
  std::mutex rng_mutex_;
  Metrics metrics_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::atomic<int> active_{0};
  std::mutex workers_mutex_;
  std::vector<std::thread> workers_;
};

}  // namespace huepot::rest
