#include "huepot/rest_honeypot.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <stdexcept>

namespace huepot::rest {

namespace {

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    std::size_t start = i;
    while (i < path.size() && path[i] != '/') ++i;
    if (i > start) out.emplace_back(path.substr(start, i - start));
  }
  return out;
}

}  // namespace

std::string_view route_kind_name(RouteKind kind) {
  switch (kind) {
    case RouteKind::ApiRoot: return "ApiRoot";
    case RouteKind::Register: return "Register";
    case RouteKind::FullState: return "FullState";
    case RouteKind::Lights: return "Lights";
    case RouteKind::LightState: return "LightState";
    case RouteKind::Tempfile: return "Tempfile";
    case RouteKind::Unknown: return "Unknown";
  }
  return "Unknown";
}

RouteTarget route(std::string_view method, std::string_view path) {
  RouteTarget t;
  if (path == "/api" || path == "/api/") {
    t.kind = (method == "POST") ? RouteKind::Register : RouteKind::ApiRoot;
    return t;
  }
  auto segs = split_path(path);
  if (segs.empty() || segs[0] != "api") {
    t.kind = RouteKind::Unknown;
    return t;
  }
  if (segs.size() == 2) {
    t.kind = RouteKind::FullState;
    t.captures["username"] = segs[1];
    return t;
  }
  if (segs.size() == 3 && segs[2] == "lights") {
    t.kind = RouteKind::Lights;
    t.captures["username"] = segs[1];
    return t;
  }
  if (segs.size() == 3 && segs[2] == "tempfile") {
    t.kind = RouteKind::Tempfile;
    t.captures["username"] = segs[1];
    return t;
  }
  if (segs.size() == 5 && segs[2] == "lights" && segs[4] == "state") {
    t.kind = RouteKind::LightState;
    t.captures["username"] = segs[1];
    t.captures["light_id"] = segs[3];
    return t;
  }
  t.kind = RouteKind::Unknown;
  return t;
}

phue::json BridgeState::full_state(std::string_view username) const {
  std::lock_guard lock(mutex_);
  return phue::render_full_state(tpl_, username);
}

phue::json BridgeState::lights() const {
  std::lock_guard lock(mutex_);
  return phue::render_lights(tpl_);
}

phue::json BridgeState::tempfile() const {
  std::lock_guard lock(mutex_);
  return tpl_.tempfile;
}

phue::json BridgeState::apply_update(const std::string& light_id,
                                     const phue::json& update) {
  std::lock_guard lock(mutex_);
  return phue::apply_state_update(tpl_, light_id, update);
}

namespace {

Response json_response(const phue::json& doc) {
  return Response{200, "application/json", doc.dump()};
}

Response error_response(const phue::PhueError& err) {
  return json_response(phue::error_envelope(err));
}

// Keys the register endpoint accepts; everything else mirrors the real
// bridge's "parameter not available" reply.
bool is_register_key(const std::string& key) {
  return key == "devicetype" || key == "username" || key == "generateclientkey";
}

Response handle_register(const http::ParsedRequest& req, util::Rng& rng,
                         std::mutex& rng_mutex) {
  if (!req.body.empty()) {
    phue::json body = phue::json::parse(req.body, nullptr, false);
    if (body.is_discarded()) {
      return error_response(
          {phue::kInvalidJson, "/", "body contains invalid json"});
    }
    if (!body.is_object()) {
      return error_response(
          {phue::kInvalidJson, "/", "body contains invalid json"});
    }
    phue::json errors = phue::json::array();
    for (auto it = body.begin(); it != body.end(); ++it) {
      if (!is_register_key(it.key())) {
        errors.push_back(phue::error_entry(phue::unknown_parameter("", it.key())));
      }
    }
    if (!errors.empty()) {
      return json_response(errors);
    }
  }
  std::string username;
  {
    std::lock_guard lock(rng_mutex);
    username = phue::generate_username(rng);
  }
  phue::json inner = phue::json::object();
  inner["username"] = username;
  phue::json entry = phue::json::object();
  entry["success"] = inner;
  phue::json envelope = phue::json::array();
  envelope.push_back(entry);
  return json_response(envelope);
}

}  // namespace

Response handle_request(const http::ParsedRequest& req, BridgeState& bridge,
                        util::Rng& rng, std::mutex& rng_mutex) {
  // Route on the decoded path without the query string. Decoding can mint
  // arbitrary bytes; sanitize before the path gets embedded in any reply.
  std::string path = req.target;
  if (auto q = path.find('?'); q != std::string::npos) path.resize(q);
  path = util::utf8_sanitize(util::percent_decode(path));
  const RouteTarget target = route(req.method, path);

  switch (target.kind) {
    case RouteKind::Register:
      return handle_register(req, rng, rng_mutex);
    case RouteKind::ApiRoot:
      return error_response({phue::kUnauthorizedUser, "/", "unauthorized user"});
    case RouteKind::FullState:
      if (req.method != "GET" && req.method != "HEAD") {
        return error_response(phue::method_unavailable(req.method, path));
      }
      return json_response(
          bridge.full_state(target.captures.at("username")));
    case RouteKind::Lights:
      if (req.method != "GET" && req.method != "HEAD") {
        return error_response(phue::method_unavailable(req.method, path));
      }
      return json_response(bridge.lights());
    case RouteKind::Tempfile:
      if (req.method != "GET" && req.method != "HEAD") {
        return error_response(phue::method_unavailable(req.method, path));
      }
      return json_response(bridge.tempfile());
    case RouteKind::LightState: {
      if (req.method != "PUT" && req.method != "POST") {
        return error_response(phue::method_unavailable(req.method, path));
      }
      const std::string& light_id = target.captures.at("light_id");
      phue::json update = phue::json::parse(req.body, nullptr, false);
      if (update.is_discarded() || !update.is_object()) {
        return error_response({phue::kInvalidJson,
                               "/lights/" + light_id + "/state",
                               "body contains invalid json"});
      }
      return json_response(bridge.apply_update(light_id, update));
    }
    case RouteKind::Unknown:
      break;
  }
  return error_response(phue::resource_unavailable(path));
}

logstore::RequestRecord make_record(const http::RawCapture& cap,
                                    const std::string& src_ip, int src_port,
                                    const std::string& node_id,
                                    const Response* response,
                                    bool head_request,
                                    bool trust_replay_header) {
  logstore::RequestRecord rec;
  rec.ts = util::now_ms();
  rec.node = node_id;
  rec.src_ip = src_ip;
  rec.src_port = src_port;
  rec.truncated = cap.truncated;

  if (cap.parsed) {
    const auto& req = *cap.parsed;
    rec.valid_http = true;
    rec.method = req.method;
    rec.url = req.target;
    rec.http_version = req.version;
    for (const auto& [name, value] : req.headers) {
      logstore::HeaderEntry h;
      h.name = name;
      if (util::is_valid_utf8(value)) {
        h.value = value;
      } else {
        h.value = util::base64_encode(value);
        h.b64 = true;
      }
      rec.headers.push_back(std::move(h));
    }
    if (auto ua = http::header_get(req.headers, "user-agent");
        ua && util::is_valid_utf8(*ua)) {
      rec.user_agent = *ua;
    }
    if (auto ref = http::header_get(req.headers, "referer");
        ref && util::is_valid_utf8(*ref)) {
      rec.referer = *ref;
    }
    if (auto sid = http::header_get(req.headers, "x-shared-id");
        sid && util::is_valid_utf8(*sid)) {
      rec.shared_id = *sid;
    }
    if (trust_replay_header) {
      if (auto src = http::header_get(req.headers, "x-replay-src");
          src && util::is_valid_utf8(*src)) {
        rec.src_ip = *src;
      }
    }
    rec.body_b64 = util::base64_encode(req.body);
  } else {
    rec.valid_http = false;
    rec.body_b64 = util::base64_encode(cap.bytes);
  }

  if (response) {
    rec.resp_status = response->status;
    rec.resp_body_b64 =
        util::base64_encode(head_request ? std::string_view()
                                         : std::string_view(response->body));
  }
  return rec;
}

RestHoneypot::RestHoneypot(HoneypotConfig config, phue::BridgeTemplate tpl)
    : config_(std::move(config)),
      bridge_(std::move(tpl)),
      rng_(config_.seed) {}

RestHoneypot::~RestHoneypot() { stop(); }

void RestHoneypot::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(uint16_t(config_.port));
  if (::inet_pton(AF_INET, config_.bind.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("invalid bind address: " + config_.bind);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) <
      0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("cannot bind " + config_.bind + ":" +
                             std::to_string(config_.port));
  }
  if (::listen(listen_fd_, 512) < 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("listen() failed");
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);

  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void RestHoneypot::stop() {
  if (!running_.exchange(false)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mutex_);
    workers.swap(workers_);
  }
  for (auto& w : workers) {
    if (w.joinable()) w.join();
  }
  listen_fd_ = -1;
}

void RestHoneypot::accept_loop() {
  while (running_) {
    sockaddr_in peer{};
    socklen_t len = sizeof(peer);
    int fd = ::accept(listen_fd_, reinterpret_cast<sockaddr*>(&peer), &len);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    // A honeypot wants traffic: over the cap the connection still gets
    // served, just after a short yield, instead of being refused.
    while (active_.load() >= config_.max_connections) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    char ip[INET_ADDRSTRLEN] = "0.0.0.0";
    ::inet_ntop(AF_INET, &peer.sin_addr, ip, sizeof(ip));
    int port = ntohs(peer.sin_port);
    ++active_;
    std::lock_guard lock(workers_mutex_);
    // Reap finished workers opportunistically to bound the vector.
    if (workers_.size() > 1024) {
      for (auto& w : workers_) {
        if (w.joinable()) w.join();
      }
      workers_.clear();
    }
    workers_.emplace_back(
        [this, fd, ip = std::string(ip), port] {
          serve_connection(fd, ip, port);
          --active_;
        });
  }
}

void RestHoneypot::serve_connection(int fd, std::string peer_ip,
                                    int peer_port) {
  ++metrics_.connections;
  http::ReadLimits limits;
  limits.timeout_ms = config_.read_timeout_ms;
  limits.max_header = config_.max_header_bytes;
  limits.max_body = config_.max_body_bytes;
  http::RawCapture cap = http::read_raw_request(fd, limits);

  Response response;
  bool have_response = false;
  bool head_request = false;
  if (cap.parsed) {
    try {
      response = handle_request(*cap.parsed, bridge_, rng_, rng_mutex_);
    } catch (const std::exception&) {
      // Handler faults still answer bridge-style, never a reset.
      response = Response{
          200, "application/json",
          phue::error_envelope(phue::resource_unavailable("/")).dump()};
    }
    have_response = true;
    head_request = cap.parsed->method == "HEAD";
    std::string wire = http::serialize_response(
        response.status, response.content_type, response.body, head_request);
    // Best effort: the record is written whether or not the peer stayed.
    (void)::send(fd, wire.data(), wire.size(), MSG_NOSIGNAL);
  } else {
    ++metrics_.raw_captures;
  }
  ::shutdown(fd, SHUT_RDWR);
  ::close(fd);

  logstore::RequestRecord rec =
      make_record(cap, peer_ip, peer_port, config_.node_id,
                  have_response ? &response : nullptr, head_request,
                  config_.trust_replay_header);
  try {
    logstore::append(config_.log_file, rec);
    ++metrics_.records_written;
  } catch (const std::exception&) {
    // Never drop the attacker connection over a log failure; count it.
    ++metrics_.log_failures;
  }
}

}  // namespace huepot::rest
