#include "huepot/xmpp_bridge.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <thread>

#include <json.hpp>

#include "huepot/http.hpp"
#include "huepot/util.hpp"

namespace huepot::xmpp {

namespace {

int connect_tcp(const std::string& host, int port, int timeout_ms) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints,
                    &res) != 0 ||
      res == nullptr) {
    return -1;
  }
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd >= 0) {
    timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  }
  return fd;
}

}  // namespace

std::string_view verb_name(Verb verb) {
  switch (verb) {
    case Verb::On: return "on";
    case Verb::Off: return "off";
    case Verb::Bri: return "bri";
    case Verb::Status: return "status";
    case Verb::Unknown: return "unknown";
  }
  return "unknown";
}

Command parse_command(std::string_view text) {
  const auto tokens = util::split_ws(text);
  if (tokens.empty()) return {};
  const std::string verb = util::to_lower(tokens[0]);
  if (verb == "on") return {Verb::On, std::nullopt};
  if (verb == "off") return {Verb::Off, std::nullopt};
  if (verb == "status") return {Verb::Status, std::nullopt};
  if (verb == "bri" && tokens.size() >= 2) {
    const std::string& arg = tokens[1];
    if (!arg.empty() &&
        arg.find_first_not_of("0123456789") == std::string::npos &&
        arg.size() <= 3) {
      int n = std::stoi(arg);
      if (n >= 0 && n <= 254) return {Verb::Bri, n};
    }
  }
  return {};
}

std::string make_shared_id(std::string_view jid, int64_t ts_ms) {
  std::string input(jid);
  input += "|";
  input += std::to_string(ts_ms);
  return util::sha256_hex(input).substr(0, 16);
}

XmppBridge::XmppBridge(BridgeClientConfig config)
    : config_(std::move(config)) {
  std::string jid = config_.jid;
  if (auto slash = jid.find('/'); slash != std::string::npos) {
    resource_ = jid.substr(slash + 1);
    jid.resize(slash);
  }
  bare_jid_ = jid;
  if (auto at = jid.find('@'); at != std::string::npos) {
    node_ = jid.substr(0, at);
    domain_ = jid.substr(at + 1);
  } else {
    node_ = jid;
    domain_ = config_.server_host;
  }
}

XmppBridge::~XmppBridge() { close_socket(); }

void XmppBridge::close_socket() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void XmppBridge::log_event(std::string_view direction, std::string_view kind,
                           std::string_view remote, std::string_view payload,
                           std::string_view shared_id) {
  logstore::XmppEvent e;
  e.ts = util::now_ms();
  e.direction = std::string(direction);
  e.kind = std::string(kind);
  e.local_jid = bare_jid_;
  e.remote_jid = util::utf8_sanitize(remote);
  e.payload = util::utf8_sanitize(payload);
  e.shared_id = std::string(shared_id);
  try {
    logstore::append(config_.log_file, e);
  } catch (const std::exception&) {
    // Logging must never kill the session.
  }
}

bool XmppBridge::send_raw(std::string_view bytes, std::string_view log_kind,
                          std::string_view shared_id) {
  if (fd_ < 0) return false;
  ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
  log_event("out", log_kind, domain_, bytes, shared_id);
  return n == ssize_t(bytes.size());
}

std::optional<std::string> XmppBridge::read_stanza(int timeout_ms) {
  const int64_t deadline = util::now_ms() + timeout_ms;
  while (true) {
    if (auto stanza = reader_.next()) return stanza;
    int64_t remaining = deadline - util::now_ms();
    if (remaining <= 0 || fd_ < 0) return std::nullopt;
    pollfd pfd{fd_, POLLIN, 0};
    int pr = ::poll(&pfd, 1, int(std::min<int64_t>(remaining, 200)));
    if (pr < 0) return std::nullopt;
    if (pr == 0) continue;
    char buf[4096];
    ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n <= 0) return std::nullopt;
    reader_.feed(std::string_view(buf, std::size_t(n)));
  }
}

bool XmppBridge::connect() {
  close_socket();
  reader_ = StanzaReader();
  last_error_.clear();

  fd_ = connect_tcp(config_.server_host, config_.port,
                    config_.message_deadline_ms);
  if (fd_ < 0) {
    last_error_ = "tcp connect failed";
    log_event("out", "stream", config_.server_host,
              "connect failed: " + config_.server_host + ":" +
                  std::to_string(config_.port),
              "");
    return false;
  }

  auto stream_open = "<?xml version='1.0'?><stream:stream to='" +
                     xml_escape(domain_) +
                     "' xmlns='jabber:client' "
                     "xmlns:stream='http://etherx.jabber.org/streams' "
                     "version='1.0'>";
  send_raw(stream_open, "stream");

  auto fail = [&](const std::string& why) {
    last_error_ = why;
    log_event("in", "stream", domain_, "error: " + why, "");
    close_socket();
    return false;
  };

  auto open_tag = read_stanza(config_.message_deadline_ms);
  if (!open_tag || element_name(*open_tag) != "stream") {
    return fail("no stream header from server");
  }
  log_event("in", "stream", domain_, *open_tag, "");
  auto features = read_stanza(config_.message_deadline_ms);
  if (!features || element_name(*features) != "features") {
    return fail("no stream features");
  }
  log_event("in", "stream", domain_, *features, "");
  if (features->find("PLAIN") == std::string::npos) {
    return fail("server does not offer SASL PLAIN");
  }

  // SASL PLAIN: authzid NUL authcid NUL password.
  std::string plain;
  plain.push_back('\0');
  plain += node_;
  plain.push_back('\0');
  plain += config_.password;
  send_raw(
      "<auth xmlns='urn:ietf:params:xml:ns:xmpp-sasl' mechanism='PLAIN'>" +
          util::base64_encode(plain) + "</auth>",
      "stream");
  auto sasl = read_stanza(config_.message_deadline_ms);
  if (!sasl) return fail("no SASL reply");
  log_event("in", "stream", domain_, *sasl, "");
  if (element_name(*sasl) != "success") {
    return fail("authentication failed");
  }

  // Stream restart after SASL, then resource binding.
  reader_ = StanzaReader();
  send_raw(stream_open, "stream");
  auto reopen = read_stanza(config_.message_deadline_ms);
  if (!reopen || element_name(*reopen) != "stream") {
    return fail("no stream header after auth");
  }
  log_event("in", "stream", domain_, *reopen, "");
  auto features2 = read_stanza(config_.message_deadline_ms);
  if (!features2 || element_name(*features2) != "features") {
    return fail("no features after auth");
  }
  log_event("in", "stream", domain_, *features2, "");

  send_raw(
      "<iq type='set' id='bind1'><bind "
      "xmlns='urn:ietf:params:xml:ns:xmpp-bind'><resource>" +
          xml_escape(resource_) + "</resource></bind></iq>",
      "stream");
  auto bind_reply = read_stanza(config_.message_deadline_ms);
  if (!bind_reply || element_name(*bind_reply) != "iq" ||
      attribute(*bind_reply, "type") != std::optional<std::string>("result")) {
    return fail("resource bind failed");
  }
  log_event("in", "stream", domain_, *bind_reply, "");

  send_raw("<presence/>", "stream");
  return true;
}

int64_t XmppBridge::next_shared_ts() {
  int64_t ts = util::now_ms();
  // Two chat messages can land in the same millisecond; the id must stay
  // unique per exchange, so the timestamp is forced strictly monotonic.
  if (ts <= last_shared_ts_) ts = last_shared_ts_ + 1;
  last_shared_ts_ = ts;
  return ts;
}

std::string XmppBridge::execute_command(const Command& cmd,
                                        const std::string& shared_id) {
  if (cmd.verb == Verb::Unknown) {
    return "commands: on | off | bri 0-254 | status";
  }

  std::string host;
  int port = 80;
  if (!parse_http_url(config_.api_url, &host, &port)) {
    log_event("out", "api", config_.api_url, "bad api url", shared_id);
    return "device unavailable";
  }

  std::string method = "PUT";
  std::string path = "/api/" + config_.api_username + "/lights/" +
                     config_.light_id + "/state";
  std::string body;
  switch (cmd.verb) {
    case Verb::On: body = "{\"on\":true}"; break;
    case Verb::Off: body = "{\"on\":false}"; break;
    case Verb::Bri:
      body = "{\"bri\":" + std::to_string(*cmd.arg) + "}";
      break;
    case Verb::Status:
      method = "GET";
      path = "/api/" + config_.api_username;
      body.clear();
      break;
    default: break;
  }

  std::string wire = method + " " + path + " HTTP/1.1\r\n";
  wire += "Host: " + host + "\r\n";
  wire += "User-Agent: xmpp-bridge\r\n";
  wire += "X-Shared-Id: " + shared_id + "\r\n";
  if (!body.empty()) {
    wire += "Content-Type: application/json\r\n";
    wire += "Content-Length: " + std::to_string(body.size()) + "\r\n";
  }
  wire += "Connection: close\r\n\r\n";
  wire += body;

  auto result =
      http_exchange(host, port, wire, config_.message_deadline_ms);
  if (!result) {
    log_event("out", "api", config_.api_url,
              method + " " + path + " -> error: unreachable", shared_id);
    return "device unavailable";
  }
  log_event("out", "api", config_.api_url,
            method + " " + path + " -> " + std::to_string(result->first) +
                " " + result->second.substr(0, 512),
            shared_id);

  switch (cmd.verb) {
    case Verb::On: return "light " + config_.light_id + " on";
    case Verb::Off: return "light " + config_.light_id + " off";
    case Verb::Bri:
      return "light " + config_.light_id + " bri " +
             std::to_string(*cmd.arg);
    case Verb::Status: {
      auto doc = nlohmann::json::parse(result->second, nullptr, false);
      if (!doc.is_discarded() && doc.contains("lights") &&
          doc["lights"].contains(config_.light_id)) {
        const auto& state = doc["lights"][config_.light_id]["state"];
        bool on = state.value("on", false);
        int bri = state.value("bri", 0);
        return "light " + config_.light_id + " is " +
               (on ? "on" : "off") + ", bri " + std::to_string(bri);
      }
      return "status unavailable";
    }
    default: break;
  }
  return "ok";
}

std::string XmppBridge::handle_chat(const std::string& remote_jid,
                                    const std::string& body) {
  const std::string shared_id = make_shared_id(bare_jid_, next_shared_ts());
  log_event("in", "chat", remote_jid, body, shared_id);
  const Command cmd = parse_command(body);
  const std::string reply = execute_command(cmd, shared_id);
  std::string stanza = "<message to='" + xml_escape(remote_jid) +
                       "' type='chat'><body>" + xml_escape(reply) +
                       "</body></message>";
  if (fd_ >= 0) {
    ::send(fd_, stanza.data(), stanza.size(), MSG_NOSIGNAL);
  }
  log_event("out", "chat", remote_jid, reply, shared_id);
  return reply;
}

std::size_t XmppBridge::run() {
  std::size_t handled = 0;
  while (!stop_ && fd_ >= 0) {
    auto stanza = read_stanza(250);
    if (!stanza) {
      if (fd_ < 0) break;
      // read_stanza returns nullopt both on timeout and on a dead peer;
      // poll distinguishes them.
      pollfd pfd{fd_, POLLIN, 0};
      if (::poll(&pfd, 1, 0) > 0 && (pfd.revents & (POLLHUP | POLLERR))) {
        break;
      }
      char probe;
      ssize_t n = ::recv(fd_, &probe, 1, MSG_PEEK | MSG_DONTWAIT);
      if (n == 0) break;  // orderly close
      continue;
    }
    const std::string name = element_name(*stanza);
    if (name == "stream") {
      // Closing tag of the stream.
      if (stanza->find("</stream") != std::string::npos ||
          stanza->rfind("</", 0) == 0) {
        log_event("in", "stream", domain_, *stanza, "");
        break;
      }
      continue;
    }
    if (name == "message") {
      auto body = child_text(*stanza, "body");
      auto from = attribute(*stanza, "from");
      if (body && !body->empty()) {
        handle_chat(from.value_or("unknown"), *body);
        ++handled;
      }
      continue;
    }
    if (name == "presence") {
      // Auto-accept subscription requests; the bulb is friendly bait.
      if (attribute(*stanza, "type") == std::optional<std::string>("subscribe")) {
        auto from = attribute(*stanza, "from");
        if (from) {
          send_raw("<presence to='" + xml_escape(*from) +
                       "' type='subscribed'/>",
                   "stream");
        }
      }
      continue;
    }
    // iq pings and anything else are logged and ignored.
    log_event("in", "stream", domain_, *stanza, "");
  }
  close_socket();
  return handled;
}

void XmppBridge::run_forever() {
  int backoff = config_.reconnect_base_ms;
  while (!stop_) {
    if (connect()) {
      backoff = config_.reconnect_base_ms;
      run();
      if (stop_) break;
      log_event("out", "stream", domain_, "stream lost, reconnecting", "");
    } else {
      log_event("out", "stream", domain_,
                "reconnect in " + std::to_string(backoff) + "ms (" +
                    last_error_ + ")",
                "");
    }
    for (int waited = 0; waited < backoff && !stop_; waited += 50) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    backoff = std::min(backoff * 2, config_.max_reconnect_ms);
  }
  close_socket();
}

void XmppBridge::stop() {
  stop_ = true;
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

std::optional<std::pair<int, std::string>> http_exchange(
    const std::string& host, int port, const std::string& wire,
    int timeout_ms) {
  int fd = connect_tcp(host, port, timeout_ms);
  if (fd < 0) return std::nullopt;
  if (::send(fd, wire.data(), wire.size(), MSG_NOSIGNAL) !=
      ssize_t(wire.size())) {
    ::close(fd);
    return std::nullopt;
  }
  std::string response;
  char buf[8192];
  while (true) {
    ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
    if (n <= 0) break;
    response.append(buf, std::size_t(n));
    if (response.size() > 8 * 1024 * 1024) break;
  }
  ::close(fd);
  if (response.rfind("HTTP/", 0) != 0) return std::nullopt;
  std::size_t sp = response.find(' ');
  if (sp == std::string::npos || sp + 4 > response.size()) return std::nullopt;
  int status = std::atoi(response.c_str() + sp + 1);
  std::string body;
  if (auto he = response.find("\r\n\r\n"); he != std::string::npos) {
    body = response.substr(he + 4);
  }
  return std::make_pair(status, body);
}

bool parse_http_url(const std::string& url, std::string* host, int* port) {
  std::string rest = url;
  const std::string scheme = "http://";
  if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
  if (auto slash = rest.find('/'); slash != std::string::npos) {
    rest.resize(slash);
  }
  if (rest.empty()) return false;
  *port = 80;
  if (auto colon = rest.find(':'); colon != std::string::npos) {
    *port = std::atoi(rest.c_str() + colon + 1);
    rest.resize(colon);
    if (*port <= 0 || *port > 65535) return false;
  }
  if (rest.empty()) return false;
  *host = rest;
  return true;
}

}  // namespace huepot::xmpp
