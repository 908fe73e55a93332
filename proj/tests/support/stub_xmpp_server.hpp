#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "huepot/util.hpp"
#include "huepot/xmpp_xml.hpp"

namespace testsupport {

// Scriptable loopback XMPP server: stream header, SASL PLAIN, bind. Speaks
// just enough of the protocol to drive the bridge client through its whole
// life cycle, including failure injection.
class StubXmppServer {
 public:
  struct Options {
    std::string user = "bulb1";
    std::string password = "hunter2";
    std::string domain = "example.org";
    bool close_after_bind = false;  // drop the stream once the client binds
  };

  explicit StubXmppServer(Options options) : options_(std::move(options)) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = 0;
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    ::listen(listen_fd_, 8);
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
    thread_ = std::thread([this] { accept_loop(); });
  }

  ~StubXmppServer() { stop(); }

  int port() const { return port_; }
  int sessions_started() const { return sessions_started_; }
  int sessions_bound() const { return sessions_bound_; }

  void stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    close_client();
    if (thread_.joinable()) thread_.join();
  }

  // Delivers a chat message to the connected client as user@domain/home.
  bool send_chat(const std::string& body) {
    std::lock_guard lock(client_mutex_);
    if (client_fd_ < 0) return false;
    std::string stanza = "<message from='visitor@" + options_.domain +
                         "/home' to='" + options_.user + "@" +
                         options_.domain + "' type='chat'><body>" +
                         huepot::xmpp::xml_escape(body) +
                         "</body></message>";
    return ::send(client_fd_, stanza.data(), stanza.size(), MSG_NOSIGNAL) ==
           ssize_t(stanza.size());
  }

  // Next <body> text the client sent back.
  std::optional<std::string> wait_reply(int timeout_ms) {
    std::unique_lock lock(replies_mutex_);
    if (!replies_cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                              [this] { return !replies_.empty(); })) {
      return std::nullopt;
    }
    std::string out = replies_.front();
    replies_.pop_front();
    return out;
  }

 private:
  void close_client() {
    std::lock_guard lock(client_mutex_);
    if (client_fd_ >= 0) {
      ::shutdown(client_fd_, SHUT_RDWR);
      ::close(client_fd_);
      client_fd_ = -1;
    }
  }

  bool send_to_client(const std::string& bytes) {
    std::lock_guard lock(client_mutex_);
    if (client_fd_ < 0) return false;
    return ::send(client_fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL) ==
           ssize_t(bytes.size());
  }

  std::optional<std::string> read_stanza(huepot::xmpp::StanzaReader& reader,
                                         int timeout_ms = 5000) {
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(timeout_ms);
    while (!stopping_) {
      if (auto s = reader.next()) return s;
      if (std::chrono::steady_clock::now() > deadline) return std::nullopt;
      char buf[4096];
      int fd;
      {
        std::lock_guard lock(client_mutex_);
        fd = client_fd_;
      }
      if (fd < 0) return std::nullopt;
      timeval tv{0, 200 * 1000};
      ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
      ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
      if (n == 0) return std::nullopt;
      if (n < 0) continue;  // timeout slice
      reader.feed(std::string_view(buf, std::size_t(n)));
    }
    return std::nullopt;
  }

  void accept_loop() {
    while (!stopping_) {
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) break;
      {
        std::lock_guard lock(client_mutex_);
        client_fd_ = fd;
      }
      ++sessions_started_;
      serve_client();
      close_client();
    }
  }

  void serve_client() {
    using huepot::xmpp::element_name;
    huepot::xmpp::StanzaReader reader;

    auto header =
        "<?xml version='1.0'?><stream:stream from='" + options_.domain +
        "' id='stub1' version='1.0' xmlns='jabber:client' "
        "xmlns:stream='http://etherx.jabber.org/streams'>";

    auto open = read_stanza(reader);
    if (!open || element_name(*open) != "stream") return;
    send_to_client(header +
                   "<stream:features><mechanisms "
                   "xmlns='urn:ietf:params:xml:ns:xmpp-sasl'><mechanism>PLAIN"
                   "</mechanism></mechanisms></stream:features>");

    auto auth = read_stanza(reader);
    if (!auth || element_name(*auth) != "auth") return;
    std::string expected;
    expected.push_back('\0');
    expected += options_.user;
    expected.push_back('\0');
    expected += options_.password;
    std::size_t open_gt = auth->find('>');
    std::size_t close_lt = auth->rfind("</");
    std::string b64 = (open_gt != std::string::npos &&
                       close_lt != std::string::npos && close_lt > open_gt)
                          ? auth->substr(open_gt + 1, close_lt - open_gt - 1)
                          : "";
    auto decoded = huepot::util::base64_decode(b64);
    if (!decoded || *decoded != expected) {
      send_to_client(
          "<failure xmlns='urn:ietf:params:xml:ns:xmpp-sasl'>"
          "<not-authorized/></failure>");
      return;
    }
    send_to_client("<success xmlns='urn:ietf:params:xml:ns:xmpp-sasl'/>");

    auto reopen = read_stanza(reader);
    if (!reopen || element_name(*reopen) != "stream") return;
    send_to_client(header +
                   "<stream:features><bind "
                   "xmlns='urn:ietf:params:xml:ns:xmpp-bind'/>"
                   "</stream:features>");

    auto bind = read_stanza(reader);
    if (!bind || element_name(*bind) != "iq") return;
    send_to_client("<iq type='result' id='bind1'><bind "
                   "xmlns='urn:ietf:params:xml:ns:xmpp-bind'><jid>" +
                   options_.user + "@" + options_.domain +
                   "/bulb</jid></bind></iq>");
    ++sessions_bound_;

    if (options_.close_after_bind) {
      send_to_client("</stream:stream>");
      return;
    }

    while (!stopping_) {
      auto stanza = read_stanza(reader, 60000);
      if (!stanza) break;
      if (element_name(*stanza) == "message") {
        if (auto body = huepot::xmpp::child_text(*stanza, "body")) {
          std::lock_guard lock(replies_mutex_);
          replies_.push_back(*body);
          replies_cv_.notify_all();
        }
      }
      // presence and iq noise is ignored
    }
  }

  Options options_;
  int listen_fd_ = -1;
  int port_ = 0;
  int client_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::atomic<int> sessions_started_{0};
  std::atomic<int> sessions_bound_{0};
  std::thread thread_;
  std::mutex client_mutex_;
  std::mutex replies_mutex_;
  std::condition_variable replies_cv_;
  std::deque<std::string> replies_;
};

}  // namespace testsupport
