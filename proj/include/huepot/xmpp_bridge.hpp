#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "huepot/logstore.hpp"
#include "huepot/xmpp_xml.hpp"

namespace huepot::xmpp {

enum class Verb { On, Off, Bri, Status, Unknown };

struct Command {
  Verb verb = Verb::Unknown;
  std::optional<int> arg;  // only Bri carries one, within [0,254]
};

std::string_view verb_name(Verb verb);

// Case-insensitive first-token grammar: on | off | status | bri N.
// Anything else, including bri with a missing or out-of-range argument,
// is Unknown.
Command parse_command(std::string_view text);

// Correlation token: first 16 hex chars of sha256("jid|ts_ms"). Links an
// XMPP exchange to the REST records it caused.
std::string make_shared_id(std::string_view jid, int64_t ts_ms);

struct BridgeClientConfig {
  std::string server_host;
  int port = 5222;
  std::string jid;       // user@domain[/resource]
  std::string password;  // callers load this from the environment
  std::string api_url;   // e.g. http://127.0.0.1:8000
  std::string api_username = "xmppbridge00000000000000000000aa";
  std::string light_id = "1";
  std::filesystem::path log_file;
  int message_deadline_ms = 10000;
  int reconnect_base_ms = 1000;  // exponential backoff base
  int max_reconnect_ms = 60000;
};

// Minimal XMPP chat client presenting one emulated bulb. Messages are
// handled strictly in arrival order; the correlation invariant depends on
// that ordering.
class XmppBridge {
 public:
  explicit XmppBridge(BridgeClientConfig config);
  ~XmppBridge();

  XmppBridge(const XmppBridge&) = delete;
  XmppBridge& operator=(const XmppBridge&) = delete;

  // One connection attempt: TCP, stream open, SASL PLAIN, bind, presence.
  // Stream-level events are logged as kind=stream. Returns false (after
  // logging the failure) rather than throwing on auth/network errors.
  bool connect();

  // Pumps messages until stop() or the stream dies. Returns the number of
  // chat messages handled.
  std::size_t run();

  // connect + run with exponential backoff, until stop().
  void run_forever();

  void stop();

  bool connected() const { return fd_ >= 0; }
  const std::string& last_error() const { return last_error_; }

  // Handles one chat body as if it had arrived from remote_jid. Exposed for
  // tests; run() calls this for every incoming chat message.
  std::string handle_chat(const std::string& remote_jid,
                          const std::string& body);

 private:
  std::string execute_command(const Command& cmd, const std::string& shared_id);
  void log_event(std::string_view direction, std::string_view kind,
                 std::string_view remote, std::string_view payload,
                 std::string_view shared_id);
  bool send_raw(std::string_view bytes, std::string_view log_kind,
                std::string_view shared_id = {});
  std::optional<std::string> read_stanza(int timeout_ms);
  void close_socket();
  int64_t next_shared_ts();

  BridgeClientConfig config_;
  std::string bare_jid_;
  std::string domain_;
  std::string node_;      // local part of the JID
  std::string resource_ = "bulb";
  int fd_ = -1;
  StanzaReader reader_;
  std::atomic<bool> stop_{false};
  std::string last_error_;
  int64_t last_shared_ts_ = 0;
};

// One REST call used by the bridge: sends the serialized request to
// host:port, returns (status, body) or nullopt on connect/timeout failure.
std::optional<std::pair<int, std::string>> http_exchange(
    const std::string& host, int port, const std::string& wire,
    int timeout_ms);

// Splits "http://host:port[/...]" into host and port (default 80).
bool parse_http_url(const std::string& url, std::string* host, int* port);

}  // namespace huepot::xmpp
