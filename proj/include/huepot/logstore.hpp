#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace huepot::logstore {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// One request header as received. Values that are not valid UTF-8 are stored
// base64 with the b64 flag set, since JSON strings cannot carry raw bytes.
struct HeaderEntry {
  std::string name;   // lowercased
  std::string value;  // raw text, or base64 when b64 is set
  bool b64 = false;
};

// One log line per connection the honeypot accepted. When valid_http is
// false, method/url/http_version are null and body_b64 carries the entire
// raw capture.
struct RequestRecord {
  int64_t ts = 0;  // UTC ms
  std::string node;
  std::string src_ip;
  int src_port = 0;
  std::optional<std::string> method;
  std::optional<std::string> url;
  std::optional<std::string> http_version;
  std::vector<HeaderEntry> headers;
  std::string user_agent = "-";  // "-" exactly when absent
  std::optional<std::string> referer;
  std::string body_b64;
  std::optional<int> resp_status;
  std::string resp_body_b64;
  std::optional<std::string> shared_id;
  bool valid_http = false;
  bool truncated = false;

  std::string body() const;       // decoded request body / raw capture
  std::string resp_body() const;  // decoded response body
};

// One log line per XMPP interaction: chat messages, stream-level events, and
// the REST calls made on behalf of a chat command. shared_id is empty for
// events that are not part of a command exchange.
struct XmppEvent {
  int64_t ts = 0;
  std::string direction;  // in | out
  std::string kind;       // chat | stream | api
  std::string local_jid;
  std::string remote_jid;
  std::string payload;
  std::string shared_id;
};

// Canonical single-line serialization: fixed key order, no insignificant
// whitespace, newline-free by construction.
std::string to_line(const RequestRecord& r);
std::string to_line(const XmppEvent& e);

std::optional<RequestRecord> request_record_from_line(std::string_view line);
std::optional<XmppEvent> xmpp_event_from_line(std::string_view line);

// Appends one line to the given path. Appends are atomic with respect to
// other writers of the same path in this process (per-path mutex) and use
// O_APPEND single writes for external writers. Throws on I/O failure.
void append_line(const std::filesystem::path& path, const std::string& line);
void append(const std::filesystem::path& path, const RequestRecord& r);
void append(const std::filesystem::path& path, const XmppEvent& e);

// Streams a JSONL file line by line without loading it whole.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view)>& fn);

// Reads every parseable record; malformed lines are counted, never fatal.
// Throws only when a file cannot be opened.
std::pair<std::vector<RequestRecord>, std::size_t> read_request_logs(
    const std::vector<std::filesystem::path>& paths);
std::pair<std::vector<XmppEvent>, std::size_t> read_xmpp_logs(
    const std::vector<std::filesystem::path>& paths);

struct CorrelatedSession {
  std::string shared_id;
  std::vector<XmppEvent> xmpp_events;
  std::vector<RequestRecord> rest_records;
  int64_t first_ts = 0;
};

struct CorrelationResult {
  std::vector<CorrelatedSession> sessions;  // both sides non-empty
  std::vector<CorrelatedSession> orphans;   // one side empty
};

// Groups both logs by shared_id. Records with a null/empty shared_id never
// join. Output sorted by first timestamp, then shared_id.
CorrelationResult correlate(const std::vector<RequestRecord>& rest_records,
                            const std::vector<XmppEvent>& xmpp_events);

}  // namespace huepot::logstore
