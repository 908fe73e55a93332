#include "huepot/logstore.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

#include "huepot/util.hpp"

namespace huepot::logstore {

namespace {

json opt_str(const std::optional<std::string>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<std::string> str_or_null(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return std::nullopt;
}

std::mutex registry_mutex;
std::map<std::string, std::mutex>& path_mutexes() {
  static std::map<std::string, std::mutex> m;
  return m;
}

std::mutex& mutex_for(const std::filesystem::path& path) {
  std::error_code ec;
  auto canonical = std::filesystem::weakly_canonical(path, ec);
  const std::string key = ec ? path.string() : canonical.string();
  std::lock_guard lock(registry_mutex);
  return path_mutexes()[key];
}

}  // namespace

std::string RequestRecord::body() const {
  return util::base64_decode(body_b64).value_or("");
}

std::string RequestRecord::resp_body() const {
  return util::base64_decode(resp_body_b64).value_or("");
}

std::string to_line(const RequestRecord& r) {
  json doc = json::object();
  doc["v"] = kSchemaVersion;
  doc["ts"] = r.ts;
  doc["node"] = r.node;
  doc["src_ip"] = r.src_ip;
  doc["src_port"] = r.src_port;
  doc["method"] = opt_str(r.method);
  doc["url"] = opt_str(r.url);
  doc["http_version"] = opt_str(r.http_version);
  json headers = json::array();
  for (const auto& h : r.headers) {
    json entry = json::object();
    entry["name"] = h.name;
    if (h.b64) {
      entry["value_b64"] = h.value;
    } else {
      entry["value"] = h.value;
    }
    headers.push_back(entry);
  }
  doc["headers"] = headers;
  doc["user_agent"] = r.user_agent;
  doc["referer"] = opt_str(r.referer);
  doc["body_b64"] = r.body_b64;
  doc["resp_status"] = r.resp_status ? json(*r.resp_status) : json(nullptr);
  doc["resp_body_b64"] = r.resp_body_b64;
  doc["shared_id"] = opt_str(r.shared_id);
  doc["valid_http"] = r.valid_http;
  doc["truncated"] = r.truncated;
  return doc.dump();
}

std::string to_line(const XmppEvent& e) {
  json doc = json::object();
  doc["v"] = kSchemaVersion;
  doc["ts"] = e.ts;
  doc["direction"] = e.direction;
  doc["kind"] = e.kind;
  doc["local_jid"] = e.local_jid;
  doc["remote_jid"] = e.remote_jid;
  doc["payload"] = e.payload;
  doc["shared_id"] = e.shared_id;
  return doc.dump();
}

std::optional<RequestRecord> request_record_from_line(std::string_view line) {
  json doc = json::parse(line, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  if (!doc.contains("valid_http") || !doc.contains("ts")) return std::nullopt;
  RequestRecord r;
  try {
    r.ts = doc.value("ts", int64_t(0));
    r.node = doc.value("node", std::string());
    r.src_ip = doc.value("src_ip", std::string());
    r.src_port = doc.value("src_port", 0);
    r.method = str_or_null(doc.value("method", json(nullptr)));
    r.url = str_or_null(doc.value("url", json(nullptr)));
    r.http_version = str_or_null(doc.value("http_version", json(nullptr)));
    if (doc.contains("headers") && doc["headers"].is_array()) {
      for (const auto& h : doc["headers"]) {
        if (!h.is_object()) continue;
        HeaderEntry entry;
        entry.name = h.value("name", std::string());
        if (h.contains("value_b64")) {
          entry.value = h.value("value_b64", std::string());
          entry.b64 = true;
        } else {
          entry.value = h.value("value", std::string());
        }
        r.headers.push_back(std::move(entry));
      }
    }
    r.user_agent = doc.value("user_agent", std::string("-"));
    r.referer = str_or_null(doc.value("referer", json(nullptr)));
    r.body_b64 = doc.value("body_b64", std::string());
    if (doc.contains("resp_status") && doc["resp_status"].is_number_integer()) {
      r.resp_status = doc["resp_status"].get<int>();
    }
    r.resp_body_b64 = doc.value("resp_body_b64", std::string());
    r.shared_id = str_or_null(doc.value("shared_id", json(nullptr)));
    r.valid_http = doc.value("valid_http", false);
    r.truncated = doc.value("truncated", false);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return r;
}

std::optional<XmppEvent> xmpp_event_from_line(std::string_view line) {
  json doc = json::parse(line, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  if (!doc.contains("direction") || !doc.contains("kind")) return std::nullopt;
  XmppEvent e;
  try {
    e.ts = doc.value("ts", int64_t(0));
    e.direction = doc.value("direction", std::string());
    e.kind = doc.value("kind", std::string());
    e.local_jid = doc.value("local_jid", std::string());
    e.remote_jid = doc.value("remote_jid", std::string());
    e.payload = doc.value("payload", std::string());
    e.shared_id = doc.value("shared_id", std::string());
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return e;
}

void append_line(const std::filesystem::path& path, const std::string& line) {
  if (line.find('\n') != std::string::npos) {
    throw std::invalid_argument("log line contains a raw newline");
  }
  std::lock_guard lock(mutex_for(path));
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) {
    throw std::runtime_error("cannot open log file: " + path.string());
  }
  std::string out = line;
  out.push_back('\n');
  // Single write so concurrent appenders never interleave within a line.
  ssize_t n = ::write(fd, out.data(), out.size());
  int saved = errno;
  ::close(fd);
  if (n != ssize_t(out.size())) {
    errno = saved;
    throw std::runtime_error("short write to log file: " + path.string());
  }
}

void append(const std::filesystem::path& path, const RequestRecord& r) {
  append_line(path, to_line(r));
}

void append(const std::filesystem::path& path, const XmppEvent& e) {
  append_line(path, to_line(e));
}

void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read log file: " + path.string());
  }
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fn(line);
  }
}

std::pair<std::vector<RequestRecord>, std::size_t> read_request_logs(
    const std::vector<std::filesystem::path>& paths) {
  std::vector<RequestRecord> records;
  std::size_t skipped = 0;
  for (const auto& path : paths) {
    for_each_line(path, [&](std::string_view line) {
      if (line.empty()) return;
      if (auto r = request_record_from_line(line)) {
        records.push_back(std::move(*r));
      } else {
        ++skipped;
      }
    });
  }
  return {std::move(records), skipped};
}

std::pair<std::vector<XmppEvent>, std::size_t> read_xmpp_logs(
    const std::vector<std::filesystem::path>& paths) {
  std::vector<XmppEvent> events;
  std::size_t skipped = 0;
  for (const auto& path : paths) {
    for_each_line(path, [&](std::string_view line) {
      if (line.empty()) return;
      if (auto e = xmpp_event_from_line(line)) {
        events.push_back(std::move(*e));
      } else {
        ++skipped;
      }
    });
  }
  return {std::move(events), skipped};
}

CorrelationResult correlate(const std::vector<RequestRecord>& rest_records,
                            const std::vector<XmppEvent>& xmpp_events) {
  std::map<std::string, CorrelatedSession> by_id;
  for (const auto& e : xmpp_events) {
    if (e.shared_id.empty()) continue;
    auto& s = by_id[e.shared_id];
    s.shared_id = e.shared_id;
    s.xmpp_events.push_back(e);
  }
  for (const auto& r : rest_records) {
    if (!r.shared_id || r.shared_id->empty()) continue;
    auto& s = by_id[*r.shared_id];
    s.shared_id = *r.shared_id;
    s.rest_records.push_back(r);
  }

  CorrelationResult out;
  for (auto& [id, session] : by_id) {
    std::stable_sort(session.xmpp_events.begin(), session.xmpp_events.end(),
                     [](const auto& a, const auto& b) { return a.ts < b.ts; });
    std::stable_sort(session.rest_records.begin(), session.rest_records.end(),
                     [](const auto& a, const auto& b) { return a.ts < b.ts; });
    int64_t first = INT64_MAX;
    if (!session.xmpp_events.empty()) {
      first = std::min(first, session.xmpp_events.front().ts);
    }
    if (!session.rest_records.empty()) {
      first = std::min(first, session.rest_records.front().ts);
    }
    session.first_ts = first;
    if (!session.xmpp_events.empty() && !session.rest_records.empty()) {
      out.sessions.push_back(std::move(session));
    } else {
      out.orphans.push_back(std::move(session));
    }
  }
  auto by_ts = [](const CorrelatedSession& a, const CorrelatedSession& b) {
    return std::tie(a.first_ts, a.shared_id) < std::tie(b.first_ts, b.shared_id);
  };
  std::sort(out.sessions.begin(), out.sessions.end(), by_ts);
  std::sort(out.orphans.begin(), out.orphans.end(), by_ts);
  return out;
}

}  // namespace huepot::logstore
