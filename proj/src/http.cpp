#include "huepot/http.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>

#include "huepot/util.hpp"

namespace huepot::http {

namespace {

bool is_tchar(char c) {
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
      (c >= '0' && c <= '9')) {
    return true;
  }
  return std::strchr("!#$%&'*+-.^_`|~", c) != nullptr;
}

int64_t steady_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::optional<std::string> header_get(const HeaderList& headers,
                                      std::string_view name) {
  const std::string wanted = util::to_lower(name);
  for (const auto& [n, v] : headers) {
    if (n == wanted) return v;
  }
  return std::nullopt;
}

HeaderList parse_header_block(std::string_view raw) {
  HeaderList out;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    std::size_t eol = raw.find('\n', pos);
    std::string_view line = raw.substr(
        pos, eol == std::string_view::npos ? raw.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? raw.size() : eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::size_t colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) continue;
    std::string name = trim(line.substr(0, colon));
    if (!is_http_token(name)) continue;  // field names are tokens
    out.emplace_back(util::to_lower(name), trim(line.substr(colon + 1)));
  }
  return out;
}

bool is_http_token(std::string_view method) {
  if (method.empty()) return false;
  return std::all_of(method.begin(), method.end(), is_tchar);
}

bool parse_request_line(std::string_view line, std::string* method,
                        std::string* target, std::string* version) {
  std::size_t sp1 = line.find(' ');
  if (sp1 == std::string_view::npos) return false;
  std::size_t sp2 = line.find(' ', sp1 + 1);
  if (sp2 == std::string_view::npos) return false;
  if (line.find(' ', sp2 + 1) != std::string_view::npos) return false;
  std::string_view m = line.substr(0, sp1);
  std::string_view t = line.substr(sp1 + 1, sp2 - sp1 - 1);
  std::string_view v = line.substr(sp2 + 1);
  if (!is_http_token(m) || t.empty()) return false;
  // Targets must be printable ASCII; anything else is captured raw, where
  // the byte-exact payload survives in the log.
  for (char c : t) {
    if (uint8_t(c) < 0x21 || uint8_t(c) > 0x7e) return false;
  }
  if (v != "HTTP/1.0" && v != "HTTP/1.1") return false;
  if (method) *method = std::string(m);
  if (target) *target = std::string(t);
  if (version) *version = std::string(v);
  return true;
}

RawCapture read_raw_request(int fd, const ReadLimits& limits) {
  RawCapture cap;
  const std::size_t max_capture = limits.max_header + limits.max_body;
  const int64_t deadline = steady_ms() + limits.timeout_ms;

  bool line_checked = false;
  bool line_ok = false;
  bool raw_mode = false;
  std::size_t header_end = std::string::npos;  // offset past CRLFCRLF
  std::optional<std::size_t> want_body;

  char buf[8192];
  while (true) {
    // In parsed mode, stop as soon as the framed request is complete.
    if (header_end != std::string::npos && want_body &&
        cap.bytes.size() >= header_end + *want_body) {
      break;
    }
    if (cap.bytes.size() >= max_capture) {
      cap.truncated = true;
      break;
    }
    int64_t remaining = deadline - steady_ms();
    if (remaining <= 0) break;
    struct pollfd pfd{fd, POLLIN, 0};
    int pr = ::poll(&pfd, 1, int(std::min<int64_t>(remaining, 1000)));
    if (pr < 0) break;
    if (pr == 0) continue;
    ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
    if (n <= 0) break;  // peer closed or error: keep what arrived
    std::size_t take = std::min<std::size_t>(n, max_capture - cap.bytes.size());
    cap.bytes.append(buf, take);
    if (take < std::size_t(n)) cap.truncated = true;

    if (raw_mode) continue;

    if (!line_checked) {
      std::size_t eol = cap.bytes.find('\n');
      if (eol == std::string::npos) {
        if (cap.bytes.size() > limits.max_header) {
          raw_mode = true;
          line_checked = true;
        }
        continue;
      }
      std::string_view line(cap.bytes.data(), eol);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      line_checked = true;
      line_ok = parse_request_line(line, nullptr, nullptr, nullptr);
      if (!line_ok) {
        raw_mode = true;
        continue;
      }
    }

    if (header_end == std::string::npos) {
      std::size_t he = cap.bytes.find("\r\n\r\n");
      if (he == std::string::npos) {
        if (cap.bytes.size() > limits.max_header) raw_mode = true;
        continue;
      }
      if (he + 4 > limits.max_header) {
        raw_mode = true;
        continue;
      }
      header_end = he + 4;
      // Header block spans (first line, final CRLF]; empty when the blank
      // line directly follows the request line.
      std::size_t line_end = cap.bytes.find('\n');
      HeaderList headers = parse_header_block(std::string_view(cap.bytes)
              .substr(line_end + 1, (header_end - 2) - (line_end + 1)));
      if (auto cl = header_get(headers, "content-length")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(cl->c_str(), &end, 10);
        if (end && *end == '\0') {
          want_body = std::min<std::size_t>(v, limits.max_body);
          if (v > limits.max_body) cap.truncated = true;
        }
      }
      if (!want_body) break;  // no declared body: don't wait for one
    }
  }

  if (line_ok && !raw_mode && header_end != std::string::npos) {
    ParsedRequest req;
    std::size_t eol = cap.bytes.find('\n');
    std::string_view line(cap.bytes.data(), eol);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    parse_request_line(line, &req.method, &req.target, &req.version);
    req.headers = parse_header_block(std::string_view(cap.bytes)
            .substr(eol + 1, (header_end - 2) - (eol + 1)));
    std::size_t body_len = cap.bytes.size() - header_end;
    if (want_body) body_len = std::min(body_len, *want_body);
    req.body = cap.bytes.substr(header_end, body_len);
    req.body_truncated = cap.truncated;
    cap.parsed = std::move(req);
  }
  return cap;
}

std::string_view status_text(int status) {
  switch (status) {
    case 200: return "OK";
    case 400: return "Bad Request";
    case 404: return "Not Found";
    case 500: return "Internal Server Error";
    default: return "OK";
  }
}

std::string serialize_response(int status, std::string_view content_type,
                               std::string_view body, bool head_request) {
  std::string out = "HTTP/1.1 " + std::to_string(status) + " " +
                    std::string(status_text(status)) + "\r\n";
  out += "Content-Type: " + std::string(content_type) + "\r\n";
  out += "Content-Length: " + std::to_string(body.size()) + "\r\n";
  out += "Connection: close\r\n\r\n";
  if (!head_request) out += body;
  return out;
}

}  // namespace huepot::http
