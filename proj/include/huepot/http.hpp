#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace huepot::http {

// Header list with names lowercased, duplicates preserved in arrival order.
using HeaderList = std::vector<std::pair<std::string, std::string>>;

struct ParsedRequest {
  std::string method;
  std::string target;   // raw request target, undecoded
  std::string version;  // "HTTP/1.0" or "HTTP/1.1"
  HeaderList headers;
  std::string body;
  bool body_truncated = false;
};

// First value for the given name, case-insensitive.
std::optional<std::string> header_get(const HeaderList& headers,
                                      std::string_view name);

// Parses a raw header block (lines up to, not including, the blank line).
// Names are lowercased; duplicates kept in order; malformed lines skipped.
HeaderList parse_header_block(std::string_view raw);

// RFC 7230 token: methods and header field names.
bool is_http_token(std::string_view token);

// Validates "METHOD SP target SP HTTP/x.y"; the honeypot only treats 1.0 and
// 1.1 as parseable; anything else is captured raw.
bool parse_request_line(std::string_view line, std::string* method,
                        std::string* target, std::string* version);

struct ReadLimits {
  int timeout_ms = 10000;           // overall read deadline
  std::size_t max_header = 64 * 1024;
  std::size_t max_body = 1024 * 1024;
};

// Everything read from one connection. parsed is empty whenever the bytes do
// not frame as an acceptable HTTP request; bytes always holds the capture.
struct RawCapture {
  std::string bytes;
  std::optional<ParsedRequest> parsed;
  bool truncated = false;
};

// Reads one request from a connected socket. Captures raw bytes up to the
// caps regardless of parseability, so probes that are not HTTP at all still
// end up in the log. Never throws; a dead peer yields an empty capture.
RawCapture read_raw_request(int fd, const ReadLimits& limits);

// Serializes a minimal HTTP/1.1 response. HEAD suppresses the body but keeps
// Content-Length.
std::string serialize_response(int status, std::string_view content_type,
                               std::string_view body, bool head_request);

std::string_view status_text(int status);

}  // namespace huepot::http
