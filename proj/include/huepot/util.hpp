#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace huepot::util {

// Standard base64 (RFC 4648, with padding). Bodies are stored base64 in the
// logs because captured payloads are frequently not valid UTF-8.
std::string base64_encode(std::string_view bytes);
std::optional<std::string> base64_decode(std::string_view text);

// Lowercase hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view bytes);

bool is_valid_utf8(std::string_view s);

std::string to_lower(std::string_view s);

// Printable preview of raw bytes: ASCII 0x20..0x7e kept, backslash doubled,
// everything else rendered as \xHH. Truncates to max_len output characters.
std::string escape_bytes(std::string_view raw, std::size_t max_len = 160);

// Decodes %HH sequences; leaves malformed escapes untouched.
std::string percent_decode(std::string_view s);

// Returns s unchanged when it is valid UTF-8, otherwise the escaped preview.
// JSON strings cannot carry arbitrary bytes; anything embedded in a reply or
// record goes through here first.
std::string utf8_sanitize(std::string_view s);

int64_t now_ms();

std::vector<std::string> split_ws(std::string_view s);

// Deterministic service-wide RNG. All sampling goes through next_below so
// results are reproducible across runs for a fixed seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Uniform in [0, n) via rejection sampling; n must be > 0.
  uint64_t next_below(uint64_t n);

  // Random string of length n over the given alphabet.
  std::string string_of(std::size_t n, std::string_view alphabet);

  uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace huepot::util
