#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "huepot/util.hpp"

namespace huepot::replay {

// One generated request. src_ip is the simulated source, declared via the
// X-Replay-Src header when the target honeypot runs in trusted test mode.
struct ReplayRequest {
  std::string generator;
  std::string method;
  std::string target;
  std::string user_agent;
  std::string content_type;  // empty = none
  std::string body;
  std::string src_ip;

  std::string to_wire(std::string_view host, bool include_replay_src) const;
};

// HEAD sweeps composed from the SQL-admin keyword set.
std::vector<ReplayRequest> gen_jorgee(std::size_t n, uint64_t seed);

// POST /api/ control attempts with bulb-state JSON bodies, drawn from a
// round-robin pool of exactly 92 source addresses.
std::vector<ReplayRequest> gen_shooter(std::size_t n, uint64_t seed);

enum class MultipartPayload { Botlight, ModScan000, Mass };

std::optional<MultipartPayload> multipart_payload_from_name(std::string_view);

// multipart/form-data fuzz bodies: 26-dash boundary + 16 seeded chars,
// "on"=true and "productid"=payload. Mass repeats its token 9944 times.
std::vector<ReplayRequest> gen_multipart_fuzz(std::size_t n, uint64_t seed,
                                              MultipartPayload kind);

// GET scans instantiating URL pattern 1..10. Pattern 7 fills sequentially
// over 0..750; the others draw fresh 32-char tokens.
// Throws std::invalid_argument for an unknown pattern id.
std::vector<ReplayRequest> gen_url_scan(int pattern_id, std::size_t n,
                                        uint64_t seed);

// Signature tag each generator's output is expected to carry.
std::string generator_intended_tag(std::string_view generator_id);

struct PlanEntry {
  std::string generator;  // jorgee | shooter | multipart-* | url-scan-NN
  std::size_t count = 0;
};

struct ReplayPlan {
  uint64_t seed = 0;
  double pace = 0;  // requests/s; 0 = as fast as possible
  std::string target;
  std::vector<PlanEntry> mix;
};

ReplayPlan load_plan(const std::filesystem::path& path);

// Deterministic expansion: per-entry seeds derive from (plan seed, index).
// Throws std::invalid_argument on an unknown generator id.
std::vector<ReplayRequest> expand(const ReplayPlan& plan);

struct ReplayOptions {
  int parallel = 8;
  double pace = 0;
  bool include_replay_src = false;
  int timeout_ms = 10000;
};

struct ReplaySummary {
  std::size_t sent = 0;
  std::size_t responded = 0;
  std::map<int, std::size_t> status_counts;
  std::size_t errors = 0;  // connect/send failures
};

// Fires the corpus at host:port. Aborts early (partial summary) only when
// the very first connection cannot be established.
ReplaySummary replay(const std::vector<ReplayRequest>& corpus,
                     const std::string& host, int port,
                     const ReplayOptions& opts);

}  // namespace huepot::replay
