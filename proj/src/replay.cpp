#include "huepot/replay.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "huepot/xmpp_bridge.hpp"

namespace huepot::replay {

namespace {

using json = nlohmann::ordered_json;

constexpr std::string_view kLower36 = "abcdefghijklmnopqrstuvwxyz0123456789";

// splitmix64; decorrelates per-entry seeds derived from the plan seed.
uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + salt * 0x9e3779b97f4a7c15ULL + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string random_public_ip(util::Rng& rng) {
  // Crude public-ish IPv4: avoid 0/10/127/169.254/172.16/192.168/224+.
  while (true) {
    int a = int(rng.next_below(223)) + 1;
    int b = int(rng.next_below(256));
    int c = int(rng.next_below(256));
    int d = int(rng.next_below(254)) + 1;
    if (a == 10 || a == 127) continue;
    if (a == 169 && b == 254) continue;
    if (a == 172 && b >= 16 && b < 32) continue;
    if (a == 192 && b == 168) continue;
    return std::to_string(a) + "." + std::to_string(b) + "." +
           std::to_string(c) + "." + std::to_string(d);
  }
}

}  // namespace

std::string ReplayRequest::to_wire(std::string_view host,
                                   bool include_replay_src) const {
  std::string out = method + " " + target + " HTTP/1.1\r\n";
  out += "Host: " + std::string(host) + "\r\n";
  out += "User-Agent: " + user_agent + "\r\n";
  if (include_replay_src && !src_ip.empty()) {
    out += "X-Replay-Src: " + src_ip + "\r\n";
  }
  if (!body.empty() || method == "POST" || method == "PUT") {
    if (!content_type.empty()) {
      out += "Content-Type: " + content_type + "\r\n";
    }
    out += "Content-Length: " + std::to_string(body.size()) + "\r\n";
  }
  out += "Connection: close\r\n\r\n";
  out += body;
  return out;
}

std::vector<ReplayRequest> gen_jorgee(std::size_t n, uint64_t seed) {
  static const std::vector<std::string> keywords = {
      "db", "admin", "pma", "php", "sql", "web", "database", "my"};
  util::Rng rng(seed);
  std::vector<ReplayRequest> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // 1–2 path segments, each a concatenation of 1–3 keywords, optionally
    // suffixed with a year and sometimes uppercased: the shapes seen in
    // the field: /phpmyadmin/, /PMA2015/, /mysql/admin/.
    int segments = 1 + int(rng.next_below(2));
    std::string path;
    for (int s = 0; s < segments; ++s) {
      int words = 1 + int(rng.next_below(3));
      std::string seg;
      for (int w = 0; w < words; ++w) {
        seg += keywords[rng.next_below(keywords.size())];
      }
      if (rng.next_below(4) == 0) {
        seg += std::to_string(2010 + rng.next_below(8));
      }
      if (rng.next_below(5) == 0) {
        for (char& c : seg) {
          if (c >= 'a' && c <= 'z') c -= 32;
        }
      }
      path += "/" + seg;
    }
    path += "/";
    ReplayRequest req;
    req.generator = "jorgee";
    req.method = "HEAD";
    req.target = path;
    req.user_agent = "Mozilla/5.0 Jorgee";
    req.src_ip = random_public_ip(rng);
    out.push_back(std::move(req));
  }
  return out;
}

std::vector<ReplayRequest> gen_shooter(std::size_t n, uint64_t seed) {
  util::Rng rng(seed);
  // Round-robin over a fixed-size pool so the distinct-address count is
  // exactly 92 for any run long enough to cycle it.
  std::vector<std::string> pool;
  pool.reserve(92);
  for (int i = 0; i < 92; ++i) pool.push_back(random_public_ip(rng));

  std::vector<ReplayRequest> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    json body = json::object();
    body["on"] = rng.next_below(2) == 0;
    if (rng.next_below(2) == 0) body["bri"] = int(rng.next_below(255));
    if (rng.next_below(2) == 0) body["hue"] = int(rng.next_below(65536));
    if (rng.next_below(2) == 0) body["sat"] = int(rng.next_below(255));
    if (rng.next_below(4) == 0) {
      body["alert"] = (rng.next_below(2) == 0) ? "none" : "select";
    }
    if (rng.next_below(4) == 0) {
      body["effect"] = (rng.next_below(2) == 0) ? "none" : "colorloop";
    }
    ReplayRequest req;
    req.generator = "shooter";
    req.method = "POST";
    req.target = "/api/";
    req.user_agent = "shooter";
    req.content_type = "application/json";
    req.body = body.dump();
    req.src_ip = pool[i % pool.size()];
    out.push_back(std::move(req));
  }
  return out;
}

std::optional<MultipartPayload> multipart_payload_from_name(
    std::string_view name) {
  if (name == "botlight") return MultipartPayload::Botlight;
  if (name == "000modscan") return MultipartPayload::ModScan000;
  if (name == "mass") return MultipartPayload::Mass;
  return std::nullopt;
}

std::vector<ReplayRequest> gen_multipart_fuzz(std::size_t n, uint64_t seed,
                                              MultipartPayload kind) {
  util::Rng rng(seed);
  static const std::vector<std::string> scan_posts = {
      "/api/philips/hue/", "/api/philips2/hue-link/", "/api/belkin/wemo/",
      "/api/philips1/hue/"};

  std::vector<ReplayRequest> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string suffix = rng.string_of(16, kLower36);
    const std::string delim = std::string(26, '-') + suffix;

    std::string payload;
    switch (kind) {
      case MultipartPayload::Botlight: payload = "%0000"; break;
      case MultipartPayload::ModScan000: payload = ""; break;
      case MultipartPayload::Mass: {
        static const std::vector<std::string> tokens = {"%A/telnet",
                                                        "%A/xmpp", "%A/upnp"};
        const std::string& token = tokens[rng.next_below(tokens.size())];
        payload.reserve(token.size() * 9944);
        for (int r = 0; r < 9944; ++r) payload += token;
        break;
      }
    }

    std::string body = delim + "\r\n";
    body += "Content-Disposition: form-data; name=\"on\"\r\n\r\ntrue\r\n";
    body += delim + "\r\n";
    body +=
        "Content-Disposition: form-data; name=\"productid\"\r\n\r\n" +
        payload + "\r\n";
    body += delim + "--\r\n";

    ReplayRequest req;
    req.generator = "multipart";
    req.method = "POST";
    switch (kind) {
      case MultipartPayload::Botlight:
        req.user_agent = "botlight";
        req.target = "/api/list/";
        break;
      case MultipartPayload::ModScan000:
        req.user_agent = "000modscan";
        req.target =
            scan_posts[rng.next_below(scan_posts.size())] +
            rng.string_of(32, kLower36);
        break;
      case MultipartPayload::Mass:
        req.user_agent = "mass";
        req.target = "/api/list/";
        break;
    }
    // The wire boundary drops the two leading dashes of the body delimiter.
    req.content_type =
        "multipart/form-data; boundary=" + std::string(24, '-') + suffix;
    req.body = std::move(body);
    req.src_ip = random_public_ip(rng);
    out.push_back(std::move(req));
  }
  return out;
}

namespace {

struct ScanShape {
  const char* prefix;
  const char* suffix;
  bool numeric;  // pattern 7 counts instead of drawing tokens
  const char* user_agent;
};

const ScanShape& scan_shape(int pattern_id) {
  static const std::vector<ScanShape> shapes = {
      {"/api/philips/hue/", "", false, "0000modscan"},
      {"/api/phi/light/", "", false, "0000modscan"},
      {"/api/philips1/hue/", "", false, "0000modscan"},
      {"/api/philips2/hue-link/", "", false, "0000modscan"},
      {"/api/belkin/wemo/", "", false, "0000modscan"},
      {"/api/tplink/light/", "", false, "0000modscan"},
      {"/api/hue/", "", true, "ioscan"},
      {"/api/phi/light/", "/tokens", false, "httpget"},
      {"/api/", "/tokens", false, "httpget"},
      {"/api/", "", false, "httpget"},
  };
  if (pattern_id < 1 || pattern_id > int(shapes.size())) {
    throw std::invalid_argument("unknown url-scan pattern id: " +
                                std::to_string(pattern_id));
  }
  return shapes[pattern_id - 1];
}

}  // namespace

std::vector<ReplayRequest> gen_url_scan(int pattern_id, std::size_t n,
                                        uint64_t seed) {
  const ScanShape& shape = scan_shape(pattern_id);
  util::Rng rng(seed);
  std::vector<ReplayRequest> out;
  out.reserve(n);
  char tag[24];
  std::snprintf(tag, sizeof(tag), "url-scan-%02d", pattern_id);
  for (std::size_t i = 0; i < n; ++i) {
    std::string fill = shape.numeric ? std::to_string(i % 751)
                                     : rng.string_of(32, kLower36);
    ReplayRequest req;
    req.generator = tag;
    req.method = "GET";
    req.target = std::string(shape.prefix) + fill + shape.suffix;
    req.user_agent = shape.user_agent;
    req.src_ip = random_public_ip(rng);
    out.push_back(std::move(req));
  }
  return out;
}

std::string generator_intended_tag(std::string_view generator_id) {
  if (generator_id == "jorgee") return "jorgee-admin-scan";
  if (generator_id == "shooter") return "shooter-control";
  if (generator_id.rfind("multipart", 0) == 0) return "multipart-fuzz";
  if (generator_id.rfind("url-scan-", 0) == 0) return std::string(generator_id);
  throw std::invalid_argument("unknown generator id: " +
                              std::string(generator_id));
}

namespace {

std::vector<ReplayRequest> run_generator(const std::string& id,
                                         std::size_t count, uint64_t seed) {
  if (id == "jorgee") return gen_jorgee(count, seed);
  if (id == "shooter") return gen_shooter(count, seed);
  if (id.rfind("multipart-", 0) == 0) {
    auto kind = multipart_payload_from_name(id.substr(10));
    if (!kind) throw std::invalid_argument("unknown generator id: " + id);
    return gen_multipart_fuzz(count, seed, *kind);
  }
  if (id.rfind("url-scan-", 0) == 0) {
    int pattern = std::atoi(id.c_str() + 9);
    return gen_url_scan(pattern, count, seed);
  }
  throw std::invalid_argument("unknown generator id: " + id);
}

}  // namespace

ReplayPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read plan: " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw std::runtime_error("plan is not a JSON object: " + path.string());
  }
  ReplayPlan plan;
  plan.seed = doc.value("seed", uint64_t(0));
  plan.pace = doc.value("pace", 0.0);
  plan.target = doc.value("target", std::string());
  if (!doc.contains("mix") || !doc["mix"].is_array()) {
    throw std::runtime_error("plan has no mix array: " + path.string());
  }
  for (const auto& entry : doc["mix"]) {
    PlanEntry pe;
    if (entry.is_array() && entry.size() == 2) {
      pe.generator = entry[0].get<std::string>();
      pe.count = entry[1].get<std::size_t>();
    } else if (entry.is_object()) {
      pe.generator = entry.value("generator", std::string());
      pe.count = entry.value("count", std::size_t(0));
    } else {
      throw std::runtime_error("malformed mix entry in " + path.string());
    }
    plan.mix.push_back(std::move(pe));
  }
  return plan;
}

std::vector<ReplayRequest> expand(const ReplayPlan& plan) {
  std::vector<ReplayRequest> corpus;
  for (std::size_t i = 0; i < plan.mix.size(); ++i) {
    const auto& entry = plan.mix[i];
    auto batch =
        run_generator(entry.generator, entry.count, mix_seed(plan.seed, i));
    corpus.insert(corpus.end(), std::make_move_iterator(batch.begin()),
                  std::make_move_iterator(batch.end()));
  }
  return corpus;
}

ReplaySummary replay(const std::vector<ReplayRequest>& corpus,
                     const std::string& host, int port,
                     const ReplayOptions& opts) {
  ReplaySummary summary;
  if (corpus.empty()) return summary;

  // Fail fast when the target is unreachable rather than burning the
  // whole corpus on connect errors.
  {
    auto probe = xmpp::http_exchange(
        host, port,
        corpus.front().to_wire(host, opts.include_replay_src),
        opts.timeout_ms);
    summary.sent = 1;
    if (!probe) {
      summary.errors = 1;
      return summary;
    }
    ++summary.responded;
    ++summary.status_counts[probe->first];
  }

  std::atomic<std::size_t> next{1};
  std::mutex merge_mutex;
  const int workers = std::max(1, opts.parallel);
  const double interval_ms =
      opts.pace > 0 ? 1000.0 / opts.pace : 0.0;
  const auto start = std::chrono::steady_clock::now();

  auto worker = [&]() {
    ReplaySummary local;
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= corpus.size()) break;
      if (interval_ms > 0) {
        auto due = start + std::chrono::duration_cast<
                               std::chrono::steady_clock::duration>(
                               std::chrono::duration<double, std::milli>(
                                   interval_ms * double(i)));
        std::this_thread::sleep_until(due);
      }
      ++local.sent;
      auto result = xmpp::http_exchange(
          host, port, corpus[i].to_wire(host, opts.include_replay_src),
          opts.timeout_ms);
      if (result) {
        ++local.responded;
        ++local.status_counts[result->first];
      } else {
        ++local.errors;
      }
    }
    std::lock_guard lock(merge_mutex);
    summary.sent += local.sent;
    summary.responded += local.responded;
    summary.errors += local.errors;
    for (const auto& [status, count] : local.status_counts) {
      summary.status_counts[status] += count;
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return summary;
}

}  // namespace huepot::replay
