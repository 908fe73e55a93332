#include "huepot/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "huepot/util.hpp"

namespace huepot::analyzer {

namespace {

bool is_method_char(char c) {
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
      (c >= '0' && c <= '9')) {
    return true;
  }
  return std::string_view("!#$%&'*+-.^_`|~").find(c) != std::string_view::npos;
}

const std::vector<std::string>& iot_keywords() {
  static const std::vector<std::string> kw = {"hue",    "philips", "wemo",
                                              "belkin", "tplink",  "light"};
  return kw;
}

const std::vector<std::string>& sql_admin_keywords() {
  static const std::vector<std::string> kw = {"db",  "admin",    "pma", "php",
                                              "sql", "database", "web", "my"};
  return kw;
}

bool contains_any(const std::string& haystack_lower,
                  const std::vector<std::string>& needles) {
  for (const auto& n : needles) {
    if (haystack_lower.find(n) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

std::string_view label_name(Label label) {
  switch (label) {
    case Label::Targeted: return "targeted";
    case Label::Untargeted: return "untargeted";
    case Label::Undefined: return "undefined";
  }
  return "undefined";
}

bool is_http(std::string_view raw_bytes) {
  if (raw_bytes.empty()) return false;
  // Work on the first line only; a missing terminator is tolerated because
  // table previews truncate captures mid-line.
  std::string_view line = raw_bytes;
  if (auto nl = raw_bytes.find('\n'); nl != std::string_view::npos) {
    line = raw_bytes.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  }
  if (line.size() > 8192) return false;

  std::size_t sp1 = line.find(' ');
  if (sp1 == std::string_view::npos || sp1 == 0) return false;
  std::size_t sp2 = line.find(' ', sp1 + 1);
  if (sp2 == std::string_view::npos || sp2 == sp1 + 1) return false;
  if (line.find(' ', sp2 + 1) != std::string_view::npos) return false;

  std::string_view method = line.substr(0, sp1);
  std::string_view target = line.substr(sp1 + 1, sp2 - sp1 - 1);
  std::string_view proto = line.substr(sp2 + 1);
  if (!std::all_of(method.begin(), method.end(), is_method_char)) return false;
  for (char c : target) {
    if (uint8_t(c) < 0x21 || uint8_t(c) == 0x7f) return false;
  }
  // Protocol must literally be HTTP/x.y; RTSP/1.0 and friends stay out.
  if (proto.size() != 8 || proto.substr(0, 5) != "HTTP/") return false;
  return proto[5] >= '0' && proto[5] <= '9' && proto[6] == '.' &&
         proto[7] >= '0' && proto[7] <= '9';
}

void AttackSignature::compile() {
  auto build = [&](const std::string& src, std::regex* out,
                   const char* field) {
    if (src.empty()) return;
    auto flags = std::regex::ECMAScript;
    if (icase) flags |= std::regex::icase;
    try {
      *out = std::regex(src, flags);
    } catch (const std::regex_error& e) {
      throw std::runtime_error("signature '" + tag + "': bad " + field +
                               " regex: " + e.what());
    }
  };
  build(url_pattern, &url_re, "url_pattern");
  build(body_pattern, &body_re, "body_pattern");
  build(ua_pattern, &ua_re, "ua_pattern");
  bool known_category = false;
  for (auto c : kCategories) {
    if (category == c) known_category = true;
  }
  if (!known_category) {
    throw std::runtime_error("signature '" + tag + "': unknown category '" +
                             category + "'");
  }
}

namespace {

bool signature_matches(const AttackSignature& sig,
                       const logstore::RequestRecord& rec,
                       const std::string& body) {
  if (!sig.methods.empty()) {
    if (!rec.method || sig.methods.find(*rec.method) == sig.methods.end()) {
      return false;
    }
  }
  if (!sig.url_pattern.empty()) {
    if (!rec.url || !std::regex_search(*rec.url, sig.url_re)) return false;
  }
  if (!sig.body_pattern.empty()) {
    if (!std::regex_search(body, sig.body_re)) return false;
  }
  if (!sig.ua_pattern.empty()) {
    if (!std::regex_search(rec.user_agent, sig.ua_re)) return false;
  }
  return true;
}

}  // namespace

void SignatureRegistry::add(AttackSignature sig) {
  for (const auto& existing : sigs_) {
    if (existing.tag == sig.tag) {
      throw std::runtime_error("duplicate signature tag: " + sig.tag);
    }
  }
  sig.compile();
  sigs_.push_back(std::move(sig));
}

std::vector<std::string> SignatureRegistry::match(
    const logstore::RequestRecord& rec) const {
  const std::string body = rec.body();
  std::set<std::string> raw;
  for (const auto& sig : sigs_) {
    if (signature_matches(sig, rec, body)) raw.insert(sig.tag);
  }
  std::vector<std::string> out;
  for (const auto& sig : sigs_) {
    if (raw.find(sig.tag) == raw.end()) continue;
    bool suppressed = false;
    for (const auto& better : sig.subsumed_by) {
      if (raw.find(better) != raw.end()) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) out.push_back(sig.tag);
  }
  std::sort(out.begin(), out.end());
  return out;
}

SignatureRegistry SignatureRegistry::builtin() {
  SignatureRegistry reg;
  auto sig = [](std::string tag, std::set<std::string> methods,
                std::string url, std::string body, std::string ua,
                std::string category,
                std::vector<std::string> subsumed_by = {}) {
    AttackSignature s;
    s.tag = std::move(tag);
    s.methods = std::move(methods);
    s.url_pattern = std::move(url);
    s.body_pattern = std::move(body);
    s.ua_pattern = std::move(ua);
    s.category = std::move(category);
    s.subsumed_by = std::move(subsumed_by);
    return s;
  };

  // Control attempts shaped like real bridge state updates: a flat JSON
  // object whose every key belongs to the bulb-state schema.
  static const std::string kStateKey =
      R"rx("(on|bri|hue|sat|reachable|alert|effect)")rx";
  reg.add(sig("shooter-control", {"POST"}, "^/api/?$",
              R"rx(^\s*\{\s*)rx" + kStateKey + R"rx(\s*:\s*[^,}]*(,\s*)rx" +
                  kStateKey + R"rx(\s*:\s*[^,}]*)*\s*\}\s*$)rx",
              "", "TargetedControl"));

  // multipart/form-data fuzz template: 26-dash boundary with a 16-char
  // suffix directly delimiting a "productid" disposition.
  reg.add(sig("multipart-fuzz", {"POST"}, "",
              "-{26}[a-z0-9]{16}\r\nContent-Disposition: form-data; "
              "name=\"productid\"",
              "", "MultipartFuzz"));

  // The ten URL-scan shapes, anchored so near-misses never leak across tags.
  const char* k32 = "[a-z0-9]{32}";
  const std::vector<std::string> scan_urls = {
      std::string("^/api/philips/hue/") + k32 + "$",
      std::string("^/api/phi/light/") + k32 + "$",
      std::string("^/api/philips1/hue/") + k32 + "$",
      std::string("^/api/philips2/hue-link/") + k32 + "$",
      std::string("^/api/belkin/wemo/") + k32 + "$",
      std::string("^/api/tplink/light/") + k32 + "$",
      "^/api/hue/(750|7[0-4][0-9]|[0-6]?[0-9]{1,2})$",
      std::string("^/api/phi/light/") + k32 + "/tokens$",
      std::string("^/api/") + k32 + "/tokens$",
      std::string("^/api/") + k32 + "$",
  };
  for (std::size_t i = 0; i < scan_urls.size(); ++i) {
    char tag[24];
    std::snprintf(tag, sizeof(tag), "url-scan-%02zu", i + 1);
    reg.add(sig(tag, {"GET"}, scan_urls[i], "", "", "UrlScan"));
  }

  // HEAD sweeps over SQL-admin keyword permutations, any letter case.
  {
    auto jorgee = sig("jorgee-admin-scan", {"HEAD"},
                      "(db|admin|pma|php|sql|database|web|my)", "", "",
                      "GenericScanner");
    jorgee.icase = true;
    reg.add(std::move(jorgee));
  }

  // Open-proxy probe.
  reg.add(sig("proxy-probe", {}, "testproxy\\.php", "", "", "GenericScanner"));

  // Scanner tools identified by user agent.
  reg.add(sig("ua-skipfish", {}, "", "", R"(^Mozilla/5\.0 SF/)",
              "GenericScanner"));
  reg.add(sig("ua-nikto", {}, "", "", R"(\(Nikto/)", "GenericScanner"));
  reg.add(sig("ua-masscan", {}, "", "", "masscan", "GenericScanner"));
  reg.add(sig("ua-python-urllib", {}, "", "", "^Python-urllib/",
              "GenericScanner"));

  // Attacker-tool user agent literals. Subsumed by the behavioural tag of
  // the campaign each agent ran, so a characteristic request keeps exactly
  // its most specific tag.
  reg.add(sig("ua-botlight", {}, "", "", "^botlight$", "Other",
              {"multipart-fuzz"}));
  reg.add(sig("ua-000modscan", {}, "", "", "^000modscan$", "Other",
              {"multipart-fuzz"}));
  reg.add(sig("ua-mass", {}, "", "", "^mass$", "Other", {"multipart-fuzz"}));
  reg.add(sig("ua-httpget", {}, "", "", "^httpget$", "Other",
              {"url-scan-08", "url-scan-09", "url-scan-10"}));
  reg.add(sig("ua-ioscan", {}, "", "", "^ioscan$", "Other", {"url-scan-07"}));
  reg.add(sig("ua-0000modscan", {}, "", "", "^0000modscan$", "Other",
              {"url-scan-01", "url-scan-02", "url-scan-03", "url-scan-04",
               "url-scan-05", "url-scan-06"}));
  return reg;
}

void SignatureRegistry::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read signature file: " + path.string());
  }
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) {
    throw std::runtime_error("signature file must be a JSON array: " +
                             path.string());
  }
  std::size_t index = 0;
  for (const auto& entry : doc) {
    if (!entry.is_object() || !entry.contains("tag") ||
        !entry["tag"].is_string()) {
      throw std::runtime_error("signature entry #" + std::to_string(index) +
                               " malformed: missing string 'tag'");
    }
    AttackSignature s;
    s.tag = entry["tag"].get<std::string>();
    try {
      if (entry.contains("methods")) {
        for (const auto& m : entry.at("methods")) {
          s.methods.insert(m.get<std::string>());
        }
      }
      s.url_pattern = entry.value("url_pattern", std::string());
      s.body_pattern = entry.value("body_pattern", std::string());
      s.ua_pattern = entry.value("ua_pattern", std::string());
      s.category = entry.value("category", std::string("Other"));
      s.icase = entry.value("icase", false);
      if (entry.contains("subsumed_by")) {
        for (const auto& t : entry.at("subsumed_by")) {
          s.subsumed_by.push_back(t.get<std::string>());
        }
      }
      add(std::move(s));
    } catch (const std::exception& e) {
      throw std::runtime_error("signature entry '" + s.tag + "' (#" +
                               std::to_string(index) + ") rejected: " +
                               e.what());
    }
    ++index;
  }
}

Label classify(const logstore::RequestRecord& rec,
               const SignatureRegistry& registry) {
  const std::string url_lower =
      rec.url ? util::to_lower(*rec.url) : std::string();
  // (1) explicitly aimed at the emulated platform
  if (rec.url && url_lower.rfind("/api", 0) == 0) return Label::Targeted;
  if (contains_any(url_lower, iot_keywords())) return Label::Targeted;
  const std::string body_lower = util::to_lower(rec.body());
  if (contains_any(body_lower, iot_keywords())) return Label::Targeted;

  // (2) generic scanning
  if (contains_any(url_lower, sql_admin_keywords())) return Label::Untargeted;
  if (url_lower.find("testproxy.php") != std::string::npos) {
    return Label::Untargeted;
  }
  for (const auto& sig : registry.signatures()) {
    if (sig.category != "GenericScanner" || sig.ua_pattern.empty()) continue;
    if (std::regex_search(rec.user_agent, sig.ua_re)) {
      return Label::Untargeted;
    }
  }
  return Label::Undefined;
}

std::vector<UserAgentRow> aggregate_user_agents(
    const std::vector<logstore::RequestRecord>& records) {
  struct Acc {
    uint64_t count = 0;
    std::map<std::string, uint64_t> methods;
    std::set<std::string> ips;
  };
  std::map<std::string, Acc> by_agent;
  for (const auto& rec : records) {
    Acc& acc = by_agent[rec.user_agent];
    ++acc.count;
    ++acc.methods[rec.method.value_or("-")];
    acc.ips.insert(rec.src_ip);
  }
  std::vector<UserAgentRow> rows;
  rows.reserve(by_agent.size());
  for (auto& [agent, acc] : by_agent) {
    UserAgentRow row;
    row.agent = agent;
    row.count = acc.count;
    row.methods = std::move(acc.methods);
    row.distinct_ips = acc.ips.size();
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(),
            [](const UserAgentRow& a, const UserAgentRow& b) {
              if (a.count != b.count) return a.count > b.count;
              return a.agent < b.agent;
            });
  return rows;
}

namespace {

std::optional<uint32_t> parse_ipv4(const std::string& ip) {
  uint32_t out = 0;
  int part = 0;
  int value = 0;
  int digits = 0;
  for (char c : ip) {
    if (c == '.') {
      if (digits == 0 || part == 3) return std::nullopt;
      out = (out << 8) | uint32_t(value);
      ++part;
      value = 0;
      digits = 0;
    } else if (c >= '0' && c <= '9') {
      value = value * 10 + (c - '0');
      if (value > 255 || ++digits > 3) return std::nullopt;
    } else {
      return std::nullopt;
    }
  }
  if (part != 3 || digits == 0) return std::nullopt;
  return (out << 8) | uint32_t(value);
}

}  // namespace

EnrichmentDb EnrichmentDb::load(
    const std::optional<std::filesystem::path>& tor_list,
    const std::optional<std::filesystem::path>& asn_map) {
  EnrichmentDb db;
  if (tor_list) {
    std::ifstream in(*tor_list);
    if (!in) {
      throw std::runtime_error("cannot read tor exit list: " +
                               tor_list->string());
    }
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      db.tor_exits_.insert(line);
    }
  }
  if (asn_map) {
    std::ifstream in(*asn_map);
    if (!in) {
      throw std::runtime_error("cannot read asn map: " + asn_map->string());
    }
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      // cidr,asn,rir
      std::size_t c1 = line.find(',');
      std::size_t c2 = c1 == std::string::npos ? std::string::npos
                                               : line.find(',', c1 + 1);
      if (c2 == std::string::npos) {
        ++db.skipped_;
        continue;
      }
      std::string cidr = line.substr(0, c1);
      std::string asn_text = line.substr(c1 + 1, c2 - c1 - 1);
      std::string rir = line.substr(c2 + 1);
      std::size_t slash = cidr.find('/');
      if (slash == std::string::npos) {
        ++db.skipped_;
        continue;
      }
      auto net = parse_ipv4(cidr.substr(0, slash));
      char* end = nullptr;
      long prefix = std::strtol(cidr.c_str() + slash + 1, &end, 10);
      char* asn_end = nullptr;
      unsigned long asn = std::strtoul(asn_text.c_str(), &asn_end, 10);
      if (!net || prefix < 0 || prefix > 32 || !end || *end != '\0' ||
          !asn_end || *asn_end != '\0' || asn_text.empty()) {
        ++db.skipped_;
        continue;
      }
      CidrEntry entry;
      entry.prefix = int(prefix);
      entry.net = prefix == 0 ? 0
                              : (*net & (prefix == 32
                                             ? 0xffffffffu
                                             : ~((1u << (32 - prefix)) - 1)));
      entry.asn = uint32_t(asn);
      entry.rir = rir;
      db.cidrs_.push_back(std::move(entry));
    }
  }
  return db;
}

Enrichment EnrichmentDb::lookup(const std::string& ip) const {
  Enrichment out;
  out.tor = tor_exits_.count(ip) > 0;
  auto addr = parse_ipv4(ip);
  if (!addr) return out;
  int best = -1;
  for (const auto& entry : cidrs_) {
    uint32_t mask = entry.prefix == 0
                        ? 0
                        : (entry.prefix == 32
                               ? 0xffffffffu
                               : ~((1u << (32 - entry.prefix)) - 1));
    if ((*addr & mask) == entry.net && entry.prefix > best) {
      best = entry.prefix;
      out.asn = entry.asn;
      out.rir = entry.rir;
    }
  }
  return out;
}

std::vector<std::pair<std::string, uint64_t>> top_n(
    const std::vector<logstore::RequestRecord>& records,
    std::string_view field, std::size_t n) {
  std::map<std::string, uint64_t> counts;
  for (const auto& rec : records) {
    std::optional<std::string> key;
    if (field == "url") {
      key = rec.url;
    } else if (field == "src_ip") {
      key = rec.src_ip;
    } else if (field == "user_agent") {
      key = rec.user_agent;
    } else if (field == "referer") {
      key = rec.referer;
    } else if (field == "non_http_payload") {
      if (!rec.valid_http) key = util::escape_bytes(rec.body(), 160);
    } else {
      throw std::invalid_argument("unknown top-n field: " +
                                  std::string(field));
    }
    if (key) ++counts[*key];
  }
  std::vector<std::pair<std::string, uint64_t>> rows(counts.begin(),
                                                     counts.end());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (rows.size() > n) rows.resize(n);
  return rows;
}

double percent_1dp(uint64_t part, uint64_t total) {
  if (total == 0) return 0.0;
  return std::floor(part * 1000.0 / double(total) + 0.5) / 10.0;
}

json report(const std::vector<logstore::RequestRecord>& records,
            const ReportOptions& opts, std::size_t skipped_lines) {
  static const SignatureRegistry default_registry = SignatureRegistry::builtin();
  const SignatureRegistry& registry =
      opts.registry ? *opts.registry : default_registry;

  uint64_t counts[3] = {0, 0, 0};
  uint64_t api_yes = 0, api_no = 0, http_total = 0;
  for (const auto& rec : records) {
    ++counts[int(classify(rec, registry))];
    if (rec.valid_http) {
      ++http_total;
      if (rec.url && rec.url->rfind("/api", 0) == 0) {
        ++api_yes;
      } else {
        ++api_no;
      }
    }
  }
  const uint64_t total = records.size();

  json doc = json::object();
  doc["v"] = 1;
  doc["record_total"] = total;
  doc["skipped_lines"] = skipped_lines;

  json labels = json::object();
  const Label order[3] = {Label::Targeted, Label::Undefined,
                          Label::Untargeted};
  for (Label l : order) {
    json row = json::object();
    row["count"] = counts[int(l)];
    row["percent"] = percent_1dp(counts[int(l)], total);
    labels[std::string(label_name(l))] = row;
  }
  doc["labels"] = labels;

  json api_split = json::object();
  {
    json yes = json::object();
    yes["count"] = api_yes;
    yes["percent"] = percent_1dp(api_yes, http_total);
    json no = json::object();
    no["count"] = api_no;
    no["percent"] = percent_1dp(api_no, http_total);
    api_split["api"] = yes;
    api_split["other"] = no;
    api_split["http_total"] = http_total;
  }
  doc["api_split"] = api_split;

  json agents = json::array();
  for (const auto& row : aggregate_user_agents(records)) {
    json r = json::object();
    r["user_agent"] = row.agent;
    r["count"] = row.count;
    json methods = json::object();
    for (const auto& [m, c] : row.methods) methods[m] = c;
    r["methods"] = methods;
    r["distinct_ips"] = row.distinct_ips;
    agents.push_back(r);
    if (agents.size() >= opts.top) break;
  }
  doc["user_agent_rows"] = agents;

  auto table = [&](std::string_view field) {
    json rows = json::array();
    for (const auto& [key, count] : top_n(records, field, opts.top)) {
      json r = json::object();
      r["value"] = key;
      r["count"] = count;
      if (field == "src_ip") {
        r["tor"] = opts.enrichment.lookup(key).tor;
      }
      rows.push_back(r);
    }
    return rows;
  };
  doc["top_urls"] = table("url");
  doc["top_ips"] = table("src_ip");
  doc["top_referers"] = table("referer");
  doc["non_http_payloads"] = table("non_http_payload");

  // RIR histogram over distinct source addresses.
  {
    std::set<std::string> distinct;
    for (const auto& rec : records) distinct.insert(rec.src_ip);
    std::map<std::string, uint64_t> rir_counts;
    for (const auto& ip : distinct) {
      auto e = opts.enrichment.lookup(ip);
      ++rir_counts[e.rir.value_or("")];
    }
    std::vector<std::pair<std::string, uint64_t>> rows(rir_counts.begin(),
                                                       rir_counts.end());
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    json out = json::array();
    for (const auto& [rir, count] : rows) {
      json r = json::object();
      r["rir"] = rir;
      r["count"] = count;
      out.push_back(r);
    }
    doc["rir_histogram"] = out;
  }
  return doc;
}

namespace {

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace

std::string render_tsv(const json& doc) {
  std::ostringstream out;
  out << "# totals\nrecords\t" << doc["record_total"].get<uint64_t>()
      << "\nskipped_lines\t" << doc["skipped_lines"].get<uint64_t>() << "\n";
  out << "\n# labels\nlabel\tcount\tpercent\n";
  for (const auto& [name, row] : doc["labels"].items()) {
    out << name << "\t" << row["count"].get<uint64_t>() << "\t"
        << fixed1(row["percent"].get<double>()) << "\n";
  }
  out << "\n# api split\nbucket\tcount\tpercent\n";
  for (const char* key : {"api", "other"}) {
    const auto& row = doc["api_split"][key];
    out << key << "\t" << row["count"].get<uint64_t>() << "\t"
        << fixed1(row["percent"].get<double>()) << "\n";
  }
  out << "\n# user agents\nuser_agent\tcount\tmethods\tdistinct_ips\n";
  for (const auto& row : doc["user_agent_rows"]) {
    out << row["user_agent"].get<std::string>() << "\t"
        << row["count"].get<uint64_t>() << "\t";
    bool first = true;
    for (const auto& [m, c] : row["methods"].items()) {
      if (!first) out << " ";
      out << m << ":" << c.get<uint64_t>();
      first = false;
    }
    out << "\t" << row["distinct_ips"].get<uint64_t>() << "\n";
  }
  auto dump_table = [&out](const char* title, const json& rows, bool tor) {
    out << "\n# " << title << "\nvalue\tcount" << (tor ? "\ttor" : "") << "\n";
    for (const auto& row : rows) {
      out << row["value"].get<std::string>() << "\t"
          << row["count"].get<uint64_t>();
      if (tor) out << "\t" << (row["tor"].get<bool>() ? "yes" : "no");
      out << "\n";
    }
  };
  dump_table("top urls", doc["top_urls"], false);
  dump_table("top ips", doc["top_ips"], true);
  dump_table("top referers", doc["top_referers"], false);
  dump_table("non-http payloads", doc["non_http_payloads"], false);
  out << "\n# rir histogram\nrir\tcount\n";
  for (const auto& row : doc["rir_histogram"]) {
    std::string rir = row["rir"].get<std::string>();
    out << (rir.empty() ? "-" : rir) << "\t" << row["count"].get<uint64_t>()
        << "\n";
  }
  return out.str();
}

}  // namespace huepot::analyzer
