#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "huepot/logstore.hpp"

namespace huepot::analyzer {

using json = nlohmann::ordered_json;

enum class Label { Targeted, Untargeted, Undefined };

std::string_view label_name(Label label);

// True iff the bytes begin with an HTTP request line: token method, single
// spaces, protocol literally "HTTP". Tolerates a capture that ends mid-line,
// since log previews are often truncated before the CRLF.
bool is_http(std::string_view raw_bytes);

// Signature categories, coarse attack families.
inline constexpr std::string_view kCategories[] = {
    "TargetedControl", "MultipartFuzz", "UrlScan", "GenericScanner", "Other"};

// Declarative matcher. All present fields must match (conjunction). A match
// is suppressed when a strictly more specific signature listed in
// subsumed_by also matched, so one request maps to its most telling tags
// regardless of registry order.
struct AttackSignature {
  std::string tag;
  std::set<std::string> methods;  // empty = any method
  std::string url_pattern;        // regex source, empty = any
  std::string body_pattern;
  std::string ua_pattern;
  std::string category = "Other";
  bool icase = false;  // compile the patterns case-insensitively
  std::vector<std::string> subsumed_by;

  std::regex url_re, body_re, ua_re;  // compiled forms
  void compile();  // throws std::runtime_error naming the bad field
};

class SignatureRegistry {
 public:
  // The built-in registry covering the five attack families seen in the
  // field data plus the scanner-tool user agents.
  static SignatureRegistry builtin();

  // Adds signatures from a JSON file (array of objects). Throws a
  // std::runtime_error naming the offending entry on malformed input.
  void load_file(const std::filesystem::path& path);

  void add(AttackSignature sig);  // throws on duplicate tag / bad regex

  // All matching tags after subsumption, sorted lexicographically.
  std::vector<std::string> match(const logstore::RequestRecord& rec) const;

  const std::vector<AttackSignature>& signatures() const { return sigs_; }

 private:
  std::vector<AttackSignature> sigs_;
};

// First-match-wins cascade: (1) /api prefix or IoT keyword in url/body →
// Targeted; (2) SQL-admin keywords, proxy probe, or a scanner user agent →
// Untargeted; (3) Undefined.
Label classify(const logstore::RequestRecord& rec,
               const SignatureRegistry& registry);

struct UserAgentRow {
  std::string agent;
  uint64_t count = 0;
  std::map<std::string, uint64_t> methods;  // method → count
  uint64_t distinct_ips = 0;
};

std::vector<UserAgentRow> aggregate_user_agents(
    const std::vector<logstore::RequestRecord>& records);

struct Enrichment {
  bool tor = false;
  std::optional<uint32_t> asn;
  std::optional<std::string> rir;
};

// Offline enrichment: a newline-delimited TOR exit list and a cidr,asn,rir
// CSV. Absent files mean absent data, never an error.
class EnrichmentDb {
 public:
  static EnrichmentDb load(const std::optional<std::filesystem::path>& tor_list,
                           const std::optional<std::filesystem::path>& asn_map);

  Enrichment lookup(const std::string& ip) const;
  std::size_t skipped_map_lines() const { return skipped_; }

 private:
  struct CidrEntry {
    uint32_t net = 0;
    int prefix = 0;
    uint32_t asn = 0;
    std::string rir;
  };
  std::set<std::string> tor_exits_;
  std::vector<CidrEntry> cidrs_;
  std::size_t skipped_ = 0;
};

// Count-descending rows over one record field; ties break lexicographically.
// field ∈ {url, src_ip, user_agent, referer, non_http_payload}; anything
// else throws std::invalid_argument.
std::vector<std::pair<std::string, uint64_t>> top_n(
    const std::vector<logstore::RequestRecord>& records,
    std::string_view field, std::size_t n);

// One-decimal percentage, round half up. 41.583 → 41.6.
double percent_1dp(uint64_t part, uint64_t total);

struct ReportOptions {
  std::size_t top = 20;
  EnrichmentDb enrichment;
  const SignatureRegistry* registry = nullptr;  // defaults to builtin
};

// The full analysis document: label totals with percentages, the /api
// split, user-agent correlation rows, top-N tables, non-HTTP payloads, and
// the RIR histogram over distinct source addresses.
json report(const std::vector<logstore::RequestRecord>& records,
            const ReportOptions& opts, std::size_t skipped_lines = 0);

// Human-readable rendering of the report (tab-separated sections).
std::string render_tsv(const json& report_doc);

}  // namespace huepot::analyzer
