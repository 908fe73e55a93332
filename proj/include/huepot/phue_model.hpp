#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "huepot/util.hpp"

namespace huepot::phue {

using json = nlohmann::ordered_json;

// State of one emulated bulb. Ranges follow the published Hue API:
// bri/sat in [0,254], hue in [0,65535].
struct LightState {
  bool on = false;
  int bri = 254;
  int hue = 0;
  int sat = 0;
  bool reachable = true;
  std::string alert = "none";   // none | select | lselect
  std::string effect = "none";  // none | colorloop
};

struct Light {
  std::string name;
  std::string type;
  std::string modelid;
  LightState state;
};

// The three-document data resource behind the emulated bridge. template.json
// supplies the lights, config.json the bridge config (incl. whitelist), and
// tempfile.json is a free-form honeytoken served verbatim.
struct BridgeTemplate {
  std::map<std::string, Light> lights;
  json config;
  json tempfile;
};

// Error codes of the real bridge's REST envelope.
enum ErrorCode : int {
  kUnauthorizedUser = 1,
  kInvalidJson = 2,
  kResourceUnavailable = 3,
  kMethodUnavailable = 4,
  kParameterUnavailable = 6,
  kInvalidValue = 7,
  kLinkButtonNotPressed = 101,
};

struct PhueError {
  int type = 0;
  std::string address;
  std::string description;
};

// {"error": {...}}, one entry of a result list.
json error_entry(const PhueError& e);
// Bridge replies always wrap errors in a one-element array, never a bare
// object.
json error_envelope(const PhueError& e);
json success_entry(const std::string& address, const json& value);

PhueError unknown_parameter(const std::string& address_prefix,
                            const std::string& param);
PhueError invalid_value(const std::string& address_prefix,
                        const std::string& param, const json& value);
PhueError resource_unavailable(const std::string& resource);
PhueError method_unavailable(const std::string& method,
                             const std::string& resource);

// Loads and validates the three data-resource documents. Throws
// std::runtime_error naming the missing path or offending field
// (e.g. "lights.1.state.bri").
BridgeTemplate load_data_resource(const std::filesystem::path& template_path,
                                  const std::filesystem::path& config_path,
                                  const std::filesystem::path& tempfile_path);

// Same validation applied to already-parsed documents.
BridgeTemplate template_from_docs(const json& template_doc,
                                  const json& config_doc,
                                  const json& tempfile_doc);

json light_to_json(const Light& light);

// Full datastore document (lights + config). Served to any syntactically
// valid username; the whitelist is bait, not an access control. The
// honeytoken document is never part of this view.
json render_full_state(const BridgeTemplate& t, std::string_view username);

json render_lights(const BridgeTemplate& t);

// Applies a state-update document to one light. Per field: known + in-range
// mutates and yields a success entry, unknown yields error 6, out-of-range or
// wrong type yields error 7. Result entries preserve the update's field
// order; rejected fields never touch state. Unknown light id yields a single
// error-3 envelope.
json apply_state_update(BridgeTemplate& t, const std::string& light_id,
                        const json& update);

// 32-char token over [a-z0-9], the format attackers probe for.
std::string generate_username(util::Rng& rng);

inline constexpr std::string_view kUsernameAlphabet =
    "abcdefghijklmnopqrstuvwxyz0123456789";
inline constexpr std::size_t kUsernameLength = 32;

}  // namespace huepot::phue
