#include "huepot/phue_model.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace huepot::phue {

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("data resource missing: " + path.string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("data resource not valid JSON: " + path.string() +
                             ": " + e.what());
  }
  return doc;
}

[[noreturn]] void schema_error(const std::string& field,
                               const std::string& why) {
  throw std::runtime_error("data resource schema violation at " + field +
                           ": " + why);
}

int require_int(const json& obj, const std::string& key, int lo, int hi,
                const std::string& field) {
  if (!obj.contains(key)) schema_error(field, "missing");
  const json& v = obj.at(key);
  if (!v.is_number_integer()) schema_error(field, "expected integer");
  const int64_t n = v.get<int64_t>();
  if (n < lo || n > hi) {
    schema_error(field, "out of range [" + std::to_string(lo) + "," +
                            std::to_string(hi) + "]");
  }
  return int(n);
}

bool require_bool(const json& obj, const std::string& key,
                  const std::string& field) {
  if (!obj.contains(key)) schema_error(field, "missing");
  const json& v = obj.at(key);
  if (!v.is_boolean()) schema_error(field, "expected boolean");
  return v.get<bool>();
}

std::string require_enum(const json& obj, const std::string& key,
                         const std::vector<std::string>& allowed,
                         const std::string& field) {
  if (!obj.contains(key)) schema_error(field, "missing");
  const json& v = obj.at(key);
  if (!v.is_string()) schema_error(field, "expected string");
  const std::string s = v.get<std::string>();
  for (const auto& a : allowed) {
    if (s == a) return s;
  }
  schema_error(field, "value '" + s + "' not allowed");
}

std::string require_string(const json& obj, const std::string& key,
                           const std::string& field) {
  if (!obj.contains(key)) schema_error(field, "missing");
  const json& v = obj.at(key);
  if (!v.is_string()) schema_error(field, "expected string");
  return v.get<std::string>();
}

LightState parse_light_state(const json& doc, const std::string& field) {
  if (!doc.is_object()) schema_error(field, "expected object");
  LightState s;
  s.on = require_bool(doc, "on", field + ".on");
  s.bri = require_int(doc, "bri", 0, 254, field + ".bri");
  s.hue = require_int(doc, "hue", 0, 65535, field + ".hue");
  s.sat = require_int(doc, "sat", 0, 254, field + ".sat");
  s.reachable = require_bool(doc, "reachable", field + ".reachable");
  s.alert = require_enum(doc, "alert", {"none", "select", "lselect"},
                         field + ".alert");
  s.effect =
      require_enum(doc, "effect", {"none", "colorloop"}, field + ".effect");
  return s;
}

json state_to_json(const LightState& s) {
  json out = json::object();
  out["on"] = s.on;
  out["bri"] = s.bri;
  out["hue"] = s.hue;
  out["sat"] = s.sat;
  out["reachable"] = s.reachable;
  out["alert"] = s.alert;
  out["effect"] = s.effect;
  return out;
}

std::string json_value_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

json error_entry(const PhueError& e) {
  json inner = json::object();
  inner["type"] = e.type;
  inner["address"] = e.address;
  inner["description"] = e.description;
  json entry = json::object();
  entry["error"] = inner;
  return entry;
}

json error_envelope(const PhueError& e) {
  json arr = json::array();
  arr.push_back(error_entry(e));
  return arr;
}

json success_entry(const std::string& address, const json& value) {
  json inner = json::object();
  inner[address] = value;
  json entry = json::object();
  entry["success"] = inner;
  return entry;
}

PhueError unknown_parameter(const std::string& address_prefix,
                            const std::string& param) {
  return {kParameterUnavailable, address_prefix + "/" + param,
          "parameter, " + param + ", not available"};
}

PhueError invalid_value(const std::string& address_prefix,
                        const std::string& param, const json& value) {
  return {kInvalidValue, address_prefix + "/" + param,
          "invalid value, " + json_value_text(value) + ", for parameter, " +
              param};
}

PhueError resource_unavailable(const std::string& resource) {
  return {kResourceUnavailable, resource,
          "resource, " + resource + ", not available"};
}

PhueError method_unavailable(const std::string& method,
                             const std::string& resource) {
  return {kMethodUnavailable, resource,
          "method, " + method + ", not available for resource, " + resource};
}

BridgeTemplate template_from_docs(const json& template_doc,
                                  const json& config_doc,
                                  const json& tempfile_doc) {
  BridgeTemplate t;
  if (!template_doc.is_object() || !template_doc.contains("lights")) {
    schema_error("lights", "missing");
  }
  const json& lights = template_doc.at("lights");
  if (!lights.is_object()) schema_error("lights", "expected object");
  for (auto it = lights.begin(); it != lights.end(); ++it) {
    const std::string field = "lights." + it.key();
    const json& doc = it.value();
    if (!doc.is_object()) schema_error(field, "expected object");
    Light light;
    light.name = require_string(doc, "name", field + ".name");
    light.type = require_string(doc, "type", field + ".type");
    light.modelid = require_string(doc, "modelid", field + ".modelid");
    if (!doc.contains("state")) schema_error(field + ".state", "missing");
    light.state = parse_light_state(doc.at("state"), field + ".state");
    t.lights.emplace(it.key(), std::move(light));
  }

  if (!config_doc.is_object()) schema_error("config", "expected object");
  if (config_doc.contains("whitelist") &&
      !config_doc.at("whitelist").is_object()) {
    schema_error("config.whitelist", "expected object");
  }
  t.config = config_doc;
  t.tempfile = tempfile_doc;
  return t;
}

BridgeTemplate load_data_resource(const std::filesystem::path& template_path,
                                  const std::filesystem::path& config_path,
                                  const std::filesystem::path& tempfile_path) {
  const json template_doc = read_json_file(template_path);
  const json config_doc = read_json_file(config_path);
  const json tempfile_doc = read_json_file(tempfile_path);
  return template_from_docs(template_doc, config_doc, tempfile_doc);
}

json light_to_json(const Light& light) {
  json out = json::object();
  out["state"] = state_to_json(light.state);
  out["type"] = light.type;
  out["name"] = light.name;
  out["modelid"] = light.modelid;
  return out;
}

json render_lights(const BridgeTemplate& t) {
  json out = json::object();
  for (const auto& [id, light] : t.lights) {
    out[id] = light_to_json(light);
  }
  return out;
}

json render_full_state(const BridgeTemplate& t, std::string_view username) {
  (void)username;  // any token is served the same view
  json out = json::object();
  out["lights"] = render_lights(t);
  out["config"] = t.config;
  return out;
}

namespace {

// Validates one update field against the live state. Returns either a
// success entry (and mutates) or an error entry.
json apply_one_field(LightState& state, const std::string& addr_prefix,
                     const std::string& key, const json& value) {
  auto ok = [&](const json& v) { return success_entry(addr_prefix + "/" + key, v); };
  auto bad = [&]() { return error_entry(invalid_value(addr_prefix, key, value)); };

  if (key == "on" || key == "reachable") {
    if (!value.is_boolean()) return bad();
    (key == "on" ? state.on : state.reachable) = value.get<bool>();
    return ok(value);
  }
  if (key == "bri" || key == "sat" || key == "hue") {
    if (!value.is_number_integer()) return bad();
    const int64_t n = value.get<int64_t>();
    const int64_t hi = (key == "hue") ? 65535 : 254;
    if (n < 0 || n > hi) return bad();
    if (key == "bri") state.bri = int(n);
    if (key == "sat") state.sat = int(n);
    if (key == "hue") state.hue = int(n);
    return ok(value);
  }
  if (key == "alert" || key == "effect") {
    if (!value.is_string()) return bad();
    const std::string s = value.get<std::string>();
    const bool allowed = (key == "alert")
                             ? (s == "none" || s == "select" || s == "lselect")
                             : (s == "none" || s == "colorloop");
    if (!allowed) return bad();
    (key == "alert" ? state.alert : state.effect) = s;
    return ok(value);
  }
  return error_entry(unknown_parameter(addr_prefix, key));
}

}  // namespace

json apply_state_update(BridgeTemplate& t, const std::string& light_id,
                        const json& update) {
  auto it = t.lights.find(light_id);
  if (it == t.lights.end()) {
    return error_envelope(resource_unavailable("/lights/" + light_id));
  }
  const std::string addr_prefix = "/lights/" + light_id + "/state";
  json results = json::array();
  if (!update.is_object()) {
    return error_envelope(
        {kInvalidJson, addr_prefix, "body contains invalid json"});
  }
  for (auto field = update.begin(); field != update.end(); ++field) {
    results.push_back(
        apply_one_field(it->second.state, addr_prefix, field.key(),
                        field.value()));
  }
  return results;
}

std::string generate_username(util::Rng& rng) {
  return rng.string_of(kUsernameLength, kUsernameAlphabet);
}

}  // namespace huepot::phue
