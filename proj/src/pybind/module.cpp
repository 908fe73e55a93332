#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "huepot/analyzer.hpp"
#include "huepot/logstore.hpp"
#include "huepot/phue_model.hpp"
#include "huepot/replay.hpp"
#include "huepot/rest_honeypot.hpp"
#include "huepot/util.hpp"
#include "huepot/xmpp_bridge.hpp"

namespace py = pybind11;

namespace {

using huepot::phue::json;

// Bridge data resource plus its mutation op, as a JSON-string interface.
class PyBridge {
 public:
  PyBridge(const std::string& template_path, const std::string& config_path,
           const std::string& tempfile_path)
      : tpl_(huepot::phue::load_data_resource(template_path, config_path,
                                              tempfile_path)) {}

  static PyBridge from_docs(const std::string& template_doc,
                            const std::string& config_doc,
                            const std::string& tempfile_doc) {
    return PyBridge(huepot::phue::template_from_docs(
        json::parse(template_doc), json::parse(config_doc),
        json::parse(tempfile_doc)));
  }

  std::string full_state(const std::string& username) const {
    return huepot::phue::render_full_state(tpl_, username).dump();
  }

  std::string lights() const {
    return huepot::phue::render_lights(tpl_).dump();
  }

  std::string tempfile() const { return tpl_.tempfile.dump(); }

  std::string apply_update(const std::string& light_id,
                           const std::string& update_json) {
    json update = json::parse(update_json);
    return huepot::phue::apply_state_update(tpl_, light_id, update).dump();
  }

 private:
  explicit PyBridge(huepot::phue::BridgeTemplate tpl) : tpl_(std::move(tpl)) {}
  huepot::phue::BridgeTemplate tpl_;
};

std::vector<std::filesystem::path> to_paths(const std::vector<std::string>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Philips Hue bridge honeypot core: emulation, analysis, replay";

  py::class_<PyBridge>(m, "Bridge")
      .def(py::init<const std::string&, const std::string&,
                    const std::string&>(),
           py::arg("template_path"), py::arg("config_path"),
           py::arg("tempfile_path"))
      .def_static("from_docs", &PyBridge::from_docs, py::arg("template_doc"),
                  py::arg("config_doc"), py::arg("tempfile_doc"))
      .def("full_state", &PyBridge::full_state, py::arg("username"))
      .def("lights", &PyBridge::lights)
      .def("tempfile", &PyBridge::tempfile)
      .def("apply_update", &PyBridge::apply_update, py::arg("light_id"),
           py::arg("update_json"));

  m.def(
      "generate_username",
      [](uint64_t seed) {
        huepot::util::Rng rng(seed);
        return huepot::phue::generate_username(rng);
      },
      py::arg("seed"));

  m.def(
      "route",
      [](const std::string& method, const std::string& path) {
        auto target = huepot::rest::route(method, path);
        return py::make_tuple(
            std::string(huepot::rest::route_kind_name(target.kind)),
            target.captures);
      },
      py::arg("method"), py::arg("path"));

  m.def(
      "make_shared_id",
      [](const std::string& jid, int64_t ts_ms) {
        return huepot::xmpp::make_shared_id(jid, ts_ms);
      },
      py::arg("jid"), py::arg("ts_ms"));

  m.def(
      "parse_command",
      [](const std::string& text) {
        auto cmd = huepot::xmpp::parse_command(text);
        py::object arg = cmd.arg ? py::cast(*cmd.arg) : py::none();
        return py::make_tuple(std::string(huepot::xmpp::verb_name(cmd.verb)),
                              arg);
      },
      py::arg("text"));

  m.def(
      "is_http",
      [](const py::bytes& raw) {
        return huepot::analyzer::is_http(std::string(raw));
      },
      py::arg("raw_bytes"));

  m.def(
      "classify",
      [](const std::string& record_line) {
        auto rec = huepot::logstore::request_record_from_line(record_line);
        if (!rec) throw std::invalid_argument("not a request record line");
        static const auto registry =
            huepot::analyzer::SignatureRegistry::builtin();
        return std::string(
            huepot::analyzer::label_name(huepot::analyzer::classify(*rec, registry)));
      },
      py::arg("record_line"));

  m.def(
      "match_signatures",
      [](const std::string& record_line) {
        auto rec = huepot::logstore::request_record_from_line(record_line);
        if (!rec) throw std::invalid_argument("not a request record line");
        static const auto registry =
            huepot::analyzer::SignatureRegistry::builtin();
        return registry.match(*rec);
      },
      py::arg("record_line"));

  m.def("percent_1dp", &huepot::analyzer::percent_1dp, py::arg("part"),
        py::arg("total"));

  m.def(
      "analyze_logs",
      [](const std::vector<std::string>& paths, std::size_t top,
         const std::string& tor_list, const std::string& asn_map) {
        auto [records, skipped] =
            huepot::logstore::read_request_logs(to_paths(paths));
        huepot::analyzer::ReportOptions opts;
        opts.top = top;
        opts.enrichment = huepot::analyzer::EnrichmentDb::load(
            tor_list.empty()
                ? std::nullopt
                : std::optional<std::filesystem::path>(tor_list),
            asn_map.empty() ? std::nullopt
                            : std::optional<std::filesystem::path>(asn_map));
        return huepot::analyzer::report(records, opts, skipped).dump();
      },
      py::arg("paths"), py::arg("top") = 20, py::arg("tor_list") = "",
      py::arg("asn_map") = "");

  m.def(
      "correlate_files",
      [](const std::vector<std::string>& rest_paths,
         const std::vector<std::string>& xmpp_paths) {
        auto [records, rskip] =
            huepot::logstore::read_request_logs(to_paths(rest_paths));
        auto [events, xskip] =
            huepot::logstore::read_xmpp_logs(to_paths(xmpp_paths));
        auto result = huepot::logstore::correlate(records, events);
        py::dict out;
        out["sessions"] = result.sessions.size();
        out["orphans"] = result.orphans.size();
        py::list ids;
        for (const auto& s : result.sessions) ids.append(s.shared_id);
        out["session_ids"] = ids;
        return out;
      },
      py::arg("rest_paths"), py::arg("xmpp_paths"));

  m.def(
      "gen_corpus",
      [](const std::string& generator, std::size_t n, uint64_t seed,
         const std::string& host) {
        huepot::replay::ReplayPlan plan;
        plan.seed = seed;
        plan.mix.push_back({generator, n});
        std::vector<py::bytes> wires;
        for (const auto& req : huepot::replay::expand(plan)) {
          wires.emplace_back(req.to_wire(host, true));
        }
        return wires;
      },
      py::arg("generator"), py::arg("n"), py::arg("seed"),
      py::arg("host") = "honeypot");

#ifdef HUEPOT_VERSION
  m.attr("__version__") = HUEPOT_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
