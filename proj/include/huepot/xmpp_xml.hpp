#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace huepot::xmpp {

// Just enough XML to frame and pick apart client-to-server stanzas. Not a
// general parser: no CDATA, no comments, no namespaces beyond prefix names.

std::string xml_escape(std::string_view s);
std::string xml_unescape(std::string_view s);

// Local name of the first tag ("stream:features" → "features").
std::string element_name(std::string_view stanza);

std::optional<std::string> attribute(std::string_view tag_or_stanza,
                                     std::string_view name);

// Text content of the first <child>...</child> element, unescaped.
std::optional<std::string> child_text(std::string_view stanza,
                                      std::string_view child);

bool contains_element(std::string_view stanza, std::string_view name);

// Incremental stanza framer for one XML stream. Stream open/close tags are
// surfaced as their own items.
class StanzaReader {
 public:
  void feed(std::string_view bytes);

  // Next complete top-level item, or nullopt until more bytes arrive.
  std::optional<std::string> next();

 private:
  std::string buf_;
};

}  // namespace huepot::xmpp
