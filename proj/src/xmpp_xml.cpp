#include "huepot/xmpp_xml.hpp"

#include <cctype>

namespace huepot::xmpp {

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string xml_unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '&') {
      out.push_back(s[i++]);
      continue;
    }
    auto take = [&](std::string_view entity, char ch) {
      if (s.substr(i, entity.size()) == entity) {
        out.push_back(ch);
        i += entity.size();
        return true;
      }
      return false;
    };
    if (take("&amp;", '&') || take("&lt;", '<') || take("&gt;", '>') ||
        take("&quot;", '"') || take("&apos;", '\'')) {
      continue;
    }
    out.push_back(s[i++]);
  }
  return out;
}

namespace {

// Scans past one tag starting at '<'; returns the index one past '>' or npos
// if incomplete. Respects quoted attribute values.
std::size_t scan_tag(std::string_view s, std::size_t start) {
  char quote = 0;
  for (std::size_t i = start + 1; i < s.size(); ++i) {
    char c = s[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '\'' || c == '"') {
      quote = c;
    } else if (c == '>') {
      return i + 1;
    }
  }
  return std::string_view::npos;
}

std::string tag_name_at(std::string_view s, std::size_t lt) {
  std::size_t i = lt + 1;
  if (i < s.size() && s[i] == '/') ++i;
  std::size_t start = i;
  while (i < s.size() && (std::isalnum(uint8_t(s[i])) || s[i] == ':' ||
                          s[i] == '-' || s[i] == '_')) {
    ++i;
  }
  return std::string(s.substr(start, i - start));
}

std::string local_name(std::string_view qualified) {
  if (auto colon = qualified.rfind(':'); colon != std::string_view::npos) {
    return std::string(qualified.substr(colon + 1));
  }
  return std::string(qualified);
}

}  // namespace

std::string element_name(std::string_view stanza) {
  std::size_t lt = stanza.find('<');
  if (lt == std::string_view::npos) return "";
  return local_name(tag_name_at(stanza, lt));
}

std::optional<std::string> attribute(std::string_view tag_or_stanza,
                                     std::string_view name) {
  std::size_t end = scan_tag(tag_or_stanza, tag_or_stanza.find('<'));
  if (end == std::string_view::npos) end = tag_or_stanza.size();
  std::string_view tag = tag_or_stanza.substr(0, end);
  // Look for name= preceded by whitespace.
  std::size_t pos = 0;
  while ((pos = tag.find(name, pos)) != std::string_view::npos) {
    bool boundary_ok = pos > 0 && (tag[pos - 1] == ' ' || tag[pos - 1] == '\t');
    std::size_t after = pos + name.size();
    if (boundary_ok && after < tag.size() && tag[after] == '=') {
      std::size_t q = after + 1;
      if (q < tag.size() && (tag[q] == '\'' || tag[q] == '"')) {
        std::size_t close = tag.find(tag[q], q + 1);
        if (close != std::string_view::npos) {
          return xml_unescape(tag.substr(q + 1, close - q - 1));
        }
      }
    }
    pos = after;
  }
  return std::nullopt;
}

std::optional<std::string> child_text(std::string_view stanza,
                                      std::string_view child) {
  const std::string open_a = "<" + std::string(child) + ">";
  const std::string open_b = "<" + std::string(child) + " ";
  std::size_t start = stanza.find(open_a);
  std::size_t content;
  if (start != std::string_view::npos) {
    content = start + open_a.size();
  } else {
    start = stanza.find(open_b);
    if (start == std::string_view::npos) return std::nullopt;
    std::size_t tag_end = scan_tag(stanza, start);
    if (tag_end == std::string_view::npos) return std::nullopt;
    if (stanza[tag_end - 2] == '/') return std::string();  // self-closing
    content = tag_end;
  }
  const std::string close = "</" + std::string(child) + ">";
  std::size_t end = stanza.find(close, content);
  if (end == std::string_view::npos) return std::nullopt;
  return xml_unescape(stanza.substr(content, end - content));
}

bool contains_element(std::string_view stanza, std::string_view name) {
  const std::string a = "<" + std::string(name) + ">";
  const std::string b = "<" + std::string(name) + " ";
  const std::string c = "<" + std::string(name) + "/";
  return stanza.find(a) != std::string_view::npos ||
         stanza.find(b) != std::string_view::npos ||
         stanza.find(c) != std::string_view::npos;
}

void StanzaReader::feed(std::string_view bytes) { buf_.append(bytes); }

std::optional<std::string> StanzaReader::next() {
  // Drop leading whitespace between stanzas.
  std::size_t lead = buf_.find_first_not_of(" \t\r\n");
  if (lead == std::string::npos) {
    buf_.clear();
    return std::nullopt;
  }
  if (lead > 0) buf_.erase(0, lead);
  if (buf_.empty() || buf_[0] != '<') {
    // Garbage outside a tag: skip to the next '<'.
    std::size_t lt = buf_.find('<');
    if (lt == std::string::npos) {
      buf_.clear();
      return std::nullopt;
    }
    buf_.erase(0, lt);
  }

  // XML declaration.
  if (buf_.size() >= 2 && buf_[1] == '?') {
    std::size_t end = buf_.find("?>");
    if (end == std::string::npos) return std::nullopt;
    buf_.erase(0, end + 2);
    return next();
  }

  std::string name = tag_name_at(buf_, 0);
  // Stream open and close are framed alone: the opening tag never closes
  // within the conversation.
  if (name == "stream:stream" || name == "stream") {
    std::size_t end = scan_tag(buf_, 0);
    if (end == std::string::npos) return std::nullopt;
    std::string out = buf_.substr(0, end);
    buf_.erase(0, end);
    return out;
  }

  int depth = 0;
  std::size_t pos = 0;
  while (pos < buf_.size()) {
    std::size_t lt = buf_.find('<', pos);
    if (lt == std::string::npos) return std::nullopt;
    std::size_t end = scan_tag(buf_, lt);
    if (end == std::string::npos) return std::nullopt;
    bool closing = buf_[lt + 1] == '/';
    bool self_closing = buf_[end - 2] == '/';
    if (closing) {
      --depth;
    } else if (!self_closing) {
      ++depth;
    }
    if (depth <= 0) {
      std::string out = buf_.substr(0, end);
      buf_.erase(0, end);
      return out;
    }
    pos = end;
  }
  return std::nullopt;
}

}  // namespace huepot::xmpp
