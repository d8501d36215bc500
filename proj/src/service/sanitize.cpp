#include "phishtrain/service/sanitize.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <vector>

namespace phishtrain::service {

namespace {

constexpr std::array kAllowedTags{
    "a",     "abbr",   "address", "article", "aside", "b",      "bdi",      "bdo",   "big",   "blockquote",
    "br",    "caption", "center", "cite",    "code",  "col",    "colgroup", "dd",    "del",   "details",
    "dfn",   "div",    "dl",      "dt",      "em",    "figcaption", "figure", "font", "footer", "h1",
    "h2",    "h3",     "h4",      "h5",      "h6",    "header", "hr",       "i",     "ins",   "kbd",
    "li",    "main",   "mark",    "ol",      "p",     "pre",    "q",        "s",     "samp",  "section",
    "small", "span",   "strike",  "strong",  "style", "sub",    "summary",  "sup",   "table", "tbody",
    "td",    "tfoot",  "th",      "thead",   "time",  "tr",     "tt",       "u",     "ul",    "var",
    "wbr",   "img",    "button",  "label",   "input", "select", "option",   "textarea"};

// Dropped together with everything up to their closing tag.
constexpr std::array kDroppedWithContent{"script", "iframe", "frame", "frameset", "object", "embed", "applet",
                                         "noscript", "template", "svg", "math", "audio", "video", "canvas",
                                         "title", "head", "xml", "noembed", "noframes"};

constexpr std::array kAllowedAttributes{
    "style",  "class",       "id",          "title",  "alt",     "width",   "height", "align",
    "valign", "colspan",     "rowspan",     "border", "cellpadding", "cellspacing", "bgcolor", "color",
    "face",   "size",        "dir",         "lang",   "role",    "type",    "value",  "name",
    "placeholder", "disabled", "checked",   "selected", "for",   "span",    "start",  "reversed",
    "datetime", "open"};

template <std::size_t N>
bool contains(const std::array<const char*, N>& set, std::string_view name) {
  return std::any_of(set.begin(), set.end(), [&](const char* s) { return name == s; });
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string escape_attribute(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  for (char c : value) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

// Decodes the handful of entities attackers use to hide "url(" or
// "javascript:" inside attribute values, so the checks below see them.
std::string decode_entities(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    const auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out += s[i];
      continue;
    }
    const std::string entity = lower(s.substr(i + 1, semi - i - 1));
    long code = -1;
    if (!entity.empty() && entity[0] == '#') {
      try {
        code = entity.size() > 1 && entity[1] == 'x' ? std::stol(entity.substr(2), nullptr, 16)
                                                     : std::stol(entity.substr(1));
      } catch (...) {
        code = -1;
      }
    } else if (entity == "lpar") {
      code = '(';
    } else if (entity == "colon") {
      code = ':';
    } else if (entity == "amp") {
      code = '&';
    } else if (entity == "quot") {
      code = '"';
    } else if (entity == "lt") {
      code = '<';
    } else if (entity == "gt") {
      code = '>';
    } else if (entity == "bsol") {
      code = '\\';
    }
    if (code > 0 && code < 128) {
      out += static_cast<char>(code);
      i = semi;
    } else {
      out += s[i];
    }
  }
  return out;
}

// CSS is neutralized rather than parsed: anything that can fetch or execute
// is cut out of the declaration text.
std::string sanitize_css(std::string_view css) {
  std::string text = decode_entities(css);
  // Drop CSS comments and escapes first; both are used to split keywords.
  std::string flat;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '/' && i + 1 < text.size() && text[i + 1] == '*') {
      const auto end = text.find("*/", i + 2);
      if (end == std::string::npos) break;
      i = end + 1;
      continue;
    }
    if (text[i] == '\\') continue;
    flat += text[i];
  }
  const std::string low = lower(flat);
  std::string out;
  for (std::size_t i = 0; i < flat.size();) {
    auto starts = [&](std::string_view word) { return low.compare(i, word.size(), word) == 0; };
    if (starts("url(") || starts("image-set(") || starts("expression(") || starts("-moz-binding") ||
        starts("behavior")) {
      // Skip to the end of the declaration.
      const auto end = low.find_first_of(";}", i);
      if (end == std::string::npos) break;
      i = end;
      continue;
    }
    if (starts("@import") || starts("@font-face")) {
      const auto end = low.find_first_of(";}", i);
      if (end == std::string::npos) break;
      i = end + 1;
      continue;
    }
    if (starts("javascript:")) {
      i += 11;
      continue;
    }
    out += flat[i++];
  }
  return out;
}

struct Attribute {
  std::string name;
  std::optional<std::string> value;
};

struct Tag {
  std::string name;
  bool closing = false;
  bool self_closing = false;
  std::vector<Attribute> attributes;
  std::size_t end = 0;  // offset just past '>'
};

bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':' || c == '.';
}

// Parses a tag starting at markup[pos] == '<'. Returns nullopt when the text
// is not a tag (a bare '<' in prose).
std::optional<Tag> parse_tag(std::string_view markup, std::size_t pos) {
  Tag tag;
  std::size_t i = pos + 1;
  if (i < markup.size() && markup[i] == '/') {
    tag.closing = true;
    ++i;
  }
  const std::size_t name_start = i;
  while (i < markup.size() && is_name_char(markup[i])) ++i;
  if (i == name_start || !std::isalpha(static_cast<unsigned char>(markup[name_start]))) return std::nullopt;
  tag.name = lower(markup.substr(name_start, i - name_start));

  while (i < markup.size()) {
    while (i < markup.size() && (std::isspace(static_cast<unsigned char>(markup[i])) || markup[i] == '/')) {
      if (markup[i] == '/') tag.self_closing = true;
      ++i;
    }
    if (i >= markup.size()) break;
    if (markup[i] == '>') {
      tag.end = i + 1;
      return tag;
    }
    tag.self_closing = false;
    const std::size_t attr_start = i;
    while (i < markup.size() && !std::isspace(static_cast<unsigned char>(markup[i])) && markup[i] != '=' &&
           markup[i] != '>' && markup[i] != '/') {
      ++i;
    }
    Attribute attr{lower(markup.substr(attr_start, i - attr_start)), std::nullopt};
    if (attr.name.empty()) {
      ++i;  // stray character such as a quote; skip it
      continue;
    }
    while (i < markup.size() && std::isspace(static_cast<unsigned char>(markup[i]))) ++i;
    if (i < markup.size() && markup[i] == '=') {
      ++i;
      while (i < markup.size() && std::isspace(static_cast<unsigned char>(markup[i]))) ++i;
      if (i < markup.size() && (markup[i] == '"' || markup[i] == '\'')) {
        const char quote = markup[i++];
        const auto close = markup.find(quote, i);
        if (close == std::string_view::npos) return std::nullopt;
        attr.value = std::string(markup.substr(i, close - i));
        i = close + 1;
      } else {
        const std::size_t v = i;
        while (i < markup.size() && !std::isspace(static_cast<unsigned char>(markup[i])) && markup[i] != '>') ++i;
        attr.value = std::string(markup.substr(v, i - v));
      }
    }
    tag.attributes.push_back(std::move(attr));
  }
  return std::nullopt;  // unterminated
}

std::string render_tag(const Tag& tag) {
  if (tag.closing) return "</" + tag.name + ">";
  std::string out = "<" + tag.name;
  for (const auto& attr : tag.attributes) {
    std::string name = attr.name;
    std::string value = attr.value.value_or("");
    if (name == "href") {
      const std::string target = decode_entities(value);
      if (!target.empty() && target[0] == '#') {
        out += " href=\"" + escape_attribute(target) + "\"";
        continue;
      }
      // Keep the destination visible for inspection but not followable.
      if (lower(target).find("script:") != std::string::npos) continue;
      name = "data-href";
      value = target;
    } else if (name == "style") {
      value = sanitize_css(value);
    } else if (name.rfind("aria-", 0) == 0 || name.rfind("data-", 0) == 0) {
      if (name == "data-href") continue;  // reserved for rewritten links
    } else if (!contains(kAllowedAttributes, name)) {
      continue;
    }
    if (attr.value || name == "data-href") {
      out += " " + name + "=\"" + escape_attribute(value) + "\"";
    } else {
      out += " " + name;
    }
  }
  if (tag.name == "a") out += " rel=\"noopener noreferrer\"";
  out += ">";
  return out;
}

}  // namespace

std::string sanitize_markup(std::string_view markup) {
  std::string out;
  out.reserve(markup.size());
  std::size_t i = 0;
  bool in_style = false;
  std::size_t style_start = 0;

  while (i < markup.size()) {
    if (in_style) {
      // Style content is raw text up to </style>.
      const std::string low = lower(markup.substr(i));
      const auto close = low.find("</style");
      const std::size_t stop = close == std::string::npos ? markup.size() : i + close;
      out += sanitize_css(markup.substr(style_start, stop - style_start));
      in_style = false;
      i = stop;
      if (close == std::string::npos) break;
      continue;
    }
    const char c = markup[i];
    if (c != '<') {
      out += c;
      ++i;
      continue;
    }
    if (markup.compare(i, 4, "<!--") == 0) {
      const auto end = markup.find("-->", i + 4);
      i = end == std::string_view::npos ? markup.size() : end + 3;
      continue;
    }
    if (i + 1 < markup.size() && (markup[i + 1] == '!' || markup[i + 1] == '?')) {
      // Doctype, CDATA and processing instructions carry nothing we render.
      const auto end = markup.find('>', i);
      i = end == std::string_view::npos ? markup.size() : end + 1;
      continue;
    }
    const auto tag = parse_tag(markup, i);
    if (!tag) {
      out += "&lt;";
      ++i;
      continue;
    }
    i = tag->end;

    if (contains(kDroppedWithContent, tag->name)) {
      if (!tag->closing && !tag->self_closing) {
        const std::string low = lower(markup.substr(i));
        const auto close = low.find("</" + tag->name);
        if (close == std::string::npos) {
          i = markup.size();
        } else {
          const auto gt = markup.find('>', i + close);
          i = gt == std::string_view::npos ? markup.size() : gt + 1;
        }
      }
      continue;
    }
    if (!contains(kAllowedTags, tag->name)) continue;  // unwrap: drop the tag, keep the text

    if (tag->name == "img" && !tag->closing) {
      // Images would be fetched from the sender's server; show the alt text instead.
      for (const auto& attr : tag->attributes) {
        if (attr.name == "alt" && attr.value && !attr.value->empty()) {
          out += "[image: " + escape_attribute(decode_entities(*attr.value)) + "]";
        }
      }
      continue;
    }
    out += render_tag(*tag);
    if (tag->name == "style" && !tag->closing && !tag->self_closing) {
      in_style = true;
      style_start = i;
    }
  }
  return out;
}

}  // namespace phishtrain::service
