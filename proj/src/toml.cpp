#include "dfl/toml.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

namespace dfl {
namespace {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  std::size_t line;

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  void skip_ws() {
    while (!done() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
  }
};

TomlValue parse_value(Cursor& c);

TomlValue parse_array(Cursor& c) {
  TomlValue v;
  v.kind = TomlValue::Kind::Array;
  ++c.pos;  // consume '['
  c.skip_ws();
  while (!c.done() && c.peek() != ']') {
    v.array.push_back(parse_value(c));
    c.skip_ws();
    if (!c.done() && c.peek() == ',') {
      ++c.pos;
      c.skip_ws();
    }
  }
  if (c.done()) c.fail("unterminated array");
  ++c.pos;  // consume ']'
  return v;
}

TomlValue parse_value(Cursor& c) {
  c.skip_ws();
  if (c.done()) c.fail("missing value");
  char ch = c.peek();
  if (ch == '[') return parse_array(c);
  TomlValue v;
  if (ch == '"') {
    ++c.pos;
    v.kind = TomlValue::Kind::String;
    while (!c.done() && c.peek() != '"') {
      v.str.push_back(c.peek());
      ++c.pos;
    }
    if (c.done()) c.fail("unterminated string");
    ++c.pos;
    return v;
  }
  std::string token;
  while (!c.done() && c.peek() != ',' && c.peek() != ']' && c.peek() != '#' &&
         c.peek() != ' ' && c.peek() != '\t') {
    token.push_back(c.peek());
    ++c.pos;
  }
  if (token == "true" || token == "false") {
    v.kind = TomlValue::Kind::Bool;
    v.boolean = token == "true";
    return v;
  }
  try {
    std::size_t used = 0;
    v.num = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument("trailing");
    v.kind = TomlValue::Kind::Number;
    return v;
  } catch (const std::exception&) {
    c.fail("cannot parse value '" + token + "'");
  }
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

TomlDoc TomlDoc::parse(const std::string& text) {
  TomlDoc doc;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = trim(strip_comment(text.substr(start, end - start)));
    ++line_no;
    start = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      doc.sections_[section];
      if (end == text.size()) break;
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string rest = trim(line.substr(eq + 1));
    Cursor c{rest, 0, line_no};
    doc.sections_[section][key] = parse_value(c);
    if (end == text.size()) break;
  }
  return doc;
}

TomlDoc TomlDoc::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse(text);
}

const TomlValue* TomlDoc::find(const std::string& section,
                               const std::string& key) const {
  auto sit = sections_.find(section);
  if (sit == sections_.end()) return nullptr;
  auto kit = sit->second.find(key);
  if (kit == sit->second.end()) return nullptr;
  return &kit->second;
}

bool TomlDoc::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string TomlDoc::get_string(const std::string& section, const std::string& key,
                                const std::string& fallback) const {
  const TomlValue* v = find(section, key);
  if (!v) return fallback;
  if (v->kind != TomlValue::Kind::String) {
    throw ConfigError("[" + section + "]." + key + " must be a string");
  }
  return v->str;
}

double TomlDoc::get_double(const std::string& section, const std::string& key,
                           double fallback) const {
  const TomlValue* v = find(section, key);
  if (!v) return fallback;
  if (v->kind != TomlValue::Kind::Number) {
    throw ConfigError("[" + section + "]." + key + " must be a number");
  }
  return v->num;
}

long TomlDoc::get_int(const std::string& section, const std::string& key,
                      long fallback) const {
  const TomlValue* v = find(section, key);
  if (!v) return fallback;
  if (v->kind != TomlValue::Kind::Number || v->num != std::floor(v->num)) {
    throw ConfigError("[" + section + "]." + key + " must be an integer");
  }
  return static_cast<long>(v->num);
}

bool TomlDoc::get_bool(const std::string& section, const std::string& key,
                       bool fallback) const {
  const TomlValue* v = find(section, key);
  if (!v) return fallback;
  if (v->kind != TomlValue::Kind::Bool) {
    throw ConfigError("[" + section + "]." + key + " must be true or false");
  }
  return v->boolean;
}

std::vector<double> TomlDoc::get_doubles(const std::string& section,
                                         const std::string& key) const {
  const TomlValue* v = find(section, key);
  if (!v) return {};
  if (v->kind != TomlValue::Kind::Array) {
    throw ConfigError("[" + section + "]." + key + " must be an array");
  }
  std::vector<double> out;
  for (const auto& e : v->array) {
    if (e.kind != TomlValue::Kind::Number) {
      throw ConfigError("[" + section + "]." + key + " must hold numbers");
    }
    out.push_back(e.num);
  }
  return out;
}

std::vector<long> TomlDoc::get_ints(const std::string& section,
                                    const std::string& key) const {
  std::vector<long> out;
  for (double v : get_doubles(section, key)) out.push_back(static_cast<long>(v));
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> TomlDoc::get_pairs(
    const std::string& section, const std::string& key) const {
  const TomlValue* v = find(section, key);
  if (!v) return {};
  if (v->kind != TomlValue::Kind::Array) {
    throw ConfigError("[" + section + "]." + key + " must be an array of pairs");
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& e : v->array) {
    if (e.kind != TomlValue::Kind::Array || e.array.size() != 2 ||
        e.array[0].kind != TomlValue::Kind::Number ||
        e.array[1].kind != TomlValue::Kind::Number) {
      throw ConfigError("[" + section + "]." + key +
                        " must hold [count, size] pairs");
    }
    out.emplace_back(static_cast<std::size_t>(e.array[0].num),
                     static_cast<std::size_t>(e.array[1].num));
  }
  return out;
}

}  // namespace dfl
