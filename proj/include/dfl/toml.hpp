#pragma once

#include <map>
#include <string>
#include <vector>

#include "dfl/errors.hpp"

namespace dfl {

/// Minimal TOML subset: [sections], key = value with strings, numbers,
/// booleans, and (nested) arrays. Covers the config surface of the CLI.
struct TomlValue {
  enum class Kind { String, Number, Bool, Array };
  Kind kind = Kind::String;
  std::string str;
  double num = 0.0;
  bool boolean = false;
  std::vector<TomlValue> array;
};

class TomlDoc {
 public:
  static TomlDoc parse(const std::string& text);
  static TomlDoc parse_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  long get_int(const std::string& section, const std::string& key,
               long fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  std::vector<double> get_doubles(const std::string& section,
                                  const std::string& key) const;
  std::vector<long> get_ints(const std::string& section,
                             const std::string& key) const;
  /// Arrays of two-element arrays, e.g. encoder = [[16,3],[8,3]].
  std::vector<std::pair<std::size_t, std::size_t>> get_pairs(
      const std::string& section, const std::string& key) const;

  const TomlValue* find(const std::string& section, const std::string& key) const;

 private:
  std::map<std::string, std::map<std::string, TomlValue>> sections_;
};

}  // namespace dfl
