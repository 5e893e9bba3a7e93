#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace seqcnn {

/// Malformed text input; the message carries the offending line/field.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Line-oriented `key = value` text with `[section]` / `[section N]` headers.
// `#` starts a comment. Keys before the first header belong to the
// unnamed root section.

struct KeyValueEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

class KeyValueSection {
 public:
  std::string name;                  // empty for the root section
  std::optional<std::size_t> index;  // the N in `[layer N]`
  std::size_t line = 0;
  std::vector<KeyValueEntry> entries;

  const KeyValueEntry* find(std::string_view key) const;
  bool has(std::string_view key) const { return find(key) != nullptr; }

  std::string get_string(std::string_view key) const;
  std::string get_string(std::string_view key, const std::string& fallback) const;
  std::uint64_t get_uint(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key, std::uint64_t fallback) const;
  double get_double(std::string_view key) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key) const;
  bool get_bool(std::string_view key, bool fallback) const;

  /// Throws ParseError naming the first key not in `allowed`.
  void reject_unknown(std::initializer_list<std::string_view> allowed) const;

  std::string where(std::string_view key) const;
};

class KeyValueDocument {
 public:
  static KeyValueDocument parse(std::string_view text);

  const KeyValueSection& root() const { return sections_.front(); }
  const std::vector<KeyValueSection>& sections() const { return sections_; }
  std::vector<const KeyValueSection*> named(std::string_view name) const;
  const KeyValueSection* first(std::string_view name) const;

 private:
  std::vector<KeyValueSection> sections_;
};

std::string format_double(double value);
std::uint64_t parse_uint(std::string_view text, const std::string& where);
double parse_double(std::string_view text, const std::string& where);
bool parse_bool(std::string_view text, const std::string& where);

std::string read_text_file(const std::string& path);

}  // namespace seqcnn
