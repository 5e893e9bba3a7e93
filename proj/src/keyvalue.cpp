#include "seqcnn/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace seqcnn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool valid_identifier(std::string_view s) {
  if (s.empty()) return false;
  for (char ch : s) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                    ch == '_' || ch == '-' || ch == '.';
    if (!ok) return false;
  }
  return true;
}

}  // namespace

const KeyValueEntry* KeyValueSection::find(std::string_view key) const {
  for (const auto& e : entries) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

std::string KeyValueSection::where(std::string_view key) const {
  std::ostringstream os;
  const auto* e = find(key);
  os << "line " << (e ? e->line : line) << ": ";
  if (!name.empty()) {
    os << '[' << name;
    if (index) os << ' ' << *index;
    os << "] ";
  }
  os << "field '" << key << "'";
  return os.str();
}

std::string KeyValueSection::get_string(std::string_view key) const {
  const auto* e = find(key);
  if (e == nullptr) throw ParseError(where(key) + ": missing");
  return e->value;
}

std::string KeyValueSection::get_string(std::string_view key, const std::string& fallback) const {
  const auto* e = find(key);
  return e ? e->value : fallback;
}

std::uint64_t KeyValueSection::get_uint(std::string_view key) const {
  return parse_uint(get_string(key), where(key));
}

std::uint64_t KeyValueSection::get_uint(std::string_view key, std::uint64_t fallback) const {
  return has(key) ? get_uint(key) : fallback;
}

double KeyValueSection::get_double(std::string_view key) const {
  return parse_double(get_string(key), where(key));
}

double KeyValueSection::get_double(std::string_view key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool KeyValueSection::get_bool(std::string_view key) const {
  return parse_bool(get_string(key), where(key));
}

bool KeyValueSection::get_bool(std::string_view key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

void KeyValueSection::reject_unknown(std::initializer_list<std::string_view> allowed) const {
  for (const auto& e : entries) {
    bool known = false;
    for (auto a : allowed) known = known || (a == e.key);
    if (!known) throw ParseError(where(e.key) + ": unknown key");
  }
}

KeyValueDocument KeyValueDocument::parse(std::string_view text) {
  KeyValueDocument doc;
  doc.sections_.emplace_back();
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string_view line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ParseError("line " + std::to_string(line_no) + ": unterminated section header");
      }
      const std::string_view inner = trim(line.substr(1, line.size() - 2));
      KeyValueSection sec;
      sec.line = line_no;
      const auto space = inner.find_first_of(" \t");
      sec.name = std::string(trim(inner.substr(0, space)));
      if (space != std::string_view::npos) {
        const auto idx = trim(inner.substr(space));
        sec.index = parse_uint(idx, "line " + std::to_string(line_no) + ": section index");
      }
      if (!valid_identifier(sec.name)) {
        throw ParseError("line " + std::to_string(line_no) + ": invalid section name");
      }
      doc.sections_.push_back(std::move(sec));
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (!valid_identifier(key)) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid key '" + key + "'");
    }
    auto& sec = doc.sections_.back();
    if (sec.has(key)) {
      throw ParseError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    sec.entries.push_back({key, value, line_no});
  }
  return doc;
}

std::vector<const KeyValueSection*> KeyValueDocument::named(std::string_view name) const {
  std::vector<const KeyValueSection*> out;
  for (const auto& s : sections_) {
    if (s.name == name) out.push_back(&s);
  }
  return out;
}

const KeyValueSection* KeyValueDocument::first(std::string_view name) const {
  for (const auto& s : sections_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::string format_double(double value) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, r.ptr);
}

std::uint64_t parse_uint(std::string_view text, const std::string& where) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || text.empty()) {
    // Accept integral values written in scientific notation, e.g. 150e6.
    double d = 0.0;
    const auto rd = std::from_chars(text.data(), text.data() + text.size(), d);
    if (rd.ec == std::errc() && rd.ptr == text.data() + text.size() && d >= 0 && d < 1.8e19 &&
        static_cast<double>(static_cast<std::uint64_t>(d)) == d) {
      return static_cast<std::uint64_t>(d);
    }
    throw ParseError(where + ": expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

double parse_double(std::string_view text, const std::string& where) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || text.empty()) {
    throw ParseError(where + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view text, const std::string& where) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ParseError(where + ": expected true/false, got '" + std::string(text) + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace seqcnn
