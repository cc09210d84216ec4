#include "chunkrt/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "chunkrt/errors.hpp"

namespace chunkrt {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_values(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

const ConfigDoc::Entry* ConfigDoc::Section::find(const std::string& key) const {
  for (const auto& [k, e] : entries)
    if (k == key) return &e;
  return nullptr;
}

ConfigDoc ConfigDoc::parse(std::istream& is, const std::string& source) {
  ConfigDoc doc;
  doc.source_ = source;
  std::stringstream raw;
  raw << is.rdbuf();
  const std::string text = raw.str();
  doc.hash_ = fnv1a64(text);

  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(source, lineno, "unterminated section header");
      const std::string inner = trim(line.substr(1, line.size() - 2));
      if (inner.empty()) throw ParseError(source, lineno, "empty section name");
      Section s;
      const auto sp = inner.find_first_of(" \t");
      s.name = inner.substr(0, sp);
      if (sp != std::string::npos) s.label = trim(inner.substr(sp));
      s.line = lineno;
      doc.sections_.push_back(std::move(s));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected 'key = value'");
    if (doc.sections_.empty()) throw ParseError(source, lineno, "entry outside of any section");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(source, lineno, "empty key");
    auto& sec = doc.sections_.back();
    if (sec.find(key)) throw ParseError(source, lineno, "duplicate key '" + key + "'");
    sec.entries.emplace_back(key, Entry{trim(line.substr(eq + 1)), lineno});
  }
  if (doc.sections_.empty()) throw ParseError(source, lineno == 0 ? 1 : lineno, "no sections found");
  return doc;
}

ConfigDoc ConfigDoc::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FileNotFound(path);
  return parse(is, path);
}

const ConfigDoc::Section* ConfigDoc::section(const std::string& name) const {
  for (const auto& s : sections_)
    if (s.name == name) return &s;
  return nullptr;
}

std::vector<const ConfigDoc::Section*> ConfigDoc::sections_named(const std::string& name) const {
  std::vector<const Section*> out;
  for (const auto& s : sections_)
    if (s.name == name) out.push_back(&s);
  return out;
}

void ConfigDoc::fail(int line, const std::string& msg) const { throw ParseError(source_, line, msg); }

std::string ConfigDoc::require_string(const Section& s, const std::string& key) const {
  const Entry* e = s.find(key);
  if (!e) fail(s.line, "section [" + s.name + "] is missing '" + key + "'");
  return e->value;
}

double ConfigDoc::require_double(const Section& s, const std::string& key) const {
  const Entry* e = s.find(key);
  if (!e) fail(s.line, "section [" + s.name + "] is missing '" + key + "'");
  double v;
  if (!parse_double(e->value, v)) fail(e->line, "'" + key + "' is not a number");
  return v;
}

long require_int_impl(const ConfigDoc& doc, const ConfigDoc::Entry& e, const std::string& key) {
  long v;
  auto [p, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (ec != std::errc() || p != e.value.data() + e.value.size())
    doc.fail(e.line, "'" + key + "' is not an integer");
  return v;
}

long ConfigDoc::require_int(const Section& s, const std::string& key) const {
  const Entry* e = s.find(key);
  if (!e) fail(s.line, "section [" + s.name + "] is missing '" + key + "'");
  return require_int_impl(*this, *e, key);
}

std::vector<double> ConfigDoc::require_doubles(const Section& s, const std::string& key) const {
  auto v = get_doubles(s, key);
  if (!v) fail(s.line, "section [" + s.name + "] is missing '" + key + "'");
  return *v;
}

std::string ConfigDoc::get_string(const Section& s, const std::string& key,
                                  const std::string& fallback) const {
  const Entry* e = s.find(key);
  return e ? e->value : fallback;
}

double ConfigDoc::get_double(const Section& s, const std::string& key, double fallback) const {
  return s.find(key) ? require_double(s, key) : fallback;
}

long ConfigDoc::get_int(const Section& s, const std::string& key, long fallback) const {
  const Entry* e = s.find(key);
  return e ? require_int_impl(*this, *e, key) : fallback;
}

std::optional<std::vector<double>> ConfigDoc::get_doubles(const Section& s, const std::string& key) const {
  const Entry* e = s.find(key);
  if (!e) return std::nullopt;
  std::vector<double> out;
  for (const auto& tok : split_values(e->value)) {
    double v;
    if (!parse_double(tok, v)) fail(e->line, "'" + key + "' has a non-numeric element '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> ConfigDoc::get_list(const Section& s, const std::string& key) const {
  const Entry* e = s.find(key);
  return e ? split_values(e->value) : std::vector<std::string>{};
}

}  // namespace chunkrt
