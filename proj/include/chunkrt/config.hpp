#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chunkrt {

/// Sectioned key-value text:
///
///   # comment
///   [section optional-label]
///   key = value
///
/// Used for scenario configs and kinematic model files. Every entry remembers
/// its line so validation errors can point back into the file.
class ConfigDoc {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };
  struct Section {
    std::string name;
    std::string label;
    int line = 0;
    std::vector<std::pair<std::string, Entry>> entries;

    const Entry* find(const std::string& key) const;
  };

  static ConfigDoc parse(std::istream& is, const std::string& source);
  static ConfigDoc load(const std::string& path);

  const std::string& source() const { return source_; }
  const std::vector<Section>& sections() const { return sections_; }
  const Section* section(const std::string& name) const;
  std::vector<const Section*> sections_named(const std::string& name) const;

  // Typed accessors. `require_*` throw ParseError naming the line of the
  // section (missing key) or of the entry (malformed value).
  std::string require_string(const Section& s, const std::string& key) const;
  double require_double(const Section& s, const std::string& key) const;
  long require_int(const Section& s, const std::string& key) const;
  std::vector<double> require_doubles(const Section& s, const std::string& key) const;

  std::string get_string(const Section& s, const std::string& key, const std::string& fallback) const;
  double get_double(const Section& s, const std::string& key, double fallback) const;
  long get_int(const Section& s, const std::string& key, long fallback) const;
  std::optional<std::vector<double>> get_doubles(const Section& s, const std::string& key) const;
  std::vector<std::string> get_list(const Section& s, const std::string& key) const;

  [[noreturn]] void fail(int line, const std::string& msg) const;

  /// FNV-1a over the raw text, for provenance records.
  std::uint64_t content_hash() const { return hash_; }

 private:
  std::string source_;
  std::vector<Section> sections_;
  std::uint64_t hash_ = 0;
};

std::uint64_t fnv1a64(const std::string& data);

}  // namespace chunkrt
