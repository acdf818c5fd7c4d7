#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dsam::cli {

/// Flat "key = value" configuration over a fixed schema. Every key has a
/// default; unknown keys raise ConfigError naming the token.
class RunConfig {
 public:
  RunConfig();

  /// Lines are "key = value"; '#' starts a comment; blank lines are skipped.
  void load_file(const std::filesystem::path& path);
  void parse(const std::string& text, const std::string& origin);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& text(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;  ///< non-negative integer
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;  ///< comma-separated
  std::vector<double> reals(const std::string& key) const;
  std::vector<std::string> words(const std::string& key) const;

  /// Effective configuration, one "key = value" per line in key order.
  std::string echo() const;

  struct Entry {
    std::string value;
    std::string doc;
  };
  const std::map<std::string, Entry>& entries() const { return values_; }

 private:
  std::map<std::string, Entry> values_;
};

}  // namespace dsam::cli
