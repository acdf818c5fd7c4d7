#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dsam::cli {

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// An output directory owned by one run. Creating it takes the lock file
/// `.dsam.lock` (exclusive create); a second concurrent run on the same
/// directory fails with StateError. The destructor releases the lock.
class RunDir {
 public:
  static constexpr const char* kLockName = ".dsam.lock";
  static constexpr const char* kManifestName = "manifest.json";
  static constexpr const char* kLogName = "log.txt";

  explicit RunDir(std::filesystem::path dir);
  ~RunDir();
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;

  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path file(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, std::string_view text);
  void write(const std::string& name, const std::vector<std::uint8_t>& bytes);
  /// Registers a file some other routine wrote into the directory.
  void track(const std::string& name);

  /// Appends a line to the run log. No timestamps, so logs are reproducible.
  void log(const std::string& line);

  /// Writes log.txt and manifest.json (files sorted by name, each with its
  /// byte size and sha256). The manifest does not list itself.
  void finish();

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
  std::string log_;
  bool locked_ = false;
};

}  // namespace dsam::cli
