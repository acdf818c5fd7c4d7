#include "cli/artifacts.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <memory>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "dsam/common/bytes.hpp"
#include "dsam/common/error.hpp"

namespace dsam::cli {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
    throw Error("sha256 failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

RunDir::RunDir(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error("cannot create output directory " + dir_.string() + ": " + ec.message());
  const fs::path lock = dir_ / kLockName;
  const int fd = ::open(lock.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw StateError("output directory " + dir_.string() + " is locked by another run (" + lock.string() + ")");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
  locked_ = true;
}

RunDir::~RunDir() {
  if (locked_) {
    std::error_code ec;
    fs::remove(dir_ / kLockName, ec);
  }
}

void RunDir::write(const std::string& name, std::string_view text) {
  write_text(dir_ / name, text);
  track(name);
}

void RunDir::write(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  write_file(dir_ / name, bytes);
  track(name);
}

void RunDir::track(const std::string& name) {
  if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
}

void RunDir::log(const std::string& line) { log_ += line + "\n"; }

void RunDir::finish() {
  write(kLogName, log_);
  std::vector<std::string> names = files_;
  std::sort(names.begin(), names.end());
  nlohmann::json files = nlohmann::json::array();
  for (const std::string& name : names) {
    const fs::path p = dir_ / name;
    files.push_back({{"path", name}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
  }
  write_text(dir_ / kManifestName, nlohmann::json{{"files", files}}.dump(2) + "\n");
}

}  // namespace dsam::cli
