#include "sbm/manifest.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <stdexcept>

namespace sbm {
namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string round_trip(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

OutputDir::OutputDir(fs::path target) : target_(std::move(target)) {
  if (target_.filename().empty()) target_ = target_.parent_path();
  const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
  fs::create_directories(parent);
  staging_ = parent / ("." + target_.filename().string() + ".staging-" + std::to_string(::getpid()));
  fs::remove_all(staging_);
  fs::create_directory(staging_);
}

OutputDir::~OutputDir() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void OutputDir::write(const std::string& name, std::string_view content) {
  if (name == "manifest.json") throw std::invalid_argument("manifest.json is reserved");
  std::ofstream out(staging_ / name, std::ios::binary);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("cannot write " + (staging_ / name).string());
  records_.push_back({name, sha256_hex(content), content.size()});
}

void OutputDir::commit(nlohmann::json manifest) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& r : records_) files.push_back({{"file", r.file}, {"sha256", r.sha256}, {"bytes", r.bytes}});
  manifest["outputs"] = files;
  {
    std::ofstream out(staging_ / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write manifest");
  }
  // A previous run at the target is moved aside first so the swap never leaves a half-written directory.
  fs::path old;
  if (fs::exists(target_)) {
    old = staging_;
    old += ".old";
    fs::remove_all(old);
    fs::rename(target_, old);
  }
  fs::rename(staging_, target_);
  if (!old.empty()) fs::remove_all(old);
  committed_ = true;
}

}  // namespace sbm
