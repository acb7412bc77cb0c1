#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace sbm {

std::string sha256_hex(std::string_view bytes);

/// Shortest decimal text that parses back to the same double.
std::string round_trip(double v);

struct OutputRecord {
  std::string file;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

/// Collects the files of one run in a staging directory next to the target and moves the
/// whole directory into place on commit. Without commit the staging directory is removed.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path target);
  ~OutputDir();
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  void write(const std::string& name, std::string_view content);
  const std::vector<OutputRecord>& records() const noexcept { return records_; }
  /// Writes manifest.json (with the output inventory filled in) and renames the staging directory
  /// onto the target, replacing a previous run there.
  void commit(nlohmann::json manifest);
  const std::filesystem::path& target() const noexcept { return target_; }

 private:
  std::filesystem::path target_;
  std::filesystem::path staging_;
  std::vector<OutputRecord> records_;
  bool committed_ = false;
};

/// UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace sbm
