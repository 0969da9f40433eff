#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace snapspec {

inline constexpr const char* kToolVersion = "0.1.0";

// Ordered key=value record of a command invocation. Keys are unique; setting
// an existing key replaces its value in place.
class RunManifest {
 public:
  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  bool contains(const std::string& key) const { return get(key).has_value(); }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(const std::filesystem::path& path) const;
  // Blank lines and lines starting with '#' are ignored. Throws FormatError on
  // a line without '=' or an empty key.
  static RunManifest read(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// "<artifact>.manifest"
std::filesystem::path manifest_path(const std::filesystem::path& artifact);

}  // namespace snapspec
