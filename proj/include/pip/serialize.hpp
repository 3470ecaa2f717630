#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Single-file container: a plain-text manifest (ordered key=value records)
// followed by named little-endian IEEE-754 single-precision arrays, with a
// trailing checksum so truncation and bit rot are detected on load.

namespace pip {

class ArchiveError : public std::runtime_error {
 public:
  explicit ArchiveError(const std::string& what) : std::runtime_error(what) {}
};

struct NamedArrays {
  std::vector<std::pair<std::string, std::string>> manifest;      // ordered
  std::vector<std::pair<std::string, std::vector<float>>> arrays; // ordered

  void set_meta(const std::string& key, const std::string& value);
  // Null if absent.
  const std::string* meta(const std::string& key) const;
  const std::string& meta_required(const std::string& key) const;

  void add_array(const std::string& name, const float* data, std::size_t count);
  void add_array(const std::string& name, std::vector<float> values);
  const std::vector<float>* array(const std::string& name) const;
  const std::vector<float>& array_required(const std::string& name) const;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

// Writes to a temporary sibling file, then renames over the destination.
void save_named_arrays(const std::filesystem::path& path, const NamedArrays& data);

// Throws ArchiveError on missing file, version mismatch, truncation, or
// checksum failure; the message names the path and the failure.
NamedArrays load_named_arrays(const std::filesystem::path& path);

}  // namespace pip
