#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace uscore {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Record of one run: enough to tell whether two runs saw the same inputs and
// produced the same outputs. Contains nothing time- or host-dependent.
struct RunManifest {
  struct FileEntry {
    std::string path;
    std::string sha256;
  };

  std::string command;
  std::vector<std::string> arguments;        // execution-only flags (--workers) excluded
  std::map<std::string, std::string> config;  // effective settings
  std::optional<std::uint64_t> seed;
  std::vector<FileEntry> inputs;
  std::vector<FileEntry> outputs;  // paths relative to the run directory when one is used

  void add_input(const std::filesystem::path& path);
  // Records `path`, shown relative to `base` when given.
  void add_output(const std::filesystem::path& path, const std::filesystem::path& base = {});
  std::string config_hash() const;
  std::string to_json() const;
  // Writes to a temporary sibling and renames it into place.
  void write(const std::filesystem::path& path) const;
};

}  // namespace uscore
