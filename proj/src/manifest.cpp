#include "uscore/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "binio.hpp"
#include "uscore/error.hpp"
#include "uscore/version.hpp"

namespace uscore {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(detail::read_all(path)); }

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.push_back({path.generic_string(), sha256_file(path)});
}

void RunManifest::add_output(const std::filesystem::path& path, const std::filesystem::path& base) {
  const auto shown = base.empty() ? path : std::filesystem::relative(path, base);
  outputs.push_back({shown.generic_string(), sha256_file(path)});
}

std::string RunManifest::config_hash() const {
  return sha256_hex(nlohmann::json(config).dump());
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["toolkit_version"] = kVersion;
  j["command"] = command;
  j["arguments"] = arguments;
  j["config"] = nlohmann::json(config);
  j["config_sha256"] = config_hash();
  j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
  j["hash_algorithm"] = "sha256";
  const auto files = [](const std::vector<FileEntry>& entries) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& e : entries) a.push_back({{"path", e.path}, {"sha256", e.sha256}});
    return a;
  };
  j["inputs"] = files(inputs);
  j["outputs"] = files(outputs);
  return j.dump(2) + "\n";
}

void RunManifest::write(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  detail::write_all(tmp, to_json());
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move manifest into place at " + path.string() + ": " + ec.message());
}

}  // namespace uscore
