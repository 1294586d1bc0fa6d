#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace vst::data {

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::string label;

  bool operator==(const ManifestEntry&) const = default;
};

// `relative_path<TAB>label` per line, UTF-8.
struct SampleManifest {
  std::filesystem::path directory;
  std::vector<ManifestEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  std::filesystem::path resolve(const ManifestEntry& entry) const { return directory / entry.path; }
};

// Throws IoError if unreadable and ConfigError on a malformed record (missing
// tab, empty label, absolute path or a path escaping the directory).
SampleManifest read_manifest(const std::filesystem::path& file);
SampleManifest parse_manifest(const std::string& text, const std::filesystem::path& directory);
std::string format_manifest(const SampleManifest& manifest);
void write_manifest(const std::filesystem::path& file, const SampleManifest& manifest);

}  // namespace vst::data
