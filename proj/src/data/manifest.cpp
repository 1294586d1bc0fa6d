#include "vst/data/manifest.hpp"

#include "vst/data/image.hpp"
#include "vst/errors.hpp"

namespace vst::data {

namespace {

void validate_entry(const ManifestEntry& e, std::size_t line) {
  const std::string where = "manifest line " + std::to_string(line) + ": ";
  if (e.path.empty()) throw ConfigError(where + "empty path");
  if (e.label.empty()) throw ConfigError(where + "empty label");
  if (e.label.find('\t') != std::string::npos || e.label.find('\n') != std::string::npos)
    throw ConfigError(where + "label contains a tab or newline");
  const std::filesystem::path p(e.path);
  if (p.is_absolute()) throw ConfigError(where + "absolute path '" + e.path + "'");
  for (const auto& part : p)
    if (part == "..") throw ConfigError(where + "path escapes the manifest directory");
}

}  // namespace

SampleManifest parse_manifest(const std::string& text, const std::filesystem::path& directory) {
  SampleManifest m{directory, {}};
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ConfigError("manifest line " + std::to_string(line_no) + ": missing tab");
    ManifestEntry e{line.substr(0, tab), line.substr(tab + 1)};
    validate_entry(e, line_no);
    m.entries.push_back(std::move(e));
  }
  return m;
}

SampleManifest read_manifest(const std::filesystem::path& file) {
  return parse_manifest(read_file(file), file.parent_path());
}

std::string format_manifest(const SampleManifest& manifest) {
  std::string out;
  std::size_t line = 0;
  for (const auto& e : manifest.entries) {
    validate_entry(e, ++line);
    out += e.path;
    out += '\t';
    out += e.label;
    out += '\n';
  }
  return out;
}

void write_manifest(const std::filesystem::path& file, const SampleManifest& manifest) {
  write_file(file, format_manifest(manifest));
}

}  // namespace vst::data
