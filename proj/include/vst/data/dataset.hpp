#pragma once

#include <string>
#include <vector>

#include "vst/data/codec.hpp"
#include "vst/data/image.hpp"
#include "vst/data/manifest.hpp"

namespace vst::data {

struct Sample {
  std::string path;
  std::string label;
  std::vector<int> target;  // encoded, length t
  Image image;              // as stored on disk
};

struct LoadedDataset {
  std::vector<Sample> samples;
  std::vector<std::string> missing;  // manifest paths that could not be read
};

// Reads every image of the manifest. Unreadable images are reported in
// `missing` instead of throwing.
LoadedDataset load_dataset(const SampleManifest& manifest, const LabelCodec& codec);

}  // namespace vst::data
