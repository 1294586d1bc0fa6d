#include "vst/data/dataset.hpp"

#include "vst/errors.hpp"

namespace vst::data {

LoadedDataset load_dataset(const SampleManifest& manifest, const LabelCodec& codec) {
  LoadedDataset out;
  out.samples.reserve(manifest.size());
  for (const auto& e : manifest.entries) {
    try {
      out.samples.push_back({e.path, e.label, codec.encode(e.label), read_pnm(manifest.resolve(e))});
    } catch (const IoError&) {
      out.missing.push_back(e.path);
    }
  }
  return out;
}

}  // namespace vst::data
