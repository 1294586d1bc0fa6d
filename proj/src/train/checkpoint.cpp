#include "vst/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "vst/data/image.hpp"
#include "vst/errors.hpp"
#include "vst/model_json.hpp"

namespace vst::train {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <typename T>
void append_values(std::string& out, std::span<const T> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * sizeof(T));
  std::memcpy(out.data() + start, values.data(), values.size() * sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = start; i < out.size(); i += sizeof(T)) std::reverse(out.begin() + i, out.begin() + i + sizeof(T));
  }
}

// Decodes little-endian raw values of the stored dtype into T.
template <typename T>
std::vector<T> decode_values(std::string_view raw, const std::string& dtype) {
  auto convert = [&](auto tag) {
    using S = decltype(tag);
    if (raw.size() % sizeof(S) != 0) throw FormatError("checkpoint: byte length not a multiple of the dtype size");
    std::vector<T> out(raw.size() / sizeof(S));
    for (std::size_t i = 0; i < out.size(); ++i) {
      char buf[sizeof(S)];
      std::memcpy(buf, raw.data() + i * sizeof(S), sizeof(S));
      if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(S));
      S v;
      std::memcpy(&v, buf, sizeof(S));
      out[i] = static_cast<T>(v);
    }
    return out;
  };
  if (dtype == "f32") return convert(float{});
  if (dtype == "f64") return convert(double{});
  throw FormatError("checkpoint: unknown dtype '" + dtype + "'");
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  bool done() const { return pos_ >= bytes_.size(); }

  std::string line() {
    const auto nl = bytes_.find('\n', pos_);
    if (nl == std::string::npos) throw FormatError("checkpoint: truncated (unterminated line)");
    std::string out = bytes_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return out;
  }

  std::string_view block(std::size_t n) {
    if (bytes_.size() - pos_ < n + 1) throw FormatError("checkpoint: truncated data block");
    std::string_view out(bytes_.data() + pos_, n);
    pos_ += n;
    if (bytes_[pos_++] != '\n') throw FormatError("checkpoint: data block not terminated");
    return out;
  }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::string> split(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::int64_t to_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const auto v = std::stoll(s, &used);
    if (used != s.size()) throw FormatError("checkpoint: bad integer '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("checkpoint: bad integer '" + s + "'");
  }
}

double to_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::logic_error&) {
    throw FormatError("checkpoint: bad number '" + s + "'");
  }
}

struct RawParam {
  std::string name, dtype;
  std::size_t slot = 0;
  ad::Shape shape;
  std::string_view raw;
};

struct RawCheckpoint {
  nlohmann::json header;
  ModelConfig config;
  std::vector<RawParam> params;
  std::vector<std::pair<std::string, std::string>> aliases;
  bool has_optimizer = false;
  std::int64_t steps = 0;
  AdamConfig adam;
  std::vector<std::tuple<std::size_t, char, std::string, std::string_view>> moments;
};

std::pair<nlohmann::json, ModelConfig> parse_header(Reader& r) {
  if (r.line() != kCheckpointMagic) throw FormatError("checkpoint: not a VSTCKPT v1 file (bad header or version)");
  const auto words = split(r.line());
  if (words.size() != 2 || words[0] != "config") throw FormatError("checkpoint: missing config block");
  const auto text = r.block(static_cast<std::size_t>(to_int(words[1])));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: config block is not valid JSON: ") + e.what());
  }
  if (!header.contains("model")) throw FormatError("checkpoint: config block has no model section");
  ModelConfig cfg;
  try {
    cfg = apply_json(ModelConfig{}, header["model"]);
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid model config: ") + e.what());
  }
  return {header, cfg};
}

// `bytes` must outlive the result (it holds views into the reader).
RawCheckpoint parse(Reader& r) {
  RawCheckpoint c;
  std::tie(c.header, c.config) = parse_header(r);
  bool ended = false;
  while (!ended) {
    const auto words = split(r.line());
    if (words.empty()) throw FormatError("checkpoint: empty record line");
    const auto& kind = words[0];
    if (kind == "param") {
      if (words.size() < 6) throw FormatError("checkpoint: malformed param record");
      RawParam p;
      p.name = words[1];
      p.dtype = words[2];
      p.slot = static_cast<std::size_t>(to_int(words[3]));
      const auto rank = to_int(words[4]);
      if (rank < 0 || static_cast<std::size_t>(rank) + 6 != words.size()) throw FormatError("checkpoint: bad param rank");
      for (std::int64_t i = 0; i < rank; ++i) p.shape.push_back(to_int(words[5 + static_cast<std::size_t>(i)]));
      p.raw = r.block(static_cast<std::size_t>(to_int(words.back())));
      c.params.push_back(std::move(p));
    } else if (kind == "alias") {
      if (words.size() != 3) throw FormatError("checkpoint: malformed alias record");
      c.aliases.emplace_back(words[1], words[2]);
    } else if (kind == "adam") {
      if (words.size() != 5) throw FormatError("checkpoint: malformed optimizer record");
      c.has_optimizer = true;
      c.steps = to_int(words[1]);
      c.adam = {to_double(words[2]), to_double(words[3]), to_double(words[4])};
    } else if (kind == "moment") {
      if (words.size() != 5 || (words[2] != "m" && words[2] != "v")) throw FormatError("checkpoint: malformed moment record");
      const auto slot = static_cast<std::size_t>(to_int(words[1]));
      const auto raw = r.block(static_cast<std::size_t>(to_int(words[4])));
      c.moments.emplace_back(slot, words[2][0], words[3], raw);
    } else if (kind == "end") {
      ended = true;
    } else {
      throw FormatError("checkpoint: unknown record '" + kind + "'");
    }
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes after end record");
  return c;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const VstModel<T>& model, const Adam<T>* optimizer,
                     const nlohmann::json& metadata) {
  nlohmann::json header{{"model", to_json(model.config())}, {"dtype", dtype_name<T>()}, {"metadata", metadata}};
  const std::string config = header.dump(2);
  std::string out = std::string(kCheckpointMagic) + "\n";
  out += "config " + std::to_string(config.size()) + "\n" + config + "\n";

  const auto& store = model.parameters();
  std::vector<std::string> slot_names;
  for (const auto& p : store.entries()) {
    if (p.name.find_first_of(" \t\n") != std::string::npos) throw ContractError("parameter name with whitespace");
    if (p.alias) continue;
    slot_names.push_back(p.name);
    out += "param " + p.name + " " + dtype_name<T>() + " " + std::to_string(p.slot) + " " +
           std::to_string(p.tensor.shape().size());
    for (auto s : p.tensor.shape()) out += " " + std::to_string(s);
    out += " " + std::to_string(p.tensor.numel() * static_cast<std::int64_t>(sizeof(T))) + "\n";
    append_values<T>(out, p.tensor.data());
    out += "\n";
  }
  for (const auto& p : store.entries())
    if (p.alias) out += "alias " + p.name + " " + slot_names.at(p.slot) + "\n";

  if (optimizer) {
    const auto& c = optimizer->config();
    std::ostringstream os;
    os.precision(17);
    os << "adam " << optimizer->steps() << " " << c.beta1 << " " << c.beta2 << " " << c.eps << "\n";
    out += os.str();
    for (std::size_t slot = 0; slot < optimizer->first_moments().size(); ++slot) {
      for (char which : {'m', 'v'}) {
        const auto& buf = which == 'm' ? optimizer->first_moments()[slot] : optimizer->second_moments()[slot];
        out += "moment " + std::to_string(slot) + " " + which + " " + dtype_name<T>() + " " +
               std::to_string(buf.size() * sizeof(T)) + "\n";
        append_values<T>(out, std::span<const T>(buf));
        out += "\n";
      }
    }
  }
  out += "end\n";

  auto tmp = path;
  tmp += ".tmp";
  data::write_file(tmp, out);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  Reader reader(data::read_file(path));
  const RawCheckpoint raw = parse(reader);

  auto model = std::make_unique<VstModel<T>>(raw.config);
  auto& store = model->parameters();
  const auto unique = store.unique();
  if (raw.params.size() != unique.size()) {
    throw FormatError("checkpoint: " + std::to_string(raw.params.size()) + " parameter records, model has " +
                      std::to_string(unique.size()));
  }
  // Decode everything before touching the model.
  std::vector<std::vector<T>> values;
  for (std::size_t i = 0; i < raw.params.size(); ++i) {
    const auto& rp = raw.params[i];
    const auto& mp = unique[i];
    if (rp.name != mp.name || rp.slot != mp.slot) throw FormatError("checkpoint: unexpected parameter '" + rp.name + "'");
    if (rp.shape != mp.tensor.shape()) {
      throw FormatError("checkpoint: shape mismatch for '" + rp.name + "': " + ad::shape_str(rp.shape) + " vs " +
                        ad::shape_str(mp.tensor.shape()));
    }
    values.push_back(decode_values<T>(rp.raw, rp.dtype));
    if (static_cast<std::int64_t>(values.back().size()) != mp.tensor.numel())
      throw FormatError("checkpoint: value count mismatch for '" + rp.name + "'");
  }
  std::size_t model_aliases = 0;
  for (const auto& p : store.entries()) model_aliases += p.alias;
  if (raw.aliases.size() != model_aliases) throw FormatError("checkpoint: alias table does not match the model");
  for (const auto& [name, target] : raw.aliases) {
    if (!store.contains(name) || !store.contains(target) || !store.at(name).alias ||
        store.at(name).slot != store.at(target).slot) {
      throw FormatError("checkpoint: alias '" + name + "' -> '" + target + "' does not match the model");
    }
  }

  LoadedCheckpoint<T> out;
  out.metadata = raw.header.value("metadata", nlohmann::json::object());
  out.has_optimizer = raw.has_optimizer;
  if (raw.has_optimizer) {
    out.optimizer_steps = raw.steps;
    out.optimizer_config = raw.adam;
    out.first_moments.resize(unique.size());
    out.second_moments.resize(unique.size());
    for (const auto& [slot, which, dtype, bytes] : raw.moments) {
      if (slot >= unique.size()) throw FormatError("checkpoint: moment slot out of range");
      auto v = decode_values<T>(bytes, dtype);
      if (static_cast<std::int64_t>(v.size()) != unique[slot].tensor.numel())
        throw FormatError("checkpoint: moment size mismatch for slot " + std::to_string(slot));
      (which == 'm' ? out.first_moments : out.second_moments)[slot] = std::move(v);
    }
    for (std::size_t s = 0; s < unique.size(); ++s)
      if (out.first_moments[s].empty() || out.second_moments[s].empty())
        throw FormatError("checkpoint: missing optimizer moments for slot " + std::to_string(s));
  }

  for (std::size_t i = 0; i < unique.size(); ++i) {
    auto t = unique[i].tensor;
    std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
  }
  out.model = std::move(model);
  return out;
}

template <typename T>
void LoadedCheckpoint<T>::restore(Adam<T>& optimizer) const {
  if (!has_optimizer) throw ContractError("checkpoint has no optimizer state");
  if (optimizer.first_moments().size() != first_moments.size())
    throw ContractError("optimizer does not match the checkpointed model");
  optimizer.first_moments() = first_moments;
  optimizer.second_moments() = second_moments;
  optimizer.set_steps(optimizer_steps);
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  Reader reader(data::read_file(path));
  return parse_header(reader).second;
}

template void save_checkpoint<float>(const std::filesystem::path&, const VstModel<float>&, const Adam<float>*,
                                     const nlohmann::json&);
template void save_checkpoint<double>(const std::filesystem::path&, const VstModel<double>&, const Adam<double>*,
                                      const nlohmann::json&);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::filesystem::path&);
template struct LoadedCheckpoint<float>;
template struct LoadedCheckpoint<double>;

}  // namespace vst::train
