#include "vst/data/glyph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <system_error>

#include "vst/data/codec.hpp"
#include "vst/errors.hpp"

namespace vst::data {

namespace {

constexpr std::uint8_t row(const char (&bits)[6]) {
  std::uint8_t v = 0;
  for (int i = 0; i < 5; ++i) v = static_cast<std::uint8_t>((v << 1) | (bits[i] == '#' ? 1 : 0));
  return v;
}

#define G(a, b, c, d, e, f, g) GlyphBitmap{row(a), row(b), row(c), row(d), row(e), row(f), row(g)}

// Index order matches LabelCodec: 0-9 then a-z.
const std::array<GlyphBitmap, 36> kFont = {
    G(".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."),  // 0
    G("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),  // 1
    G(".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),  // 2
    G("#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."),  // 3
    G("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),  // 4
    G("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),  // 5
    G("..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."),  // 6
    G("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),  // 7
    G(".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),  // 8
    G(".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."),  // 9
    G(".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),  // a
    G("####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."),  // b
    G(".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."),  // c
    G("###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."),  // d
    G("#####", "#....", "#....", "####.", "#....", "#....", "#####"),  // e
    G("#####", "#....", "#....", "####.", "#....", "#....", "#...."),  // f
    G(".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"),  // g
    G("#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),  // h
    G(".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."),  // i
    G("..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."),  // j
    G("#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"),  // k
    G("#....", "#....", "#....", "#....", "#....", "#....", "#####"),  // l
    G("#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"),  // m
    G("#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"),  // n
    G(".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),  // o
    G("####.", "#...#", "#...#", "####.", "#....", "#....", "#...."),  // p
    G(".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"),  // q
    G("####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"),  // r
    G(".####", "#....", "#....", ".###.", "....#", "....#", "####."),  // s
    G("#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."),  // t
    G("#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),  // u
    G("#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."),  // v
    G("#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."),  // w
    G("#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"),  // x
    G("#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."),  // y
    G("#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"),  // z
};

#undef G

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

const GlyphBitmap& glyph_bitmap(char c) {
  const int idx = LabelCodec::index_of(c);
  if (idx < 0 || idx >= 36) throw ConfigError(std::string("no glyph for character '") + c + "'");
  return kFont[static_cast<std::size_t>(idx)];
}

void GlyphDatasetSpec::validate() const {
  if (num_samples < 0) throw ConfigError("glyph spec: num_samples must be >= 0");
  if (charset.empty()) throw ConfigError("glyph spec: charset is empty");
  for (char c : charset) {
    const int idx = LabelCodec::index_of(c);
    if (idx < 0 || idx >= 36) throw ConfigError(std::string("glyph spec: charset character '") + c + "' is not alphanumeric");
  }
  if (min_len < 1 || max_len < min_len) throw ConfigError("glyph spec: need 1 <= min_len <= max_len");
  if (glyph_scale < 1) throw ConfigError("glyph spec: glyph_scale must be >= 1");
  if (vertical_jitter < 0 || spacing_jitter < 0) throw ConfigError("glyph spec: jitter must be >= 0");
  if (canvas_height < kGlyphHeight * glyph_scale + 2 * vertical_jitter)
    throw ConfigError("glyph spec: canvas_height too small for glyph_scale and vertical_jitter");
  if (!(noise_std >= 0.0)) throw ConfigError("glyph spec: noise_std must be >= 0");
  if (!(scale_jitter >= 0.0 && scale_jitter < 1.0)) throw ConfigError("glyph spec: scale_jitter must be in [0, 1)");
}

void to_json(nlohmann::json& j, const GlyphDatasetSpec& s) {
  j = nlohmann::json{{"seed", s.seed},
                     {"num_samples", s.num_samples},
                     {"charset", s.charset},
                     {"min_len", s.min_len},
                     {"max_len", s.max_len},
                     {"canvas_height", s.canvas_height},
                     {"glyph_scale", s.glyph_scale},
                     {"noise_std", s.noise_std},
                     {"spacing_jitter", s.spacing_jitter},
                     {"scale_jitter", s.scale_jitter},
                     {"vertical_jitter", s.vertical_jitter},
                     {"background", s.background},
                     {"ink", s.ink}};
}

void from_json(const nlohmann::json& j, GlyphDatasetSpec& s) {
  GlyphDatasetSpec d;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "seed") d.seed = it->get<std::uint64_t>();
    else if (k == "num_samples") d.num_samples = it->get<int>();
    else if (k == "charset") d.charset = it->get<std::string>();
    else if (k == "min_len") d.min_len = it->get<int>();
    else if (k == "max_len") d.max_len = it->get<int>();
    else if (k == "canvas_height") d.canvas_height = it->get<int>();
    else if (k == "glyph_scale") d.glyph_scale = it->get<int>();
    else if (k == "noise_std") d.noise_std = it->get<double>();
    else if (k == "spacing_jitter") d.spacing_jitter = it->get<int>();
    else if (k == "scale_jitter") d.scale_jitter = it->get<double>();
    else if (k == "vertical_jitter") d.vertical_jitter = it->get<int>();
    else if (k == "background") d.background = it->get<std::uint8_t>();
    else if (k == "ink") d.ink = it->get<std::uint8_t>();
    else throw ConfigError("glyph spec: unknown key '" + k + "'");
  }
  s = d;
}

Image render_text(std::string_view text, const GlyphDatasetSpec& spec, std::mt19937_64& rng) {
  const int s = spec.glyph_scale;
  const int n = static_cast<int>(text.size());

  std::vector<int> widths(static_cast<std::size_t>(n));
  std::vector<int> gaps(static_cast<std::size_t>(n + 1));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int i = 0; i <= n; ++i) gaps[static_cast<std::size_t>(i)] = s + uniform_int(rng, 0, spec.spacing_jitter);
  for (int i = 0; i < n; ++i) {
    const double factor = 1.0 + spec.scale_jitter * unit(rng);
    widths[static_cast<std::size_t>(i)] = std::max(kGlyphWidth, static_cast<int>(std::lround(kGlyphWidth * s * factor)));
  }
  const int vshift = uniform_int(rng, -spec.vertical_jitter, spec.vertical_jitter);

  int total = 0;
  for (int g : gaps) total += g;
  for (int w : widths) total += w;
  Image img(spec.canvas_height, std::max(total, 1), 1, spec.background);

  const int top = (spec.canvas_height - kGlyphHeight * s) / 2 + vshift;
  int x0 = gaps[0];
  for (int i = 0; i < n; ++i) {
    const auto& bmp = glyph_bitmap(text[static_cast<std::size_t>(i)]);
    const int w = widths[static_cast<std::size_t>(i)];
    for (int y = 0; y < kGlyphHeight * s; ++y) {
      const auto bits = bmp[static_cast<std::size_t>(y / s)];
      for (int x = 0; x < w; ++x) {
        const int col = x * kGlyphWidth / w;  // nearest-neighbour horizontal stretch
        if (bits & (0x10 >> col)) img.at(top + y, x0 + x) = spec.ink;
      }
    }
    x0 += w + gaps[static_cast<std::size_t>(i + 1)];
  }

  if (spec.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (auto& p : img.pixels) {
      const double v = std::clamp(std::round(p + noise(rng)), 0.0, 255.0);
      p = static_cast<std::uint8_t>(v);
    }
  }
  return img;
}

SampleManifest generate_glyph_dataset(const GlyphDatasetSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create '" + (out_dir / "images").string() + "': " + ec.message());

  std::mt19937_64 rng(spec.seed);
  SampleManifest manifest{out_dir, {}};
  manifest.entries.reserve(static_cast<std::size_t>(spec.num_samples));
  const int charset_size = static_cast<int>(spec.charset.size());
  for (int i = 0; i < spec.num_samples; ++i) {
    const int len = uniform_int(rng, spec.min_len, spec.max_len);
    std::string label;
    for (int k = 0; k < len; ++k) label += spec.charset[static_cast<std::size_t>(uniform_int(rng, 0, charset_size - 1))];
    const Image img = render_text(label, spec, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "images/%05d.pnm", i);
    write_pnm(out_dir / name, img);
    manifest.entries.push_back({name, label});
  }
  write_manifest(out_dir / kManifestFileName, manifest);
  write_file(out_dir / kSpecFileName, nlohmann::json(spec).dump(2) + "\n");
  return manifest;
}

}  // namespace vst::data
