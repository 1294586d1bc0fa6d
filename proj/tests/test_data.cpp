#include <algorithm>
#include <map>
#include <random>

#include "doctest.h"
#include "temp_dir.hpp"
#include "vst/data/codec.hpp"
#include "vst/data/dataset.hpp"
#include "vst/data/glyph.hpp"
#include "vst/data/image.hpp"
#include "vst/data/manifest.hpp"
#include "vst/data/sampler.hpp"
#include "vst/errors.hpp"

using namespace vst;
using namespace vst::data;
using vst::testing::TempDir;

namespace {

Image gradient_image(int h, int w, int channels, std::uint64_t seed) {
  Image img(h, w, channels);
  std::mt19937_64 rng(seed);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  return img;
}

float px(const PreprocessedImage& p, int c, int y, int x) {
  return p.chw[(static_cast<std::size_t>(c) * p.height + y) * p.width + x];
}

std::map<std::string, std::string> directory_bytes(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

}  // namespace

TEST_CASE("codec examples") {
  LabelCodec codec(25);
  auto ab1 = codec.encode("Ab1");
  REQUIRE(ab1.size() == 25);
  CHECK(ab1[0] == 10);
  CHECK(ab1[1] == 11);
  CHECK(ab1[2] == 1);
  for (std::size_t i = 3; i < 25; ++i) CHECK(ab1[i] == 37);

  auto empty = codec.encode("");
  CHECK(std::all_of(empty.begin(), empty.end(), [](int v) { return v == 37; }));

  auto unk = codec.encode("a#b");
  CHECK(unk[0] == 10);
  CHECK(unk[1] == 36);
  CHECK(unk[2] == 11);
  CHECK(unk[3] == 37);
  CHECK(codec.decode(unk) == "a?b");
}

TEST_CASE("codec truncates to t-1 symbols and always ends in eos") {
  LabelCodec codec(4);
  auto v = codec.encode("abcdefg");
  CHECK(v == std::vector<int>{10, 11, 12, 37});
  CHECK(codec.decode(v) == "abc");
}

TEST_CASE("codec round-trip over random alphanumeric strings") {
  const std::string alphabet = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
  std::mt19937_64 rng(3);
  LabelCodec codec(25);
  for (int trial = 0; trial < 500; ++trial) {
    const int len = static_cast<int>(rng() % 25);
    std::string s;
    for (int i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    CHECK(codec.decode(codec.encode(s)) == lower);
  }
}

TEST_CASE("pnm encode/decode round trip and errors") {
  auto rgb = gradient_image(5, 7, 3, 1);
  auto back = decode_pnm(encode_pnm(rgb));
  CHECK(back.height == 5);
  CHECK(back.width == 7);
  CHECK(back.channels == 3);
  CHECK(back.pixels == rgb.pixels);

  auto gray = gradient_image(4, 3, 1, 2);
  CHECK(decode_pnm(encode_pnm(gray)).pixels == gray.pixels);

  CHECK(decode_pnm("P5\n# comment\n2 1\n255\n\x01\x02").pixels == std::vector<std::uint8_t>{1, 2});
  CHECK_THROWS_AS(decode_pnm("P3\n1 1\n255\n0 0 0"), IoError);
  CHECK_THROWS_AS(decode_pnm("P6\n2 2\n255\nabc"), IoError);
  CHECK_THROWS_AS(decode_pnm("P6\n0 2\n255\n"), IoError);
  CHECK_THROWS_AS(read_pnm("/nonexistent/x.pnm"), IoError);
}

TEST_CASE("preprocess: 24x60 pads to 48x160 by replicating column 119") {
  auto img = gradient_image(24, 60, 3, 5);
  auto p = preprocess_image(img, 48, 160);
  REQUIRE(p.height == 48);
  REQUIRE(p.width == 160);
  REQUIRE(p.chw.size() == 3u * 48 * 160);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 48; ++y)
      for (int x = 120; x < 160; ++x) CHECK(px(p, c, y, x) == px(p, c, y, 119));
  // Column 119 is content, not padding: it differs from column 118 somewhere.
  bool differs = false;
  for (int y = 0; y < 48; ++y) differs |= px(p, 0, y, 118) != px(p, 0, y, 119);
  CHECK(differs);
}

TEST_CASE("preprocess: 48x160 is geometry-preserving, values scaled to [-1,1]") {
  auto img = gradient_image(48, 160, 3, 6);
  auto p = preprocess_image(img, 48, 160);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 48; y += 7)
      for (int x = 0; x < 160; x += 13) CHECK(px(p, c, y, x) == doctest::Approx(img.at(y, x, c) / 127.5 - 1.0));
  Image black(2, 2, 3, 0), white(2, 2, 3, 255);
  CHECK(preprocess_image(black, 4, 4).chw[0] == -1.0f);
  CHECK(preprocess_image(white, 4, 4).chw[0] == 1.0f);
}

TEST_CASE("preprocess: 48x400 is right-trimmed") {
  auto img = gradient_image(48, 400, 3, 7);
  auto p = preprocess_image(img, 48, 160);
  CHECK(p.width == 160);
  for (int y = 0; y < 48; y += 5)
    for (int x = 0; x < 160; x += 9) CHECK(px(p, 1, y, x) == doctest::Approx(img.at(y, x, 1) / 127.5 - 1.0));
}

TEST_CASE("preprocess: grayscale replicated, always target size, zero size rejected") {
  auto gray = gradient_image(10, 13, 1, 8);
  auto p = preprocess_image(gray, 24, 80);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 80; ++x) {
      CHECK(px(p, 0, y, x) == px(p, 1, y, x));
      CHECK(px(p, 0, y, x) == px(p, 2, y, x));
    }
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 60), w = 1 + static_cast<int>(rng() % 300);
    auto q = preprocess_image(gradient_image(h, w, 3, rng()), 48, 160);
    CHECK(q.chw.size() == 3u * 48 * 160);
    for (float v : q.chw) REQUIRE((v >= -1.0f && v <= 1.0f));
  }
  CHECK_THROWS_AS(preprocess_image(Image{}, 48, 160), DimensionError);
}

TEST_CASE("font: 36 distinct glyphs, case folded, unknown rejected") {
  const std::string chars = "0123456789abcdefghijklmnopqrstuvwxyz";
  for (std::size_t i = 0; i < chars.size(); ++i)
    for (std::size_t j = i + 1; j < chars.size(); ++j) CHECK(glyph_bitmap(chars[i]) != glyph_bitmap(chars[j]));
  CHECK(glyph_bitmap('A') == glyph_bitmap('a'));
  CHECK_THROWS_AS(glyph_bitmap('#'), ConfigError);
}

TEST_CASE("render: noise-free '00' contains exactly two '0' glyph bitmaps") {
  GlyphDatasetSpec spec;
  spec.noise_std = 0.0;
  spec.scale_jitter = 0.0;
  spec.glyph_scale = 1;
  spec.canvas_height = 11;
  std::mt19937_64 rng(4);
  auto img = render_text("00", spec, rng);
  REQUIRE(img.channels == 1);
  const auto& zero = glyph_bitmap('0');
  int matches = 0;
  for (int y = 0; y + kGlyphHeight <= img.height; ++y) {
    for (int x = 0; x + kGlyphWidth <= img.width; ++x) {
      bool ok = true;
      for (int r = 0; r < kGlyphHeight && ok; ++r)
        for (int c = 0; c < kGlyphWidth && ok; ++c) {
          const bool on = (zero[static_cast<std::size_t>(r)] >> (kGlyphWidth - 1 - c)) & 1;
          ok = img.at(y + r, x + c) == (on ? spec.ink : spec.background);
        }
      matches += ok;
    }
  }
  CHECK(matches == 2);
  int ink = 0, expected_ink = 0;
  for (auto p : img.pixels) ink += p == spec.ink;
  for (auto r : zero) expected_ink += __builtin_popcount(r);
  CHECK(ink == 2 * expected_ink);
}

TEST_CASE("glyph dataset: deterministic bytes, manifest line count, spec file") {
  TempDir a("glyph-a"), b("glyph-b");
  GlyphDatasetSpec spec;
  spec.seed = 1;
  spec.num_samples = 10;
  auto ma = generate_glyph_dataset(spec, a.path());
  generate_glyph_dataset(spec, b.path());
  CHECK(directory_bytes(a.path()) == directory_bytes(b.path()));

  auto manifest = read_manifest(a / kManifestFileName);
  CHECK(manifest.size() == 10);
  CHECK(manifest.entries == ma.entries);
  for (const auto& e : manifest.entries) {
    CHECK(e.label.size() >= 1);
    CHECK(e.label.size() <= 6);
    for (char c : e.label) CHECK(spec.charset.find(c) != std::string::npos);
    auto img = read_pnm(manifest.resolve(e));
    CHECK(img.height == spec.canvas_height);
  }
  auto reread = nlohmann::json::parse(read_file(a / kSpecFileName)).get<GlyphDatasetSpec>();
  CHECK(reread == spec);

  spec.seed = 2;
  TempDir c("glyph-c");
  generate_glyph_dataset(spec, c.path());
  CHECK(directory_bytes(a.path()) != directory_bytes(c.path()));
}

TEST_CASE("glyph dataset: unwritable directory and invalid spec") {
  TempDir d("glyph-ro");
  write_file(d / "file", "x");
  GlyphDatasetSpec spec;
  spec.num_samples = 1;
  CHECK_THROWS_AS(generate_glyph_dataset(spec, d / "file" / "sub"), IoError);
  spec.charset = "ab#";
  CHECK_THROWS_AS(generate_glyph_dataset(spec, d / "x"), ConfigError);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"bogus": 1})").get<GlyphDatasetSpec>(), ConfigError);
}

TEST_CASE("manifest parsing rules") {
  auto m = parse_manifest("a.pnm\tab\nsub/b.pnm\thello world\n\n", "/data");
  REQUIRE(m.size() == 2);
  CHECK(m.entries[1].label == "hello world");
  CHECK(m.resolve(m.entries[1]) == std::filesystem::path("/data/sub/b.pnm"));
  CHECK(parse_manifest(format_manifest(m), "/data").entries == m.entries);
  CHECK_THROWS_AS(parse_manifest("a.pnm\t\n", "/d"), ConfigError);
  CHECK_THROWS_AS(parse_manifest("a.pnm ab\n", "/d"), ConfigError);
  CHECK_THROWS_AS(parse_manifest("/abs.pnm\tab\n", "/d"), ConfigError);
  CHECK_THROWS_AS(parse_manifest("../x.pnm\tab\n", "/d"), ConfigError);
  CHECK_THROWS_AS(read_manifest("/nonexistent/manifest.tsv"), IoError);
}

TEST_CASE("load_dataset reports missing images") {
  TempDir d("load");
  GlyphDatasetSpec spec;
  spec.num_samples = 3;
  auto m = generate_glyph_dataset(spec, d.path());
  m.entries.push_back({"images/missing.pnm", "x"});
  auto loaded = load_dataset(m, LabelCodec(8));
  CHECK(loaded.samples.size() == 3);
  CHECK(loaded.missing == std::vector<std::string>{"images/missing.pnm"});
  CHECK(loaded.samples[0].target.size() == 8);
}

TEST_CASE("sampler: weights 0.4/0.4/0.2 over 100k draws") {
  WeightedSampler s({50, 70, 30}, {0.4, 0.4, 0.2}, 11);
  std::array<int, 3> counts{};
  for (int k = 0; k < 100000; ++k) {
    auto r = s.next();
    REQUIRE(r.index < std::array<std::size_t, 3>{50, 70, 30}[r.source]);
    ++counts[r.source];
  }
  CHECK(std::abs(counts[0] / 1e5 - 0.4) <= 0.01);
  CHECK(std::abs(counts[1] / 1e5 - 0.4) <= 0.01);
  CHECK(std::abs(counts[2] / 1e5 - 0.2) <= 0.01);
}

TEST_CASE("sampler: single source is uniform, draws are pure and seeded") {
  WeightedSampler s({10}, {1.0}, 5);
  std::array<int, 10> counts{};
  for (int k = 0; k < 50000; ++k) {
    auto r = s.next();
    CHECK(r.source == 0);
    ++counts[r.index];
  }
  for (int c : counts) CHECK(std::abs(c / 5e4 - 0.1) <= 0.01);

  WeightedSampler a({5, 6}, {1, 2}, 42), b({5, 6}, {1, 2}, 42), c({5, 6}, {1, 2}, 43);
  std::vector<SampleRef> sa, sb;
  for (int k = 0; k < 100; ++k) {
    sa.push_back(a.next());
    sb.push_back(b.next());
  }
  CHECK(sa == sb);
  CHECK(a.draw(17) == sa[17]);
  int same = 0;
  for (int k = 0; k < 100; ++k) same += c.draw(static_cast<std::uint64_t>(k)) == sa[static_cast<std::size_t>(k)];
  CHECK(same < 60);
}

TEST_CASE("sampler errors") {
  CHECK_THROWS_AS(WeightedSampler({}, {}, 1), ConfigError);
  CHECK_THROWS_AS(WeightedSampler({3, 0}, {1, 1}, 1), ConfigError);
  CHECK_THROWS_AS(WeightedSampler({3}, {0.0}, 1), ConfigError);
  CHECK_THROWS_AS(WeightedSampler({3}, {1.0, 2.0}, 1), ConfigError);
}
