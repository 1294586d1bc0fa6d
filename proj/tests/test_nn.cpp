#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "vst/nn/backbone.hpp"
#include "vst/nn/classifier.hpp"
#include "vst/nn/positional.hpp"
#include "vst/nn/transformer.hpp"

using namespace vst;
using namespace vst::ad;
using namespace vst::nn;
using vst::testing::project;
using vst::testing::random_tensor;

namespace {

template <typename T>
void zero_all(ParameterStore<T>& store) {
  for (const auto& p : store.unique()) {
    auto t = p.tensor;
    std::fill(t.mutable_data().begin(), t.mutable_data().end(), T(0));
  }
}

std::vector<NamedTensor> named(const ParameterStore<double>& store) {
  std::vector<NamedTensor> out;
  for (const auto& p : store.unique()) out.push_back({p.name, p.tensor});
  return out;
}

}  // namespace

TEST_CASE("backbone output geometry") {
  SUBCASE("toy preset") {
    ParameterStore<float> store(1);
    Backbone<float> net(BackboneConfig::toy_preset(), store, "backbone");
    NoGradGuard ng;
    auto y = net.forward(Tensor<float>::zeros({2, 3, 24, 80}));
    CHECK(y.shape() == Shape{2, 64, 3, 20});
    for (float v : y.data()) CHECK(std::isfinite(v));
  }

  SUBCASE("full preset layer block counts and stride arithmetic") {
    auto cfg = BackboneConfig::full_preset();
    CHECK(cfg.block_counts == std::array<int, 4>{1, 2, 5, 3});
    CHECK(cfg.output_dim == 512);
    CHECK(cfg.output_size(48, 160) == std::pair<int, int>{6, 40});
  }

  SUBCASE("incompatible size names the expected multiples") {
    ParameterStore<float> store(1);
    Backbone<float> net(BackboneConfig::toy_preset(), store, "backbone");
    try {
      net.forward(Tensor<float>::zeros({1, 3, 25, 80}));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      CHECK(std::string(e.what()).find("multiple of 8") != std::string::npos);
    }
  }

  SUBCASE("property: output follows stride arithmetic for random configs") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> pick(1, 2), mult(1, 3), ch(1, 4);
    for (int trial = 0; trial < 12; ++trial) {
      BackboneConfig c;
      c.stem_channels = ch(rng);
      c.block_counts = {1, pick(rng), 1, 1};
      c.channels = {ch(rng), ch(rng), ch(rng), 4};
      c.output_dim = 4;
      c.stem_stride = {pick(rng), pick(rng)};
      for (auto& s : c.strides) s = {pick(rng), pick(rng)};
      const int h = c.total_stride_h() * mult(rng), w = c.total_stride_w() * mult(rng);
      ParameterStore<float> store(static_cast<std::uint64_t>(trial));
      Backbone<float> net(c, store, "b");
      NoGradGuard ng;
      auto y = net.forward(Tensor<float>::zeros({1, 3, h, w}));
      CHECK(y.shape() == Shape{1, 4, h / c.total_stride_h(), w / c.total_stride_w()});
    }
  }

  SUBCASE("gradient check") {
    BackboneConfig c;
    c.stem_channels = 2;
    c.block_counts = {1, 1, 1, 1};
    c.channels = {2, 3, 3, 4};
    c.output_dim = 4;
    ParameterStore<double> store(3);
    Backbone<double> net(c, store, "b");
    std::mt19937_64 rng(4);
    auto x = random_tensor({1, 3, 8, 8}, rng);
    GradCheckOptions o;
    o.max_coords_per_param = 8;
    auto rep = grad_check([&] { return project(net.forward(x)); }, named(store), o);
    CHECK(rep.max_rel_error() <= 1e-5);
  }
}

TEST_CASE("transformer block") {
  TransformerBlockConfig cfg{16, 4, 64, 0.0};
  ParameterStore<double> store(5);
  TransformerBlock<double> block(cfg, store, "blk");
  std::mt19937_64 rng(6);
  auto x = random_tensor({1, 7, 16}, rng);

  CHECK(block.forward(x).output.shape() == x.shape());
  for (int len : {1, 2, 9}) CHECK(block.forward(random_tensor({2, len, 16}, rng)).output.shape() == Shape{2, len, 16});
  CHECK_THROWS_AS(block.forward(random_tensor({1, 7, 8}, rng)), DimensionError);
  CHECK_THROWS_AS((TransformerBlockConfig{10, 4, 8, 0.0}.validate()), ConfigError);

  SUBCASE("gradient check") {
    TransformerBlockConfig tiny{8, 2, 16, 0.0};
    ParameterStore<double> s(7);
    TransformerBlock<double> b(tiny, s, "blk");
    auto xi = random_tensor({2, 3, 8}, rng);
    auto params = named(s);
    params.push_back({"x", xi});
    auto rep = grad_check([&] { return project(b.forward(xi).output); }, params);
    CHECK(rep.max_rel_error() <= 1e-4);
  }

  SUBCASE("zeroed weights give the residual identity") {
    zero_all(store);
    auto y = block.forward(x).output;
    for (std::size_t i = 0; i < y.data().size(); ++i) CHECK(y.data()[i] == x.data()[i]);
  }

  SUBCASE("dropout only in training with a random source") {
    TransformerBlockConfig dcfg{16, 4, 64, 0.5};
    ParameterStore<double> s(8);
    TransformerBlock<double> b(dcfg, s, "blk");
    auto eval1 = b.forward(x).output;
    std::mt19937_64 drng(1);
    auto train = b.forward(x, ForwardContext{true, &drng}).output;
    CHECK(eval1.data()[0] == b.forward(x).output.data()[0]);
    bool differs = false;
    for (std::size_t i = 0; i < train.data().size(); ++i) differs = differs || train.data()[i] != eval1.data()[i];
    CHECK(differs);
  }
}

TEST_CASE("multi-head self-attention") {
  std::mt19937_64 rng(9);
  TransformerBlockConfig cfg{8, 2, 16, 0.0};
  ParameterStore<double> store(10);
  MultiHeadSelfAttention<double> mhsa(cfg, store, "mhsa");

  auto out = mhsa.forward(random_tensor({2, 5, 8}, rng, -2, 2));
  CHECK(out.attention.shape() == Shape{2, 2, 5, 5});
  for (std::int64_t r = 0; r < 2 * 2 * 5; ++r) {
    double s = 0;
    for (int j = 0; j < 5; ++j) s += out.attention.data()[static_cast<std::size_t>(r * 5 + j)];
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }

  auto single = mhsa.forward(random_tensor({3, 1, 8}, rng));
  for (double a : single.attention.data()) CHECK(a == 1.0);

  SUBCASE("brute-force single head") {
    TransformerBlockConfig one{4, 1, 8, 0.0};
    ParameterStore<double> s(11);
    MultiHeadSelfAttention<double> att(one, s, "m");
    auto x = random_tensor({1, 3, 4}, rng);
    auto got = att.forward(x);
    auto W = [&](const char* n) { return s.at(std::string("m.") + n).tensor.data(); };
    auto proj = [&](const char* w, const char* b, int i, int j) {
      double acc = W(b)[static_cast<std::size_t>(j)];
      for (int k = 0; k < 4; ++k) acc += x.at({0, i, k}) * W(w)[static_cast<std::size_t>(k * 4 + j)];
      return acc;
    };
    for (int i = 0; i < 3; ++i) {
      double score[3], mx = -1e300;
      for (int j = 0; j < 3; ++j) {
        score[j] = 0;
        for (int c = 0; c < 4; ++c) score[j] += proj("wq", "bq", i, c) * proj("wk", "bk", j, c);
        score[j] /= 2.0;  // sqrt(4)
        mx = std::max(mx, score[j]);
      }
      double z = 0;
      for (double& sc : score) z += (sc = std::exp(sc - mx));
      for (double& sc : score) sc /= z;
      for (int j = 0; j < 3; ++j) CHECK(std::abs(got.attention.at({0, 0, i, j}) - score[j]) <= 1e-9);
      for (int c = 0; c < 4; ++c) {
        double o = W("bo")[static_cast<std::size_t>(c)];
        for (int k = 0; k < 4; ++k) {
          double ctx = 0;
          for (int j = 0; j < 3; ++j) ctx += score[j] * proj("wv", "bv", j, k);
          o += ctx * W("wo")[static_cast<std::size_t>(k * 4 + c)];
        }
        CHECK(std::abs(got.output.at({0, i, c}) - o) <= 1e-9);
      }
    }
  }
}

TEST_CASE("fixed positional encoding") {
  auto pe = fixed_positional_encoding<double>(5, 8);
  CHECK(pe.shape() == Shape{5, 8});
  for (int i = 0; i < 8; ++i) CHECK(pe.at({0, i}) == (i % 2 == 0 ? 0.0 : 1.0));
  for (double v : pe.data()) CHECK(std::abs(v) <= 1.0);

  // Independent evaluation: angle = pos * exp(-(2i/d) ln 10000).
  for (int pos = 0; pos < 5; ++pos)
    for (int i = 0; i < 4; ++i) {
      const double angle = pos * std::exp(-(2.0 * i / 8.0) * std::log(10000.0));
      CHECK(pe.at({pos, 2 * i}) == doctest::Approx(std::sin(angle)).epsilon(1e-12));
      CHECK(pe.at({pos, 2 * i + 1}) == doctest::Approx(std::cos(angle)).epsilon(1e-12));
    }
  // Frozen values: sin(1), cos(1), sin(0.1), cos(0.1), sin(0.004).
  CHECK(pe.at({1, 0}) == doctest::Approx(0.8414709848078965).epsilon(1e-14));
  CHECK(pe.at({1, 1}) == doctest::Approx(0.5403023058681398).epsilon(1e-14));
  CHECK(pe.at({1, 2}) == doctest::Approx(0.09983341664682815).epsilon(1e-12));
  CHECK(pe.at({1, 3}) == doctest::Approx(0.9950041652780258).epsilon(1e-12));
  CHECK(pe.at({4, 6}) == doctest::Approx(0.003999989333341867).epsilon(1e-10));

  CHECK_THROWS_AS(fixed_positional_encoding<double>(5, 7), ConfigError);
}

TEST_CASE("classifier head") {
  ParameterStore<double> store(12);
  ClassifierHead<double> head(6, 5, store, "head");
  auto w = store.at("head.w").tensor;
  std::fill(w.mutable_data().begin(), w.mutable_data().end(), 0.0);
  auto b = store.at("head.b").tensor;
  for (int i = 0; i < 5; ++i) b.mutable_data()[static_cast<std::size_t>(i)] = i * 0.5;
  std::mt19937_64 rng(13);
  auto logits = head.forward(random_tensor({2, 3, 6}, rng));
  CHECK(logits.shape() == Shape{2, 3, 5});
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 5; ++c) CHECK(logits.data()[static_cast<std::size_t>(r * 5 + c)] == c * 0.5);

  {
    ParameterStore<float> fs(1);
    ClassifierHead<float> full(512, 38, fs, "head");
    NoGradGuard ng;
    CHECK(full.forward(Tensor<float>::zeros({2, 25, 512})).shape() == Shape{2, 25, 38});
  }

  ParameterStore<double> gs(14);
  ClassifierHead<double> g(4, 3, gs, "h");
  auto x = random_tensor({2, 2, 4}, rng);
  CHECK(grad_check([&] { return project(g.forward(x)); }, named(gs)).max_rel_error() <= 1e-5);
}
