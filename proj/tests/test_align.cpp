#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "test_util.hpp"
#include "vst/align.hpp"
#include "vst/resample.hpp"

using namespace vst;
using namespace vst::ad;
using vst::testing::project;
using vst::testing::random_tensor;

namespace {

// Direct triple loop: A[i][j] = softmax_j(sum_k Q[i][k] V[j][k]); S[i] = sum_j A[i][j] V[j].
struct Naive {
  std::vector<double> s, a;
};

Naive naive_align(const Tensor<double>& v, const Tensor<double>& q, int batch_index) {
  const int n = static_cast<int>(v.dim(1)), d = static_cast<int>(v.dim(2)), t = static_cast<int>(q.dim(0));
  Naive out{std::vector<double>(static_cast<std::size_t>(t * d), 0.0), std::vector<double>(static_cast<std::size_t>(t * n))};
  for (int i = 0; i < t; ++i) {
    std::vector<double> logits(static_cast<std::size_t>(n));
    double mx = -INFINITY;
    for (int j = 0; j < n; ++j) {
      double acc = 0;
      for (int k = 0; k < d; ++k) acc += q.at({i, k}) * v.at({batch_index, j, k});
      logits[static_cast<std::size_t>(j)] = acc;
      mx = std::max(mx, acc);
    }
    double z = 0;
    for (auto& l : logits) z += (l = std::exp(l - mx));
    for (int j = 0; j < n; ++j) {
      const double a = logits[static_cast<std::size_t>(j)] / z;
      out.a[static_cast<std::size_t>(i * n + j)] = a;
      for (int k = 0; k < d; ++k) out.s[static_cast<std::size_t>(i * d + k)] += a * v.at({batch_index, j, k});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("align shapes at full scale") {
  AlignmentWeights<float> w{Tensor<float>::zeros({25, 512})};
  NoGradGuard ng;
  auto r = align(Tensor<float>::zeros({1, 240, 512}), w);
  CHECK(r.semantic.shape() == Shape{1, 25, 512});
  CHECK(r.attention.shape() == Shape{1, 25, 240});
  CHECK_THROWS_AS(align(Tensor<float>::zeros({1, 240, 256}), w), DimensionError);
}

TEST_CASE("zero Q gives uniform attention and column means") {
  std::mt19937_64 rng(1);
  auto v = random_tensor({2, 5, 3}, rng);
  AlignmentWeights<double> w{Tensor<double>::zeros({4, 3})};
  auto r = align(v, w);
  for (double a : r.attention.data()) CHECK(a == doctest::Approx(0.2).epsilon(1e-15));
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < 3; ++k) {
      double m = 0;
      for (int j = 0; j < 5; ++j) m += v.at({b, j, k});
      m /= 5;
      for (int i = 0; i < 4; ++i) CHECK(r.semantic.at({b, i, k}) == doctest::Approx(m).epsilon(1e-14));
    }
}

TEST_CASE("hand-picked t=2, n=3, d=2") {
  auto v = Tensor<double>::from({1, 3, 2}, {1, 0, 0, 1, 1, 1});
  AlignmentWeights<double> w{Tensor<double>::from({2, 2}, {1, 0, 0, 2})};
  auto r = align(v, w);
  // Row 0 logits: [1, 0, 1]; row 1 logits: [0, 2, 2].
  const double e = std::exp(1.0);
  const double a00 = e / (2 * e + 1), a01 = 1 / (2 * e + 1);
  CHECK(r.attention.at({0, 0, 0}) == doctest::Approx(a00).epsilon(1e-14));
  CHECK(r.attention.at({0, 0, 1}) == doctest::Approx(a01).epsilon(1e-14));
  CHECK(r.semantic.at({0, 0, 0}) == doctest::Approx(2 * a00).epsilon(1e-14));
  CHECK(r.semantic.at({0, 0, 1}) == doctest::Approx(a01 + a00).epsilon(1e-14));
  auto naive = naive_align(v, w.q, 0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(r.semantic.data()[i] - naive.s[i]) <= 1e-12);
}

TEST_CASE("property: matches the naive loop, row-stochastic, convex, row-local") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> dim(1, 4);
  for (int trial = 0; trial < 150; ++trial) {
    const int t = dim(rng), n = dim(rng), d = dim(rng), b = dim(rng) % 2 + 1;
    auto v = random_tensor({b, n, d}, rng, -3, 3);
    AlignmentWeights<double> w{random_tensor({t, d}, rng, -3, 3)};
    auto r = align(v, w);
    for (int bi = 0; bi < b; ++bi) {
      auto ref = naive_align(v, w.q, bi);
      for (int i = 0; i < t; ++i) {
        double row = 0;
        for (int j = 0; j < n; ++j) {
          CHECK(std::abs(r.attention.at({bi, i, j}) - ref.a[static_cast<std::size_t>(i * n + j)]) <= 1e-9);
          row += r.attention.at({bi, i, j});
        }
        CHECK(std::abs(row - 1.0) <= 1e-6);
        for (int k = 0; k < d; ++k) {
          const double s = r.semantic.at({bi, i, k});
          CHECK(std::abs(s - ref.s[static_cast<std::size_t>(i * d + k)]) <= 1e-9);
          double lo = INFINITY, hi = -INFINITY;
          for (int j = 0; j < n; ++j) {
            lo = std::min(lo, v.at({bi, j, k}));
            hi = std::max(hi, v.at({bi, j, k}));
          }
          CHECK(s >= lo - 1e-12);
          CHECK(s <= hi + 1e-12);
        }
      }
    }

    // Permuting Q rows permutes S rows identically.
    std::vector<int> perm(static_cast<std::size_t>(t));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> qp(static_cast<std::size_t>(t * d));
    for (int i = 0; i < t; ++i)
      for (int k = 0; k < d; ++k) qp[static_cast<std::size_t>(i * d + k)] = w.q.at({perm[static_cast<std::size_t>(i)], k});
    auto rp = align(v, AlignmentWeights<double>{Tensor<double>::from({t, d}, qp)});
    for (int bi = 0; bi < b; ++bi)
      for (int i = 0; i < t; ++i)
        for (int k = 0; k < d; ++k) CHECK(rp.semantic.at({bi, i, k}) == r.semantic.at({bi, perm[static_cast<std::size_t>(i)], k}));
  }
}

TEST_CASE("shared weights: gradient sums over call sites") {
  std::mt19937_64 rng(3);
  AlignmentWeights<double> primary{random_tensor({3, 4}, rng)};
  AlignmentWeights<double> secondary{primary.q};
  CHECK(primary.storage_id() == secondary.storage_id());
  auto v1 = random_tensor({2, 5, 4}, rng, -1, 1, false);
  auto v2 = random_tensor({2, 5, 4}, rng, -1, 1, false);
  auto site1 = [&] { return project(align(v1, primary).semantic, 5); };
  auto site2 = [&] { return project(align(v2, secondary).semantic, 6); };

  auto q = primary.q;
  q.zero_grad();
  backward(site1());
  std::vector<double> g1(q.grad().begin(), q.grad().end());
  q.zero_grad();
  backward(site2());
  std::vector<double> g2(q.grad().begin(), q.grad().end());
  q.zero_grad();
  backward(add(site1(), site2()));
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(q.grad()[i] - g1[i] - g2[i]) <= 1e-9);

  auto rep = grad_check([&] { return add(site1(), site2()); }, {{"Q", q}});
  CHECK(rep.max_rel_error() <= 1e-6);
}

TEST_CASE("attention heatmaps") {
  SUBCASE("uniform row is flat") {
    std::vector<double> a(6, 1.0 / 6);
    auto maps = attention_heatmaps<double>(a, 1, {2, 3}, {8, 12});
    REQUIRE(maps.size() == 1);
    for (double v : maps[0].values) CHECK(v == 0.0);
  }

  SUBCASE("one-hot row peaks at its cell") {
    std::vector<double> a(6, 0.0);
    a[5] = 1.0;  // cell (1, 2): bottom-right
    auto maps = attention_heatmaps<double>(a, 1, {2, 3}, {4, 6});
    const auto& m = maps[0].values;
    CHECK(m[3 * 6 + 5] == 1.0);
    CHECK(m[0] == 0.0);
    for (double v : m) CHECK((v >= 0.0 && v <= 1.0));
  }

  SUBCASE("2x3 to 4x6 matches the direct bilinear formula") {
    std::vector<double> a{0.1, 0.2, 0.05, 0.3, 0.15, 0.2};
    auto up = resize_bilinear(a, 2, 3, 4, 6);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) {
        const double sy = y / 3.0, sx = x * 2.0 / 5.0;
        const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
        const int y1 = std::min(y0 + 1, 1), x1 = std::min(x0 + 1, 2);
        const double fy = sy - y0, fx = sx - x0;
        auto g = [&](int r, int c) { return a[static_cast<std::size_t>(r * 3 + c)]; };
        const double expect = (1 - fy) * (1 - fx) * g(y0, x0) + (1 - fy) * fx * g(y0, x1) + fy * (1 - fx) * g(y1, x0) +
                              fy * fx * g(y1, x1);
        CHECK(up[static_cast<std::size_t>(y * 6 + x)] == doctest::Approx(expect).epsilon(1e-12));
      }
    // Corners are preserved exactly; (1, 1) samples (1/3, 0.4) -> 0.1733...
    CHECK(up[0] == 0.1);
    CHECK(up[23] == 0.2);
    CHECK(up[7] == doctest::Approx(0.17333333333333334).epsilon(1e-12));
    auto maps = attention_heatmaps<double>(a, 1, {2, 3}, {4, 6});
    for (std::size_t i = 0; i < up.size(); ++i) CHECK(maps[0].values[i] == doctest::Approx((up[i] - 0.05) / 0.25));
  }

  CHECK_THROWS_AS(attention_heatmaps<double>(std::vector<double>(7, 0.1), 1, {2, 3}, {4, 6}), DimensionError);
}
