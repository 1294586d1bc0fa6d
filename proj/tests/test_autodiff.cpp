#include <cmath>
#include <numeric>

#include "doctest.h"
#include "test_util.hpp"

using namespace vst;
using namespace vst::ad;
using vst::testing::project;
using vst::testing::random_tensor;

namespace {

GradCheckReport check(const std::function<Tensor<double>()>& f, std::vector<NamedTensor> params) {
  GradCheckOptions opts;
  opts.step = 1e-5;
  return grad_check(f, params, opts);
}

}  // namespace

TEST_CASE("tensor invariants") {
  auto t = Tensor<float>::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK_FALSE(t.has_node());
  CHECK_FALSE(t.has_grad());
  CHECK_THROWS_AS(Tensor<float>::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK(t.dim(-1) == 3);
  CHECK_THROWS_AS(t.dim(2), DimensionError);
}

TEST_CASE("matmul") {
  auto eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  auto y = matmul(eye, m);
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{1, 2, 3, 4});

  auto r = matmul(Tensor<double>::from({1, 2}, {1, 2}), Tensor<double>::from({2, 1}, {3, 4}));
  CHECK(r.item() == 11.0);

  SUBCASE("shape mismatch names both shapes") {
    try {
      matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 3}));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
    }
  }

  SUBCASE("finite differences") {
    std::mt19937_64 rng(1);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({4, 2}, rng);
    auto rep = check([&] { return project(matmul(a, b)); }, {{"a", a}, {"b", b}});
    CHECK(rep.max_rel_error() <= 1e-6);
  }

  SUBCASE("batched and shared-rhs forms") {
    std::mt19937_64 rng(2);
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({2, 4, 5}, rng);
    auto w = random_tensor({4, 5}, rng);
    CHECK(check([&] { return project(matmul(a, b)); }, {{"a", a}, {"b", b}}).max_rel_error() <= 1e-6);
    CHECK(check([&] { return project(matmul(a, w)); }, {{"a", a}, {"w", w}}).max_rel_error() <= 1e-6);
  }
}

TEST_CASE("softmax") {
  auto y = softmax(Tensor<double>::from({3}, {0, 0, 0}), 0);
  for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto big = softmax(Tensor<double>::from({2}, {1000, 0}), 0);
  CHECK(std::isfinite(big.data()[0]));
  CHECK(big.data()[0] == doctest::Approx(1.0));
  CHECK(big.data()[1] < 1e-300);

  std::mt19937_64 rng(3);
  auto x = random_tensor({2, 5}, rng, -3, 3);
  auto s = softmax(x, 1);
  for (int r = 0; r < 2; ++r) {
    double total = 0;
    for (int j = 0; j < 5; ++j) {
      total += s.at({r, j});
      CHECK(s.at({r, j}) > 0.0);
      CHECK(s.at({r, j}) < 1.0);
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }

  auto xf = Tensor<float>::from({4, 7}, std::vector<float>(28, 0.25f));
  auto sf = softmax(xf, -1);
  for (int r = 0; r < 4; ++r) {
    float total = 0;
    for (int j = 0; j < 7; ++j) total += sf.at({r, j});
    CHECK(std::abs(total - 1.0f) <= 1e-6f);
  }

  CHECK_THROWS_AS(softmax(Tensor<double>::from({2}, {NAN, 0}), 0), NumericError);
  CHECK_THROWS_AS(softmax(x, 2), DimensionError);

  auto x3 = random_tensor({2, 3, 4}, rng);
  CHECK(check([&] { return project(softmax(x3, 1)); }, {{"x", x3}}).max_rel_error() <= 1e-5);
}

TEST_CASE("layer_norm") {
  auto ones = Tensor<double>::full({4}, 1.0);
  auto zeros = Tensor<double>::zeros({4});
  auto y = layer_norm(Tensor<double>::from({1, 4}, {5, 5, 5, 5}), ones, zeros);
  for (double v : y.data()) CHECK(v == 0.0);

  std::mt19937_64 rng(4);
  auto x = random_tensor({2, 8}, rng, -2, 2);
  auto b = Tensor<double>::from({8}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto yb = layer_norm(x, Tensor<double>::zeros({8}), b);
  for (int r = 0; r < 2; ++r)
    for (int i = 0; i < 8; ++i) CHECK(yb.at({r, i}) == b.at({i}));

  CHECK_THROWS_AS(layer_norm(x, Tensor<double>::zeros({4}), zeros), DimensionError);

  auto g = random_tensor({8}, rng);
  auto be = random_tensor({8}, rng);
  auto rep = check([&] { return project(layer_norm(x, g, be)); }, {{"x", x}, {"gamma", g}, {"beta", be}});
  CHECK(rep.max_rel_error() <= 1e-5);
}

TEST_CASE("conv2d") {
  auto img = Tensor<double>::from({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  auto ident = conv2d(img, Tensor<double>::from({1, 1, 1, 1}, {1.0}), Tensor<double>(), {});
  CHECK(std::vector<double>(ident.data().begin(), ident.data().end()) ==
        std::vector<double>(img.data().begin(), img.data().end()));

  auto nine = conv2d(Tensor<double>::full({1, 1, 3, 3}, 1.0), Tensor<double>::full({1, 1, 3, 3}, 1.0),
                     Tensor<double>(), {});
  CHECK(nine.shape() == Shape{1, 1, 1, 1});
  CHECK(nine.item() == 9.0);

  CHECK_THROWS_AS(conv2d(Tensor<double>::zeros({1, 2, 4, 4}), Tensor<double>::zeros({1, 3, 3, 3}),
                         Tensor<double>(), {}),
                  DimensionError);

  // H' = floor((H + 2ph - kh) / sh) + 1
  auto strided = conv2d(Tensor<double>::zeros({1, 1, 7, 9}), Tensor<double>::zeros({2, 1, 3, 3}),
                        Tensor<double>(), {2, 3, 1, 1});
  CHECK(strided.shape() == Shape{1, 2, 4, 3});

  std::mt19937_64 rng(5);
  auto x = random_tensor({1, 2, 5, 6}, rng);
  auto w = random_tensor({3, 2, 3, 3}, rng);
  auto b = random_tensor({3}, rng);
  auto rep = check([&] { return project(conv2d(x, w, b, {2, 1, 1, 1})); }, {{"x", x}, {"w", w}, {"b", b}});
  CHECK(rep.max_rel_error() <= 1e-5);
}

TEST_CASE("cross_entropy") {
  std::vector<int> tgt{2};
  auto peaked = cross_entropy(Tensor<double>::from({1, 3}, {0, 0, 200}), tgt);
  CHECK(peaked.item() < 1e-12);

  std::vector<int> tgt38{5, 37};
  auto uni = cross_entropy(Tensor<double>::zeros({2, 38}), tgt38);
  CHECK(uni.item() == doctest::Approx(std::log(38.0)).epsilon(1e-14));
  CHECK(uni.item() == doctest::Approx(3.6376).epsilon(1e-4));

  std::vector<int> bad{38};
  CHECK_THROWS_AS(cross_entropy(Tensor<double>::zeros({1, 38}), bad), IndexError);

  std::mt19937_64 rng(6);
  auto logits = random_tensor({4, 6}, rng, -2, 2);
  std::vector<int> t{0, 5, 2, 3};
  CHECK(check([&] { return cross_entropy(logits, t); }, {{"logits", logits}}).max_rel_error() <= 1e-5);
}

TEST_CASE("elementwise and shape primitives pass gradient checks") {
  std::mt19937_64 rng(7);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 3, 4}, rng);
  auto c = random_tensor({3, 4}, rng);
  auto v = random_tensor({4}, rng);
  auto w = random_tensor({4, 5}, rng);
  const double tol = 1e-5;

  CHECK(check([&] { return project(add(a, b)); }, {{"a", a}, {"b", b}}).max_rel_error() <= tol);
  CHECK(check([&] { return project(add(a, c)); }, {{"a", a}, {"c", c}}).max_rel_error() <= tol);
  CHECK(check([&] { return project(sub(a, b)); }, {{"a", a}, {"b", b}}).max_rel_error() <= tol);
  CHECK(check([&] { return project(mul(a, b)); }, {{"a", a}, {"b", b}}).max_rel_error() <= tol);
  CHECK(check([&] { return project(mul(a, v)); }, {{"a", a}, {"v", v}}).max_rel_error() <= tol);
  CHECK(check([&] { return project(scale(a, 2.5)); }, {{"a", a}}).max_rel_error() <= tol);
  CHECK(check([&] { return project(linear(a, w, Tensor<double>::zeros({5}, true))); }, {{"a", a}, {"w", w}})
            .max_rel_error() <= tol);
  CHECK(check([&] { return project(reshape(a, {6, -1})); }, {{"a", a}}).max_rel_error() <= tol);
  CHECK(check([&] { return project(transpose(a, 0, 2)); }, {{"a", a}}).max_rel_error() <= tol);
  CHECK(check([&] { return project(transpose(a, 1, 2)); }, {{"a", a}}).max_rel_error() <= tol);
  std::vector<Tensor<double>> parts{a, b};
  CHECK(check([&] { return project(concat<double>(parts, 1)); }, {{"a", a}, {"b", b}}).max_rel_error() <= tol);
  CHECK(check([&] { return project(concat<double>(parts, -1)); }, {{"a", a}, {"b", b}}).max_rel_error() <= tol);
  CHECK(check([&] { return project(slice(a, 2, 1, 2)); }, {{"a", a}}).max_rel_error() <= tol);
  CHECK(check([&] { return mean(mul(a, a)); }, {{"a", a}}).max_rel_error() <= tol);

  // Keep relu inputs away from the kink.
  auto r = random_tensor({3, 5}, rng, 0.1, 1.0);
  for (std::size_t i = 0; i < 15; i += 2) r.mutable_data()[i] = -r.data()[i];
  CHECK(check([&] { return project(relu(r)); }, {{"r", r}}).max_rel_error() <= tol);
}

TEST_CASE("shape primitive forward values") {
  auto x = Tensor<double>::from({2, 3}, {0, 1, 2, 3, 4, 5});
  auto t = transpose(x, 0, 1);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(std::vector<double>(t.data().begin(), t.data().end()) == std::vector<double>{0, 3, 1, 4, 2, 5});
  auto s = slice(x, 1, 1, 2);
  CHECK(std::vector<double>(s.data().begin(), s.data().end()) == std::vector<double>{1, 2, 4, 5});
  std::vector<Tensor<double>> parts{x, s};
  auto c = concat<double>(parts, 1);
  CHECK(c.shape() == Shape{2, 5});
  CHECK(std::vector<double>(c.data().begin(), c.data().end()) ==
        std::vector<double>{0, 1, 2, 1, 2, 3, 4, 5, 4, 5});
  CHECK_THROWS_AS(slice(x, 1, 2, 2), DimensionError);
  CHECK_THROWS_AS(reshape(x, {4, 2}), DimensionError);
  CHECK_THROWS_AS(add(x, Tensor<double>::zeros({2})), DimensionError);
}

TEST_CASE("backward accumulation contract") {
  auto p = Tensor<double>::from({3}, {1, -2, 3}, true);
  backward(sum(p));
  for (double g : p.grad()) CHECK(g == 1.0);

  // Accumulates across calls until zeroed.
  backward(sum(p));
  for (double g : p.grad()) CHECK(g == 2.0);
  p.zero_grad();

  // f(p) + g(p): gradient is the sum of both contributions.
  backward(add(sum(mul(p, p)), sum(scale(p, 3.0))));
  for (std::size_t i = 0; i < 3; ++i) CHECK(p.grad()[i] == doctest::Approx(2 * p.data()[i] + 3));

  CHECK_THROWS_AS(backward(mul(p, p)), ContractError);
}

TEST_CASE("two call sites share one storage") {
  std::mt19937_64 rng(8);
  auto q = random_tensor({2, 3}, rng);
  auto v1 = random_tensor({3, 4}, rng, -1, 1, false);
  auto v2 = random_tensor({3, 4}, rng, -1, 1, false);
  auto site = [&](const Tensor<double>& v) { return project(softmax(matmul(q, v), 1), 11); };

  q.zero_grad();
  backward(site(v1));
  std::vector<double> g1(q.grad().begin(), q.grad().end());
  q.zero_grad();
  backward(site(v2));
  std::vector<double> g2(q.grad().begin(), q.grad().end());
  q.zero_grad();
  backward(add(site(v1), site(v2)));
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(q.grad()[i] - (g1[i] + g2[i])) <= 1e-12);

  auto rep = check([&] { return add(site(v1), site(v2)); }, {{"q", q}});
  CHECK(rep.max_rel_error() <= 1e-6);
}

TEST_CASE("grad_check reports") {
  std::mt19937_64 rng(9);
  auto p = random_tensor({5}, rng);
  auto rep = check([&] { return sum(mul(p, p)); }, {{"p", p}});
  CHECK(rep.max_rel_error() <= 1e-8);
  REQUIRE(rep.entries.size() == 1);
  CHECK(rep.entries[0].coords_checked == 5);

  SUBCASE("corrupted backward rule is flagged") {
    auto good = random_tensor({4}, rng);
    auto broken_square = [](const Tensor<double>& x) {
      std::vector<double> y(x.data().begin(), x.data().end());
      for (auto& v : y) v *= v;
      auto out = Tensor<double>::from(x.shape(), y);
      auto node = std::make_shared<GraphNode<double>>();
      node->inputs.push_back(x.storage());
      // Wrong: drops the factor 2.
      node->backward = [](TensorStorage<double>& o, std::span<const StoragePtr<double>> in) {
        auto& g = in[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * in[0]->data[i];
      };
      if (grad_mode_enabled()) {
        out.storage()->requires_grad = true;
        out.storage()->node = node;
      }
      return out;
    };
    auto r = check([&] { return add(sum(broken_square(p)), sum(mul(good, good))); }, {{"p", p}, {"good", good}});
    auto flagged = r.flagged(1e-5);
    REQUIRE(flagged.size() == 1);
    CHECK(flagged[0] == "p");
  }

  SUBCASE("subsampling") {
    auto big = random_tensor({50}, rng);
    GradCheckOptions o;
    o.max_coords_per_param = 10;
    auto r = grad_check([&] { return sum(mul(big, big)); }, {{"big", big}}, o);
    CHECK(r.entries[0].coords_checked == 10);
  }
}

TEST_CASE("graph is released after backward") {
  auto p = Tensor<double>::from({2}, {1, 2}, true);
  auto y = sum(mul(p, p));
  CHECK(y.has_node());
  backward(y);
  CHECK_FALSE(y.has_node());
}

TEST_CASE("no-grad mode builds no graph") {
  auto p = Tensor<double>::from({2}, {1, 2}, true);
  NoGradGuard guard;
  auto y = sum(mul(p, p));
  CHECK_FALSE(y.has_node());
}

TEST_CASE("determinism of forward and backward") {
  auto run = [] {
    std::mt19937_64 rng(10);
    auto x = random_tensor({2, 3, 6, 6}, rng);
    auto w = random_tensor({4, 3, 3, 3}, rng);
    auto y = mean(relu(conv2d(x, w, Tensor<double>(), {1, 1, 1, 1})));
    backward(y);
    std::vector<double> out{y.item()};
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  CHECK(run() == run());
}
