#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gradcheck.hpp"
#include "mrf/error.hpp"
#include "mrf/numeric/ops.hpp"
#include "mrf/numeric/rng.hpp"
#include "mrf/numeric/tape.hpp"

using namespace mrf;
using doctest::Approx;

namespace {

std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t r = a.dim(0), s = a.dim(1), t = b.dim(1);
  std::vector<double> out(r * t, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < t; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < s; ++k) acc += a.at(i, k) * b.at(k, j);
      out[i * t + j] = acc;
    }
  return out;
}

void check_op(std::vector<Tensor> params, const std::function<Tensor()>& fn) {
  auto res = testing::check_gradients(std::move(params), fn);
  INFO("worst element " << res.worst << " abs " << res.max_abs_error);
  CHECK(res.max_rel_error < 1e-6);
}

}  // namespace

TEST_CASE("matmul anchors") {
  Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  CHECK(matmul(id, b).bitwise_equal(b));

  Tensor row = Tensor::from({1, 2}, {1, 2});
  Tensor col = Tensor::from({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == 11.0);

  CHECK_THROWS_AS(matmul(row, row), ShapeError);
}

TEST_CASE("matmul matches a triple-loop oracle exactly") {
  Rng rng(42);
  Tensor a = Tensor::randn({3, 4}, 1.0, rng);
  Tensor b = Tensor::randn({4, 2}, 1.0, rng);
  auto expected = naive_matmul(a, b);
  Tensor got = matmul(a, b);
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(got[i] == expected[i]);
}

TEST_CASE("softmax") {
  SUBCASE("uniform") {
    Tensor p = softmax(Tensor::zeros({8}));
    for (double v : p.data()) CHECK(v == 0.125);
  }
  SUBCASE("large logits do not overflow") {
    Tensor p = softmax(Tensor::from({2}, {1000.0, 0.0}));
    CHECK(p[0] == Approx(1.0));
    CHECK(p[1] < 1e-300);
    CHECK(std::isfinite(p[1]));
  }
  SUBCASE("direct evaluation") {
    Tensor p = softmax(Tensor::from({3}, {1, 2, 3}));
    CHECK(p[0] == Approx(0.09003).epsilon(1e-4));
    CHECK(p[1] == Approx(0.24473).epsilon(1e-4));
    CHECK(p[2] == Approx(0.66524).epsilon(1e-4));
    CHECK(std::abs(p[0] - 0.09003) < 1e-5);
    CHECK(std::abs(p[1] - 0.24473) < 1e-5);
    CHECK(std::abs(p[2] - 0.66524) < 1e-5);
  }
  SUBCASE("empty input rejected") { CHECK_THROWS_AS(softmax(Tensor::scalar(1.0)), ShapeError); }
}

TEST_CASE("softmax sums to one and is permutation-equivariant") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(16);
    Tensor x = Tensor::randn({n}, 5.0, rng);
    Tensor p = softmax(x);
    double total = std::accumulate(p.data().begin(), p.data().end(), 0.0);
    CHECK(std::abs(total - 1.0) <= 1e-12);
    for (double v : p.data()) CHECK(v > 0.0);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    std::vector<double> shuffled(n);
    for (std::size_t i = 0; i < n; ++i) shuffled[i] = x[perm[i]];
    Tensor q = softmax(Tensor::from({n}, shuffled));
    for (std::size_t i = 0; i < n; ++i) CHECK(q[i] == Approx(p[perm[i]]).epsilon(1e-14));
  }
}

TEST_CASE("backward basics") {
  Rng rng(3);
  Tensor w = Tensor::randn({5}, 1.0, rng, true);
  {
    GradTape tape;
    tape.backward(sum(w));
  }
  for (double g : w.grad()) CHECK(g == 1.0);

  w.zero_grad();
  {
    GradTape tape;
    tape.backward(sum(mul(w, w)));
  }
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w.grad()[i] == 2.0 * w[i]);

  SUBCASE("non-scalar loss rejected") {
    GradTape tape;
    Tensor y = scale(w, 2.0);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
  }
  SUBCASE("backward twice is an error") {
    GradTape tape;
    Tensor loss = sum(w);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), StateError);
  }
  SUBCASE("no recording without a tape") {
    Tensor y = sum(w);
    GradTape tape;
    CHECK_THROWS_AS(tape.backward(y), StateError);
  }
}

TEST_CASE("cosine similarity") {
  Tensor a = Tensor::from({3}, {0.3, -1.2, 2.0});
  CHECK(cosine_similarity(a, a) == Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(Tensor::from({2}, {1, 0}), Tensor::from({2}, {0, 1})) == 0.0);
  CHECK(std::abs(cosine_similarity(Tensor::from({2}, {1, 1}), Tensor::from({2}, {1, 0})) - 0.70711) < 1e-5);
  CHECK_THROWS_AS(cosine_similarity(Tensor::zeros({2}), a.clone()), ShapeError);
  CHECK_THROWS_AS(cosine_similarity(Tensor::zeros({3}), a), NumericError);
  Rng rng(77);
  for (int i = 0; i < 1000; ++i) {
    const Tensor v = Tensor::randn({1 + rng.index(64)}, std::pow(10.0, rng.uniform(-5, 5)), rng);
    CHECK(cosine_similarity(v, v.clone()) == 1.0);
  }
}

TEST_CASE("identical seeds replay bit-identically") {
  Rng r1(1234), r2(1234);
  Tensor a = Tensor::randn({4, 7}, 0.02, r1);
  Tensor b = Tensor::randn({4, 7}, 0.02, r2);
  CHECK(a.bitwise_equal(b));
  Tensor c = linear(a, Tensor::uniform({3, 7}, -1, 1, r1));
  Tensor d = linear(b, Tensor::uniform({3, 7}, -1, 1, r2));
  CHECK(c.bitwise_equal(d));
}

TEST_CASE("normal draws have the right moments") {
  Rng rng(99);
  double s = 0, ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    s += v;
    ss += v * v;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(ss / n - 1.0) < 0.01);
}

TEST_CASE("finite checks") {
  const bool saved = finite_checks_enabled();
  set_finite_checks(true);
  Tensor a = Tensor::from({2}, {1.0, 2.0});
  CHECK_THROWS_AS(scale(a, std::numeric_limits<double>::infinity()), NumericError);
  set_finite_checks(saved);
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(11);
  auto rnd = [&](Shape s) { return Tensor::randn(std::move(s), 1.0, rng); };

  SUBCASE("matmul / linear") {
    Tensor a = rnd({3, 4}), b = rnd({4, 2}), w = rnd({5, 4});
    check_op({a, b}, [&] { return sum(square(matmul(a, b))); });
    check_op({a, w}, [&] { return sum(square(linear(a, w))); });
  }
  SUBCASE("elementwise") {
    Tensor a = rnd({3, 3}), b = rnd({3, 3}), c = rnd({3, 3});
    check_op({a, b}, [&] { return sum(mul(sub(a, b), add(a, b))); });
    check_op({a, b, c}, [&] {
      std::vector<Tensor> t{a, b, scale(c, -0.5)};
      return sum(square(add_n(t)));
    });
    check_op({a}, [&] { return sum(mul(gelu(a), a)); });
    check_op({a}, [&] { return mean(square(a)); });
  }
  SUBCASE("shape plumbing") {
    Tensor a = rnd({2, 6}), b = rnd({3}), c = rnd({1, 3}), w = rnd({4, 3});
    check_op({a, w}, [&] { return sum(square(linear(reshape(a, {4, 3}), w))); });
    check_op({b, c, w}, [&] {
      std::vector<Tensor> parts{b, c, b};
      return sum(square(linear(concat_rows(parts), w)));
    });
    check_op({a}, [&] { return sum(square(mean_rows(a))); });
  }
  SUBCASE("gathers and scatters") {
    Tensor table = rnd({5, 3}), x = rnd({4, 3}), g = rnd({4}), w = rnd({3, 3});
    std::vector<std::int32_t> ids{1, 4, 1, 0};
    std::vector<std::size_t> rows{2, 0, 2}, cols{1, 2, 0};
    check_op({table}, [&] { return sum(square(embedding(table, ids))); });
    check_op({x}, [&] { return sum(square(linear(gather_rows(x, rows), w))); });
    check_op({x}, [&] { return sum(square(scatter_rows(gather_rows(x, rows), rows, 4))); });
    check_op({x}, [&] { return sum(square(gather_elements(x, rows, cols))); });
    check_op({x, g}, [&] { return sum(square(scale_rows(x, g))); });
  }
  SUBCASE("normalization and softmax family") {
    Tensor x = rnd({3, 5}), gain = rnd({5}), w = rnd({5, 5});
    check_op({x, gain}, [&] { return sum(square(linear(rms_norm(x, gain), w))); });
    check_op({x, w}, [&] { return sum(mul(softmax(linear(x, w)), x)); });
    check_op({x}, [&] { return sum(square(logsumexp(x))); });
    std::vector<std::int32_t> targets{2, -1, 4};
    check_op({x, w}, [&] { return cross_entropy(linear(x, w), targets, -1); });
  }
  SUBCASE("grouped reductions") {
    Tensor x = rnd({3, 6});
    check_op({x}, [&] { return sum(square(reduce_strided(x, 3, Reduce::sum))); });
    check_op({x}, [&] { return sum(square(reduce_strided(x, 2, Reduce::max))); });
    check_op({x}, [&] { return sum(square(reduce_blocks(x, 3, Reduce::sum))); });
    check_op({x}, [&] { return sum(square(reduce_blocks(x, 2, Reduce::max))); });
  }
  SUBCASE("causal attention") {
    const std::size_t batch = 2, seq = 4, heads = 2;
    Tensor q = rnd({batch * seq, 6}), k = rnd({batch * seq, 6}), v = rnd({batch * seq, 6});
    check_op({q, k, v}, [&] { return sum(square(causal_attention(q, k, v, batch, seq, heads))); });
  }
}

TEST_CASE("grouped reductions compute the stated layouts") {
  Tensor x = Tensor::from({1, 6}, {1, 2, 3, 10, 20, 30});
  Tensor s = reduce_strided(x, 2, Reduce::sum);
  CHECK(s.shape() == Shape{1, 3});
  CHECK(s[0] == 11);
  CHECK(s[2] == 33);
  Tensor m = reduce_blocks(x, 3, Reduce::max);
  CHECK(m[0] == 3);
  CHECK(m[1] == 30);
}

TEST_CASE("causal attention rows are distributions and ignore the future") {
  Rng rng(5);
  const std::size_t seq = 5, heads = 2;
  Tensor q = Tensor::randn({seq, 4}, 1.0, rng);
  Tensor k = Tensor::randn({seq, 4}, 1.0, rng);
  Tensor v = Tensor::randn({seq, 4}, 1.0, rng);
  std::vector<double> probs;
  Tensor out = causal_attention(q, k, v, 1, seq, heads, &probs);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < seq; ++i) {
      double total = 0;
      for (std::size_t j = 0; j < seq; ++j) {
        double p = probs[(h * seq + i) * seq + j];
        if (j > i) CHECK(p == 0.0);
        total += p;
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  // perturb the last position's key and value: earlier outputs are unchanged
  Tensor k2 = k.clone(), v2 = v.clone();
  for (std::size_t c = 0; c < 4; ++c) {
    k2.mutable_data()[(seq - 1) * 4 + c] += 3.0;
    v2.mutable_data()[(seq - 1) * 4 + c] -= 2.0;
  }
  Tensor out2 = causal_attention(q, k2, v2, 1, seq, heads);
  for (std::size_t i = 0; i < (seq - 1) * 4; ++i) CHECK(out[i] == out2[i]);
}
