// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hclab/autodiff.hpp"
#include "hclab/hyperconn.hpp"
#include "support.hpp"

using hclab::ad::Tensor;
namespace ad = hclab::ad;
using hclab::test::max_rel_error;
using hclab::test::numeric_grad;
using hclab::test::random_tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }
std::vector<double> grads(const Tensor& t) { return {t.grad().begin(), t.grad().end()}; }

// Gradient of sum(op(x) * probe) against the test-side central differences.
double op_error(const std::function<Tensor(const Tensor&)>& op, Tensor x, const Tensor& probe,
                double eps) {
  x.zero_grad();
  ad::sum(ad::mul(op(x), probe)).backward();
  const auto analytic = grads(x);
  const auto numeric =
      numeric_grad([&] { return ad::sum(ad::mul(op(x), probe)).item(); }, x, eps);
  return max_rel_error(analytic, numeric);
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("tensor invariants") {
    const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == ad::numel(t.shape()));
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ad::ShapeError);
    CHECK(t.all_finite());
    CHECK_FALSE(Tensor::from({2}, {1.0, std::nan("")}).all_finite());
    CHECK_FALSE(Tensor::from({1}, {INFINITY}).all_finite());
    Tensor g = Tensor::from({3}, {1, 2, 3}, true);
    ad::sum(g).backward();
    CHECK(g.grad().size() == g.size());
  }

  TEST_CASE("matmul examples") {
    const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(values(ad::matmul(eye, m)) == std::vector<double>{1, 2, 3, 4});
    const Tensor p = Tensor::from({2, 2}, {1, 0, 0, 0});
    const Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
    CHECK(values(ad::matmul(p, b)) == std::vector<double>{5, 6, 0, 0});
  }

  TEST_CASE("matmul gradient matches central differences") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
    const Tensor b = Tensor::from({2, 2}, {1, 0, 0, 1});
    ad::sum(ad::matmul(a, b)).backward();
    const auto numeric = numeric_grad([&] { return ad::sum(ad::matmul(a, b)).item(); }, a, 1e-5);
    CHECK(max_rel_error(grads(a), numeric) < 1e-7);
    for (double g : grads(a)) CHECK(g == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("matmul shape mismatch names both shapes") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({2, 3});
    try {
      ad::matmul(a, b);
      FAIL("expected ShapeError");
    } catch (const ad::ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
      CHECK(msg.find("[2x3]", msg.find("[2x3]") + 1) != std::string::npos);
    }
  }

  TEST_CASE("batched matmul agrees with per-slice products") {
    std::mt19937_64 rng(3);
    const Tensor a = random_tensor({3, 2, 4}, rng);
    const Tensor b = random_tensor({4, 5}, rng);
    const Tensor c = ad::matmul(a, b);
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
          double s = 0.0;
          for (std::size_t r = 0; r < 4; ++r) s += a[k * 8 + i * 4 + r] * b[r * 5 + j];
          CHECK(c[k * 10 + i * 5 + j] == doctest::Approx(s).epsilon(1e-14));
        }
      }
    }
  }

  TEST_CASE("elementwise examples") {
    CHECK(ad::tanh(Tensor::scalar(0.0)).item() == 0.0);
    CHECK(ad::sigmoid(Tensor::scalar(0.0)).item() == 0.5);
    CHECK(ad::tanh(Tensor::scalar(4.0)).item() == doctest::Approx(std::tanh(4.0)).epsilon(1e-15));
    CHECK(ad::tanh(Tensor::scalar(4.0)).item() == doctest::Approx(0.999329299739).epsilon(1e-12));
    const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(values(ad::add(a, Tensor::scalar(1.0))) == std::vector<double>{2, 3, 4, 5});
    CHECK(values(ad::sub(a, a)) == std::vector<double>{0, 0, 0, 0});
    CHECK(values(ad::mul(a, a)) == std::vector<double>{1, 4, 9, 16});
    CHECK(values(ad::scale(a, 0.5)) == std::vector<double>{0.5, 1, 1.5, 2});
    CHECK_THROWS_AS(ad::add(a, Tensor::zeros({3})), ad::ShapeError);
  }

  TEST_CASE("elementwise backward rules") {
    std::mt19937_64 rng(11);
    for (int s = 0; s < 10; ++s) {
      Tensor x = random_tensor({6}, rng, 1.0, true);
      ad::sum(ad::tanh(x)).backward();
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double t = std::tanh(x[i]);
        CHECK(x.grad()[i] == doctest::Approx(1.0 - t * t).epsilon(1e-14));
      }
      x.zero_grad();
      ad::sum(ad::sigmoid(x)).backward();
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double sg = 1.0 / (1.0 + std::exp(-x[i]));
        CHECK(x.grad()[i] == doctest::Approx(sg * (1.0 - sg)).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("softmax examples") {
    const Tensor u = ad::softmax(Tensor::from({3}, {0, 0, 0}));
    for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const Tensor p = ad::softmax(Tensor::from({3}, {-8, 0, -8}));
    const double e8 = std::exp(-8.0);
    const double side = e8 / (2.0 * e8 + 1.0);
    CHECK(std::abs(p[0] - side) < 1e-6);
    CHECK(std::abs(p[1] - 1.0 / (2.0 * e8 + 1.0)) < 1e-6);
    CHECK(std::abs(p[0] - 3.3535e-4) < 1e-6);
    CHECK(std::abs(p[1] - 0.99933) < 1e-6);
  }

  TEST_CASE("softmax gradient matches central differences") {
    std::mt19937_64 rng(5);
    for (int s = 0; s < 20; ++s) {
      const Tensor x = random_tensor({5}, rng, 1.0, true);
      const Tensor probe = random_tensor({5}, rng);
      CHECK(op_error([](const Tensor& t) { return ad::softmax(t); }, x, probe, 1e-5) < 1e-7);
    }
  }

  TEST_CASE("softmax stays normalized at large magnitudes") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int s = 0; s < 50; ++s) {
      std::vector<double> v(16);
      for (double& x : v) x = u(rng);
      const Tensor p = ad::softmax(Tensor::from({4, 4}, v));
      for (std::size_t r = 0; r < 4; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
          CHECK(p[r * 4 + c] >= 0.0);
          sum += p[r * 4 + c];
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
      }
    }
  }

  TEST_CASE("rmsnorm examples") {
    const Tensor one = Tensor::full({4}, 1.0);
    const Tensor y = ad::rmsnorm(Tensor::from({4}, {1, 1, 1, 1}), one);
    for (double v : y.data()) CHECK(std::abs(v - 1.0) < 5e-6);
    const Tensor z = ad::rmsnorm(Tensor::from({2}, {0, 0}), Tensor::full({2}, 1.0));
    CHECK(z[0] == 0.0);
    CHECK(z[1] == 0.0);
    const Tensor w = ad::rmsnorm(Tensor::from({2}, {3, 4}), Tensor::full({2}, 1.0));
    const double denom = std::sqrt(12.5 + 1e-5);
    CHECK(w[0] == doctest::Approx(3.0 / denom).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(4.0 / denom).epsilon(1e-14));
    CHECK(std::abs(w[0] - 0.84852) < 1e-5);
    CHECK(std::abs(w[1] - 1.13137) < 1e-5);
  }

  TEST_CASE("inverse examples and gradient") {
    const Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(values(ad::inverse(eye)) == values(eye));
    const Tensor d = ad::inverse(Tensor::from({2, 2}, {2, 0, 0, 4}));
    CHECK(values(d) == std::vector<double>{0.5, 0, 0, 0.25});

    std::mt19937_64 rng(21);
    for (int s = 0; s < 10; ++s) {
      Tensor a = random_tensor({4, 4}, rng, 0.3, true);
      for (std::size_t i = 0; i < 4; ++i) a.mutable_data()[i * 5] += 2.0;
      const Tensor prod = ad::matmul(a, ad::inverse(a));
      for (std::size_t i = 0; i < 16; ++i) {
        CHECK(std::abs(prod[i] - (i % 5 == 0 ? 1.0 : 0.0)) <= 1e-10);
      }
      const Tensor probe = random_tensor({4, 4}, rng);
      CHECK(op_error([](const Tensor& t) { return ad::inverse(t); }, a, probe, 1e-5) < 1e-6);
    }
  }

  TEST_CASE("inverse reports the singular pivot") {
    const Tensor s = Tensor::from({3, 3}, {1, 2, 3, 2, 4, 6, 1, 0, 1});
    try {
      ad::inverse(s);
      FAIL("expected SingularMatrixError");
    } catch (const ad::SingularMatrixError& e) {
      CHECK(e.pivot_index() == 2);
    }
  }

  TEST_CASE("grad_check examples") {
    const Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    CHECK(ad::grad_check([](const Tensor& t) { return ad::sum(ad::mul(t, t)); }, x) < 1e-8);

    // Two-layer toy net: cross-entropy of tanh(x W1) W2.
    std::mt19937_64 rng(4);
    const Tensor in = random_tensor({5, 6}, rng);
    const Tensor w1 = random_tensor({6, 7}, rng, 0.5, true);
    const Tensor w2 = random_tensor({7, 4}, rng, 0.5, true);
    const std::vector<int> targets{0, 3, 1, 2, 3};
    const std::vector<Tensor> params{w1, w2};
    const double err = ad::grad_check(
        [&] { return ad::cross_entropy(ad::matmul(ad::tanh(ad::matmul(in, w1)), w2), targets); },
        params);
    CHECK(err < 1e-5);

    CHECK_THROWS_AS(ad::grad_check([](const Tensor& t) { return ad::scale(t, 2.0); }, x),
                    ad::ShapeError);
    CHECK_THROWS(ad::grad_check([](const Tensor& t) { return ad::sum(t); }, x, 1e-3));
  }

  TEST_CASE("grad_check through the sHC residual generator") {
    // Weights at fan-in scale, biases and gates O(1): no tanh saturation.
    std::mt19937_64 rng(8);
    const std::size_t n = 4, c = 8;
    hclab::VariantParams p = hclab::VariantParams::init(hclab::Variant::kShc, n, c);
    std::normal_distribution<double> weight(0.0, 1.0 / std::sqrt(double(n * c)));
    std::normal_distribution<double> bias(0.0, 1.0), gate(1.0, 0.1);
    for (hclab::NamedParam& np : p.parameters("")) {
      auto& dist = np.hc_weight ? weight
                   : (np.name.starts_with("alpha") || np.name == "norm_gain" ||
                      np.name.starts_with("tau") || np.name.starts_with("gamma"))
                       ? gate
                       : bias;
      for (double& v : np.tensor.mutable_data()) v = dist(rng);
    }
    const Tensor x = random_tensor({3, n * c}, rng);
    const Tensor probe = random_tensor({3, n, n}, rng);
    std::vector<Tensor> inputs;
    for (const hclab::NamedParam& np : p.parameters("")) inputs.push_back(np.tensor);
    const double err = ad::grad_check(
        [&] {
          const hclab::SharedMix mix = hclab::gen_shared(x, p);
          return ad::sum(ad::mul(hclab::gen_res_shc(mix.x_norm, p), probe));
        },
        inputs, 1e-4);
    CHECK(err < 1e-4);
  }

  TEST_CASE("shared subexpressions accumulate additively") {
    std::mt19937_64 rng(2);
    for (int s = 0; s < 10; ++s) {
      Tensor x = random_tensor({6}, rng, 1.0, true);
      auto f = [&] { return ad::sum(ad::mul(ad::sigmoid(x), x)); };
      f().backward();
      const auto once = grads(x);
      x.zero_grad();
      const Tensor shared = f();
      ad::add(shared, shared).backward();
      for (std::size_t i = 0; i < once.size(); ++i) CHECK(x.grad()[i] == 2.0 * once[i]);
    }
  }

  TEST_CASE("backward visits each node once") {
    // A diamond: y = a*a + a*a where both products share `a` through one node.
    Tensor x = Tensor::from({1}, {3.0}, true);
    const Tensor a = ad::scale(x, 2.0);
    const Tensor y = ad::sum(ad::add(ad::mul(a, a), ad::mul(a, a)));
    y.backward();
    CHECK(x.grad()[0] == doctest::Approx(4.0 * 2.0 * 6.0 * 1.0).epsilon(1e-15));
  }

  TEST_CASE("no-grad guard records no history") {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    {
      ad::NoGradGuard guard;
      CHECK_FALSE(ad::grad_enabled());
      const Tensor y = ad::mul(x, x);
      CHECK_FALSE(y.requires_grad());
    }
    CHECK(ad::grad_enabled());
    CHECK(ad::mul(x, x).requires_grad());
  }

  TEST_CASE("causal attention rows are normalized and causal") {
    std::mt19937_64 rng(13);
    const std::size_t batch = 2, seq = 5, heads = 2, c = 8;
    const Tensor qkv = random_tensor({batch * seq, 3 * c}, rng);
    const auto probs = ad::causal_attention_probs(qkv, batch, seq, heads);
    for (std::size_t row = 0; row < batch * heads * seq; ++row) {
      const std::size_t i = row % seq;
      double sum = 0.0;
      for (std::size_t j = 0; j < seq; ++j) {
        const double p = probs[row * seq + j];
        if (j > i) CHECK(p == 0.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }

  TEST_CASE("cross entropy values") {
    const Tensor uniform = Tensor::zeros({3, 256});
    const std::vector<int> t{0, 17, 255};
    CHECK(ad::cross_entropy(uniform, t).item() == doctest::Approx(std::log(256.0)).epsilon(1e-14));
    std::vector<double> v(3 * 256, 0.0);
    for (std::size_t r = 0; r < 3; ++r) v[r * 256 + t[r]] = 100.0;
    CHECK(ad::cross_entropy(Tensor::from({3, 256}, v), t).item() < 1e-40);
    CHECK_THROWS_AS(ad::cross_entropy(uniform, std::vector<int>{0, 1, 256}), std::out_of_range);
  }

  TEST_CASE("structural ops") {
    const Tensor v = Tensor::from({3}, {1, 2, 3});
    CHECK(values(ad::skew_from_upper(v, 3)) ==
          std::vector<double>{0, 1, 2, -1, 0, 3, -2, -3, 0});
    CHECK(values(ad::diag_embed(Tensor::from({2}, {4, 5}))) == std::vector<double>{4, 0, 0, 5});
    const Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(values(ad::transpose(x)) == std::vector<double>{1, 4, 2, 5, 3, 6});
    CHECK(ad::reshape(x, {3, 2}).shape() == ad::Shape{3, 2});
    CHECK_THROWS_AS(ad::reshape(x, {4, 2}), ad::ShapeError);
    const Tensor r = ad::replicate_streams(x, 3);
    CHECK(r.shape() == ad::Shape{2, 3, 3});
    CHECK(values(ad::mean_streams(r)) == values(x));
    const std::vector<int> ids{1, 0, 1};
    CHECK(values(ad::embedding(x, ids)) == std::vector<double>{4, 5, 6, 1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(ad::embedding(x, std::vector<int>{2}), std::out_of_range);
  }
}
