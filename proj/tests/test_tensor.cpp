#include <doctest.h>

#include <cmath>
#include <coattendwg/gradcheck.hpp>
#include <coattendwg/rng.hpp>
#include <coattendwg/tensor.hpp>

using namespace coattendwg;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

}  // namespace

TEST_CASE("matmul known products") {
  Tape tape;
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8});

  Tensor id = tape.matmul(eye, a);
  for (std::size_t i = 0; i < 4; ++i) CHECK(id.data()[i] == a.data()[i]);

  // Hand multiplication: [[1,2],[3,4]] . [[5,6],[7,8]] = [[19,22],[43,50]]
  Tensor c = tape.matmul(a, b);
  CHECK(c.data()[0] == doctest::Approx(19).epsilon(1e-14));
  CHECK(c.data()[1] == doctest::Approx(22).epsilon(1e-14));
  CHECK(c.data()[2] == doctest::Approx(43).epsilon(1e-14));
  CHECK(c.data()[3] == doctest::Approx(50).epsilon(1e-14));

  Tensor bad = Tensor::zeros({4, 5});
  CHECK_THROWS_WITH_AS(tape.matmul(Tensor::zeros({2, 3}), bad),
                       doctest::Contains("[2,3]"), std::invalid_argument);
}

TEST_CASE("softmax values and invariances") {
  Tape tape;
  Tensor flat = tape.softmax(Tensor::from_data({3}, {0, 0, 0}), 0);
  for (double v : flat.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  // Direct exp-normalize: exp([1,2,3]) / sum
  Tensor s = tape.softmax(Tensor::from_data({3}, {1, 2, 3}), 0);
  CHECK(s.data()[0] == doctest::Approx(0.090031).epsilon(1e-5));
  CHECK(s.data()[1] == doctest::Approx(0.244728).epsilon(1e-5));
  CHECK(s.data()[2] == doctest::Approx(0.665241).epsilon(1e-5));

  Tensor shifted = tape.softmax(Tensor::from_data({3}, {1001, 1002, 1003}), 0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(shifted.data()[i] - s.data()[i]) < 1e-9);
  }

  CHECK_THROWS_AS(tape.softmax(s, 2), std::invalid_argument);
}

TEST_CASE("softmax slices sum to one across seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Tape tape;
    Tensor x = random_tensor({2, 3, 4}, rng, 3.0);
    const int axis = static_cast<int>(seed % 3);
    Tensor y = tape.softmax(x, axis);
    // Sum along the softmaxed axis must be 1 for every slice.
    const int n = x.dim(axis);
    std::size_t inner = 1;
    for (int i = axis + 1; i < x.ndim(); ++i) inner *= static_cast<std::size_t>(x.dim(i));
    const std::size_t outer = x.numel() / (static_cast<std::size_t>(n) * inner);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
          total += y.data()[(o * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)) * inner + in];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
    // Shift invariance along the last axis.
    if (axis == 2) {
      Tensor xs = Tensor::zeros(x.shape());
      for (std::size_t i = 0; i < x.numel(); ++i) xs.data()[i] = x.data()[i] + 7.25;
      Tensor y2 = tape.softmax(xs, axis);
      for (std::size_t i = 0; i < y.numel(); ++i) {
        CHECK(std::abs(y.data()[i] - y2.data()[i]) < 1e-9);
      }
    }
  }
}

TEST_CASE("sigmoid values and symmetry") {
  Tape tape;
  Tensor y = tape.sigmoid(Tensor::from_data({2}, {0, 1}));
  CHECK(y.data()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y.data()[1] == doctest::Approx(0.731059).epsilon(1e-6));

  Rng rng(7);
  Tensor x = random_tensor({64}, rng, 5.0);
  Tensor neg = tape.scale(x, -1.0);
  Tensor a = tape.sigmoid(x);
  Tensor b = tape.sigmoid(neg);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(a.data()[i] > 0.0);
    CHECK(a.data()[i] < 1.0);
    CHECK(std::abs(a.data()[i] + b.data()[i] - 1.0) < 1e-12);
  }
}

TEST_CASE("layer_norm rows") {
  Tape tape;
  Tensor gamma = Tensor::full({4}, 1.0);
  Tensor beta = Tensor::zeros({4});
  Tensor constant = tape.layer_norm(Tensor::from_data({1, 4}, {2, 2, 2, 2}),
                                    gamma, beta, 1e-5);
  for (double v : constant.data()) CHECK(std::abs(v) < 1e-6);

  // Mean 2, population variance 1 -> [-1, 1]
  Tensor two = tape.layer_norm(Tensor::from_data({1, 2}, {1, 3}),
                               Tensor::full({2}, 1.0), Tensor::zeros({2}),
                               1e-12);
  CHECK(two.data()[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(two.data()[1] == doctest::Approx(1.0).epsilon(1e-5));

  Tensor pinned = tape.layer_norm(Tensor::from_data({1, 2}, {0.3, -9.1}),
                                  Tensor::zeros({2}), Tensor::full({2}, 5.0),
                                  1e-5);
  CHECK(pinned.data()[0] == 5.0);
  CHECK(pinned.data()[1] == 5.0);

  CHECK_THROWS_AS(tape.layer_norm(Tensor::zeros({1, 3}), gamma, beta, 1e-5),
                  std::invalid_argument);
}

TEST_CASE("layer_norm standardizes random rows") {
  Rng rng(11);
  Tape tape;
  Tensor x = random_tensor({8, 16}, rng, 2.0);
  Tensor y = tape.layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}),
                             1e-8);
  for (int r = 0; r < 8; ++r) {
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < 16; ++j) mean += y.data()[static_cast<std::size_t>(r) * 16 + j];
    mean /= 16.0;
    for (int j = 0; j < 16; ++j) {
      const double c = y.data()[static_cast<std::size_t>(r) * 16 + j] - mean;
      var += c * c;
    }
    var /= 16.0;
    CHECK(std::abs(mean) < 1e-8);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("conv1d_same basics") {
  Tape tape;

  // All-ones kernel over D=1 is a sliding-window sum with zero pads.
  Tensor x = Tensor::from_data({1, 3, 1}, {1, 2, 3});
  Tensor ones = Tensor::full({3, 1, 1}, 1.0);
  Tensor window = tape.conv1d_same(x, ones, Tensor::zeros({1}));
  CHECK(window.data()[0] == doctest::Approx(3).epsilon(1e-14));
  CHECK(window.data()[1] == doctest::Approx(6).epsilon(1e-14));
  CHECK(window.data()[2] == doctest::Approx(5).epsilon(1e-14));

  // Identity at the center tap reproduces the input.
  Rng rng(3);
  Tensor x2 = random_tensor({2, 4, 3}, rng);
  Tensor ident = Tensor::zeros({3, 3, 3});
  for (int d = 0; d < 3; ++d) {
    ident.data()[(1 * 3 + d) * 3 + d] = 1.0;
  }
  Tensor same = tape.conv1d_same(x2, ident, Tensor::zeros({3}));
  for (std::size_t i = 0; i < x2.numel(); ++i) {
    CHECK(same.data()[i] == x2.data()[i]);
  }

  // L=1 collapses to a pointwise linear map of the single token.
  Tensor tok = random_tensor({1, 1, 3}, rng);
  Tensor kern = random_tensor({3, 3, 3}, rng);
  Tensor bias = random_tensor({3}, rng);
  Tensor out = tape.conv1d_same(tok, kern, bias);
  for (int o = 0; o < 3; ++o) {
    double want = bias.data()[static_cast<std::size_t>(o)];
    for (int c = 0; c < 3; ++c) {
      want += tok.data()[static_cast<std::size_t>(c)] *
              kern.data()[(1 * 3 + static_cast<std::size_t>(c)) * 3 +
                          static_cast<std::size_t>(o)];
    }
    CHECK(out.data()[static_cast<std::size_t>(o)] == doctest::Approx(want).epsilon(1e-14));
  }

  CHECK_THROWS_AS(tape.conv1d_same(x2, Tensor::zeros({2, 3, 3}),
                                   Tensor::zeros({3})),
                  std::invalid_argument);
}

TEST_CASE("backward closed forms") {
  // loss = sum(x^2), x = [1,2] -> grad [2,4]
  {
    Tape tape;
    Tensor x = Tensor::from_data({2}, {1, 2});
    Tensor loss = tape.sum(tape.mul(x, x));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2).epsilon(1e-14));
    CHECK(x.grad()[1] == doctest::Approx(4).epsilon(1e-14));
  }
  // loss = sum(a*b) -> grad_a = b, grad_b = a
  {
    Tape tape;
    Tensor a = Tensor::from_data({2}, {1, 2});
    Tensor b = Tensor::from_data({2}, {3, 4});
    Tensor loss = tape.sum(tape.mul(a, b));
    tape.backward(loss);
    CHECK(a.grad()[0] == 3.0);
    CHECK(a.grad()[1] == 4.0);
    CHECK(b.grad()[0] == 1.0);
    CHECK(b.grad()[1] == 2.0);
  }
  // Non-scalar loss rejected.
  {
    Tape tape;
    Tensor x = Tensor::zeros({2});
    CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
  }
  // Disconnected leaf: grad stays zero, no error.
  {
    Tape tape;
    Tensor x = Tensor::from_data({2}, {1, 2});
    Tensor unused = Tensor::from_data({2}, {5, 5});
    Tensor loss = tape.sum(tape.mul(x, x));
    tape.backward(loss);
    CHECK_FALSE(unused.has_grad());
  }
}

TEST_CASE("fan-out gradients accumulate") {
  // loss = f(x) + g(x) with f = sum(x*x), g = sum(3x)
  Rng rng(21);
  Tensor x = random_tensor({5}, rng);

  Tape tape;
  Tensor f = tape.sum(tape.mul(x, x));
  Tensor g = tape.sum(tape.scale(x, 3.0));
  Tensor loss = tape.add(f, g);
  tape.backward(loss);

  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double want = 2.0 * x.data()[i] + 3.0;
    CHECK(std::abs(x.grad()[i] - want) < 1e-12);
  }
}

TEST_CASE("gradcheck quadratic is near exact") {
  Tensor x = Tensor::scalar(3.0);
  std::vector<NamedTensor> params{{"x", x}};
  auto report = gradcheck(params, [&](Tape& tape) { return tape.mul(x, x); },
                          1e-5);
  CHECK(report.entries.size() == 1);
  CHECK(report.entries[0].numeric == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(report.max_rel_err < 1e-9);
}

TEST_CASE("gradcheck reports disconnected parameters as zero") {
  Tensor x = Tensor::scalar(2.0);
  Tensor unused = Tensor::scalar(3.0);
  std::vector<NamedTensor> params{{"x", x}, {"unused", unused}};
  auto report = gradcheck(params, [&](Tape& tape) {
    return tape.mul(tape.mul(x, x), x);
  });
  CHECK(report.max_rel_err < 1e-8);
  CHECK(report.entries[1].analytic == 0.0);
}

TEST_CASE("gradcheck composite ops") {
  Rng rng(5);
  Tensor w = random_tensor({3, 4}, rng, 0.5);
  Tensor b = random_tensor({3}, rng, 0.5);
  Tensor gamma = Tensor::full({3}, 1.0);
  Tensor beta = Tensor::zeros({3});
  Tensor x = random_tensor({2, 4}, rng);

  std::vector<NamedTensor> params{
      {"w", w}, {"b", b}, {"gamma", gamma}, {"beta", beta}};
  auto report = gradcheck(params, [&](Tape& tape) {
    Tensor h = tape.add_bias(tape.matmul(x, tape.transpose(w, 0, 1)), b);
    Tensor n = tape.layer_norm(h, gamma, beta, 1e-5);
    Tensor s = tape.softmax(n, 1);
    Tensor act = tape.add(tape.sigmoid(s), tape.gelu(n));
    return tape.sum(tape.mul(act, act));
  });
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("bmm and transpose agree with explicit loops") {
  Rng rng(17);
  Tensor a = random_tensor({2, 3, 2, 4}, rng);
  Tensor b = random_tensor({2, 3, 4, 5}, rng);
  Tape tape;
  Tensor c = tape.bmm(a, b);
  REQUIRE(c.shape() == std::vector<int>({2, 3, 2, 5}));
  for (std::size_t g = 0; g < 6; ++g) {
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        double want = 0.0;
        for (std::size_t p = 0; p < 4; ++p) {
          want += a.data()[g * 8 + i * 4 + p] * b.data()[g * 20 + p * 5 + j];
        }
        CHECK(c.data()[g * 10 + i * 5 + j] == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }

  // transpose_b path: scores = q . k^T
  Tensor q = random_tensor({2, 2, 3, 4}, rng);
  Tensor k = random_tensor({2, 2, 5, 4}, rng);
  Tensor s = tape.bmm(q, k, /*transpose_b=*/true);
  REQUIRE(s.shape() == std::vector<int>({2, 2, 3, 5}));
  for (std::size_t g = 0; g < 4; ++g) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        double want = 0.0;
        for (std::size_t p = 0; p < 4; ++p) {
          want += q.data()[g * 12 + i * 4 + p] * k.data()[g * 20 + j * 4 + p];
        }
        CHECK(s.data()[g * 15 + i * 5 + j] == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }

  // Round-trip transpose is the identity.
  Tensor t = tape.transpose(tape.transpose(a, 1, 3), 1, 3);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    CHECK(t.data()[i] == a.data()[i]);
  }
}

TEST_CASE("bmm and structural ops pass gradcheck") {
  Rng rng(23);
  Tensor a = random_tensor({2, 2, 3}, rng, 0.7);
  Tensor b = random_tensor({2, 3, 2}, rng, 0.7);
  Tensor kernel = random_tensor({3, 2, 2}, rng, 0.5);
  Tensor bias = random_tensor({2}, rng, 0.5);
  std::vector<NamedTensor> params{
      {"a", a}, {"b", b}, {"kernel", kernel}, {"bias", bias}};
  auto report = gradcheck(params, [&](Tape& tape) {
    Tensor c = tape.bmm(a, b);                    // [2,2,2]
    Tensor s = tape.bmm(c, c, /*transpose_b=*/true);
    Tensor flat = tape.reshape(s, {2, 4});
    Tensor scaled = tape.scale_rows(flat, tape.slice_col(flat, 1));
    Tensor cat = tape.concat_cols(scaled, flat);  // [2,8]
    Tensor seq = tape.reshape(tape.transpose(cat, 0, 1), {1, 8, 2});
    Tensor conv = tape.conv1d_same(seq, kernel, bias);
    Tensor act = tape.relu(tape.sub(conv, Tensor::full({1, 8, 2}, 0.01)));
    return tape.sum(tape.mul(act, act));
  });
  CHECK(report.max_rel_err < 1e-6);
}
