#include <cmath>
#include <cstdio>
#include <cstring>

#include "doctest.h"
#include "o2o/errors.hpp"
#include "o2o/ndmath.hpp"
#include "test_helpers.hpp"

using namespace o2o;

TEST_SUITE_BEGIN("ndmath");

TEST_CASE("matmul small known product") {
  Matrix a(2, 3);
  a(0, 0) = 1; a(0, 1) = 2; a(0, 2) = 3;
  a(1, 0) = 4; a(1, 1) = 5; a(1, 2) = 6;
  Matrix b(3, 2);
  b(0, 0) = 7; b(0, 1) = 8;
  b(1, 0) = 9; b(1, 1) = 10;
  b(2, 0) = 11; b(2, 1) = 12;
  Matrix c = matmul(a, b);
  CHECK(c(0, 0) == doctest::Approx(58));
  CHECK(c(0, 1) == doctest::Approx(64));
  CHECK(c(1, 0) == doctest::Approx(139));
  CHECK(c(1, 1) == doctest::Approx(154));

  Matrix cnt = matmul_nt(a, transpose(b));
  Matrix ctn = matmul_tn(transpose(a), b);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(cnt.data()[i] == doctest::Approx(c.data()[i]));
    CHECK(ctn.data()[i] == doctest::Approx(c.data()[i]));
  }
}

TEST_CASE("matmul rejects mismatched shapes") {
  Matrix a(2, 3), b(4, 2);
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(matmul_nt(a, Matrix(2, 4)), ShapeError);
}

TEST_CASE("forward: zero-weight net maps anything to zero") {
  Rng rng(1);
  Mlp net({3, 4, 2}, Activation::kRelu, rng);
  for (auto& w : net.weights()) w.fill(0.0);
  for (auto& b : net.biases()) b.fill(0.0);
  Matrix x(2, 3);
  x(0, 0) = 1.5; x(1, 2) = -2.0;
  Matrix y = net.forward(x);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 0.0);
}

TEST_CASE("forward: identity linear layer returns its input") {
  Rng rng(2);
  Mlp net({3, 3}, Activation::kRelu, rng);
  net.weights()[0].fill(0.0);
  net.biases()[0].fill(0.0);
  for (std::size_t i = 0; i < 3; ++i) net.weights()[0](i, i) = 1.0;
  Matrix x(1, 3);
  x(0, 0) = -0.7; x(0, 1) = 0.25; x(0, 2) = 3.0;
  Matrix y = net.forward(x);
  for (std::size_t j = 0; j < 3; ++j) CHECK(y(0, j) == x(0, j));
}

TEST_CASE("forward: 2-2-1 net matches a hand computation") {
  Rng rng(3);
  Mlp net({2, 2, 1}, Activation::kRelu, rng);
  net.weights()[0](0, 0) = 0.5;  net.weights()[0](0, 1) = -0.25;
  net.weights()[0](1, 0) = 0.75; net.weights()[0](1, 1) = 1.0;
  net.biases()[0](0, 0) = 0.1;   net.biases()[0](0, 1) = -0.2;
  net.weights()[1](0, 0) = 1.5;  net.weights()[1](0, 1) = -2.0;
  net.biases()[1](0, 0) = 0.05;
  Matrix x(1, 2);
  x(0, 0) = 1.0; x(0, 1) = 1.0;
  // hidden = relu(0.35, 1.55); out = 1.5*0.35 - 2.0*1.55 + 0.05
  CHECK(net.forward(x)(0, 0) == doctest::Approx(-2.525).epsilon(1e-12));
}

TEST_CASE("forward rejects wrong input width") {
  Rng rng(4);
  Mlp net({3, 2}, Activation::kRelu, rng);
  CHECK_THROWS_AS(net.forward(Matrix(1, 4)), ShapeError);
}

TEST_CASE("backward: linear net squared loss gives 2(y_hat - y) x") {
  Rng rng(5);
  Mlp net({3, 1}, Activation::kRelu, rng);
  Matrix x(1, 3);
  x(0, 0) = 0.5; x(0, 1) = -1.0; x(0, 2) = 2.0;
  double target = 0.3;
  Tape tape;
  Matrix out = net.forward(x, tape);
  Matrix upstream(1, 1);
  upstream(0, 0) = 2.0 * (out(0, 0) - target);  // d/dout of (out - y)^2
  GradBundle g = net.backward(tape, upstream);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(g.dw[0](0, j) == doctest::Approx(2.0 * (out(0, 0) - target) * x(0, j)));
  CHECK(g.db[0](0, 0) == doctest::Approx(2.0 * (out(0, 0) - target)));
}

TEST_CASE("backward: zero upstream gives a zero bundle") {
  Rng rng(6);
  Mlp net({2, 5, 3}, Activation::kTanh, rng);
  Matrix x(4, 2);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
  Tape tape;
  net.forward(x, tape);
  GradBundle g = net.backward(tape, Matrix(4, 3));
  for (double v : o2o::testing::flatten(g)) CHECK(v == 0.0);
}

TEST_CASE("backward without a forward pass is a state error") {
  Rng rng(7);
  Mlp net({2, 2}, Activation::kRelu, rng);
  Tape tape;
  CHECK_THROWS_AS(net.backward(tape, Matrix(1, 2)), StateError);
}

TEST_CASE("backward matches central finite differences on a random 3-layer net") {
  for (auto act : {Activation::kRelu, Activation::kTanh}) {
    Rng rng(8 + static_cast<int>(act));
    Mlp net({4, 8, 8, 2}, act, rng);
    Matrix x(3, 4), y(3, 2);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform(-1, 1);

    auto eval = [&]() {
      Matrix out = net.forward(x);
      double loss = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        double d = out.data()[i] - y.data()[i];
        loss += 0.5 * d * d;
      }
      return loss;
    };
    Tape tape;
    Matrix out = net.forward(x, tape);
    Matrix upstream(3, 2);
    for (std::size_t i = 0; i < out.size(); ++i)
      upstream.data()[i] = out.data()[i] - y.data()[i];
    GradBundle g = net.backward(tape, upstream);

    auto fd = o2o::testing::fd_param_grad(net, eval);
    CHECK(o2o::testing::grad_rel_err(o2o::testing::flatten(g), fd) < 1e-4);
  }
}

TEST_CASE("backward exposes the input gradient") {
  Rng rng(10);
  Mlp net({3, 6, 1}, Activation::kTanh, rng);
  Matrix x(1, 3);
  x(0, 0) = 0.2; x(0, 1) = -0.4; x(0, 2) = 0.9;
  Tape tape;
  net.forward(x, tape);
  Matrix up(1, 1);
  up(0, 0) = 1.0;
  Matrix in_grad;
  net.backward(tape, up, &in_grad);

  double h = 1e-6;
  for (std::size_t j = 0; j < 3; ++j) {
    Matrix xp = x, xm = x;
    xp(0, j) += h;
    xm(0, j) -= h;
    double fd = (net.forward(xp)(0, 0) - net.forward(xm)(0, 0)) / (2 * h);
    CHECK(in_grad(0, j) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("clip_global_norm halves a norm-2 bundle at max 1") {
  GradBundle g;
  g.dw.push_back(Matrix(2, 2));
  g.db.push_back(Matrix(1, 2));
  g.dw[0](0, 0) = 2.0;  // norm 2
  GradBundle clipped = clip_global_norm(g, 1.0);
  CHECK(clipped.dw[0](0, 0) == doctest::Approx(1.0));
  CHECK(clipped.global_norm() == doctest::Approx(1.0));
}

TEST_CASE("clip_global_norm leaves small bundles untouched") {
  GradBundle g;
  g.dw.push_back(Matrix(1, 1));
  g.db.push_back(Matrix(1, 1));
  g.dw[0](0, 0) = 0.3;
  GradBundle clipped = clip_global_norm(g, 1.0);
  CHECK(clipped.dw[0](0, 0) == 0.3);
}

TEST_CASE("clip_global_norm: post-clip norm equals min(norm, max)") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    GradBundle g;
    g.dw.push_back(Matrix(3, 5));
    g.db.push_back(Matrix(1, 5));
    for (auto* m : {&g.dw[0], &g.db[0]})
      for (std::size_t i = 0; i < m->size(); ++i)
        m->data()[i] = rng.uniform(-2, 2);
    double before = g.global_norm();
    double cap = rng.uniform(0.5, 3.0);
    double after = clip_global_norm(g, cap).global_norm();
    CHECK(after == doctest::Approx(std::min(before, cap)).epsilon(1e-12));
  }
}

TEST_CASE("clip_global_norm aborts on non-finite gradients") {
  GradBundle g;
  g.dw.push_back(Matrix(1, 1));
  g.db.push_back(Matrix(1, 1));
  g.dw[0](0, 0) = std::nan("");
  CHECK_THROWS_AS(clip_global_norm(g, 1.0), NumericError);
  GradBundle h;
  h.dw.push_back(Matrix(1, 1));
  h.db.push_back(Matrix(1, 1));
  CHECK_THROWS_AS(clip_global_norm(h, 0.0), ConfigError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Rng rng(12);
  Mlp net({2, 3}, Activation::kRelu, rng);
  Mlp copy = net;
  AdamState st(net, 0.01);
  adam_step(net, net.zero_grad(), st);
  for (std::size_t l = 0; l < net.weights().size(); ++l)
    for (std::size_t i = 0; i < net.weights()[l].size(); ++i)
      CHECK(net.weights()[l].data()[i] == copy.weights()[l].data()[i]);
  CHECK(st.step == 1);
}

TEST_CASE("adam: first step moves by about -lr * sign(g)") {
  Rng rng(13);
  Mlp net({2, 2}, Activation::kRelu, rng);
  Mlp before = net;
  AdamState st(net, 0.05);
  GradBundle g = net.zero_grad();
  for (auto& m : g.dw) m.fill(-3.7);
  for (auto& m : g.db) m.fill(-3.7);
  adam_step(net, g, st);
  for (std::size_t l = 0; l < net.weights().size(); ++l)
    for (std::size_t i = 0; i < net.weights()[l].size(); ++i) {
      double delta = net.weights()[l].data()[i] - before.weights()[l].data()[i];
      CHECK(delta == doctest::Approx(0.05).epsilon(1e-6));
    }
}

TEST_CASE("adam: three steps on f(w) = w^2 walk toward zero") {
  Rng rng(14);
  Mlp net({1, 1}, Activation::kRelu, rng);
  net.weights()[0](0, 0) = 1.0;
  net.biases()[0](0, 0) = 0.0;
  AdamState st(net, 0.1);

  // Independent scalar simulation of the same schedule.
  double w = 1.0, m = 0.0, v = 0.0;
  std::vector<double> expected;
  for (int t = 1; t <= 3; ++t) {
    double grad = 2.0 * w;
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    double mhat = m / (1.0 - std::pow(0.9, t));
    double vhat = v / (1.0 - std::pow(0.999, t));
    w -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    expected.push_back(w);
  }

  double prev = 1.0;
  for (int t = 0; t < 3; ++t) {
    GradBundle g = net.zero_grad();
    g.dw[0](0, 0) = 2.0 * net.weights()[0](0, 0);
    adam_step(net, g, st);
    double cur = net.weights()[0](0, 0);
    CHECK(cur == doctest::Approx(expected[t]).epsilon(1e-12));
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK(prev > 0.0);
}

TEST_CASE("identical seeds give bitwise-identical nets and outputs") {
  Rng r1(99), r2(99);
  Mlp a({3, 16, 2}, Activation::kTanh, r1);
  Mlp b({3, 16, 2}, Activation::kTanh, r2);
  Matrix x(5, 3);
  Rng rx(100);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rx.uniform(-1, 1);
  Matrix ya = a.forward(x), yb = b.forward(x);
  CHECK(std::memcmp(ya.data(), yb.data(), ya.size() * sizeof(double)) == 0);
}

TEST_CASE("non-finite values are trapped") {
  Rng rng(15);
  Mlp net({2, 2}, Activation::kRelu, rng);
  net.weights()[0](0, 0) = std::numeric_limits<double>::infinity();
  Matrix x(1, 2, 1.0);
  CHECK_THROWS_AS(net.forward(x), NumericError);
}

TEST_CASE("checkpoint files round-trip bit for bit") {
  Rng rng(16);
  Mlp net({4, 7, 3}, Activation::kTanh, rng);
  std::string path = "test_roundtrip.net";
  save_net(net, path);
  Mlp loaded = load_net(path);
  REQUIRE(loaded.sizes() == net.sizes());
  CHECK(loaded.activation() == net.activation());
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    CHECK(std::memcmp(loaded.weights()[l].data(), net.weights()[l].data(),
                      net.weights()[l].size() * sizeof(double)) == 0);
    CHECK(std::memcmp(loaded.biases()[l].data(), net.biases()[l].data(),
                      net.biases()[l].size() * sizeof(double)) == 0);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_net("does_not_exist.net"), IoError);
}

TEST_SUITE_END();
