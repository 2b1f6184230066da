#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "tcav/autodiff.hpp"
#include "tcav/errors.hpp"
#include "tcav/rng.hpp"
#include "tcav/tensor.hpp"

using namespace tcav;

namespace {

Tensor randn(Rng& rng, std::vector<int64_t> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

// keep relu inputs away from the kink so finite differences stay valid
void push_from_zero(Tensor& t, double margin = 0.05) {
  for (int64_t i = 0; i < t.size(); ++i) {
    if (std::fabs(t.data()[i]) < margin) t.data()[i] = t.data()[i] < 0 ? -margin : margin;
  }
}

// Central-difference check of d(scalar f(inputs))/d(inputs[check]) against the
// tape gradient, over every coordinate. Returns the worst relative error.
double fd_worst(std::vector<Tensor> inputs, size_t check,
                const std::function<double(const std::vector<Tensor>&)>& f,
                const Tensor& analytic, double eps = 1e-5) {
  double worst = 0.0;
  Tensor& p = inputs[check];
  for (int64_t i = 0; i < p.size(); ++i) {
    double orig = p.data()[i];
    p.data()[i] = orig + eps;
    double up = f(inputs);
    p.data()[i] = orig - eps;
    double dn = f(inputs);
    p.data()[i] = orig;
    double fd = (up - dn) / (2 * eps);
    double err = std::fabs(fd - analytic[i]) / std::max(1.0, std::fabs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

TEST_CASE("forward op oracles") {
  // matmul 2x3 * 3x2, computed by hand
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor ab = ops::matmul(a, b);
  CHECK(ab.shape() == std::vector<int64_t>{2, 2});
  CHECK(ab[0] == 58.0);   // 1*7+2*9+3*11
  CHECK(ab[1] == 64.0);   // 1*8+2*10+3*12
  CHECK(ab[2] == 139.0);  // 4*7+5*9+6*11
  CHECK(ab[3] == 154.0);

  // bias broadcast across the trailing axis
  Tensor bias({2}, {100, 200});
  Tensor ab_b = ops::add(ab, bias);
  CHECK(ab_b[0] == 158.0);
  CHECK(ab_b[3] == 354.0);

  // relu
  Tensor r = ops::relu(Tensor({4}, {-1, 0, 2, -0.5}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);
  CHECK(r[3] == 0.0);

  // mul
  Tensor m = ops::mul(Tensor({2}, {3, 4}), Tensor({2}, {5, -2}));
  CHECK(m[0] == 15.0);
  CHECK(m[1] == -8.0);

  // flatten and reduce_sum
  Tensor f = ops::flatten(Tensor({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));
  CHECK(f.shape() == std::vector<int64_t>{2, 4});
  CHECK(ops::reduce_sum(f).item() == 36.0);
}

TEST_CASE("conv2d hand cases") {
  // 1x3x3x1 input, 2x2x1x1 kernel of ones, valid stride 1 -> 2x2 window sums
  Tensor x({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k({2, 2, 1, 1}, {1, 1, 1, 1});
  Conv2dOptions valid;
  Tensor y = ops::conv2d(x, k, valid);
  CHECK(y.shape() == std::vector<int64_t>{1, 2, 2, 1});
  CHECK(y[0] == 12.0);  // 1+2+4+5
  CHECK(y[1] == 16.0);
  CHECK(y[2] == 24.0);
  CHECK(y[3] == 28.0);

  // same padding, stride 1 keeps spatial extents; corner gets zero padding
  Conv2dOptions same1;
  same1.padding = Padding::same;
  Tensor ys = ops::conv2d(x, k, same1);
  CHECK(ys.shape() == std::vector<int64_t>{1, 3, 3, 1});
  // 3x3 kernel geometry: same+stride2 halves odd extents upward
  int64_t oh = 0, ow = 0, pt = 0, pl = 0;
  Conv2dOptions s2;
  s2.stride = 2;
  s2.padding = Padding::same;
  ops::conv2d_geometry(32, 32, 3, 3, s2, oh, ow, pt, pl);
  CHECK(oh == 16);
  CHECK(ow == 16);
  ops::conv2d_geometry(5, 5, 3, 3, s2, oh, ow, pt, pl);
  CHECK(oh == 3);
  CHECK(ow == 3);
}

TEST_CASE("softmax and cross entropy oracles") {
  Tensor logits({1, 3}, {1.0, 2.0, 3.0});
  Tensor p = ops::softmax(logits);
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-12));
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-12));

  Tensor labels({1}, {0.0});
  double loss = ops::softmax_cross_entropy(logits, labels).item();
  CHECK(loss == doctest::Approx(std::log(z) - 1.0).epsilon(1e-12));

  // huge logits stay finite (logsumexp shift)
  Tensor big({1, 2}, {1000.0, 999.0});
  Tensor bl({1}, {1.0});
  double big_loss = ops::softmax_cross_entropy(big, bl).item();
  CHECK(std::isfinite(big_loss));
  CHECK(big_loss == doctest::Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-9));
}

TEST_CASE("shape errors name the op") {
  CHECK_THROWS_AS(ops::add(Tensor({2}), Tensor({3})), InputError);
  CHECK_THROWS_AS(ops::mul(Tensor({2}), Tensor({2, 1})), InputError);
  CHECK_THROWS_AS(ops::matmul(Tensor({2, 3}), Tensor({4, 2})), InputError);
  CHECK_THROWS_AS(ops::matmul(Tensor({2}), Tensor({2, 2})), InputError);
  CHECK_THROWS_AS(ops::conv2d(Tensor({1, 4, 4, 2}), Tensor({3, 3, 3, 1}), Conv2dOptions{}),
                  InputError);
  CHECK_THROWS_AS(ops::flatten(Tensor({4})), InputError);
  CHECK_THROWS_AS(ops::softmax_cross_entropy(Tensor({2, 3}), Tensor({3})), InputError);
  CHECK_THROWS_AS(ops::softmax_cross_entropy(Tensor({1, 3}), Tensor({1}, {3.0})), InputError);
}

TEST_CASE("values recorded on one tape cannot be used on another") {
  Tape t1;
  Tape t2;
  ValueId a = t1.leaf(Tensor::scalar(1.0));
  CHECK_THROWS_AS(t2.value(a), InputError);
  CHECK_THROWS_AS(t2.relu(a), InputError);
}

TEST_CASE("gradient of an uninvolved leaf is zero") {
  Tape t;
  ValueId a = t.leaf(Tensor({2}, {1, 2}));
  ValueId unused = t.leaf(Tensor({3, 3}));
  ValueId out = t.reduce_sum(a);
  std::vector<Tensor> g = t.gradient(out, {a, unused});
  CHECK(g[0][0] == 1.0);
  CHECK(g[0][1] == 1.0);
  CHECK(g[1].same_shape(Tensor({3, 3})));
  for (int64_t i = 0; i < 9; ++i) CHECK(g[1][i] == 0.0);
}

TEST_CASE("gradient demands a scalar output") {
  Tape t;
  ValueId a = t.leaf(Tensor({2}, {1, 2}));
  ValueId b = t.relu(a);
  CHECK_THROWS_AS(t.gradient(b, {a}), InputError);
}

// Per-op finite-difference property: >= 100 random cases per op, central
// differences vs tape gradients, 1e-4 relative tolerance.

TEST_CASE("fd: add and mul") {
  Rng rng(100);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int64_t n = rng.uniform_int(1, 6), m = rng.uniform_int(1, 4);
    Tensor a = randn(rng, {n, m}), b = randn(rng, {n, m});
    bool bias_form = trial % 3 == 0;
    Tensor b2 = bias_form ? randn(rng, {m}) : b;
    auto f = [&](const std::vector<Tensor>& in) {
      Tape t;
      ValueId av = t.leaf(in[0]), bv = t.leaf(in[1]);
      ValueId s = trial % 2 == 0 ? t.add(av, bv) : t.mul(av, t.add(av, bv));
      return t.value(t.reduce_sum(s)).item();
    };
    std::vector<Tensor> in = {a, bias_form && trial % 2 == 0 ? b2 : b};
    Tape t;
    ValueId av = t.leaf(in[0]), bv = t.leaf(in[1]);
    ValueId s = trial % 2 == 0 ? t.add(av, bv) : t.mul(av, t.add(av, bv));
    std::vector<Tensor> g = t.gradient(t.reduce_sum(s), {av, bv});
    worst = std::max(worst, fd_worst(in, 0, f, g[0]));
    worst = std::max(worst, fd_worst(in, 1, f, g[1]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("fd: matmul") {
  Rng rng(101);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int64_t n = rng.uniform_int(1, 4), k = rng.uniform_int(1, 4), m = rng.uniform_int(1, 4);
    std::vector<Tensor> in = {randn(rng, {n, k}), randn(rng, {k, m})};
    auto f = [](const std::vector<Tensor>& v) {
      Tape t;
      return t.value(t.reduce_sum(t.matmul(t.leaf(v[0]), t.leaf(v[1])))).item();
    };
    Tape t;
    ValueId a = t.leaf(in[0]), b = t.leaf(in[1]);
    std::vector<Tensor> g = t.gradient(t.reduce_sum(t.matmul(a, b)), {a, b});
    worst = std::max(worst, fd_worst(in, 0, f, g[0]));
    worst = std::max(worst, fd_worst(in, 1, f, g[1]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("fd: conv2d over stride and padding combinations") {
  Rng rng(102);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Conv2dOptions opt;
    opt.stride = trial % 2 == 0 ? 1 : 2;
    opt.padding = (trial / 2) % 2 == 0 ? Padding::valid : Padding::same;
    int64_t h = rng.uniform_int(3, 6), w = rng.uniform_int(3, 6);
    int64_t c = rng.uniform_int(1, 2), oc = rng.uniform_int(1, 3);
    int64_t kh = rng.uniform_int(1, 3), kw = rng.uniform_int(1, 3);
    std::vector<Tensor> in = {randn(rng, {1, h, w, c}, 0.7), randn(rng, {kh, kw, c, oc}, 0.7)};
    auto f = [&](const std::vector<Tensor>& v) {
      Tape t;
      return t.value(t.reduce_sum(t.conv2d(t.leaf(v[0]), t.leaf(v[1]), opt))).item();
    };
    Tape t;
    ValueId x = t.leaf(in[0]), k = t.leaf(in[1]);
    std::vector<Tensor> g = t.gradient(t.reduce_sum(t.conv2d(x, k, opt)), {x, k});
    worst = std::max(worst, fd_worst(in, 0, f, g[0]));
    worst = std::max(worst, fd_worst(in, 1, f, g[1]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("fd: relu away from the kink") {
  Rng rng(103);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = randn(rng, {rng.uniform_int(1, 8)});
    push_from_zero(a);
    std::vector<Tensor> in = {a};
    auto f = [](const std::vector<Tensor>& v) {
      Tape t;
      ValueId x = t.leaf(v[0]);
      return t.value(t.reduce_sum(t.mul(t.relu(x), x))).item();
    };
    Tape t;
    ValueId x = t.leaf(a);
    std::vector<Tensor> g = t.gradient(t.reduce_sum(t.mul(t.relu(x), x)), {x});
    worst = std::max(worst, fd_worst(in, 0, f, g[0], 1e-6));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("fd: flatten, reshape, reduce_sum") {
  Rng rng(104);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int64_t a = rng.uniform_int(1, 3), b = rng.uniform_int(1, 3), c = rng.uniform_int(1, 3);
    std::vector<Tensor> in = {randn(rng, {a, b, c})};
    auto f = [&](const std::vector<Tensor>& v) {
      Tape t;
      ValueId x = t.leaf(v[0]);
      ValueId y = t.reshape(t.flatten(x), {b * c, a});
      return t.value(t.reduce_sum(t.mul(y, y))).item();
    };
    Tape t;
    ValueId x = t.leaf(in[0]);
    ValueId y = t.reshape(t.flatten(x), {b * c, a});
    std::vector<Tensor> g = t.gradient(t.reduce_sum(t.mul(y, y)), {x});
    worst = std::max(worst, fd_worst(in, 0, f, g[0]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("fd: softmax cross entropy") {
  Rng rng(105);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int64_t n = rng.uniform_int(1, 5), k = rng.uniform_int(2, 5);
    Tensor logits = randn(rng, {n, k}, 2.0);
    Tensor labels({n});
    for (int64_t i = 0; i < n; ++i) labels.data()[i] = rng.uniform_int(0, static_cast<int>(k) - 1);
    std::vector<Tensor> in = {logits};
    auto f = [&](const std::vector<Tensor>& v) {
      Tape t;
      return t.value(t.softmax_cross_entropy(t.leaf(v[0]), t.leaf(labels))).item();
    };
    Tape t;
    ValueId z = t.leaf(logits);
    std::vector<Tensor> g = t.gradient(t.softmax_cross_entropy(z, t.leaf(labels)), {z});
    worst = std::max(worst, fd_worst(in, 0, f, g[0]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("fd: full composite pipeline") {
  // one deep check through conv -> relu -> flatten -> matmul -> bias -> xent,
  // every parameter coordinate
  Rng rng(42);
  Tensor x({2, 6, 6, 3}), k({3, 3, 3, 4}), w({4 * 3 * 3, 3}), b({3}), labels({2});
  for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal() * 0.5;
  for (int64_t i = 0; i < k.size(); ++i) k.data()[i] = rng.normal() * 0.3;
  for (int64_t i = 0; i < w.size(); ++i) w.data()[i] = rng.normal() * 0.3;
  for (int64_t i = 0; i < b.size(); ++i) b.data()[i] = rng.normal() * 0.1;
  labels.data()[0] = 1;
  labels.data()[1] = 2;

  Conv2dOptions opt;
  opt.stride = 2;
  opt.padding = Padding::same;
  auto run = [&](const std::vector<Tensor>& v) {
    Tape t;
    ValueId xv = t.leaf(v[0]), kv = t.leaf(v[1]), wv = t.leaf(v[2]), bv = t.leaf(v[3]);
    ValueId logits = t.add(t.matmul(t.flatten(t.relu(t.conv2d(xv, kv, opt))), wv), bv);
    return t.value(t.softmax_cross_entropy(logits, t.leaf(labels))).item();
  };
  std::vector<Tensor> in = {x, k, w, b};

  Tape t;
  ValueId xv = t.leaf(x), kv = t.leaf(k), wv = t.leaf(w), bv = t.leaf(b);
  ValueId logits = t.add(t.matmul(t.flatten(t.relu(t.conv2d(xv, kv, opt))), wv), bv);
  std::vector<Tensor> g =
      t.gradient(t.softmax_cross_entropy(logits, t.leaf(labels)), {xv, kv, wv, bv});
  double worst = 0;
  for (size_t pi = 0; pi < in.size(); ++pi) worst = std::max(worst, fd_worst(in, pi, run, g[pi]));
  CHECK(worst < 1e-4);
}

TEST_CASE("tape values match the pure forward ops") {
  Rng rng(9);
  Tensor a = randn(rng, {3, 4}), b = randn(rng, {4, 2});
  Tape t;
  Tensor via_tape = t.value(t.matmul(t.leaf(a), t.leaf(b)));
  Tensor via_ops = ops::matmul(a, b);
  REQUIRE(via_tape.same_shape(via_ops));
  for (int64_t i = 0; i < via_ops.size(); ++i) CHECK(via_tape[i] == via_ops[i]);
}
