#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "drowsy/ops.hpp"
#include "drowsy/optim.hpp"
#include "drowsy/rng.hpp"
#include "drowsy/tape.hpp"

using drowsy::AdamState;
using drowsy::Rng;
using drowsy::Tape;
using drowsy::Tensor;
using drowsy::Value;

TEST_CASE("polynomial decay schedule") {
  AdamState s = AdamState::for_param(Tensor({1}), 1e-4, 0.9, 1000);
  CHECK(drowsy::poly_decay_lr(0, s) == 1e-4);
  CHECK(drowsy::poly_decay_lr(1000, s) == 0.0);
  CHECK(drowsy::poly_decay_lr(2000, s) == 0.0);
  CHECK(drowsy::poly_decay_lr(500, s) ==
        Catch::Approx(1e-4 * std::pow(0.5, 0.9)).epsilon(1e-12));
  CHECK(drowsy::poly_decay_lr(500, s) == Catch::Approx(0.53589e-4).epsilon(1e-4));
  // Monotone non-increasing over the whole range.
  double prev = drowsy::poly_decay_lr(0, s);
  for (long t = 1; t <= 1000; ++t) {
    const double lr = drowsy::poly_decay_lr(t, s);
    REQUIRE(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("adam with zero gradient and zero moments leaves the parameter alone") {
  Tensor p({3}, {1, 2, 3});
  AdamState s = AdamState::for_param(p, 1e-2, 0.9, 100);
  drowsy::adam_step(p, Tensor({3}), s);
  CHECK(p.vec() == std::vector<double>{1, 2, 3});
  CHECK(s.t == 1);
}

TEST_CASE("first adam step moves by about -lr * sign(gradient)") {
  for (double g : {3.7, -0.42, 1e3}) {
    Tensor p({1}, {1.0});
    AdamState s = AdamState::for_param(p, 1e-2, 0.9, 1000000);
    drowsy::adam_step(p, Tensor({1}, {g}), s);
    const double delta = p[0] - 1.0;
    const double want = -1e-2 * (g > 0 ? 1.0 : -1.0);
    CHECK(std::abs(delta - want) / std::abs(want) < 1e-6);
  }
}

TEST_CASE("repeated equal gradients shrink the step size under decay") {
  Tensor p({1}, {0.0});
  AdamState s = AdamState::for_param(p, 1e-2, 0.9, 50);
  double prev_abs = 1e9;
  for (int i = 0; i < 20; ++i) {
    const double before = p[0];
    drowsy::adam_step(p, Tensor({1}, {2.0}), s);
    const double step = std::abs(p[0] - before);
    REQUIRE(step < prev_abs + 1e-15);
    prev_abs = step;
  }
}

TEST_CASE("adam validates shapes and hyperparameters") {
  Tensor p({2});
  AdamState s = AdamState::for_param(p, 1e-3, 0.9, 10);
  CHECK_THROWS_AS(drowsy::adam_step(p, Tensor({3}), s), drowsy::ShapeError);
  AdamState bad = s;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), drowsy::ValidationError);
  bad = s;
  bad.total_steps = 0;
  CHECK_THROWS_AS(bad.validate(), drowsy::ValidationError);
}

TEST_CASE("l2 penalty sums squared weights") {
  Tensor a({1}, {2.0});
  CHECK(drowsy::l2_penalty({}, 0.5) == 0.0);
  CHECK(drowsy::l2_penalty({&a}, 0.5) == 2.0);
  CHECK(drowsy::l2_penalty({&a}, 0.0) == 0.0);
  Tensor b({2}, {1.0, 3.0});
  CHECK(drowsy::l2_penalty({&a, &b}, 2.0) == 2.0 * (4.0 + 10.0));
  Tensor g({1});
  drowsy::l2_grad_acc(a, 0.25, g);
  CHECK(g[0] == 2.0 * 0.25 * 2.0);
}

TEST_CASE("adam drives a tiny regression loss down monotonically once warm") {
  // Fixed least-squares problem: find w with X w ~= y.
  Rng rng(51);
  const std::size_t n_samples = 8, dim = 4;
  std::vector<Tensor> xs;
  std::vector<double> ys;
  Tensor w_true({dim}, {0.5, -1.0, 2.0, 0.25});
  for (std::size_t i = 0; i < n_samples; ++i) {
    Tensor x({dim});
    for (std::size_t j = 0; j < dim; ++j) x[j] = rng.uniform(-1.0, 1.0);
    xs.push_back(x);
    ys.push_back(drowsy::dot(x, w_true));
  }

  Tensor w({1, dim});
  w.fill(0.0);
  AdamState state = AdamState::for_param(w, 0.02, 0.9, 250);

  std::vector<double> losses;
  for (int step = 0; step < 200; ++step) {
    Tape tape;
    Value vw = tape.leaf(w, true);
    Value total{};
    for (std::size_t i = 0; i < n_samples; ++i) {
      Value vx = tape.leaf(xs[i], false);
      Value pred = drowsy::dense_nb_op(tape, vx, vw);
      Value target = tape.leaf(Tensor({1}, {ys[i]}), false);
      Value err = drowsy::sub_op(tape, pred, target);
      Value sq = drowsy::square_sum_op(tape, err);
      total = (i == 0) ? sq : drowsy::add_op(tape, total, sq);
    }
    Value loss = drowsy::scale_op(tape, total, 1.0 / n_samples);
    losses.push_back(tape.val(loss)[0]);
    tape.backward(loss);
    drowsy::adam_step(w, tape.grad(vw), state);
  }

  // Smooth over 5-step windows; after step 10 the trend must be decreasing.
  const auto window_mean = [&](std::size_t start) {
    double acc = 0;
    for (std::size_t i = start; i < start + 5; ++i) acc += losses[i];
    return acc / 5.0;
  };
  for (std::size_t start = 10; start + 10 <= losses.size(); start += 5)
    REQUIRE(window_mean(start + 5) <= window_mean(start) + 1e-12);
  CHECK(losses.back() < 0.05 * losses.front());
}

TEST_CASE("training is bit-identical under the same seed") {
  const auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor w({8});
    w.fill_normal(rng, 0.3);
    AdamState s = AdamState::for_param(w, 1e-2, 0.9, 64);
    for (int step = 0; step < 32; ++step) {
      Tape tape;
      Value vw = tape.leaf(w, true);
      Value loss = drowsy::square_sum_op(tape, vw);
      tape.backward(loss);
      Tensor g = tape.grad(vw);
      drowsy::l2_grad_acc(w, 1e-4, g);
      drowsy::adam_step(w, g, s);
    }
    return w.vec();
  };
  CHECK(run(77) == run(77));
  CHECK(run(77) != run(78));
}
