#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "gwad/optim.hpp"
#include "gwad/rng.hpp"

using namespace gwad;

namespace {

// Independent scalar recurrence; the reference the implementation must match.
struct ScalarNadamOracle {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  int t = 0;

  double step(double param, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double bc1 = 1 - std::pow(b1, t);
    double bc2 = 1 - std::pow(b2, t);
    double mhat = m / bc1;
    double vhat = v / bc2;
    return param - lr * (b1 * mhat + (1 - b1) * g / bc1) /
                       (std::sqrt(vhat) + eps);
  }
};

// One named scalar parameter with a preset gradient.
struct ScalarParam {
  Array<double> value = Array<double>::scalar(0.0);
  Tape<double> tape;

  ScalarParam() { tape.watch(value); }
  void set_grad(double g) {
    value.zero_grad();
    value.grad()[0] = g;
  }
  std::vector<std::pair<std::string, Array<double>*>> params() {
    return {{"p", &value}};
  }
};

}  // namespace

TEST_CASE("nadam: zero gradient is a fixed point") {
  ScalarParam p;
  p.value.data()[0] = 1.25;
  NAdam<double> opt(1e-4);
  for (int i = 0; i < 50; ++i) {
    p.set_grad(0.0);
    opt.step(p.params());
    CHECK(p.value.data()[0] == 1.25);
  }
}

TEST_CASE("nadam: first step with unit gradient") {
  ScalarParam p;
  NAdam<double> opt(1e-4);
  p.set_grad(1.0);
  opt.step(p.params());

  ScalarNadamOracle oracle{1e-4};
  double want = oracle.step(0.0, 1.0);
  CHECK(p.value.data()[0] == doctest::Approx(want).epsilon(1e-15));
  // frozen from the oracle: -lr * 1.9 / (1 + 1e-8)
  CHECK(p.value.data()[0] == doctest::Approx(-1.899999981e-4).epsilon(1e-9));
}

TEST_CASE("nadam matches the scalar oracle over 100 steps") {
  Rng rng(101);
  for (int draw = 0; draw < 5; ++draw) {
    double lr = rng.uniform(1e-5, 1e-2);
    ScalarParam p;
    p.value.data()[0] = rng.gaussian();
    NAdam<double> opt(lr);
    ScalarNadamOracle oracle{lr};
    double oracle_param = p.value.data()[0];

    for (int step = 0; step < 100; ++step) {
      double g = rng.gaussian();
      p.set_grad(g);
      opt.step(p.params());
      oracle_param = oracle.step(oracle_param, g);
      CHECK(std::abs(p.value.data()[0] - oracle_param) <= 1e-7);
    }
  }
}

TEST_CASE("nadam descends x^2 steadily") {
  ScalarParam p;
  p.value.data()[0] = 1.0;
  NAdam<double> opt(0.01);
  double prev = 1.0;
  for (int step = 1; step <= 100; ++step) {
    p.set_grad(2.0 * p.value.data()[0]);
    opt.step(p.params());
    double cur = std::abs(p.value.data()[0]);
    if (step > 5) CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("nadam has no cross-parameter coupling") {
  // jointly optimized pair == each optimized alone
  Array<double> a = Array<double>::scalar(0.5);
  Array<double> b = Array<double>::scalar(-2.0);
  Tape<double> tape;
  tape.watch(a);
  tape.watch(b);
  NAdam<double> joint(1e-3);

  ScalarParam pa, pb;
  pa.value.data()[0] = 0.5;
  pb.value.data()[0] = -2.0;
  NAdam<double> only_a(1e-3), only_b(1e-3);

  Rng rng(77);
  for (int step = 0; step < 20; ++step) {
    double ga = rng.gaussian(), gb = rng.gaussian();
    a.zero_grad();
    b.zero_grad();
    a.grad()[0] = ga;
    b.grad()[0] = gb;
    std::vector<std::pair<std::string, Array<double>*>> both = {{"a", &a},
                                                                {"b", &b}};
    joint.step(both);

    pa.set_grad(ga);
    only_a.step(pa.params());
    pb.set_grad(gb);
    only_b.step(pb.params());

    CHECK(a.data()[0] == pa.value.data()[0]);
    CHECK(b.data()[0] == pb.value.data()[0]);
  }
}

TEST_CASE("nadam rejects non-finite gradients without mutating") {
  ScalarParam p;
  p.value.data()[0] = 3.5;
  NAdam<double> opt(1e-3);
  p.set_grad(std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(opt.step(p.params()), NumericsError);
  CHECK(p.value.data()[0] == 3.5);
  CHECK(opt.step_count() == 0);
}

TEST_CASE("plateau scheduler reduces after the patience window") {
  PlateauScheduler sched(1e-4, 0.1, 5);
  // improving losses: no reduction
  for (double loss : {1.0, 0.9, 0.8}) sched.on_epoch_end(loss);
  CHECK(sched.lr() == 1e-4);
  CHECK(sched.reductions() == 0);

  // five consecutive non-improving epochs trigger one reduction
  for (int i = 0; i < 5; ++i) sched.on_epoch_end(0.8);
  CHECK(sched.lr() == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(sched.reductions() == 1);

  // a second full plateau compounds to lr0 * 0.01
  for (int i = 0; i < 5; ++i) sched.on_epoch_end(0.8);
  CHECK(sched.lr() == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(sched.reductions() == 2);
}

TEST_CASE("plateau counter resets on improvement") {
  PlateauScheduler sched(1.0, 0.1, 5);
  sched.on_epoch_end(1.0);
  for (int i = 0; i < 4; ++i) sched.on_epoch_end(1.0);  // counter 4
  sched.on_epoch_end(0.5);                              // reset
  for (int i = 0; i < 4; ++i) sched.on_epoch_end(0.5);
  CHECK(sched.lr() == 1.0);
  sched.on_epoch_end(0.5);  // fifth bad epoch
  CHECK(sched.lr() == doctest::Approx(0.1));
}

namespace {

ModelConfig stopper_config() {
  ModelConfig c;
  c.input_len = 8;
  c.input_channels = 2;
  c.stem_channels = 2;
  c.stem_kernel = 3;
  c.stem_pool = 2;
  c.blocks = {};
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("early stopper counts and restores") {
  Model<float> model(stopper_config());
  EarlyStopper<float> stopper(10);

  // mark the model so we can tell epochs apart
  auto first_param = model.parameters()[0].second;

  // epoch 1 improves; stash the epoch-1 weights
  first_param->data()[0] = 1.0f;
  CHECK_FALSE(stopper.update(0.5, model));

  // ten non-improving epochs; stop exactly on the tenth
  for (int epoch = 2; epoch <= 11; ++epoch) {
    first_param->data()[0] = static_cast<float>(epoch);
    bool stop = stopper.update(0.6, model);
    CHECK(stop == (epoch == 11));
  }
  CHECK(stopper.best_epoch() == 1);
  CHECK(stopper.best_loss() == 0.5);

  stopper.restore_best(model);
  CHECK(first_param->data()[0] == 1.0f);
}

TEST_CASE("early stopper resets on late improvement") {
  Model<float> model(stopper_config());
  EarlyStopper<float> stopper(10);
  stopper.update(0.5, model);
  for (int i = 0; i < 8; ++i) CHECK_FALSE(stopper.update(0.6, model));
  CHECK_FALSE(stopper.update(0.4, model));  // improvement at epoch 10
  for (int i = 0; i < 9; ++i) CHECK_FALSE(stopper.update(0.7, model));
  CHECK(stopper.update(0.7, model));  // stops ten epochs later
}

TEST_CASE("monotone-decreasing losses never stop") {
  Model<float> model(stopper_config());
  EarlyStopper<float> stopper(10);
  double loss = 1.0;
  for (int epoch = 0; epoch < 200; ++epoch) {
    loss *= 0.99;
    CHECK_FALSE(stopper.update(loss, model));
  }
}
