#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "adaptkf/errors.hpp"
#include "adaptkf/tasks.hpp"

using namespace adaptkf;

TEST_CASE("zero sigma_s_max gives exactly zero noise variances") {
  RegressionSpec spec;
  spec.sigma_s_max = 0.0;
  RegressionFamily family(spec);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    TaskInstance task = family.sample_task(rng);
    CHECK(task.sigma_s_diag[0] == 0.0);
  }
}

TEST_CASE("puck friction ratio stays in the randomization band") {
  PuckFamily family;
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    PuckParams p = puck_params(family.sample_task(rng));
    const double ratio = p.mu_y / p.mu_x;
    CHECK(ratio >= 0.7);
    CHECK(ratio <= 1.3);
  }
}

TEST_CASE("puck mass has the expected mean over many draws") {
  PuckFamily family;
  Rng rng(3);
  const int n = 10000;
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += puck_params(family.sample_task(rng)).mass;
  mean /= n;
  // U(0.01, 0.1): mean 0.055, std 0.09/sqrt(12)
  const double se = (0.09 / std::sqrt(12.0)) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - 0.055) <= 3.0 * se);
}

TEST_CASE("regression transition on a noiseless line") {
  Rng rng(4);
  Transition t = regression_transition({2.0, 1.0}, 3.0, {0.0}, rng);
  CHECK(t.s[0] == 3.0);
  CHECK(t.a.empty());
  CHECK(t.s_next[0] == 7.0);
  CHECK(t.s_next_noisy[0] == 7.0);

  Transition flat = regression_transition({0.0, 0.0}, -11.0, {0.0}, rng);
  CHECK(flat.s_next[0] == 0.0);
}

TEST_CASE("regression noise has the configured standard deviation") {
  Rng rng(5);
  const int n = 10000;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    Transition t = regression_transition({1.0, 0.0}, 1.0, {0.25}, rng);
    const double d = t.s_next_noisy[0] - t.s_next[0];
    sq += d * d;
  }
  const double std_hat = std::sqrt(sq / n);
  // std of the sample-std estimate ~ sigma/sqrt(2n)
  CHECK(std::abs(std_hat - 0.5) <= 3.0 * 0.5 / std::sqrt(2.0 * n));
}

TEST_CASE("puck at rest stays at the start position") {
  PuckParams p{0.05, 0.5, 0.5, {0.2, -0.1}};
  auto rest = puck_simulate(p, 0.3, 5e-5);
  CHECK(rest[0] == 0.2);
  CHECK(rest[1] == -0.1);
}

TEST_CASE("isotropic stopping distance matches the closed form") {
  // v^2 / (2 mu g); e.g. v=2, mu=0.5 -> 0.4077 m.
  PuckParams p{0.05, 0.5, 0.5, {0.0, 0.0}};
  auto rest = puck_simulate(p, 0.0, 2.0);
  const double want = 4.0 / (2.0 * 0.5 * 9.81);
  CHECK(rest[0] == doctest::Approx(want).epsilon(0.01));
  CHECK(std::abs(rest[1]) < 1e-9);

  // Doubling friction halves the distance.
  PuckParams p2{0.05, 1.0, 1.0, {0.0, 0.0}};
  auto rest2 = puck_simulate(p2, 0.0, 2.0);
  CHECK(rest2[0] == doctest::Approx(rest[0] / 2.0).epsilon(0.01));
}

TEST_CASE("stopping distance law holds across the randomization grid") {
  for (int vi = 0; vi < 10; ++vi) {
    for (int mi = 0; mi < 10; ++mi) {
      const double v = 0.5 + (3.0 - 0.5) * vi / 9.0;
      const double mu = 0.15 + (0.95 - 0.15) * mi / 9.0;
      PuckParams p{0.05, mu, mu, {0.0, 0.0}};
      auto rest = puck_simulate(p, 0.0, v);
      const double want = v * v / (2.0 * mu * 9.81);
      CHECK(std::abs(rest[0] - want) / want <= 0.01);
    }
  }
}

TEST_CASE("kinetic energy strictly decreases while the puck moves") {
  // Re-run the integrator loop manually to watch the speed profile.
  const double g = 9.81, dt = 1e-3;
  const double mu_x = 0.3, mu_y = 0.36;
  double vx = 2.0 * std::cos(0.5), vy = 2.0 * std::sin(0.5);
  double speed = std::hypot(vx, vy);
  int steps = 0;
  while (speed >= 1e-4 && steps < 100000) {
    const double ax = -g * mu_x * (vx / speed);
    const double ay = -g * mu_y * (vy / speed);
    const double decel_along = -(ax * vx + ay * vy) / speed;
    double step_dt = dt;
    if (decel_along > 0.0) step_dt = std::min(dt, speed / decel_along);
    vx += ax * step_dt;
    vy += ay * step_dt;
    const double next_speed = std::hypot(vx, vy);
    CHECK(next_speed < speed);
    speed = next_speed;
    ++steps;
  }
  CHECK(speed < 1e-4);
}

TEST_CASE("anisotropic friction bends the trajectory and swapping flips the bend") {
  PuckParams p{0.05, 0.3, 0.39, {0.0, 0.0}};
  const double angle = 0.6;
  auto rest = puck_simulate(p, angle, 2.0);
  // Signed deviation from the initial velocity ray.
  const double ux = std::cos(angle), uy = std::sin(angle);
  const double dev = rest[0] * (-uy) + rest[1] * ux;
  CHECK(std::abs(dev) > 1e-4);

  PuckParams swapped{0.05, 0.39, 0.3, {0.0, 0.0}};
  auto rest2 = puck_simulate(swapped, angle, 2.0);
  const double dev2 = rest2[0] * (-uy) + rest2[1] * ux;
  CHECK(dev * dev2 < 0.0);
}

TEST_CASE("puck_simulate rejects non-finite actions") {
  PuckParams p{0.05, 0.5, 0.5, {0.0, 0.0}};
  CHECK_THROWS_AS(puck_simulate(p, std::nan(""), 1.0), ConfigError);
  CHECK_THROWS_AS(puck_simulate(p, 0.0, -1.0), ConfigError);
}

TEST_CASE("puck transitions are deterministic given the rng state") {
  PuckFamily family;
  Rng rng(6);
  TaskInstance task = family.sample_task(rng);
  Rng r1(42), r2(42);
  Transition t1 = puck_transition(task, {0.2, 1.5}, r1);
  Transition t2 = puck_transition(task, {0.2, 1.5}, r2);
  CHECK(t1.s == t2.s);
  CHECK(t1.s_next == t2.s_next);
  CHECK(t1.s_next_noisy == t2.s_next_noisy);
}

TEST_CASE("zero task noise leaves the noisy observation exact") {
  PuckFamily family;
  Rng rng(7);
  TaskInstance task = family.sample_task(rng);
  task.sigma_s_diag = {0.0, 0.0};
  Transition t = puck_transition(task, {0.1, 1.0}, rng);
  CHECK(t.s_next_noisy == t.s_next);
}

TEST_CASE("observation noise magnitude matches trace of sigma") {
  PuckFamily family;
  Rng rng(8);
  TaskInstance task = family.sample_task(rng);
  task.sigma_s_diag = {0.09, 0.16};
  const int n = 1000;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    Transition t = puck_transition(task, {0.0, 1.0}, rng);
    for (size_t d = 0; d < 2; ++d) {
      const double diff = t.s_next_noisy[d] - t.s_next[d];
      sq += diff * diff;
    }
  }
  const double rms = std::sqrt(sq / n);
  const double want = std::sqrt(0.09 + 0.16);
  CHECK(std::abs(rms - want) / want <= 0.10);
}

TEST_CASE("invalid randomization ranges are rejected") {
  PuckSpec bad;
  bad.mu_x_lo = 0.9;
  bad.mu_x_hi = 0.2;
  CHECK_THROWS_AS(PuckFamily{bad}, ConfigError);
  RegressionSpec rbad;
  rbad.sigma_s_max = -1.0;
  CHECK_THROWS_AS(RegressionFamily{rbad}, ConfigError);
}

TEST_CASE("eval suite is reproducible and shaped as the cartesian product") {
  PuckFamily family;
  auto conditions = family.default_conditions();
  EvalSuite a = make_eval_suite(family, conditions, {0.0, 0.1, 0.5}, 10, 5, 2, 99);
  EvalSuite b = make_eval_suite(family, conditions, {0.0, 0.1, 0.5}, 10, 5, 2, 99);
  CHECK(a.cells.size() == 9);
  REQUIRE(a.cells.size() == b.cells.size());
  for (size_t c = 0; c < a.cells.size(); ++c) {
    REQUIRE(a.cells[c].tasks.size() == 2);
    for (size_t t = 0; t < a.cells[c].tasks.size(); ++t) {
      CHECK(a.cells[c].tasks[t].task.dynamics == b.cells[c].tasks[t].task.dynamics);
      REQUIRE(a.cells[c].tasks[t].adapt.size() == 10);
      REQUIRE(a.cells[c].tasks[t].query.size() == 5);
      for (size_t i = 0; i < 10; ++i) {
        CHECK(a.cells[c].tasks[t].adapt[i].s_next_noisy ==
              b.cells[c].tasks[t].adapt[i].s_next_noisy);
      }
    }
  }
}

TEST_CASE("eval suite queries are noiseless") {
  PuckFamily family;
  EvalSuite suite =
      make_eval_suite(family, family.default_conditions(), {0.5}, 5, 8, 2, 123);
  for (const EvalCell& cell : suite.cells) {
    for (const EvalTask& et : cell.tasks) {
      for (const Transition& q : et.query) {
        CHECK(q.s_next_noisy == q.s_next);
      }
    }
  }
}

TEST_CASE("eval suite conditions pin the primary parameter") {
  PuckFamily family;
  EvalSuite suite =
      make_eval_suite(family, family.default_conditions(), {0.1}, 5, 5, 8, 7);
  for (const EvalCell& cell : suite.cells) {
    for (const EvalTask& et : cell.tasks) {
      const PuckParams p = puck_params(et.task);
      if (cell.condition == "low") CHECK(p.mu_x <= 0.35);
      if (cell.condition == "high") CHECK(p.mu_x >= 0.75);
    }
  }
}
