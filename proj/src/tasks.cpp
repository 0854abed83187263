#include "adaptkf/tasks.hpp"

#include <bit>
#include <cmath>

#include "adaptkf/errors.hpp"

namespace adaptkf {

std::string family_name(Family f) {
  return f == Family::regression ? "regression" : "puck";
}

Family family_from_name(const std::string& name) {
  if (name == "regression") return Family::regression;
  if (name == "puck") return Family::puck;
  throw ConfigError("unknown task family '" + name + "'");
}

RegressionParams regression_params(const TaskInstance& task) {
  if (task.family != Family::regression || task.dynamics.size() != 2) {
    throw ConfigError("task is not a regression instance");
  }
  return RegressionParams{task.dynamics[0], task.dynamics[1]};
}

PuckParams puck_params(const TaskInstance& task) {
  if (task.family != Family::puck || task.dynamics.size() != 5) {
    throw ConfigError("task is not a puck instance");
  }
  return PuckParams{task.dynamics[0], task.dynamics[1], task.dynamics[2],
                    {task.dynamics[3], task.dynamics[4]}};
}

namespace {

void check_range(double lo, double hi, const char* what) {
  if (!(lo <= hi)) {
    throw ConfigError(std::string("invalid range for ") + what + ": [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

uint64_t hash_dynamics(const std::vector<double>& dynamics) {
  uint64_t h = 0x243f6a8885a308d3ULL;
  for (double v : dynamics) h = derive_seed(h, std::bit_cast<uint64_t>(v));
  return h;
}

std::vector<double> sample_sigma_diag(int dim, double sigma_s_max, Rng& rng) {
  std::vector<double> diag(dim);
  for (double& v : diag) v = rng.uniform(0.0, sigma_s_max);
  return diag;
}

std::vector<double> add_noise(const std::vector<double>& x,
                              const std::vector<double>& sigma_diag, Rng& rng) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double var = sigma_diag[i];
    out[i] = var > 0.0 ? x[i] + rng.normal(0.0, std::sqrt(var)) : x[i];
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Regression family
// ---------------------------------------------------------------------------

RegressionFamily::RegressionFamily(RegressionSpec spec) : spec_(spec) {
  check_range(spec_.slope_lo, spec_.slope_hi, "slope");
  check_range(spec_.intercept_lo, spec_.intercept_hi, "intercept");
  check_range(spec_.x_lo, spec_.x_hi, "x");
  if (spec_.sigma_s_max < 0.0) throw ConfigError("sigma_s_max must be >= 0");
}

TaskInstance RegressionFamily::sample_task(Rng& rng) const {
  return sample_task_in({"all", spec_.slope_lo, spec_.slope_hi}, rng);
}

TaskInstance RegressionFamily::sample_task_in(const Condition& cond, Rng& rng) const {
  check_range(cond.lo, cond.hi, "condition slope");
  TaskInstance task;
  task.family = Family::regression;
  task.dynamics = {rng.uniform(cond.lo, cond.hi),
                   rng.uniform(spec_.intercept_lo, spec_.intercept_hi)};
  task.sigma_s_diag = sample_sigma_diag(1, spec_.sigma_s_max, rng);
  task.task_id = hash_dynamics(task.dynamics);
  return task;
}

Transition RegressionFamily::sample_transition(const TaskInstance& task, Rng& rng) const {
  const double x = rng.uniform(spec_.x_lo, spec_.x_hi);
  return regression_transition(regression_params(task), x, task.sigma_s_diag, rng);
}

std::vector<double> RegressionFamily::true_next(const TaskInstance& task,
                                                const std::vector<double>& s,
                                                const std::vector<double>&) const {
  const RegressionParams p = regression_params(task);
  return {p.slope * s[0] + p.intercept};
}

std::vector<Condition> RegressionFamily::default_conditions() const {
  // Slope bands; labels mirror the friction scenarios of the puck family.
  return {{"low", -2.0, -0.5}, {"medium", -0.5, 0.5}, {"high", 0.5, 2.0}};
}

Transition regression_transition(const RegressionParams& params, double x,
                                 const std::vector<double>& sigma_s_diag, Rng& rng) {
  Transition t;
  t.s = {x};
  t.a = {};
  t.s_next = {params.slope * x + params.intercept};
  t.s_next_noisy = add_noise(t.s_next, sigma_s_diag, rng);
  return t;
}

// ---------------------------------------------------------------------------
// Puck family
// ---------------------------------------------------------------------------

PuckFamily::PuckFamily(PuckSpec spec) : spec_(spec) {
  check_range(spec_.mass_lo, spec_.mass_hi, "mass");
  check_range(spec_.mu_x_lo, spec_.mu_x_hi, "mu_x");
  check_range(spec_.mu_y_ratio_lo, spec_.mu_y_ratio_hi, "mu_y ratio");
  check_range(spec_.angle_lo, spec_.angle_hi, "hit angle");
  check_range(spec_.speed_lo, spec_.speed_hi, "hit speed");
  if (spec_.mass_lo <= 0.0 || spec_.mu_x_lo <= 0.0) {
    throw ConfigError("mass and friction must be positive");
  }
  if (spec_.sigma_s_max < 0.0) throw ConfigError("sigma_s_max must be >= 0");
}

TaskInstance PuckFamily::sample_task(Rng& rng) const {
  return sample_task_in({"all", spec_.mu_x_lo, spec_.mu_x_hi}, rng);
}

TaskInstance PuckFamily::sample_task_in(const Condition& cond, Rng& rng) const {
  check_range(cond.lo, cond.hi, "condition mu_x");
  TaskInstance task;
  task.family = Family::puck;
  const double mass = rng.uniform(spec_.mass_lo, spec_.mass_hi);
  const double mu_x = rng.uniform(cond.lo, cond.hi);
  const double mu_y = mu_x * rng.uniform(spec_.mu_y_ratio_lo, spec_.mu_y_ratio_hi);
  const double off_std = std::sqrt(spec_.start_offset_var);
  const double ox = rng.normal(0.0, off_std);
  const double oy = rng.normal(0.0, off_std);
  task.dynamics = {mass, mu_x, mu_y, ox, oy};
  task.sigma_s_diag = sample_sigma_diag(2, spec_.sigma_s_max, rng);
  task.task_id = hash_dynamics(task.dynamics);
  return task;
}

Transition PuckFamily::sample_transition(const TaskInstance& task, Rng& rng) const {
  const double angle = rng.uniform(spec_.angle_lo, spec_.angle_hi);
  const double speed = rng.uniform(spec_.speed_lo, spec_.speed_hi);
  return puck_transition(task, {angle, speed}, rng);
}

std::vector<double> PuckFamily::true_next(const TaskInstance& task,
                                          const std::vector<double>& s,
                                          const std::vector<double>& a) const {
  (void)s;  // start position is a task constant, already in the params
  const auto rest = puck_simulate(puck_params(task), a[0], a[1]);
  return {rest[0], rest[1]};
}

std::vector<Condition> PuckFamily::default_conditions() const {
  return {{"low", 0.15, 0.35}, {"medium", 0.45, 0.65}, {"high", 0.75, 0.95}};
}

std::array<double, 2> puck_simulate(const PuckParams& params, double hit_angle,
                                    double hit_speed) {
  if (!std::isfinite(hit_angle) || !std::isfinite(hit_speed) || hit_speed < 0.0) {
    throw ConfigError("puck_simulate: non-finite or negative action");
  }
  constexpr double kG = 9.81;
  constexpr double kDt = 1e-3;
  constexpr double kStopSpeed = 1e-4;

  double px = params.start_offset[0];
  double py = params.start_offset[1];
  double vx = hit_speed * std::cos(hit_angle);
  double vy = hit_speed * std::sin(hit_angle);

  double speed = std::hypot(vx, vy);
  while (speed >= kStopSpeed) {
    // Componentwise Coulomb deceleration along the velocity direction.
    const double ax = -kG * params.mu_x * (vx / speed);
    const double ay = -kG * params.mu_y * (vy / speed);
    // Shorten the final step so the decelerating force never reverses the
    // motion: t_stop is when the speed along the current direction hits zero.
    const double decel_along = -(ax * vx + ay * vy) / speed;
    double dt = kDt;
    if (decel_along > 0.0) {
      const double t_stop = speed / decel_along;
      if (t_stop < dt) dt = t_stop;
    }
    // Average-velocity position update; exact for straight-line slides.
    px += vx * dt + 0.5 * ax * dt * dt;
    py += vy * dt + 0.5 * ay * dt * dt;
    vx += ax * dt;
    vy += ay * dt;
    speed = std::hypot(vx, vy);
  }
  return {px, py};
}

Transition puck_transition(const TaskInstance& task, const std::array<double, 2>& action,
                           Rng& rng) {
  const PuckParams p = puck_params(task);
  Transition t;
  t.s = {p.start_offset[0], p.start_offset[1]};
  t.a = {action[0], action[1]};
  const auto rest = puck_simulate(p, action[0], action[1]);
  t.s_next = {rest[0], rest[1]};
  t.s_next_noisy = add_noise(t.s_next, task.sigma_s_diag, rng);
  return t;
}

std::unique_ptr<TaskFamily> make_family(Family f, double sigma_s_max) {
  if (f == Family::regression) {
    RegressionSpec spec;
    spec.sigma_s_max = sigma_s_max;
    return std::make_unique<RegressionFamily>(spec);
  }
  PuckSpec spec;
  spec.sigma_s_max = sigma_s_max;
  return std::make_unique<PuckFamily>(spec);
}

// ---------------------------------------------------------------------------
// Evaluation suite
// ---------------------------------------------------------------------------

EvalSuite make_eval_suite(const TaskFamily& family, const std::vector<Condition>& conditions,
                          const std::vector<double>& noise_levels, int n_adapt, int n_query,
                          int tasks_per_cell, uint64_t seed) {
  if (n_adapt < 1 || n_query < 1) throw ConfigError("n_adapt and n_query must be >= 1");
  if (tasks_per_cell < 1) throw ConfigError("tasks_per_cell must be >= 1");
  if (conditions.empty() || noise_levels.empty()) {
    throw ConfigError("eval suite needs at least one condition and one noise level");
  }
  EvalSuite suite;
  suite.family = family.family();
  suite.n_adapt = n_adapt;
  suite.n_query = n_query;
  suite.seed = seed;
  const int d_s = family.state_dim();

  uint64_t cell_index = 0;
  for (const Condition& cond : conditions) {
    for (double noise : noise_levels) {
      if (noise < 0.0) throw ConfigError("noise level must be >= 0");
      EvalCell cell;
      cell.condition = cond.label;
      cell.noise_level = noise;
      for (int t = 0; t < tasks_per_cell; ++t) {
        Rng rng(derive_seed(seed, cell_index * 100003ULL + static_cast<uint64_t>(t)));
        EvalTask et;
        et.task = family.sample_task_in(cond, rng);
        // Evaluation pins the noise level exactly rather than sampling it.
        et.task.sigma_s_diag.assign(static_cast<size_t>(d_s), noise);
        for (int i = 0; i < n_adapt; ++i) {
          et.adapt.push_back(family.sample_transition(et.task, rng));
        }
        TaskInstance clean = et.task;
        clean.sigma_s_diag.assign(static_cast<size_t>(d_s), 0.0);
        for (int i = 0; i < n_query; ++i) {
          et.query.push_back(family.sample_transition(clean, rng));
        }
        cell.tasks.push_back(std::move(et));
      }
      suite.cells.push_back(std::move(cell));
      ++cell_index;
    }
  }
  return suite;
}

}  // namespace adaptkf
