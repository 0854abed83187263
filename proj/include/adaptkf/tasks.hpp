#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "adaptkf/rng.hpp"

namespace adaptkf {

enum class Family { regression, puck };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// One sampled environment: hidden dynamics parameters plus the observation
// noise variances that corrupt its next-state observations.
struct TaskInstance {
  Family family = Family::regression;
  std::vector<double> dynamics;      // family-specific, hidden from the learner
  std::vector<double> sigma_s_diag;  // per-dimension observation-noise variance
  uint64_t task_id = 0;
};

struct Transition {
  std::vector<double> s;
  std::vector<double> a;
  std::vector<double> s_next;        // noiseless
  std::vector<double> s_next_noisy;  // s_next + N(0, diag(sigma_s))
};

struct RegressionParams {
  double slope = 0.0;
  double intercept = 0.0;
};

struct PuckParams {
  double mass = 0.0;  // kg; no dynamic effect for a point mass, kept as a task nuisance parameter
  double mu_x = 0.0;
  double mu_y = 0.0;
  std::array<double, 2> start_offset = {0.0, 0.0};  // m
};

RegressionParams regression_params(const TaskInstance& task);
PuckParams puck_params(const TaskInstance& task);

// Randomization ranges for the two families. Invalid (lo > hi) ranges are
// rejected at family construction.
struct RegressionSpec {
  double slope_lo = -2.0, slope_hi = 2.0;
  double intercept_lo = -1.0, intercept_hi = 1.0;
  double x_lo = -3.0, x_hi = 3.0;
  double sigma_s_max = 0.3;
};

struct PuckSpec {
  double mass_lo = 0.01, mass_hi = 0.1;
  double mu_x_lo = 0.15, mu_x_hi = 0.95;
  double mu_y_ratio_lo = 0.7, mu_y_ratio_hi = 1.3;
  double start_offset_var = 0.02;  // variance of the per-task start offset, m^2
  double angle_lo = -0.7853981633974483, angle_hi = 0.7853981633974483;  // +/- pi/4
  double speed_lo = 0.5, speed_hi = 3.0;
  double sigma_s_max = 0.3;
};

// Restricts the primary dynamics parameter (slope / mu_x) to a labeled
// sub-range; used to build the low/medium/high evaluation scenarios.
struct Condition {
  std::string label;
  double lo = 0.0;
  double hi = 0.0;
};

class TaskFamily {
 public:
  virtual ~TaskFamily() = default;
  virtual Family family() const = 0;
  virtual std::string name() const { return family_name(family()); }
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;

  virtual TaskInstance sample_task(Rng& rng) const = 0;
  // Like sample_task but with the primary parameter drawn from `cond`.
  virtual TaskInstance sample_task_in(const Condition& cond, Rng& rng) const = 0;
  virtual Transition sample_transition(const TaskInstance& task, Rng& rng) const = 0;
  // Noiseless next state for given inputs under the task's true dynamics.
  virtual std::vector<double> true_next(const TaskInstance& task,
                                        const std::vector<double>& s,
                                        const std::vector<double>& a) const = 0;
  virtual std::vector<Condition> default_conditions() const = 0;
};

class RegressionFamily final : public TaskFamily {
 public:
  explicit RegressionFamily(RegressionSpec spec = {});
  Family family() const override { return Family::regression; }
  int state_dim() const override { return 1; }
  int action_dim() const override { return 0; }
  TaskInstance sample_task(Rng& rng) const override;
  TaskInstance sample_task_in(const Condition& cond, Rng& rng) const override;
  Transition sample_transition(const TaskInstance& task, Rng& rng) const override;
  std::vector<double> true_next(const TaskInstance& task, const std::vector<double>& s,
                                const std::vector<double>& a) const override;
  std::vector<Condition> default_conditions() const override;
  const RegressionSpec& spec() const { return spec_; }

 private:
  RegressionSpec spec_;
};

class PuckFamily final : public TaskFamily {
 public:
  explicit PuckFamily(PuckSpec spec = {});
  Family family() const override { return Family::puck; }
  int state_dim() const override { return 2; }
  int action_dim() const override { return 2; }
  TaskInstance sample_task(Rng& rng) const override;
  TaskInstance sample_task_in(const Condition& cond, Rng& rng) const override;
  Transition sample_transition(const TaskInstance& task, Rng& rng) const override;
  std::vector<double> true_next(const TaskInstance& task, const std::vector<double>& s,
                                const std::vector<double>& a) const override;
  std::vector<Condition> default_conditions() const override;
  const PuckSpec& spec() const { return spec_; }

 private:
  PuckSpec spec_;
};

std::unique_ptr<TaskFamily> make_family(Family f, double sigma_s_max);

// y = slope*x + intercept observed under Gaussian noise. The action is the
// width-0 vector.
Transition regression_transition(const RegressionParams& params, double x,
                                 const std::vector<double>& sigma_s_diag, Rng& rng);

// Point mass sliding under anisotropic Coulomb friction from the task start
// position; hit imparts speed `hit_speed` along `hit_angle` (from +x).
// Integrates with dt=1e-3 using average-velocity position updates until the
// speed drops below 1e-4 m/s; returns the rest position.
std::array<double, 2> puck_simulate(const PuckParams& params, double hit_angle,
                                    double hit_speed);

Transition puck_transition(const TaskInstance& task, const std::array<double, 2>& action,
                           Rng& rng);

// Pre-generated evaluation data: per (condition, noise) cell a fixed set of
// tasks, each with adaptation transitions and noiseless held-out queries.
struct EvalTask {
  TaskInstance task;
  std::vector<Transition> adapt;
  std::vector<Transition> query;
};

struct EvalCell {
  std::string condition;
  double noise_level = 0.0;
  std::vector<EvalTask> tasks;
};

struct EvalSuite {
  Family family = Family::regression;
  std::vector<EvalCell> cells;
  int n_adapt = 0;
  int n_query = 0;
  uint64_t seed = 0;
};

EvalSuite make_eval_suite(const TaskFamily& family, const std::vector<Condition>& conditions,
                          const std::vector<double>& noise_levels, int n_adapt, int n_query,
                          int tasks_per_cell, uint64_t seed);

}  // namespace adaptkf
