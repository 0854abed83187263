#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaptkf/adapter.hpp"
#include "adaptkf/tasks.hpp"

namespace adaptkf {

struct ErrorCurvePoint {
  int n_samples = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
  int n_tasks = 0;
};

struct ErrorCurve {
  std::string method;
  std::string condition;
  double noise_level = 0.0;
  std::vector<ErrorCurvePoint> points;
};

// Per evaluation cell: reset the adapter per task, feed adaptation
// transitions one at a time, and at each checkpoint measure the mean
// Euclidean error of predictions over the held-out noiseless queries.
// Aggregates mean +/- std across the cell's tasks.
std::vector<ErrorCurve> evaluate_adaptation(Adapter& adapter, const EvalSuite& suite,
                                            const std::vector<int>& checkpoints);

// Parallel variant: each worker drives its own adapter instance; outputs are
// identical to the sequential version for any job count.
std::vector<ErrorCurve> evaluate_adaptation(const AdapterFactory& factory,
                                            const EvalSuite& suite,
                                            const std::vector<int>& checkpoints, int jobs);

struct HiddenStateRecord {
  std::string method;
  std::string condition;
  int n_samples = 0;
  std::vector<double> phi;
};

// Runs the adapter over the suite's adaptation data and snapshots the task
// code at each requested sample count. Cells are filtered to one noise level
// so the conditions differ only by dynamics.
std::vector<HiddenStateRecord> collect_hidden_states(Adapter& adapter,
                                                     const EvalSuite& suite,
                                                     const std::vector<int>& at_samples,
                                                     double noise_level);

struct PcaResult {
  std::vector<std::vector<double>> projections;  // n_records x n_components
  std::vector<double> explained_variance_ratio;  // length n_components
  bool degenerate = false;                       // all-zero projections (no variance)
};

PcaResult pca_hidden_states(const std::vector<HiddenStateRecord>& records,
                            int n_components = 2);

// Mean silhouette over Euclidean distance in projection space, in [-1, 1].
double cluster_separation(const std::vector<std::vector<double>>& projections,
                          const std::vector<std::string>& labels);

struct CalibrationRecord {
  std::string condition;
  double noise_level = 0.0;
  int n_samples = 0;
  double predicted_spread = 0.0;  // mean marginal std of sampled predictions
  double empirical_rms = 0.0;     // RMS prediction error over queries
};

// Monte Carlo spread of belief-sampled predictions vs realized error, per
// cell and checkpoint. Requires an adapter with uncertainty support.
std::vector<CalibrationRecord> calibration_report(Adapter& adapter, const EvalSuite& suite,
                                                  const std::vector<int>& checkpoints,
                                                  int n_mc_samples);

struct ComparisonTable {
  std::string csv;
  std::string text;
};

// Rows = checkpoints, columns = (method, condition, noise) sorted; all curves
// must share the same checkpoint grid.
ComparisonTable comparison_table(const std::vector<ErrorCurve>& curves);

// Shared deterministic float formatting for CSV output.
std::string format_double(double v);

}  // namespace adaptkf
