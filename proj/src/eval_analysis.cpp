#include "adaptkf/eval_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "adaptkf/errors.hpp"

namespace adaptkf {

std::string format_double(double v) {
  // Shortest representation that parses back to the same bits.
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace {

double euclidean_error(const std::vector<double>& a, const std::vector<double>& b) {
  double sq = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

void check_checkpoints(const std::vector<int>& checkpoints, int n_adapt) {
  if (checkpoints.empty()) throw ConfigError("checkpoints list is empty");
  int prev = -1;
  for (int c : checkpoints) {
    if (c <= prev) throw ConfigError("checkpoints must be strictly increasing");
    prev = c;
  }
  if (checkpoints.back() > n_adapt) {
    throw ConfigError("checkpoint " + std::to_string(checkpoints.back()) +
                      " exceeds n_adapt=" + std::to_string(n_adapt));
  }
}

// Per-task mean query error at each checkpoint.
std::vector<double> run_task(Adapter& adapter, const EvalTask& et,
                             const std::vector<int>& checkpoints) {
  adapter.begin_task(et.task);
  adapter.reset();
  std::vector<double> errors;
  errors.reserve(checkpoints.size());
  size_t ci = 0;
  auto measure_now = [&]() {
    double sum = 0.0;
    for (const Transition& q : et.query) {
      sum += euclidean_error(adapter.predict(q.s, q.a), q.s_next);
    }
    return sum / static_cast<double>(et.query.size());
  };
  if (ci < checkpoints.size() && checkpoints[ci] == 0) {
    errors.push_back(measure_now());
    ++ci;
  }
  for (int k = 1; k <= static_cast<int>(et.adapt.size()) && ci < checkpoints.size(); ++k) {
    adapter.observe(et.adapt[static_cast<size_t>(k - 1)]);
    if (checkpoints[ci] == k) {
      errors.push_back(measure_now());
      ++ci;
    }
  }
  return errors;
}

ErrorCurve aggregate_cell(const std::string& method, const EvalCell& cell,
                          const std::vector<int>& checkpoints,
                          const std::vector<std::vector<double>>& per_task_errors) {
  ErrorCurve curve;
  curve.method = method;
  curve.condition = cell.condition;
  curve.noise_level = cell.noise_level;
  const int n_tasks = static_cast<int>(per_task_errors.size());
  for (size_t ci = 0; ci < checkpoints.size(); ++ci) {
    double mean = 0.0;
    for (const auto& te : per_task_errors) mean += te[ci];
    mean /= n_tasks;
    double var = 0.0;
    for (const auto& te : per_task_errors) {
      const double d = te[ci] - mean;
      var += d * d;
    }
    const double stddev = n_tasks > 1 ? std::sqrt(var / (n_tasks - 1)) : 0.0;
    curve.points.push_back(ErrorCurvePoint{checkpoints[ci], mean, stddev, n_tasks});
  }
  return curve;
}

}  // namespace

std::vector<ErrorCurve> evaluate_adaptation(Adapter& adapter, const EvalSuite& suite,
                                            const std::vector<int>& checkpoints) {
  check_checkpoints(checkpoints, suite.n_adapt);
  const double checksum_before = adapter.parameter_checksum();
  std::vector<ErrorCurve> curves;
  for (const EvalCell& cell : suite.cells) {
    std::vector<std::vector<double>> per_task;
    for (const EvalTask& et : cell.tasks) {
      per_task.push_back(run_task(adapter, et, checkpoints));
    }
    curves.push_back(aggregate_cell(adapter.method_name(), cell, checkpoints, per_task));
  }
  if (adapter.parameter_checksum() != checksum_before) {
    throw ContractError("evaluation mutated adapter parameters");
  }
  return curves;
}

std::vector<ErrorCurve> evaluate_adaptation(const AdapterFactory& factory,
                                            const EvalSuite& suite,
                                            const std::vector<int>& checkpoints, int jobs) {
  check_checkpoints(checkpoints, suite.n_adapt);
  if (jobs < 1) throw ConfigError("jobs must be >= 1");

  struct Item {
    const EvalCell* cell;
    const EvalTask* task;
    size_t cell_idx;
    size_t task_idx;
  };
  std::vector<Item> items;
  for (size_t c = 0; c < suite.cells.size(); ++c) {
    for (size_t t = 0; t < suite.cells[c].tasks.size(); ++t) {
      items.push_back(Item{&suite.cells[c], &suite.cells[c].tasks[t], c, t});
    }
  }
  std::vector<std::vector<std::vector<double>>> results(suite.cells.size());
  for (size_t c = 0; c < suite.cells.size(); ++c) {
    results[c].resize(suite.cells[c].tasks.size());
  }
  std::string method;
  {
    auto probe = factory();
    method = probe->method_name();
  }
  const int workers = std::min<int>(jobs, static_cast<int>(items.size()) > 0
                                              ? static_cast<int>(items.size())
                                              : 1);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        auto adapter = factory();
        for (size_t i = static_cast<size_t>(w); i < items.size();
             i += static_cast<size_t>(workers)) {
          results[items[i].cell_idx][items[i].task_idx] =
              run_task(*adapter, *items[i].task, checkpoints);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);

  std::vector<ErrorCurve> curves;
  for (size_t c = 0; c < suite.cells.size(); ++c) {
    curves.push_back(aggregate_cell(method, suite.cells[c], checkpoints, results[c]));
  }
  return curves;
}

std::vector<HiddenStateRecord> collect_hidden_states(Adapter& adapter,
                                                     const EvalSuite& suite,
                                                     const std::vector<int>& at_samples,
                                                     double noise_level) {
  check_checkpoints(at_samples, suite.n_adapt);
  std::vector<HiddenStateRecord> records;
  for (const EvalCell& cell : suite.cells) {
    if (cell.noise_level != noise_level) continue;
    for (const EvalTask& et : cell.tasks) {
      adapter.begin_task(et.task);
      adapter.reset();
      size_t ci = 0;
      auto snapshot = [&](int k) {
        std::vector<double> phi = adapter.hidden_state();
        if (phi.empty()) {
          throw CapabilityError("adapter '" + adapter.method_name() +
                                "' has no hidden state to analyze");
        }
        records.push_back(HiddenStateRecord{adapter.method_name(), cell.condition, k, phi});
      };
      if (ci < at_samples.size() && at_samples[ci] == 0) {
        snapshot(0);
        ++ci;
      }
      for (int k = 1; k <= static_cast<int>(et.adapt.size()) && ci < at_samples.size();
           ++k) {
        adapter.observe(et.adapt[static_cast<size_t>(k - 1)]);
        if (at_samples[ci] == k) {
          snapshot(k);
          ++ci;
        }
      }
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// PCA (Jacobi eigendecomposition of the sample covariance)
// ---------------------------------------------------------------------------

namespace {

// Cyclic Jacobi for symmetric matrices; returns eigenvalues and eigenvectors
// (columns of V), deterministic sweep order.
void jacobi_eigen(std::vector<double> a, int n, std::vector<double>& eigvals,
                  std::vector<double>& eigvecs) {
  eigvecs.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) eigvecs[static_cast<size_t>(i) * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[static_cast<size_t>(p) * n + q] *
                                              a[static_cast<size_t>(p) * n + q];
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[static_cast<size_t>(p) * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[static_cast<size_t>(p) * n + p];
        const double aqq = a[static_cast<size_t>(q) * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double aip = a[static_cast<size_t>(i) * n + p];
          const double aiq = a[static_cast<size_t>(i) * n + q];
          a[static_cast<size_t>(i) * n + p] = c * aip - s * aiq;
          a[static_cast<size_t>(i) * n + q] = s * aip + c * aiq;
        }
        for (int j = 0; j < n; ++j) {
          const double apj = a[static_cast<size_t>(p) * n + j];
          const double aqj = a[static_cast<size_t>(q) * n + j];
          a[static_cast<size_t>(p) * n + j] = c * apj - s * aqj;
          a[static_cast<size_t>(q) * n + j] = s * apj + c * aqj;
        }
        for (int i = 0; i < n; ++i) {
          const double vip = eigvecs[static_cast<size_t>(i) * n + p];
          const double viq = eigvecs[static_cast<size_t>(i) * n + q];
          eigvecs[static_cast<size_t>(i) * n + p] = c * vip - s * viq;
          eigvecs[static_cast<size_t>(i) * n + q] = s * vip + c * viq;
        }
      }
    }
  }
  eigvals.resize(n);
  for (int i = 0; i < n; ++i) eigvals[i] = a[static_cast<size_t>(i) * n + i];
}

}  // namespace

PcaResult pca_hidden_states(const std::vector<HiddenStateRecord>& records,
                            int n_components) {
  if (records.size() < 2) throw ConfigError("pca: need at least 2 records");
  const int d = static_cast<int>(records.front().phi.size());
  if (n_components < 1 || n_components > d) {
    throw ConfigError("pca: n_components must be in [1, " + std::to_string(d) + "]");
  }
  for (const auto& r : records) {
    if (static_cast<int>(r.phi.size()) != d) {
      throw DimensionError("pca: inconsistent hidden-state widths");
    }
  }
  const int n = static_cast<int>(records.size());
  std::vector<double> mean(d, 0.0);
  for (const auto& r : records)
    for (int j = 0; j < d; ++j) mean[j] += r.phi[j];
  for (double& m : mean) m /= n;

  std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
  for (const auto& r : records) {
    for (int i = 0; i < d; ++i) {
      const double xi = r.phi[i] - mean[i];
      for (int j = i; j < d; ++j) {
        cov[static_cast<size_t>(i) * d + j] += xi * (r.phi[j] - mean[j]);
      }
    }
  }
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      cov[static_cast<size_t>(i) * d + j] /= (n - 1);
      cov[static_cast<size_t>(j) * d + i] = cov[static_cast<size_t>(i) * d + j];
    }

  PcaResult res;
  double total_var = 0.0;
  for (int i = 0; i < d; ++i) total_var += cov[static_cast<size_t>(i) * d + i];
  if (total_var <= 1e-15) {
    res.degenerate = true;
    res.projections.assign(static_cast<size_t>(n), std::vector<double>(n_components, 0.0));
    res.explained_variance_ratio.assign(static_cast<size_t>(n_components), 0.0);
    return res;
  }

  std::vector<double> eigvals, eigvecs;
  jacobi_eigen(cov, d, eigvals, eigvecs);
  std::vector<int> order(d);
  for (int i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return eigvals[a] > eigvals[b]; });

  // Sign convention: make the largest-magnitude loading positive.
  std::vector<std::vector<double>> components;
  for (int k = 0; k < n_components; ++k) {
    std::vector<double> v(d);
    for (int i = 0; i < d; ++i) v[i] = eigvecs[static_cast<size_t>(i) * d + order[k]];
    int arg = 0;
    for (int i = 1; i < d; ++i)
      if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0.0)
      for (double& x : v) x = -x;
    components.push_back(std::move(v));
    res.explained_variance_ratio.push_back(std::max(0.0, eigvals[order[k]]) / total_var);
  }

  res.projections.reserve(static_cast<size_t>(n));
  for (const auto& r : records) {
    std::vector<double> proj(n_components, 0.0);
    for (int k = 0; k < n_components; ++k) {
      for (int j = 0; j < d; ++j) proj[k] += (r.phi[j] - mean[j]) * components[k][j];
    }
    res.projections.push_back(std::move(proj));
  }
  return res;
}

double cluster_separation(const std::vector<std::vector<double>>& projections,
                          const std::vector<std::string>& labels) {
  if (projections.size() != labels.size()) {
    throw DimensionError("silhouette: projections/labels length mismatch");
  }
  const size_t n = projections.size();
  std::map<std::string, std::vector<size_t>> clusters;
  for (size_t i = 0; i < n; ++i) clusters[labels[i]].push_back(i);
  if (clusters.size() < 2) {
    throw ConfigError("silhouette undefined for a single label");
  }
  for (const auto& [label, members] : clusters) {
    if (members.size() < 2) {
      throw ConfigError("silhouette: label '" + label + "' has fewer than 2 points");
    }
  }
  auto dist = [&](size_t i, size_t j) {
    double sq = 0.0;
    for (size_t k = 0; k < projections[i].size(); ++k) {
      const double d = projections[i][k] - projections[j][k];
      sq += d * d;
    }
    return std::sqrt(sq);
  };
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double a = 0.0;
    const auto& own = clusters[labels[i]];
    for (size_t j : own) {
      if (j != i) a += dist(i, j);
    }
    a /= static_cast<double>(own.size() - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, members] : clusters) {
      if (label == labels[i]) continue;
      double m = 0.0;
      for (size_t j : members) m += dist(i, j);
      m /= static_cast<double>(members.size());
      b = std::min(b, m);
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

std::vector<CalibrationRecord> calibration_report(Adapter& adapter, const EvalSuite& suite,
                                                  const std::vector<int>& checkpoints,
                                                  int n_mc_samples) {
  if (!adapter.supports_uncertainty()) {
    throw CapabilityError("adapter '" + adapter.method_name() +
                          "' does not support calibration reporting");
  }
  check_checkpoints(checkpoints, suite.n_adapt);
  if (n_mc_samples < 2) throw ConfigError("n_mc_samples must be >= 2");

  std::vector<CalibrationRecord> records;
  for (const EvalCell& cell : suite.cells) {
    // Accumulators per checkpoint across the cell's tasks.
    std::vector<double> spread_sum(checkpoints.size(), 0.0);
    std::vector<double> sq_err_sum(checkpoints.size(), 0.0);
    std::vector<int> count(checkpoints.size(), 0);
    for (size_t ti = 0; ti < cell.tasks.size(); ++ti) {
      const EvalTask& et = cell.tasks[ti];
      adapter.begin_task(et.task);
      adapter.reset();
      size_t ci = 0;
      auto measure_now = [&](int /*k*/) {
        double spread = 0.0;
        double sq = 0.0;
        for (size_t qi = 0; qi < et.query.size(); ++qi) {
          const Transition& q = et.query[qi];
          const uint64_t seed =
              derive_seed(suite.seed, 7919ULL * ti + 31ULL * qi + ci);
          auto samples = adapter.sample_predictions(q.s, q.a, n_mc_samples, seed);
          const size_t dim = samples.front().size();
          double per_dim_std = 0.0;
          for (size_t dcol = 0; dcol < dim; ++dcol) {
            double m = 0.0;
            for (const auto& sv : samples) m += sv[dcol];
            m /= samples.size();
            double var = 0.0;
            for (const auto& sv : samples) {
              const double dv = sv[dcol] - m;
              var += dv * dv;
            }
            per_dim_std += std::sqrt(var / (samples.size() - 1));
          }
          spread += per_dim_std / static_cast<double>(dim);
          const double e = euclidean_error(adapter.predict(q.s, q.a), q.s_next);
          sq += e * e;
        }
        spread_sum[ci] += spread / static_cast<double>(et.query.size());
        sq_err_sum[ci] += sq / static_cast<double>(et.query.size());
        count[ci] += 1;
      };
      if (ci < checkpoints.size() && checkpoints[ci] == 0) {
        measure_now(0);
        ++ci;
      }
      for (int k = 1; k <= static_cast<int>(et.adapt.size()) && ci < checkpoints.size();
           ++k) {
        adapter.observe(et.adapt[static_cast<size_t>(k - 1)]);
        if (checkpoints[ci] == k) {
          measure_now(k);
          ++ci;
        }
      }
    }
    for (size_t ci = 0; ci < checkpoints.size(); ++ci) {
      CalibrationRecord rec;
      rec.condition = cell.condition;
      rec.noise_level = cell.noise_level;
      rec.n_samples = checkpoints[ci];
      rec.predicted_spread = spread_sum[ci] / count[ci];
      rec.empirical_rms = std::sqrt(sq_err_sum[ci] / count[ci]);
      records.push_back(rec);
    }
  }
  return records;
}

ComparisonTable comparison_table(const std::vector<ErrorCurve>& curves) {
  if (curves.empty()) throw ConfigError("comparison_table: no curves");
  const std::vector<ErrorCurvePoint>& ref = curves.front().points;
  for (const ErrorCurve& c : curves) {
    if (c.points.size() != ref.size()) {
      throw ConfigError("comparison_table: curves have mismatched checkpoint grids");
    }
    for (size_t i = 0; i < ref.size(); ++i) {
      if (c.points[i].n_samples != ref[i].n_samples) {
        throw ConfigError("comparison_table: curves have mismatched checkpoint grids");
      }
    }
  }
  std::vector<const ErrorCurve*> sorted;
  for (const ErrorCurve& c : curves) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(), [](const ErrorCurve* a, const ErrorCurve* b) {
    if (a->method != b->method) return a->method < b->method;
    if (a->condition != b->condition) return a->condition < b->condition;
    return a->noise_level < b->noise_level;
  });

  std::ostringstream csv;
  csv << "n_samples";
  for (const ErrorCurve* c : sorted) {
    csv << "," << c->method << "/" << c->condition << "/" << format_double(c->noise_level);
  }
  csv << "\n";
  for (size_t i = 0; i < ref.size(); ++i) {
    csv << ref[i].n_samples;
    for (const ErrorCurve* c : sorted) csv << "," << format_double(c->points[i].mean_error);
    csv << "\n";
  }

  std::ostringstream text;
  std::vector<std::string> headers = {"n_samples"};
  for (const ErrorCurve* c : sorted) {
    std::ostringstream h;
    h << c->method << "/" << c->condition << "/" << c->noise_level;
    headers.push_back(h.str());
  }
  std::vector<size_t> widths;
  for (const auto& h : headers) widths.push_back(std::max<size_t>(h.size(), 10));
  auto pad = [](const std::string& s, size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  for (size_t j = 0; j < headers.size(); ++j) text << pad(headers[j], widths[j] + 2);
  text << "\n";
  char buf[40];
  for (size_t i = 0; i < ref.size(); ++i) {
    text << pad(std::to_string(ref[i].n_samples), widths[0] + 2);
    for (size_t j = 0; j < sorted.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.4f", sorted[j]->points[i].mean_error);
      text << pad(buf, widths[j + 1] + 2);
    }
    text << "\n";
  }
  return ComparisonTable{csv.str(), text.str()};
}

}  // namespace adaptkf
