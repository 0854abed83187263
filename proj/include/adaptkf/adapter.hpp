#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "adaptkf/tasks.hpp"

namespace adaptkf {

// Common contract for all few-shot adapters: reset per task, feed observed
// transitions, query next-state predictions. Evaluation treats every method
// through this interface.
class Adapter {
 public:
  virtual ~Adapter() = default;

  virtual std::string method_name() const = 0;

  // Called once per evaluation task before reset(). Default no-op; the
  // oracle test stub uses it to capture the true dynamics.
  virtual void begin_task(const TaskInstance& task) { (void)task; }

  virtual void reset() = 0;
  virtual void observe(const Transition& tr) = 0;
  virtual std::vector<double> predict(const std::vector<double>& s,
                                      const std::vector<double>& a) = 0;

  // Task code for hidden-state analysis; empty when the method has none.
  virtual std::vector<double> hidden_state() const { return {}; }

  virtual bool supports_uncertainty() const { return false; }
  virtual std::vector<std::vector<double>> sample_predictions(
      const std::vector<double>& s, const std::vector<double>& a, int n_samples,
      uint64_t seed);

  // Checksum over learned parameters; evaluation asserts adaptation never
  // changes it.
  virtual double parameter_checksum() const = 0;
};

using AdapterFactory = std::function<std::unique_ptr<Adapter>()>;

}  // namespace adaptkf
