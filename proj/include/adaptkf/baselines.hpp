#pragma once

#include <cstdint>
#include <vector>

#include "adaptkf/adapter.hpp"
#include "adaptkf/meta_model.hpp"
#include "adaptkf/nn.hpp"
#include "adaptkf/tasks.hpp"

namespace adaptkf {

// Blackbox baseline: an LSTM consumes observed transitions and a linear
// readout of its hidden vector stands in for the task code fed to the same
// prediction-network architecture as the Kalman model.
class LstmDynamicsModel {
 public:
  LstmDynamicsModel(Dims dims, uint64_t seed, int lstm_hidden = 64, int pred_hidden = 128,
                    int pred_layers = 3);

  const Dims& dims() const { return dims_; }
  const LstmConfig& cell_cfg() const { return cell_cfg_; }
  const ParamSet& cell_params() const { return cell_params_; }
  const MlpConfig& prediction_cfg() const { return pred_cfg_; }
  const ParamSet& prediction_params() const { return pred_params_; }
  const ParamSet& readout_params() const { return readout_params_; }

  ParamSet all_params() const;
  void load_params(const ParamSet& flat);

  LstmCellState zero_state() const { return lstm_zero_state(cell_cfg_); }

 private:
  Dims dims_;
  LstmConfig cell_cfg_;
  ParamSet cell_params_;
  ParamSet readout_params_;  // readout.weight (H x d_phi), readout.bias (1 x d_phi)
  MlpConfig pred_cfg_;
  ParamSet pred_params_;
};

// Feeds one observed transition into the recurrent state.
LstmCellState lstm_adapt_step(Tape& tape, const LstmDynamicsModel& model,
                              const LstmCellState& state, const Tensor& s, const Tensor& a,
                              const Tensor& s_next_noisy);

// Task code phi from the current recurrent state.
Tensor lstm_phi(Tape& tape, const LstmDynamicsModel& model, const LstmCellState& state);

Tensor lstm_predict(Tape& tape, const LstmDynamicsModel& model, const Tensor& s,
                    const Tensor& a, const Tensor& phi);

// Same sequence loss and protocol as the Kalman model's training loop; only
// the state-integration block differs.
std::vector<TrainLogRow> lstm_meta_train(LstmDynamicsModel& model, const TaskFamily& family,
                                         const TrainConfig& cfg);

// Gradient-based baseline: a plain dynamics network adapted by a few inner
// SGD steps with a learned step size (softplus-parametrized, always > 0).
class MamlModel {
 public:
  MamlModel(Dims dims, uint64_t seed, int inner_batch, int inner_steps = 3,
            int hidden = 128, int hidden_layers = 4, double alpha_init = 0.01);

  const Dims& dims() const { return dims_; }
  const MlpConfig& net_cfg() const { return net_cfg_; }
  const ParamSet& net_params() const { return net_params_; }
  int inner_batch() const { return inner_batch_; }
  int inner_steps() const { return inner_steps_; }
  double alpha() const;  // softplus(alpha_raw)
  const Tensor& alpha_raw() const { return alpha_raw_; }

  ParamSet all_params() const;
  void load_params(const ParamSet& flat);

 private:
  Dims dims_;
  int inner_batch_, inner_steps_;
  MlpConfig net_cfg_;
  ParamSet net_params_;
  Tensor alpha_raw_;  // 1x1, requires_grad
};

// First-order inner adaptation: up to inner_steps gradient steps, each on the
// next batch of `inner_batch` support transitions, targets being the noisy
// observed next states. Base parameters are untouched; the adapted copy is
// returned. Throws InsufficientDataError when fewer than one batch is given.
ParamSet maml_adapt(const MamlModel& model, const std::vector<Transition>& support);

std::vector<TrainLogRow> maml_meta_train(MamlModel& model, const TaskFamily& family,
                                         const TrainConfig& cfg);

// Adapter implementations over the three methods.

class KalmanFilterAdapter final : public Adapter {
 public:
  explicit KalmanFilterAdapter(const MetaModel& model);
  std::string method_name() const override { return "kalman"; }
  void reset() override;
  void observe(const Transition& tr) override;
  std::vector<double> predict(const std::vector<double>& s,
                              const std::vector<double>& a) override;
  std::vector<double> hidden_state() const override;
  bool supports_uncertainty() const override { return true; }
  std::vector<std::vector<double>> sample_predictions(const std::vector<double>& s,
                                                      const std::vector<double>& a,
                                                      int n_samples,
                                                      uint64_t seed) override;
  double parameter_checksum() const override;
  const AdapterSession& session() const { return session_; }

 private:
  const MetaModel& model_;
  AdapterSession session_;
};

class LstmAdapter final : public Adapter {
 public:
  explicit LstmAdapter(const LstmDynamicsModel& model);
  std::string method_name() const override { return "lstm"; }
  void reset() override;
  void observe(const Transition& tr) override;
  std::vector<double> predict(const std::vector<double>& s,
                              const std::vector<double>& a) override;
  std::vector<double> hidden_state() const override;
  double parameter_checksum() const override;

 private:
  const LstmDynamicsModel& model_;
  LstmCellState state_;
};

class MamlAdapter final : public Adapter {
 public:
  explicit MamlAdapter(const MamlModel& model);
  std::string method_name() const override;
  void reset() override;
  void observe(const Transition& tr) override;
  std::vector<double> predict(const std::vector<double>& s,
                              const std::vector<double>& a) override;
  double parameter_checksum() const override;

 private:
  void refresh_adapted();
  const MamlModel& model_;
  std::vector<Transition> support_;
  ParamSet adapted_;
  int adapted_at_ = -1;  // support size when `adapted_` was computed
};

// Test stub: predicts the true noiseless next state of the current task.
class OracleAdapter final : public Adapter {
 public:
  explicit OracleAdapter(const TaskFamily& family);
  std::string method_name() const override { return "oracle"; }
  void begin_task(const TaskInstance& task) override { task_ = task; }
  void reset() override {}
  void observe(const Transition& tr) override { (void)tr; }
  std::vector<double> predict(const std::vector<double>& s,
                              const std::vector<double>& a) override;
  double parameter_checksum() const override { return 0.0; }

 private:
  const TaskFamily& family_;
  TaskInstance task_;
};

}  // namespace adaptkf
