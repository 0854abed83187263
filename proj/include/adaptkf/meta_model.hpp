#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaptkf/kalman.hpp"
#include "adaptkf/nn.hpp"
#include "adaptkf/tasks.hpp"
#include "adaptkf/tensor.hpp"

namespace adaptkf {

struct Dims {
  int d_s = 0;
  int d_a = 0;
  int d_z = 16;
  int d_phi = 16;
};

struct TrainConfig {
  int sequence_length = 100;
  int outer_steps = 2000;
  uint64_t seed = 0;
  double sigma_s_max = 0.3;
  double learning_rate = 1e-3;
  double clip_norm = 10.0;
  int maml_query_size = 16;  // query batch for the MAML outer loss
};

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
  uint64_t task_id = 0;
  double wall_ms = 0.0;
};

// The full adaptation model: measurement network (transition -> latent
// measurement distribution), Kalman filter over the latent dynamics belief,
// and prediction network ((s, a, belief mean) -> next state).
class MetaModel {
 public:
  MetaModel(Dims dims, uint64_t seed, int hidden_size = 128, int hidden_layers = 3,
            double eps_q = 1e-4);

  const Dims& dims() const { return dims_; }
  const MlpConfig& measurement_cfg() const { return meas_cfg_; }
  const MlpConfig& prediction_cfg() const { return pred_cfg_; }
  ParamSet& measurement_params() { return meas_params_; }
  const ParamSet& measurement_params() const { return meas_params_; }
  ParamSet& prediction_params() { return pred_params_; }
  const ParamSet& prediction_params() const { return pred_params_; }
  FilterParams& filter() { return filter_; }
  const FilterParams& filter() const { return filter_; }
  int hidden_size() const { return hidden_size_; }
  int hidden_layers() const { return hidden_layers_; }

  // Aliased handles over all trainable tensors (measurement.*, prediction.*,
  // filter.*); mutating them through the returned set updates the model.
  ParamSet all_params() const;
  void load_params(const ParamSet& flat);

 private:
  Dims dims_;
  int hidden_size_, hidden_layers_;
  MlpConfig meas_cfg_, pred_cfg_;
  ParamSet meas_params_, pred_params_;
  FilterParams filter_;
};

// Latent measurement from one observed transition: the first d_z outputs are
// the mean, the rest pass through softplus + 1e-6 floor to give variances.
Measurement measure(Tape& tape, const MetaModel& model, const Tensor& s, const Tensor& a,
                    const Tensor& s_next_noisy);

// Mean-only prediction from the current belief (the covariance is not an
// input of the prediction network).
Tensor predict_next(Tape& tape, const MetaModel& model, const Tensor& s, const Tensor& a,
                    const GaussianBelief& belief);

// Draws n_samples latent vectors from the belief and maps each through the
// prediction network. Inference-only; deterministic given the seed.
std::vector<std::vector<double>> predict_with_uncertainty(
    const MetaModel& model, const std::vector<double>& s, const std::vector<double>& a,
    const GaussianBelief& belief, int n_samples, uint64_t seed);

struct SequenceResult {
  std::vector<Tensor> predictions;
  Tensor loss;  // 1x1 mean over steps of the squared error vs noiseless targets
  std::vector<GaussianBelief> beliefs;
};

// Unrolls predict_step -> measure -> update_step -> predict over the
// transition sequence, starting from the learned initial belief.
SequenceResult run_sequence(Tape& tape, const MetaModel& model,
                            const std::vector<Transition>& transitions);

// Outer training loop: sample task, sample sequence, run_sequence, backward,
// clip, Adam. Aborts with NumericalError on non-finite loss.
std::vector<TrainLogRow> meta_train(MetaModel& model, const TaskFamily& family,
                                    const TrainConfig& cfg);

// Online adaptation over a frozen model: feeds observed transitions through
// the measurement model and filter, never touching network parameters.
class AdapterSession {
 public:
  explicit AdapterSession(const MetaModel& model);

  void reset();
  void observe(const std::vector<double>& s, const std::vector<double>& a,
               const std::vector<double>& s_next_noisy);
  std::vector<double> predict(const std::vector<double>& s,
                              const std::vector<double>& a) const;
  const GaussianBelief& belief() const { return belief_; }
  int observations_seen() const { return observations_seen_; }
  const MetaModel& model() const { return model_; }

 private:
  const MetaModel& model_;
  GaussianBelief belief_;  // detached values
  int observations_seen_ = 0;
};

Tensor row_tensor(const std::vector<double>& v);

}  // namespace adaptkf
