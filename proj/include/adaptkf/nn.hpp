#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "adaptkf/tensor.hpp"

namespace adaptkf {

// Feed-forward network shape: tanh hidden activations, identity output.
struct MlpConfig {
  std::vector<int> layer_sizes;  // [d_in, h1, ..., d_out]

  MlpConfig() = default;
  explicit MlpConfig(std::vector<int> sizes);
  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
};

// Named parameter map. std::map keeps iteration sorted by name, which the
// optimizer and checkpoint format rely on for determinism.
using ParamSet = std::map<std::string, Tensor>;

// Weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero. Layer i is
// stored as "layer<i>.weight" (d_in x d_out) and "layer<i>.bias" (1 x d_out).
ParamSet init_params(const MlpConfig& cfg, uint64_t seed);

Tensor mlp_forward(Tape& tape, const MlpConfig& cfg, const ParamSet& params,
                   const Tensor& input);

struct LstmConfig {
  int input_size = 0;
  int hidden_size = 0;
};

struct LstmCellState {
  Tensor h;  // 1 x hidden
  Tensor c;  // 1 x hidden
};

LstmCellState lstm_zero_state(const LstmConfig& cfg);

// Single combined kernel: "lstm.weight" ((d_in + d_h) x 4H), "lstm.bias"
// (1 x 4H), gate order [input, forget, candidate, output].
ParamSet init_lstm_params(const LstmConfig& cfg, uint64_t seed);

std::pair<LstmCellState, Tensor> lstm_step(Tape& tape, const LstmConfig& cfg,
                                           const ParamSet& params,
                                           const LstmCellState& state,
                                           const Tensor& input);

// Adam with bias correction. update() consumes and zeroes the gradients.
class AdamState {
 public:
  explicit AdamState(double learning_rate = 1e-3, double beta1 = 0.9,
                     double beta2 = 0.999, double eps = 1e-8);

  void update(ParamSet& params);
  int64_t step_count() const { return step_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t step_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

double global_grad_norm(const ParamSet& params);
void clip_global_norm(ParamSet& params, double max_norm);

int param_count(const ParamSet& params);
double param_checksum(const ParamSet& params);

// Merge `src` into `dst` under `prefix.`; the Tensor handles alias the same
// storage, so optimizer updates through the merged set mutate the source.
void merge_params(ParamSet& dst, const std::string& prefix, const ParamSet& src);

}  // namespace adaptkf
