#include "adaptkf/nn.hpp"

#include <cmath>

#include "adaptkf/errors.hpp"
#include "adaptkf/rng.hpp"

namespace adaptkf {

MlpConfig::MlpConfig(std::vector<int> sizes) : layer_sizes(std::move(sizes)) {
  if (layer_sizes.size() < 2) {
    throw ConfigError("mlp config: need at least input and output sizes");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw ConfigError("mlp config: layer size must be >= 1");
  }
}

ParamSet init_params(const MlpConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  ParamSet params;
  for (int i = 0; i < cfg.num_layers(); ++i) {
    const int fan_in = cfg.layer_sizes[i];
    const int fan_out = cfg.layer_sizes[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w(fan_in, fan_out, true);
    for (double& v : w.value()) v = rng.uniform(-bound, bound);
    Tensor b(1, fan_out, true);
    params["layer" + std::to_string(i) + ".weight"] = w;
    params["layer" + std::to_string(i) + ".bias"] = b;
  }
  return params;
}

namespace {

const Tensor& require_param(const ParamSet& params, const std::string& name,
                            int rows, int cols) {
  auto it = params.find(name);
  if (it == params.end()) {
    throw ConfigError("missing parameter '" + name + "'");
  }
  const Tensor& t = it->second;
  if (t.rows() != rows || t.cols() != cols) {
    throw ConfigError("parameter '" + name + "' has shape " + t.shape_str() +
                      ", expected [" + std::to_string(rows) + "x" +
                      std::to_string(cols) + "]");
  }
  return t;
}

}  // namespace

Tensor mlp_forward(Tape& tape, const MlpConfig& cfg, const ParamSet& params,
                   const Tensor& input) {
  if (input.rows() != 1 || input.cols() != cfg.input_size()) {
    throw ConfigError("mlp_forward: input shape " + input.shape_str() +
                      " does not match configured input size " +
                      std::to_string(cfg.input_size()));
  }
  Tensor x = input;
  for (int i = 0; i < cfg.num_layers(); ++i) {
    const std::string base = "layer" + std::to_string(i);
    const Tensor& w =
        require_param(params, base + ".weight", cfg.layer_sizes[i], cfg.layer_sizes[i + 1]);
    const Tensor& b = require_param(params, base + ".bias", 1, cfg.layer_sizes[i + 1]);
    x = tape.add(tape.matmul(x, w), b);
    if (i + 1 < cfg.num_layers()) x = tape.tanh(x);
  }
  return x;
}

LstmCellState lstm_zero_state(const LstmConfig& cfg) {
  return LstmCellState{Tensor::zeros(1, cfg.hidden_size), Tensor::zeros(1, cfg.hidden_size)};
}

ParamSet init_lstm_params(const LstmConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  const int rows = cfg.input_size + cfg.hidden_size;
  const int cols = 4 * cfg.hidden_size;
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Tensor w(rows, cols, true);
  for (double& v : w.value()) v = rng.uniform(-bound, bound);
  Tensor b(1, cols, true);
  ParamSet params;
  params["lstm.weight"] = w;
  params["lstm.bias"] = b;
  return params;
}

std::pair<LstmCellState, Tensor> lstm_step(Tape& tape, const LstmConfig& cfg,
                                           const ParamSet& params,
                                           const LstmCellState& state,
                                           const Tensor& input) {
  if (input.rows() != 1 || input.cols() != cfg.input_size) {
    throw DimensionError("lstm_step: input shape " + input.shape_str() +
                         " does not match configured input size " +
                         std::to_string(cfg.input_size));
  }
  if (state.h.cols() != cfg.hidden_size || state.c.cols() != cfg.hidden_size) {
    throw DimensionError("lstm_step: state width " + state.h.shape_str() +
                         " does not match hidden size " + std::to_string(cfg.hidden_size));
  }
  const int H = cfg.hidden_size;
  const Tensor& w = require_param(params, "lstm.weight", cfg.input_size + H, 4 * H);
  const Tensor& b = require_param(params, "lstm.bias", 1, 4 * H);

  Tensor xh = tape.concat_cols({input, state.h});
  Tensor gates = tape.add(tape.matmul(xh, w), b);
  Tensor i_gate = tape.sigmoid(tape.slice_cols(gates, 0, H));
  Tensor f_gate = tape.sigmoid(tape.slice_cols(gates, H, H));
  Tensor g_cand = tape.tanh(tape.slice_cols(gates, 2 * H, H));
  Tensor o_gate = tape.sigmoid(tape.slice_cols(gates, 3 * H, H));

  Tensor c_next = tape.add(tape.mul(f_gate, state.c), tape.mul(i_gate, g_cand));
  Tensor h_next = tape.mul(o_gate, tape.tanh(c_next));
  return {LstmCellState{h_next, c_next}, h_next};
}

AdamState::AdamState(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamState::update(ParamSet& params) {
  for (auto& [name, p] : params) {
    if (!p.has_grad()) {
      throw ContractError("adam: parameter '" + name + "' has no gradient");
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (auto& [name, p] : params) {
    auto& [m, v] = moments_[name];
    if (m.empty()) {
      m.assign(p.value().size(), 0.0);
      v.assign(p.value().size(), 0.0);
    }
    const std::vector<double>& g = p.grad();
    std::vector<double>& val = p.value();
    for (size_t i = 0; i < val.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      val[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
    p.zero_grad();
  }
}

double global_grad_norm(const ParamSet& params) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void clip_global_norm(ParamSet& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  const double factor = max_norm / norm;
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    std::vector<double> scaled = p.grad();
    for (double& g : scaled) g *= factor;
    p.zero_grad();
    p.accumulate_grad(scaled);
  }
}

int param_count(const ParamSet& params) {
  int n = 0;
  for (const auto& [name, p] : params) n += p.size();
  return n;
}

double param_checksum(const ParamSet& params) {
  // Order-dependent mix so swapped values do not cancel.
  double acc = 0.0;
  size_t i = 1;
  for (const auto& [name, p] : params) {
    for (double v : p.value()) {
      acc += v * static_cast<double>(i % 8191 + 1);
      ++i;
    }
  }
  return acc;
}

void merge_params(ParamSet& dst, const std::string& prefix, const ParamSet& src) {
  for (const auto& [name, p] : src) {
    dst[prefix + "." + name] = p;
  }
}

}  // namespace adaptkf
