#include "adaptkf/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "adaptkf/errors.hpp"
#include "adaptkf/rng.hpp"

namespace adaptkf {

std::vector<std::vector<double>> Adapter::sample_predictions(const std::vector<double>&,
                                                             const std::vector<double>&,
                                                             int, uint64_t) {
  throw CapabilityError("adapter '" + method_name() + "' does not expose belief sampling");
}

// ---------------------------------------------------------------------------
// LSTM baseline
// ---------------------------------------------------------------------------

LstmDynamicsModel::LstmDynamicsModel(Dims dims, uint64_t seed, int lstm_hidden,
                                     int pred_hidden, int pred_layers)
    : dims_(dims), cell_cfg_{2 * dims.d_s + dims.d_a, lstm_hidden} {
  if (lstm_hidden < 1) throw ConfigError("lstm hidden size must be >= 1");
  cell_params_ = init_lstm_params(cell_cfg_, derive_seed(seed, 11));
  Rng rng(derive_seed(seed, 12));
  const double bound = 1.0 / std::sqrt(static_cast<double>(lstm_hidden));
  Tensor w(lstm_hidden, dims.d_phi, true);
  for (double& v : w.value()) v = rng.uniform(-bound, bound);
  readout_params_["readout.weight"] = w;
  readout_params_["readout.bias"] = Tensor(1, dims.d_phi, true);
  std::vector<int> sizes;
  sizes.push_back(dims.d_s + dims.d_a + dims.d_phi);
  for (int i = 0; i < pred_layers; ++i) sizes.push_back(pred_hidden);
  sizes.push_back(dims.d_s);
  pred_cfg_ = MlpConfig(sizes);
  pred_params_ = init_params(pred_cfg_, derive_seed(seed, 13));
}

ParamSet LstmDynamicsModel::all_params() const {
  ParamSet flat;
  merge_params(flat, "cell", cell_params_);
  merge_params(flat, "readout", readout_params_);
  merge_params(flat, "prediction", pred_params_);
  return flat;
}

void LstmDynamicsModel::load_params(const ParamSet& flat) {
  ParamSet own = all_params();
  if (flat.size() != own.size()) {
    throw ConfigError("lstm load_params: tensor count mismatch");
  }
  for (auto& [name, dst] : own) {
    auto it = flat.find(name);
    if (it == flat.end()) throw ConfigError("lstm load_params: missing '" + name + "'");
    if (!it->second.same_shape(dst)) {
      throw ConfigError("lstm load_params: shape mismatch for '" + name + "'");
    }
    dst.value() = it->second.value();
  }
}

LstmCellState lstm_adapt_step(Tape& tape, const LstmDynamicsModel& model,
                              const LstmCellState& state, const Tensor& s, const Tensor& a,
                              const Tensor& s_next_noisy) {
  const Dims& d = model.dims();
  if (s.cols() != d.d_s || a.cols() != d.d_a || s_next_noisy.cols() != d.d_s) {
    throw ConfigError("lstm_adapt_step: input widths (" + s.shape_str() + ", " +
                      a.shape_str() + ", " + s_next_noisy.shape_str() +
                      ") do not match dims");
  }
  Tensor input = tape.concat_cols({s, a, s_next_noisy});
  auto [next, h] = lstm_step(tape, model.cell_cfg(), model.cell_params(), state, input);
  return next;
}

Tensor lstm_phi(Tape& tape, const LstmDynamicsModel& model, const LstmCellState& state) {
  const Tensor& w = model.readout_params().at("readout.weight");
  const Tensor& b = model.readout_params().at("readout.bias");
  return tape.add(tape.matmul(state.h, w), b);
}

Tensor lstm_predict(Tape& tape, const LstmDynamicsModel& model, const Tensor& s,
                    const Tensor& a, const Tensor& phi) {
  Tensor input = tape.concat_cols({s, a, phi});
  return mlp_forward(tape, model.prediction_cfg(), model.prediction_params(), input);
}

std::vector<TrainLogRow> lstm_meta_train(LstmDynamicsModel& model, const TaskFamily& family,
                                         const TrainConfig& cfg) {
  if (cfg.sequence_length < 1) throw ConfigError("sequence_length must be >= 1");
  Rng rng(cfg.seed);
  ParamSet params = model.all_params();
  AdamState adam(cfg.learning_rate);
  std::vector<TrainLogRow> log;
  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < cfg.outer_steps; ++step) {
    TaskInstance task = family.sample_task(rng);
    Tape tape;
    LstmCellState state = model.zero_state();
    Tensor sq_err_sum = Tensor::scalar(0.0);
    for (int i = 0; i < cfg.sequence_length; ++i) {
      Transition tr = family.sample_transition(task, rng);
      Tensor s = Tensor::row(tr.s);
      Tensor a = Tensor::row(tr.a);
      // Predict from the state BEFORE this transition is consumed (the
      // delayed-label convention of blackbox meta-learning). Letting the
      // step-i prediction see the step-i observation collapses an
      // unconstrained recurrent model onto passing the noisy target through,
      // which minimizes the training loss without learning the task.
      Tensor phi = lstm_phi(tape, model, state);
      Tensor pred = lstm_predict(tape, model, s, a, phi);
      Tensor target = Tensor::row(tr.s_next);
      sq_err_sum = tape.add(sq_err_sum, tape.sum(tape.square(tape.sub(pred, target))));
      state = lstm_adapt_step(tape, model, state, s, a, Tensor::row(tr.s_next_noisy));
    }
    Tensor loss = tape.scale(sq_err_sum, 1.0 / static_cast<double>(cfg.sequence_length));
    const double loss_v = loss.item();
    if (!std::isfinite(loss_v)) {
      std::ostringstream diag;
      diag << "lstm_meta_train: non-finite loss at step " << step << ", task id "
           << task.task_id;
      throw NumericalError(diag.str());
    }
    tape.backward(loss);
    clip_global_norm(params, cfg.clip_norm);
    adam.update(params);
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    log.push_back(TrainLogRow{step, loss_v, task.task_id, ms});
  }
  return log;
}

// ---------------------------------------------------------------------------
// MAML baseline
// ---------------------------------------------------------------------------

MamlModel::MamlModel(Dims dims, uint64_t seed, int inner_batch, int inner_steps,
                     int hidden, int hidden_layers, double alpha_init)
    : dims_(dims), inner_batch_(inner_batch), inner_steps_(inner_steps) {
  if (inner_batch < 1) throw ConfigError("maml inner batch must be >= 1");
  if (inner_steps < 1 || inner_steps > 3) throw ConfigError("maml inner steps must be in {1,2,3}");
  if (alpha_init <= 0.0) throw ConfigError("maml alpha_init must be > 0");
  std::vector<int> sizes;
  sizes.push_back(dims.d_s + dims.d_a);
  for (int i = 0; i < hidden_layers; ++i) sizes.push_back(hidden);
  sizes.push_back(dims.d_s);
  net_cfg_ = MlpConfig(sizes);
  net_params_ = init_params(net_cfg_, derive_seed(seed, 21));
  alpha_raw_ = Tensor(1, 1, true);
  // softplus(alpha_raw) == alpha_init
  alpha_raw_.at(0, 0) = std::log(std::expm1(alpha_init));
}

double MamlModel::alpha() const {
  const double x = alpha_raw_(0, 0);
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

ParamSet MamlModel::all_params() const {
  ParamSet flat;
  merge_params(flat, "net", net_params_);
  flat["alpha_raw"] = alpha_raw_;
  return flat;
}

void MamlModel::load_params(const ParamSet& flat) {
  ParamSet own = all_params();
  if (flat.size() != own.size()) throw ConfigError("maml load_params: tensor count mismatch");
  for (auto& [name, dst] : own) {
    auto it = flat.find(name);
    if (it == flat.end()) throw ConfigError("maml load_params: missing '" + name + "'");
    if (!it->second.same_shape(dst)) {
      throw ConfigError("maml load_params: shape mismatch for '" + name + "'");
    }
    dst.value() = it->second.value();
  }
}

namespace {

// MSE of the dynamics net on a batch against the given targets; returns the
// loss tensor on the caller's tape.
Tensor maml_batch_loss(Tape& tape, const MlpConfig& cfg, const ParamSet& params,
                       const std::vector<const Transition*>& batch, bool noisy_targets) {
  Tensor sq_sum = Tensor::scalar(0.0);
  for (const Transition* tr : batch) {
    Tensor input = tape.concat_cols({Tensor::row(tr->s), Tensor::row(tr->a)});
    Tensor pred = mlp_forward(tape, cfg, params, input);
    Tensor target = Tensor::row(noisy_targets ? tr->s_next_noisy : tr->s_next);
    sq_sum = tape.add(sq_sum, tape.sum(tape.square(tape.sub(pred, target))));
  }
  return tape.scale(sq_sum, 1.0 / static_cast<double>(batch.size()));
}

// Value-level inner adaptation shared by maml_adapt and the outer loop.
// Returns the adapted parameter values and, per original parameter name, the
// summed inner gradients (the first-order path from alpha to the query loss).
struct InnerResult {
  ParamSet adapted;                        // fresh leaves, requires_grad=false
  std::map<std::string, std::vector<double>> grad_sum;
  int steps_taken = 0;
};

InnerResult inner_adapt_values(const MamlModel& model,
                               const std::vector<Transition>& support) {
  const int k = model.inner_batch();
  if (static_cast<int>(support.size()) < k) {
    throw InsufficientDataError("maml_adapt: need at least " + std::to_string(k) +
                                " support transitions, got " +
                                std::to_string(support.size()));
  }
  const double alpha = model.alpha();
  InnerResult res;
  for (const auto& [name, p] : model.net_params()) {
    Tensor copy = p.detached();
    res.adapted[name] = copy;
    res.grad_sum[name].assign(p.value().size(), 0.0);
  }
  const int max_steps =
      std::min(model.inner_steps(), static_cast<int>(support.size()) / k);
  for (int step = 0; step < max_steps; ++step) {
    std::vector<const Transition*> batch;
    for (int i = 0; i < k; ++i) batch.push_back(&support[static_cast<size_t>(step * k + i)]);
    // Scratch tape: gradients of the batch MSE w.r.t. the current adapted
    // values, treated as constants downstream (first-order approximation).
    Tape tape;
    ParamSet leaves;
    for (auto& [name, p] : res.adapted) {
      p.set_requires_grad(true);
      leaves[name] = p;
    }
    Tensor loss = maml_batch_loss(tape, model.net_cfg(), leaves, batch, /*noisy=*/true);
    tape.backward(loss);
    ParamSet next;
    for (auto& [name, p] : res.adapted) {
      const std::vector<double>& g = p.grad();
      std::vector<double>& acc = res.grad_sum[name];
      Tensor updated(p.rows(), p.cols());
      for (size_t i = 0; i < g.size(); ++i) {
        acc[i] += g[i];
        updated.value()[i] = p.value()[i] - alpha * g[i];
      }
      next[name] = updated;
    }
    res.adapted = std::move(next);
    ++res.steps_taken;
  }
  for (auto& [name, p] : res.adapted) p.set_requires_grad(false);
  return res;
}

}  // namespace

ParamSet maml_adapt(const MamlModel& model, const std::vector<Transition>& support) {
  return inner_adapt_values(model, support).adapted;
}

std::vector<TrainLogRow> maml_meta_train(MamlModel& model, const TaskFamily& family,
                                         const TrainConfig& cfg) {
  Rng rng(cfg.seed);
  ParamSet params = model.all_params();
  AdamState adam(cfg.learning_rate);
  std::vector<TrainLogRow> log;
  const int support_size = model.inner_batch() * model.inner_steps();
  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < cfg.outer_steps; ++step) {
    TaskInstance task = family.sample_task(rng);
    std::vector<Transition> support;
    for (int i = 0; i < support_size; ++i) {
      support.push_back(family.sample_transition(task, rng));
    }
    std::vector<Transition> query;
    for (int i = 0; i < cfg.maml_query_size; ++i) {
      query.push_back(family.sample_transition(task, rng));
    }
    InnerResult inner = inner_adapt_values(model, support);

    // Outer tape: adapted = base - softplus(alpha_raw) * grad_sum, with
    // grad_sum constant. Query loss gradients reach the base net and alpha.
    Tape tape;
    Tensor alpha = tape.softplus(model.alpha_raw());
    ParamSet adapted;
    for (const auto& [name, base] : model.net_params()) {
      Tensor g_const(base.rows(), base.cols());
      g_const.value() = inner.grad_sum.at(name);
      adapted[name] = tape.sub(base, tape.mul(g_const, alpha));
    }
    std::vector<const Transition*> query_ptrs;
    for (const Transition& tr : query) query_ptrs.push_back(&tr);
    Tensor loss =
        maml_batch_loss(tape, model.net_cfg(), adapted, query_ptrs, /*noisy=*/false);
    const double loss_v = loss.item();
    if (!std::isfinite(loss_v)) {
      std::ostringstream diag;
      diag << "maml_meta_train: non-finite loss at step " << step << ", task id "
           << task.task_id;
      throw NumericalError(diag.str());
    }
    tape.backward(loss);
    clip_global_norm(params, cfg.clip_norm);
    adam.update(params);
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    log.push_back(TrainLogRow{step, loss_v, task.task_id, ms});
  }
  return log;
}

// ---------------------------------------------------------------------------
// Adapters
// ---------------------------------------------------------------------------

KalmanFilterAdapter::KalmanFilterAdapter(const MetaModel& model)
    : model_(model), session_(model) {}

void KalmanFilterAdapter::reset() { session_.reset(); }

void KalmanFilterAdapter::observe(const Transition& tr) {
  session_.observe(tr.s, tr.a, tr.s_next_noisy);
}

std::vector<double> KalmanFilterAdapter::predict(const std::vector<double>& s,
                                                 const std::vector<double>& a) {
  return session_.predict(s, a);
}

std::vector<double> KalmanFilterAdapter::hidden_state() const {
  return session_.belief().mean.value();
}

std::vector<std::vector<double>> KalmanFilterAdapter::sample_predictions(
    const std::vector<double>& s, const std::vector<double>& a, int n_samples,
    uint64_t seed) {
  return predict_with_uncertainty(model_, s, a, session_.belief(), n_samples, seed);
}

double KalmanFilterAdapter::parameter_checksum() const {
  ParamSet flat = model_.all_params();
  return param_checksum(flat);
}

LstmAdapter::LstmAdapter(const LstmDynamicsModel& model)
    : model_(model), state_(model.zero_state()) {}

void LstmAdapter::reset() { state_ = model_.zero_state(); }

void LstmAdapter::observe(const Transition& tr) {
  Tape tape(false);
  state_ = lstm_adapt_step(tape, model_, state_, Tensor::row(tr.s), Tensor::row(tr.a),
                           Tensor::row(tr.s_next_noisy));
  state_ = LstmCellState{state_.h.detached(), state_.c.detached()};
}

std::vector<double> LstmAdapter::predict(const std::vector<double>& s,
                                         const std::vector<double>& a) {
  Tape tape(false);
  Tensor phi = lstm_phi(tape, model_, state_);
  return lstm_predict(tape, model_, Tensor::row(s), Tensor::row(a), phi).value();
}

std::vector<double> LstmAdapter::hidden_state() const {
  Tape tape(false);
  return lstm_phi(tape, model_, state_).value();
}

double LstmAdapter::parameter_checksum() const {
  ParamSet flat = model_.all_params();
  return param_checksum(flat);
}

MamlAdapter::MamlAdapter(const MamlModel& model) : model_(model) { reset(); }

std::string MamlAdapter::method_name() const {
  return "maml-" + std::to_string(model_.inner_batch());
}

void MamlAdapter::reset() {
  support_.clear();
  adapted_.clear();
  adapted_at_ = -1;
}

void MamlAdapter::observe(const Transition& tr) { support_.push_back(tr); }

void MamlAdapter::refresh_adapted() {
  if (adapted_at_ == static_cast<int>(support_.size())) return;
  if (static_cast<int>(support_.size()) < model_.inner_batch()) {
    adapted_.clear();
  } else {
    adapted_ = maml_adapt(model_, support_);
  }
  adapted_at_ = static_cast<int>(support_.size());
}

std::vector<double> MamlAdapter::predict(const std::vector<double>& s,
                                         const std::vector<double>& a) {
  refresh_adapted();
  const ParamSet& params = adapted_.empty() ? model_.net_params() : adapted_;
  Tape tape(false);
  Tensor input = tape.concat_cols({Tensor::row(s), Tensor::row(a)});
  return mlp_forward(tape, model_.net_cfg(), params, input).value();
}

double MamlAdapter::parameter_checksum() const {
  ParamSet flat = model_.all_params();
  return param_checksum(flat);
}

OracleAdapter::OracleAdapter(const TaskFamily& family) : family_(family) {}

std::vector<double> OracleAdapter::predict(const std::vector<double>& s,
                                           const std::vector<double>& a) {
  if (task_.dynamics.empty()) {
    throw ContractError("oracle adapter: begin_task was never called");
  }
  return family_.true_next(task_, s, a);
}

}  // namespace adaptkf
