#include "adaptkf/meta_model.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "adaptkf/errors.hpp"
#include "adaptkf/rng.hpp"

namespace adaptkf {

namespace {

std::vector<int> mlp_sizes(int d_in, int hidden, int layers, int d_out) {
  std::vector<int> sizes;
  sizes.push_back(d_in);
  for (int i = 0; i < layers; ++i) sizes.push_back(hidden);
  sizes.push_back(d_out);
  return sizes;
}

}  // namespace

Tensor row_tensor(const std::vector<double>& v) { return Tensor::row(v); }

MetaModel::MetaModel(Dims dims, uint64_t seed, int hidden_size, int hidden_layers,
                     double eps_q)
    : dims_(dims),
      hidden_size_(hidden_size),
      hidden_layers_(hidden_layers),
      meas_cfg_(mlp_sizes(2 * dims.d_s + dims.d_a, hidden_size, hidden_layers, 2 * dims.d_z)),
      pred_cfg_(mlp_sizes(dims.d_s + dims.d_a + dims.d_phi, hidden_size, hidden_layers,
                          dims.d_s)),
      meas_params_(init_params(meas_cfg_, derive_seed(seed, 1))),
      pred_params_(init_params(pred_cfg_, derive_seed(seed, 2))),
      filter_(dims.d_z, dims.d_phi, eps_q, derive_seed(seed, 3)) {
  if (dims.d_s < 1 || dims.d_a < 0 || dims.d_z < 1 || dims.d_phi < 1) {
    throw ConfigError("meta model dims invalid");
  }
}

ParamSet MetaModel::all_params() const {
  ParamSet flat;
  merge_params(flat, "measurement", meas_params_);
  merge_params(flat, "prediction", pred_params_);
  merge_params(flat, "filter", filter_.params());
  return flat;
}

void MetaModel::load_params(const ParamSet& flat) {
  ParamSet own = all_params();
  if (flat.size() != own.size()) {
    throw ConfigError("load_params: expected " + std::to_string(own.size()) +
                      " tensors, got " + std::to_string(flat.size()));
  }
  for (auto& [name, dst] : own) {
    auto it = flat.find(name);
    if (it == flat.end()) throw ConfigError("load_params: missing tensor '" + name + "'");
    if (!it->second.same_shape(dst)) {
      throw ConfigError("load_params: tensor '" + name + "' has shape " +
                        it->second.shape_str() + ", expected " + dst.shape_str());
    }
    dst.value() = it->second.value();
  }
}

Measurement measure(Tape& tape, const MetaModel& model, const Tensor& s, const Tensor& a,
                    const Tensor& s_next_noisy) {
  const Dims& d = model.dims();
  if (s.cols() != d.d_s || a.cols() != d.d_a || s_next_noisy.cols() != d.d_s) {
    throw ConfigError("measure: input widths (" + s.shape_str() + ", " + a.shape_str() +
                      ", " + s_next_noisy.shape_str() + ") do not match dims");
  }
  Tensor input = tape.concat_cols({s, a, s_next_noisy});
  Tensor out = mlp_forward(tape, model.measurement_cfg(), model.measurement_params(), input);
  Tensor mean = tape.slice_cols(out, 0, d.d_z);
  Tensor raw_var = tape.slice_cols(out, d.d_z, d.d_z);
  Tensor var = tape.add_scalar(tape.softplus(raw_var), 1e-6);
  return Measurement{mean, var};
}

Tensor predict_next(Tape& tape, const MetaModel& model, const Tensor& s, const Tensor& a,
                    const GaussianBelief& belief) {
  const Dims& d = model.dims();
  if (s.cols() != d.d_s || a.cols() != d.d_a || belief.mean.cols() != d.d_phi) {
    throw ConfigError("predict_next: input widths (" + s.shape_str() + ", " +
                      a.shape_str() + ", " + belief.mean.shape_str() +
                      ") do not match dims");
  }
  Tensor input = tape.concat_cols({s, a, belief.mean});
  return mlp_forward(tape, model.prediction_cfg(), model.prediction_params(), input);
}

std::vector<std::vector<double>> predict_with_uncertainty(
    const MetaModel& model, const std::vector<double>& s, const std::vector<double>& a,
    const GaussianBelief& belief, int n_samples, uint64_t seed) {
  if (n_samples < 1) throw ConfigError("predict_with_uncertainty: n_samples must be >= 1");
  const int d_phi = model.dims().d_phi;
  std::vector<double> cov = belief.cov.value();
  for (int i = 0; i < d_phi; ++i) cov[static_cast<size_t>(i) * d_phi + i] += 1e-9;
  std::vector<double> chol;
  double pivot = 0.0;
  if (!cholesky_factor(cov, d_phi, chol, &pivot)) {
    throw SingularMatrixError(
        "predict_with_uncertainty: belief covariance not PSD, smallest pivot " +
            std::to_string(pivot),
        pivot);
  }
  Rng rng(seed);
  Tape tape(false);
  Tensor s_row = Tensor::row(s);
  Tensor a_row = Tensor::row(a);
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<size_t>(n_samples));
  std::vector<double> eps(d_phi);
  for (int k = 0; k < n_samples; ++k) {
    for (double& e : eps) e = rng.normal();
    Tensor phi(1, d_phi);
    for (int i = 0; i < d_phi; ++i) {
      double v = belief.mean(0, i);
      for (int j = 0; j <= i; ++j) v += chol[static_cast<size_t>(i) * d_phi + j] * eps[j];
      phi.at(0, i) = v;
    }
    GaussianBelief sample{phi, belief.cov};
    out.push_back(predict_next(tape, model, s_row, a_row, sample).value());
  }
  return out;
}

SequenceResult run_sequence(Tape& tape, const MetaModel& model,
                            const std::vector<Transition>& transitions) {
  if (transitions.empty()) {
    throw ContractError("run_sequence: transition list is empty");
  }
  SequenceResult result;
  GaussianBelief belief = initial_belief(tape, model.filter());
  Tensor sq_err_sum = Tensor::scalar(0.0);
  for (const Transition& tr : transitions) {
    Tensor s = Tensor::row(tr.s);
    Tensor a = Tensor::row(tr.a);
    Tensor s_next_noisy = Tensor::row(tr.s_next_noisy);
    belief = predict_step(tape, belief, model.filter());
    Measurement m = measure(tape, model, s, a, s_next_noisy);
    belief = update_step(tape, belief, m, model.filter());
    Tensor pred = predict_next(tape, model, s, a, belief);
    Tensor target = Tensor::row(tr.s_next);
    sq_err_sum = tape.add(sq_err_sum, tape.sum(tape.square(tape.sub(pred, target))));
    result.predictions.push_back(pred);
    result.beliefs.push_back(belief);
  }
  result.loss = tape.scale(sq_err_sum, 1.0 / static_cast<double>(transitions.size()));
  return result;
}

std::vector<TrainLogRow> meta_train(MetaModel& model, const TaskFamily& family,
                                    const TrainConfig& cfg) {
  if (cfg.sequence_length < 1) throw ConfigError("sequence_length must be >= 1");
  if (cfg.outer_steps < 0) throw ConfigError("outer_steps must be >= 0");
  Rng rng(cfg.seed);
  ParamSet params = model.all_params();
  AdamState adam(cfg.learning_rate);
  std::vector<TrainLogRow> log;
  log.reserve(static_cast<size_t>(cfg.outer_steps));
  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < cfg.outer_steps; ++step) {
    TaskInstance task = family.sample_task(rng);
    std::vector<Transition> seq;
    seq.reserve(static_cast<size_t>(cfg.sequence_length));
    for (int i = 0; i < cfg.sequence_length; ++i) {
      seq.push_back(family.sample_transition(task, rng));
    }
    Tape tape;
    SequenceResult result = run_sequence(tape, model, seq);
    const double loss = result.loss.item();
    if (!std::isfinite(loss)) {
      std::ostringstream diag;
      diag << "meta_train: non-finite loss at step " << step << ", task dynamics (";
      for (size_t i = 0; i < task.dynamics.size(); ++i) {
        diag << (i ? ", " : "") << task.dynamics[i];
      }
      diag << "), task id " << task.task_id;
      throw NumericalError(diag.str());
    }
    tape.backward(result.loss);
    clip_global_norm(params, cfg.clip_norm);
    adam.update(params);
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    log.push_back(TrainLogRow{step, loss, task.task_id, ms});
  }
  return log;
}

AdapterSession::AdapterSession(const MetaModel& model) : model_(model) { reset(); }

void AdapterSession::reset() {
  Tape tape(false);
  GaussianBelief init = initial_belief(tape, model_.filter());
  belief_ = GaussianBelief{init.mean.detached(), init.cov.detached()};
  observations_seen_ = 0;
}

void AdapterSession::observe(const std::vector<double>& s, const std::vector<double>& a,
                             const std::vector<double>& s_next_noisy) {
  Tape tape(false);
  GaussianBelief b = predict_step(tape, belief_, model_.filter());
  Measurement m = measure(tape, model_, Tensor::row(s), Tensor::row(a),
                          Tensor::row(s_next_noisy));
  b = update_step(tape, b, m, model_.filter());
  belief_ = GaussianBelief{b.mean.detached(), b.cov.detached()};
  ++observations_seen_;
}

std::vector<double> AdapterSession::predict(const std::vector<double>& s,
                                            const std::vector<double>& a) const {
  Tape tape(false);
  return predict_next(tape, model_, Tensor::row(s), Tensor::row(a), belief_).value();
}

}  // namespace adaptkf
