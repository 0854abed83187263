#pragma once

#include <cstdint>
#include <vector>

#include "adaptkf/nn.hpp"
#include "adaptkf/tensor.hpp"

namespace adaptkf {

// Gaussian belief over the latent dynamics vector. mean is 1 x d_phi, cov is
// d_phi x d_phi, kept symmetric by construction after every filter step.
struct GaussianBelief {
  Tensor mean;
  Tensor cov;
};

// Heteroskedastic Gaussian measurement of the latent code: mean 1 x d_z and
// per-dimension variances (diagonal covariance), floored strictly positive.
struct Measurement {
  Tensor mean;
  Tensor var_diag;
};

// Learned filter parameters. The transition matrix is the identity and the
// control term is zero (stationary dynamics); the process noise Q = eps_q*I
// is a fixed constant that keeps the belief covariance bounded away from
// zero. C_z and the initial belief (mean + diagonal log-variances) are
// trained by backprop together with the networks around the filter.
class FilterParams {
 public:
  FilterParams(int d_z, int d_phi, double eps_q, uint64_t seed);

  int d_z() const { return d_z_; }
  int d_phi() const { return d_phi_; }
  double eps_q() const { return eps_q_; }

  Tensor c_z;           // d_z x d_phi, requires_grad
  Tensor init_mean;     // 1 x d_phi, requires_grad
  Tensor init_log_var;  // 1 x d_phi, requires_grad

  // Aliased handles for the optimizer / checkpointing.
  ParamSet params() const;
  void load(const ParamSet& params);

 private:
  int d_z_, d_phi_;
  double eps_q_;
};

// Belief at t=0: learned mean, diagonal covariance exp(init_log_var).
GaussianBelief initial_belief(Tape& tape, const FilterParams& fp);

// Time update: mean unchanged (A=I, B=0), cov <- cov + eps_q*I, symmetrized.
GaussianBelief predict_step(Tape& tape, const GaussianBelief& belief,
                            const FilterParams& fp);

// Measurement update:
//   K = cov C^T (C cov C^T + diag(var))^-1
//   mean <- mean + (z - mean C^T) K^T        (row-vector layout)
//   cov  <- (I - K C) cov, then (cov + cov^T)/2
GaussianBelief update_step(Tape& tape, const GaussianBelief& belief,
                           const Measurement& meas, const FilterParams& fp);

// Runs predict/update per measurement starting from the learned initial
// belief; returns the post-update belief after each measurement.
std::vector<GaussianBelief> filter_sequence(Tape& tape, const FilterParams& fp,
                                            const std::vector<Measurement>& measurements);

}  // namespace adaptkf
