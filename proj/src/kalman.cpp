#include "adaptkf/kalman.hpp"

#include <cmath>

#include "adaptkf/errors.hpp"
#include "adaptkf/rng.hpp"

namespace adaptkf {

FilterParams::FilterParams(int d_z, int d_phi, double eps_q, uint64_t seed)
    : d_z_(d_z), d_phi_(d_phi), eps_q_(eps_q) {
  if (d_z < 1 || d_phi < 1) throw ConfigError("filter dims must be >= 1");
  if (eps_q < 0.0) throw ConfigError("eps_q must be >= 0");
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_phi));
  c_z = Tensor(d_z, d_phi, true);
  for (double& v : c_z.value()) v = rng.uniform(-bound, bound);
  init_mean = Tensor(1, d_phi, true);
  init_log_var = Tensor(1, d_phi, true);  // zeros: initial covariance = I
}

ParamSet FilterParams::params() const {
  ParamSet p;
  p["C_z"] = c_z;
  p["init_mean"] = init_mean;
  p["init_log_var"] = init_log_var;
  return p;
}

void FilterParams::load(const ParamSet& params) {
  auto pick = [&](const char* name, Tensor& dst) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError(std::string("filter load: missing '") + name + "'");
    if (!it->second.same_shape(dst)) {
      throw ConfigError(std::string("filter load: '") + name + "' has shape " +
                        it->second.shape_str() + ", expected " + dst.shape_str());
    }
    dst.value() = it->second.value();
  };
  pick("C_z", c_z);
  pick("init_mean", init_mean);
  pick("init_log_var", init_log_var);
}

namespace {

Tensor symmetrize(Tape& tape, const Tensor& m) {
  return tape.scale(tape.add(m, tape.transpose(m)), 0.5);
}

}  // namespace

GaussianBelief initial_belief(Tape& tape, const FilterParams& fp) {
  Tensor cov = tape.diag_embed(tape.exp(fp.init_log_var));
  return GaussianBelief{fp.init_mean, cov};
}

GaussianBelief predict_step(Tape& tape, const GaussianBelief& belief,
                            const FilterParams& fp) {
  Tensor q = Tensor::identity(fp.d_phi());
  for (int i = 0; i < fp.d_phi(); ++i) q.at(i, i) = fp.eps_q();
  Tensor cov = symmetrize(tape, tape.add(belief.cov, q));
  return GaussianBelief{belief.mean, cov};
}

GaussianBelief update_step(Tape& tape, const GaussianBelief& belief,
                           const Measurement& meas, const FilterParams& fp) {
  if (meas.mean.cols() != fp.d_z() || meas.var_diag.cols() != fp.d_z()) {
    throw DimensionError("update_step: measurement width " + meas.mean.shape_str() +
                         " does not match d_z=" + std::to_string(fp.d_z()));
  }
  const Tensor& c = fp.c_z;
  Tensor c_t = tape.transpose(c);
  Tensor cov_ct = tape.matmul(belief.cov, c_t);              // d_phi x d_z
  Tensor innov_cov = tape.add(tape.matmul(c, cov_ct),
                              tape.diag_embed(meas.var_diag));  // d_z x d_z
  Tensor innov_cov_inv = tape.mat_inverse(innov_cov);
  Tensor gain = tape.matmul(cov_ct, innov_cov_inv);          // d_phi x d_z

  Tensor predicted = tape.matmul(belief.mean, c_t);          // 1 x d_z
  Tensor innovation = tape.sub(meas.mean, predicted);
  Tensor mean = tape.add(belief.mean, tape.matmul(innovation, tape.transpose(gain)));

  Tensor kc = tape.matmul(gain, c);                          // d_phi x d_phi
  Tensor i_kc = tape.sub(Tensor::identity(fp.d_phi()), kc);
  Tensor cov = symmetrize(tape, tape.matmul(i_kc, belief.cov));
  return GaussianBelief{mean, cov};
}

std::vector<GaussianBelief> filter_sequence(Tape& tape, const FilterParams& fp,
                                            const std::vector<Measurement>& measurements) {
  std::vector<GaussianBelief> out;
  out.reserve(measurements.size());
  GaussianBelief belief = initial_belief(tape, fp);
  for (const Measurement& m : measurements) {
    belief = predict_step(tape, belief, fp);
    belief = update_step(tape, belief, m, fp);
    out.push_back(belief);
  }
  return out;
}

}  // namespace adaptkf
