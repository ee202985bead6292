#pragma once

#include <cstdint>
#include <exception>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "circspace/adapt_mcmc.hpp"
#include "circspace/circ_core.hpp"
#include "circspace/covkernel.hpp"
#include "circspace/gauss_core.hpp"
#include "circspace/model_types.hpp"
#include "circspace/priors.hpp"

namespace circspace {

struct WnPriors {
  WrappedNormalPrior alpha{kPi, 10.0};
  InverseGamma sigma2{3.0, 0.5};
  std::vector<UniformPrior> decay;  // rho, or (rho_sp, rho_t) for gneiting
  BetaPrior eta{1.0, 1.0};

  void validate(const CorrelationSpec& spec) const {
    alpha.validate();
    sigma2.validate();
    eta.validate();
    const std::size_t want = spec.temporal() ? 2 : 1;
    if (decay.size() != want)
      throw std::invalid_argument("expected " + std::to_string(want) + " uniform decay prior(s) for the " +
                                  std::string(family_name(spec.family())) + " family");
    for (const auto& d : decay) d.validate();
  }
};

/// Covariance block shared by the samplers: sigma2 first, then any extra
/// leading entries, then the correlation parameters.
[[nodiscard]] inline std::vector<BlockParam> correlation_block(const CorrelationSpec& spec,
                                                               const std::vector<UniformPrior>& decay,
                                                               const BetaPrior& eta) {
  std::vector<BlockParam> out;
  std::size_t d = 0;
  for (const auto& name : spec.sampled_names()) {
    if (name == "eta") {
      out.push_back({name, ParamTransform::logit_interval(0.0, 1.0), eta});
    } else {
      const auto& u = decay.at(d++);
      out.push_back({name, ParamTransform::logit_interval(u.lo, u.hi), u});
    }
  }
  return out;
}

/// End-of-run chain state; enough to continue the chain exactly.
struct WnChainState {
  double alpha = kPi;  // linear representative on the pi-centred scale
  std::vector<std::int64_t> k;
  Eigen::VectorXd cov_x;  // unconstrained block values
  BlockAdaptState adapt;
  std::int64_t iteration = 0;
  std::string rng_state;
};

/// Normal full conditional (mean, variance) of the linear mean given y = theta + 2 pi k.
[[nodiscard]] inline std::pair<double, double> wn_alpha_conditional(const Eigen::VectorXd& y,
                                                                    const Eigen::MatrixXd& precision,
                                                                    const WrappedNormalPrior& prior) {
  if (prior.var == 0.0) return {prior.mean, 0.0};
  const Eigen::VectorXd q1 = precision.rowwise().sum();
  const double prec = q1.sum() + 1.0 / prior.var;
  const double mean = (q1.dot(y) + prior.mean / prior.var) / prec;
  return {mean, 1.0 / prec};
}

/// log phi_n(theta + 2 pi k | alpha 1, sigma2 C). Returns -inf when the
/// covariance cannot be factorized.
[[nodiscard]] inline double wn_log_joint(double alpha, double sigma2, const CorrelationSpec& spec,
                                         std::span<const std::int64_t> k, std::span<const Angle> theta,
                                         const DistanceMatrix& dists) {
  const auto n = static_cast<Eigen::Index>(theta.size());
  if (static_cast<Eigen::Index>(k.size()) != n || dists.size() != n) throw std::invalid_argument("wn_log_joint: size mismatch");
  const auto f = try_factorize(build_covariance(spec, CrossCovarianceScale::scalar(sigma2), dists));
  if (!f) return kNegInf;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i)
    y[i] = theta[static_cast<std::size_t>(i)].value() + kTwoPi * static_cast<double>(k[static_cast<std::size_t>(i)]);
  return mvn_logpdf(y, Eigen::VectorXd::Constant(n, alpha), *f);
}

/// One wrapped-normal chain on pi-centred data.
class WnSampler {
 public:
  /// `theta` must already be centred; `shift` is the rotation that was applied,
  /// and `priors.alpha.mean` is on the original scale.
  WnSampler(std::vector<Angle> theta, DistanceMatrix dists, CorrelationSpec base, const WnPriors& priors,
            AdaptSettings adapt, double shift)
      : theta_{std::move(theta)},
        dists_{std::move(dists)},
        base_{std::move(base)},
        adapt_settings_{std::move(adapt)},
        shift_{shift} {
    priors.validate(base_);
    alpha_prior_ = priors.alpha;
    alpha_prior_.mean = Angle{priors.alpha.mean + shift_}.value();
    block_.push_back({"sigma2", ParamTransform::log_positive(), priors.sigma2});
    for (auto& p : correlation_block(base_, priors.decay, priors.eta)) block_.push_back(std::move(p));

    const auto n = static_cast<Eigen::Index>(theta_.size());
    theta_vec_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) theta_vec_[i] = theta_[static_cast<std::size_t>(i)].value();

    WnChainState init;
    init.alpha = kPi;
    init.k.assign(theta_.size(), 0);
    Eigen::VectorXd t(static_cast<Eigen::Index>(block_.size()));
    for (std::size_t j = 0; j < block_.size(); ++j) {
      const auto& p = block_[j];
      if (j == 0) {
        t[0] = priors.sigma2.center();
      } else if (p.name == "eta") {
        t[static_cast<Eigen::Index>(j)] = priors.eta.center();
      } else {
        t[static_cast<Eigen::Index>(j)] = 0.5 * (p.transform.lower() + p.transform.upper());
      }
    }
    init.cov_x = block_to_unconstrained(block_, t);
    std::vector<double> sd = adapt_settings_.sd_prop;
    if (sd.empty()) sd.assign(block_.size(), 0.1);
    init.adapt = BlockAdaptState::init(init.cov_x, sd, adapt_settings_.exponent, adapt_settings_.accept_ratio,
                                       adapt_settings_.window.start);
    set_state(init);
  }

  void set_state(const WnChainState& s) {
    if (s.k.size() != theta_.size()) throw std::invalid_argument("WnSampler: winding vector has wrong length");
    if (s.cov_x.size() != static_cast<Eigen::Index>(block_.size()))
      throw std::invalid_argument("WnSampler: covariance block has wrong length");
    alpha_ = s.alpha;
    k_ = s.k;
    cov_x_ = s.cov_x;
    adapt_ = s.adapt;
    iteration_ = s.iteration;
    if (!install_params(cov_x_)) throw std::domain_error("WnSampler: initial covariance is not positive definite");
    refresh_residual();
  }

  [[nodiscard]] WnChainState state() const {
    WnChainState s;
    s.alpha = alpha_;
    s.k = k_;
    s.cov_x = cov_x_;
    s.adapt = adapt_;
    s.iteration = iteration_;
    return s;
  }

  [[nodiscard]] std::int64_t iteration() const noexcept { return iteration_; }
  [[nodiscard]] const ChainStats& stats() const noexcept { return stats_; }
  [[nodiscard]] const BlockAdaptState& adapt_state() const noexcept { return adapt_; }
  [[nodiscard]] const std::vector<BlockParam>& block() const noexcept { return block_; }
  [[nodiscard]] double alpha_linear() const noexcept { return alpha_; }
  [[nodiscard]] const std::vector<std::int64_t>& winding() const noexcept { return k_; }
  [[nodiscard]] Eigen::VectorXd params() const { return block_to_constrained(block_, cov_x_); }
  [[nodiscard]] const Eigen::MatrixXd& precision() const noexcept { return precision_; }
  [[nodiscard]] const WrappedNormalPrior& alpha_prior() const noexcept { return alpha_prior_; }

  /// Linear field y = theta + 2 pi k on the centred scale.
  [[nodiscard]] Eigen::VectorXd linear_field() const {
    Eigen::VectorXd y = theta_vec_;
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += kTwoPi * static_cast<double>(k_[static_cast<std::size_t>(i)]);
    return y;
  }

  [[nodiscard]] double log_joint() const {
    const auto n = static_cast<double>(theta_.size());
    return -0.5 * resid_.dot(q_resid_) - 0.5 * logdet_ - 0.5 * n * kLog2Pi;
  }

  /// Componentwise Metropolis on the winding numbers with uniform proposals on
  /// {k-1, k, k+1}.
  void update_winding(Rng& rng) {
    std::uniform_int_distribution<int> step(-1, 1);
    for (std::size_t i = 0; i < k_.size(); ++i) {
      const int move = step(rng);
      ++stats_.latent_proposals;
      if (move == 0) {
        ++stats_.latent_accepts;
        continue;
      }
      const auto ii = static_cast<Eigen::Index>(i);
      const double delta = kTwoPi * move;
      const double dquad = 2.0 * delta * q_resid_[ii] + delta * delta * precision_(ii, ii);
      if (mh_accept(-0.5 * dquad, rng)) {
        k_[i] += move;
        resid_[ii] += delta;
        q_resid_ += delta * precision_.col(ii);
        ++stats_.latent_accepts;
      }
    }
  }

  /// Gibbs draw of the linear mean from its normal full conditional.
  void update_alpha(Rng& rng) {
    if (alpha_prior_.var == 0.0) {
      alpha_ = alpha_prior_.mean;
    } else {
      const double prec = q1_.sum() + 1.0 / alpha_prior_.var;
      const Eigen::VectorXd y = linear_field();
      const double mean = (q1_.dot(y) + alpha_prior_.mean / alpha_prior_.var) / prec;
      std::normal_distribution<double> z;
      alpha_ = mean + z(rng) / std::sqrt(prec);
    }
    refresh_residual();
  }

  /// Joint Metropolis step on (sigma2, decay, eta) in the unconstrained space.
  void update_cov_params(Rng& rng, bool adapting) {
    const Eigen::VectorXd x_prop = block_propose(adapt_, cov_x_, rng);
    const Eigen::VectorXd t_prop = block_to_constrained(block_, x_prop);
    const Eigen::VectorXd t_cur = block_to_constrained(block_, cov_x_);
    ++stats_.block_proposals;

    double log_ratio = kNegInf;
    std::optional<SpdFactor> f;
    const double lp_prop = block_log_prior_jacobian(block_, x_prop, t_prop);
    if (std::isfinite(lp_prop)) {
      f = factor_for(t_prop);
      if (f) {
        const Eigen::VectorXd z = f->whiten(resid_);
        const double ll_prop = -0.5 * z.squaredNorm() - 0.5 * f->logdet();
        const double ll_cur = -0.5 * resid_.dot(q_resid_) - 0.5 * logdet_;
        log_ratio = ll_prop + lp_prop - ll_cur - block_log_prior_jacobian(block_, cov_x_, t_cur);
      }
    }
    const double alpha_mh = mh_probability(log_ratio);
    if (f && mh_accept(log_ratio, rng)) {
      cov_x_ = x_prop;
      install_factor(*f);
      q_resid_ = precision_ * resid_;
      ++stats_.block_accepts;
    }
    if (adapting) adapt_ = block_update(std::move(adapt_), cov_x_, alpha_mh);
  }

  void sweep(Rng& rng, std::int64_t b) {
    update_winding(rng);
    update_alpha(rng);
    update_cov_params(rng, adapt_settings_.window.active(b));
    iteration_ = b;
  }

  [[nodiscard]] std::vector<std::string> columns() const {
    std::vector<std::string> c{"alpha", "alpha_lin"};
    for (const auto& p : block_) c.push_back(p.name);
    for (std::size_t i = 0; i < k_.size(); ++i) c.push_back("k_" + std::to_string(i + 1));
    return c;
  }

  [[nodiscard]] std::vector<double> row() const {
    std::vector<double> r;
    r.reserve(2 + block_.size() + k_.size());
    r.push_back(Angle{alpha_ - shift_}.value());
    r.push_back(alpha_);
    const Eigen::VectorXd t = params();
    for (Eigen::Index j = 0; j < t.size(); ++j) r.push_back(t[j]);
    for (auto k : k_) r.push_back(static_cast<double>(k));
    return r;
  }

 private:
  [[nodiscard]] std::optional<SpdFactor> factor_for(const Eigen::VectorXd& t) const {
    try {
      const CorrelationSpec spec = base_.with_sampled(std::span<const double>(t.data() + 1, static_cast<std::size_t>(t.size() - 1)));
      return try_factorize(build_covariance(spec, CrossCovarianceScale::scalar(t[0]), dists_));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  bool install_params(const Eigen::VectorXd& x) {
    auto f = factor_for(block_to_constrained(block_, x));
    if (!f) return false;
    install_factor(*f);
    return true;
  }

  void install_factor(const SpdFactor& f) {
    precision_ = f.inverse();
    logdet_ = f.logdet();
    q1_ = precision_.rowwise().sum();
  }

  void refresh_residual() {
    resid_ = linear_field().array() - alpha_;
    q_resid_ = precision_ * resid_;
  }

  std::vector<Angle> theta_;
  Eigen::VectorXd theta_vec_;
  DistanceMatrix dists_;
  CorrelationSpec base_;
  AdaptSettings adapt_settings_;
  double shift_ = 0.0;
  WrappedNormalPrior alpha_prior_;
  std::vector<BlockParam> block_;

  double alpha_ = kPi;
  std::vector<std::int64_t> k_;
  Eigen::VectorXd cov_x_;
  BlockAdaptState adapt_;
  std::int64_t iteration_ = 0;
  ChainStats stats_;

  Eigen::MatrixXd precision_;
  Eigen::VectorXd q1_;
  double logdet_ = 0.0;
  Eigen::VectorXd resid_;
  Eigen::VectorXd q_resid_;
};

/// Fit the wrapped-normal model. Data are rotated so their circular mean sits at
/// pi; alpha is reported on the original scale, winding numbers on the centred one.
[[nodiscard]] inline FitResult<WnChainState> fit_wn(const CircularDataset& data, const CorrelationSpec& spec,
                                             const WnPriors& priors, const McmcSchedule& schedule,
                                             const AdaptSettings& adapt, const FitOptions& opts,
                                             const std::vector<WnChainState>* warm_start = nullptr) {
  data.validate();
  schedule.validate();
  priors.validate(spec);
  if (opts.n_chains < 1) throw std::invalid_argument("n_chains must be >= 1");
  if (spec.temporal() != data.temporal())
    throw std::invalid_argument("the gneiting family is required for spatio-temporal data and only for them");
  if (warm_start && warm_start->size() != static_cast<std::size_t>(opts.n_chains))
    throw std::invalid_argument("warm start has a different number of chains");

  Angle ref;
  std::vector<Angle> centred = recenter(data.angles, RecenterDirection::to_pi, ref);
  const DistanceMatrix dists = data.sites.distances();

  FitResult<WnChainState> out;
  out.draws.kind = ModelKind::wn;
  out.draws.spec = spec;
  out.draws.shift = ref.value();
  out.draws.chains.resize(static_cast<std::size_t>(opts.n_chains));
  out.draws.stats.resize(static_cast<std::size_t>(opts.n_chains));
  out.end_states.resize(static_cast<std::size_t>(opts.n_chains));

  for_each_chain(opts.n_chains, opts.parallel, [&](int c) {
    const auto idx = static_cast<std::size_t>(c);
    Rng rng{opts.seed + static_cast<std::uint64_t>(c)};
    WnSampler sampler(centred, dists, spec, priors, adapt, ref.value());
    if (warm_start) {
      sampler.set_state((*warm_start)[idx]);
      restore_rng(rng, (*warm_start)[idx].rng_state);
    }
    out.draws.chains[idx] = run_chain(sampler, schedule, rng);
    out.draws.stats[idx] = sampler.stats();
    out.end_states[idx] = sampler.state();
    out.end_states[idx].rng_state = rng_state_string(rng);
  });
  return out;
}

}  // namespace circspace
