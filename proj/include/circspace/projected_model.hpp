#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "circspace/adapt_mcmc.hpp"
#include "circspace/circ_core.hpp"
#include "circspace/covkernel.hpp"
#include "circspace/gauss_core.hpp"
#include "circspace/model_types.hpp"
#include "circspace/priors.hpp"
#include "circspace/wrapped_model.hpp"

namespace circspace {

/// Closed-form projected normal density of theta for Y ~ N2(alpha, Xi),
/// Xi = [[sigma2, tau sigma], [tau sigma, 1]]:
///   f = [phi2(alpha | 0, Xi) + a D Phi(D) phi(a C^{-1/2} (alpha1 sin - alpha2 cos))] / C
/// with a = 1 / (sigma sqrt(1 - tau^2)), C = u' Xi^{-1} u, D = u' Xi^{-1} alpha / sqrt(C).
[[nodiscard]] inline double pn_density_closed(double theta, const Eigen::Vector2d& alpha, double sigma2, double tau) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("pn_density_closed: sigma2 must be > 0");
  if (!(tau > -1.0 && tau < 1.0)) throw std::invalid_argument("pn_density_closed: |tau| must be < 1");
  const double sigma = std::sqrt(sigma2);
  const double a = 1.0 / (sigma * std::sqrt(1.0 - tau * tau));
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double big_c = a * a * (c * c + sigma2 * s * s - tau * sigma * std::sin(2.0 * theta));
  const double big_d = a * a / std::sqrt(big_c) *
                       (alpha[0] * (c - tau * sigma * s) + alpha[1] * sigma * (sigma * s - tau * c));
  // phi2(alpha | 0, Xi): |Xi|^{-1/2} = a, quadratic form via Xi^{-1} = a^2 [[1, -tau sigma], [-tau sigma, sigma2]]
  const double quad = a * a * (alpha[0] * alpha[0] - 2.0 * tau * sigma * alpha[0] * alpha[1] + sigma2 * alpha[1] * alpha[1]);
  const double phi2 = a / (2.0 * kPi) * std::exp(-0.5 * quad);
  const double cross = a / std::sqrt(big_c) * (alpha[0] * s - alpha[1] * c);
  const double phi1 = std::exp(-0.5 * cross * cross) / std::sqrt(2.0 * kPi);
  const double cdf = 0.5 * std::erfc(-big_d / std::sqrt(2.0));
  return (phi2 + a * big_d * cdf * phi1) / big_c;
}

/// Interleaved site-major linear field y = (r_1 cos t_1, r_1 sin t_1, ...).
[[nodiscard]] inline Eigen::VectorXd pn_linear_field(std::span<const Angle> theta, const Eigen::VectorXd& r) {
  const auto n = static_cast<Eigen::Index>(theta.size());
  if (r.size() != n) throw std::invalid_argument("pn_linear_field: radii and angles differ in length");
  Eigen::VectorXd y(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = theta[static_cast<std::size_t>(i)].value();
    y[2 * i] = r[i] * std::cos(t);
    y[2 * i + 1] = r[i] * std::sin(t);
  }
  return y;
}

/// sum log r_i + log phi_2n(y(theta, r) | 1 (x) alpha, C (x) Xi); -inf when the
/// covariance cannot be factorized.
[[nodiscard]] inline double pn_log_joint(const Eigen::Vector2d& alpha, double sigma2, double tau, const CorrelationSpec& spec,
                                         const Eigen::VectorXd& r, std::span<const Angle> theta, const DistanceMatrix& dists) {
  if ((r.array() <= 0.0).any()) return kNegInf;
  const auto f = try_factorize(build_covariance(spec, CrossCovarianceScale::bivariate(sigma2, tau), dists));
  if (!f) return kNegInf;
  const Eigen::VectorXd y = pn_linear_field(theta, r);
  const Eigen::VectorXd mean = alpha.replicate(r.size(), 1);
  return r.array().log().sum() + mvn_logpdf(y, mean, *f);
}

struct PnPriors {
  BivariateNormalPrior alpha;
  InverseGamma sigma2{3.0, 2.0};
  UniformPrior tau{-1.0, 1.0};
  std::vector<UniformPrior> decay;
  BetaPrior eta{1.0, 1.0};

  void validate(const CorrelationSpec& spec) const {
    alpha.validate();
    sigma2.validate();
    tau.validate();
    if (tau.lo < -1.0 || tau.hi > 1.0) throw std::invalid_argument("tau prior support must lie within [-1, 1]");
    eta.validate();
    const std::size_t want = spec.temporal() ? 2 : 1;
    if (decay.size() != want)
      throw std::invalid_argument("expected " + std::to_string(want) + " uniform decay prior(s) for the " +
                                  std::string(family_name(spec.family())) + " family");
    for (const auto& d : decay) d.validate();
  }
};

/// Conjugate bivariate normal full conditional of the mean given the linear
/// field and its precision. A zero prior covariance pins the mean.
[[nodiscard]] inline std::pair<Eigen::Vector2d, Eigen::Matrix2d> pn_alpha_conditional(const Eigen::VectorXd& y,
                                                                                      const Eigen::MatrixXd& precision,
                                                                                      const BivariateNormalPrior& prior) {
  if (prior.cov.isZero(0.0)) return {prior.mean, Eigen::Matrix2d::Zero()};
  const Eigen::Index n = y.size() / 2;
  Eigen::Matrix2d aqa = Eigen::Matrix2d::Zero();
  Eigen::Vector2d aqy = Eigen::Vector2d::Zero();
  const Eigen::VectorXd qy = precision * y;
  for (Eigen::Index i = 0; i < n; ++i) {
    aqy += qy.segment<2>(2 * i);
    for (Eigen::Index j = 0; j < n; ++j) aqa += precision.block<2, 2>(2 * i, 2 * j);
  }
  const Eigen::Matrix2d prior_prec = prior.cov.inverse();
  const Eigen::Matrix2d post_prec = aqa + prior_prec;
  const Eigen::Matrix2d post_cov = post_prec.inverse();
  return {post_cov * (aqy + prior_prec * prior.mean), 0.5 * (post_cov + post_cov.transpose())};
}

struct PnChainState {
  Eigen::Vector2d alpha = Eigen::Vector2d(1.0, 0.0);
  Eigen::VectorXd r;
  Eigen::VectorXd cov_x;
  BlockAdaptState adapt;
  ScalarAdaptState radius;
  std::int64_t iteration = 0;
  std::string rng_state;
};

/// One projected-normal chain.
class PnSampler {
 public:
  PnSampler(std::vector<Angle> theta, DistanceMatrix dists, CorrelationSpec base, const PnPriors& priors,
            AdaptSettings adapt)
      : theta_{std::move(theta)}, dists_{std::move(dists)}, base_{std::move(base)}, adapt_settings_{std::move(adapt)} {
    priors.validate(base_);
    alpha_prior_ = priors.alpha;
    block_.push_back({"sigma2", ParamTransform::log_positive(), priors.sigma2});
    block_.push_back({"tau", ParamTransform::logit_interval(priors.tau.lo, priors.tau.hi), priors.tau});
    for (auto& p : correlation_block(base_, priors.decay, priors.eta)) block_.push_back(std::move(p));

    const auto n = static_cast<Eigen::Index>(theta_.size());
    dir_.resize(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      dir_[2 * i] = std::cos(theta_[static_cast<std::size_t>(i)].value());
      dir_[2 * i + 1] = std::sin(theta_[static_cast<std::size_t>(i)].value());
    }

    PnChainState init;
    init.r = Eigen::VectorXd::Ones(n);
    const auto summary = circular_summary(theta_);
    init.alpha = summary.resultant_length > 0.0
                     ? Eigen::Vector2d(std::cos(summary.mean_direction.value()), std::sin(summary.mean_direction.value()))
                     : Eigen::Vector2d(1.0, 0.0);
    Eigen::VectorXd t(static_cast<Eigen::Index>(block_.size()));
    for (std::size_t j = 0; j < block_.size(); ++j) {
      const auto& p = block_[j];
      const auto jj = static_cast<Eigen::Index>(j);
      if (p.name == "sigma2") {
        t[jj] = priors.sigma2.center();
      } else if (p.name == "tau") {
        t[jj] = priors.tau.contains(0.0) ? 0.0 : priors.tau.center();
      } else if (p.name == "eta") {
        t[jj] = priors.eta.center();
      } else {
        t[jj] = 0.5 * (p.transform.lower() + p.transform.upper());
      }
    }
    init.cov_x = block_to_unconstrained(block_, t);
    std::vector<double> sd = adapt_settings_.sd_prop;
    if (sd.empty()) sd.assign(block_.size(), 0.1);
    init.adapt = BlockAdaptState::init(init.cov_x, sd, adapt_settings_.exponent, adapt_settings_.accept_ratio,
                                       adapt_settings_.window.start);
    init.radius = ScalarAdaptState::init(n, adapt_settings_.radius_sd, adapt_settings_.n_batch, adapt_settings_.exponent,
                                         adapt_settings_.radius_accept_ratio);
    set_state(init);
  }

  void set_state(const PnChainState& s) {
    if (s.r.size() != static_cast<Eigen::Index>(theta_.size())) throw std::invalid_argument("PnSampler: radii have wrong length");
    if ((s.r.array() <= 0.0).any()) throw std::invalid_argument("PnSampler: radii must be positive");
    if (s.cov_x.size() != static_cast<Eigen::Index>(block_.size()))
      throw std::invalid_argument("PnSampler: covariance block has wrong length");
    if (s.radius.log_sd.size() != s.r.size()) throw std::invalid_argument("PnSampler: radius adaptation has wrong length");
    alpha_ = s.alpha;
    r_ = s.r;
    cov_x_ = s.cov_x;
    adapt_ = s.adapt;
    radius_ = s.radius;
    iteration_ = s.iteration;
    auto f = factor_for(block_to_constrained(block_, cov_x_));
    if (!f) throw std::domain_error("PnSampler: initial covariance is not positive definite");
    install_factor(*f);
    refresh_residual();
  }

  [[nodiscard]] PnChainState state() const {
    PnChainState s;
    s.alpha = alpha_;
    s.r = r_;
    s.cov_x = cov_x_;
    s.adapt = adapt_;
    s.radius = radius_;
    s.iteration = iteration_;
    return s;
  }

  [[nodiscard]] std::int64_t iteration() const noexcept { return iteration_; }
  [[nodiscard]] const ChainStats& stats() const noexcept { return stats_; }
  [[nodiscard]] const BlockAdaptState& adapt_state() const noexcept { return adapt_; }
  [[nodiscard]] const ScalarAdaptState& radius_adapt_state() const noexcept { return radius_; }
  [[nodiscard]] const Eigen::VectorXd& radii() const noexcept { return r_; }
  [[nodiscard]] const Eigen::Vector2d& alpha() const noexcept { return alpha_; }
  [[nodiscard]] Eigen::VectorXd params() const { return block_to_constrained(block_, cov_x_); }
  [[nodiscard]] const Eigen::MatrixXd& precision() const noexcept { return precision_; }

  [[nodiscard]] Eigen::VectorXd linear_field() const {
    Eigen::VectorXd y = dir_;
    for (Eigen::Index i = 0; i < r_.size(); ++i) y.segment<2>(2 * i) *= r_[i];
    return y;
  }

  [[nodiscard]] double log_joint() const {
    return r_.array().log().sum() - 0.5 * resid_.dot(q_resid_) - 0.5 * logdet_ -
           0.5 * static_cast<double>(resid_.size()) * kLog2Pi;
  }

  /// Componentwise Metropolis on the radii: normal random walk on log r, whose
  /// target carries the extra r from the change of variables.
  void update_radii(Rng& rng, bool adapting) {
    std::normal_distribution<double> z;
    for (Eigen::Index i = 0; i < r_.size(); ++i) {
      const double r_new = r_[i] * std::exp(radius_.sd(i) * z(rng));
      const Eigen::Vector2d delta = (r_new - r_[i]) * dir_.segment<2>(2 * i);
      const double dquad = 2.0 * delta.dot(q_resid_.segment<2>(2 * i)) +
                           delta.dot(precision_.block<2, 2>(2 * i, 2 * i) * delta);
      const double log_ratio = 2.0 * (std::log(r_new) - std::log(r_[i])) - 0.5 * dquad;
      ++stats_.latent_proposals;
      if (adapting) radius_.alpha_sum[i] += mh_probability(log_ratio);
      if (mh_accept(log_ratio, rng)) {
        r_[i] = r_new;
        resid_.segment<2>(2 * i) += delta;
        q_resid_.noalias() += precision_.middleCols<2>(2 * i) * delta;
        ++stats_.latent_accepts;
      }
    }
    if (adapting) scalar_end_iteration(radius_);
  }

  void update_alpha(Rng& rng) {
    if (alpha_prior_.cov.isZero(0.0)) {
      alpha_ = alpha_prior_.mean;
    } else {
      const Eigen::VectorXd y = linear_field();
      const Eigen::VectorXd qy = precision_ * y;
      Eigen::Vector2d aqy = Eigen::Vector2d::Zero();
      for (Eigen::Index i = 0; i < r_.size(); ++i) aqy += qy.segment<2>(2 * i);
      const Eigen::Matrix2d prior_prec = alpha_prior_.cov.inverse();
      const Eigen::Matrix2d post_prec = aqa_ + prior_prec;
      Eigen::LLT<Eigen::Matrix2d> llt(post_prec);
      const Eigen::Vector2d mean = llt.solve(aqy + prior_prec * alpha_prior_.mean);
      std::normal_distribution<double> z;
      const Eigen::Vector2d e(z(rng), z(rng));
      alpha_ = mean + llt.matrixU().solve(e);
    }
    refresh_residual();
  }

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
    const bool adapting = adapt_settings_.window.active(b);
    update_radii(rng, adapting);
    update_alpha(rng);
    update_cov_params(rng, adapting);
    iteration_ = b;
  }

  [[nodiscard]] std::vector<std::string> columns() const {
    std::vector<std::string> c{"alpha1", "alpha2"};
    for (const auto& p : block_) c.push_back(p.name);
    for (Eigen::Index i = 0; i < r_.size(); ++i) c.push_back("r_" + std::to_string(i + 1));
    return c;
  }

  [[nodiscard]] std::vector<double> row() const {
    std::vector<double> out{alpha_[0], alpha_[1]};
    const Eigen::VectorXd t = params();
    for (Eigen::Index j = 0; j < t.size(); ++j) out.push_back(t[j]);
    for (Eigen::Index i = 0; i < r_.size(); ++i) out.push_back(r_[i]);
    return out;
  }

 private:
  [[nodiscard]] std::optional<SpdFactor> factor_for(const Eigen::VectorXd& t) const {
    try {
      const CorrelationSpec spec =
          base_.with_sampled(std::span<const double>(t.data() + 2, static_cast<std::size_t>(t.size() - 2)));
      return try_factorize(build_covariance(spec, CrossCovarianceScale::bivariate(t[0], t[1]), dists_));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  void install_factor(const SpdFactor& f) {
    precision_ = f.inverse();
    logdet_ = f.logdet();
    aqa_.setZero();
    const Eigen::Index n = r_.size();
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) aqa_ += precision_.block<2, 2>(2 * i, 2 * j);
  }

  void refresh_residual() {
    resid_ = linear_field() - alpha_.replicate(r_.size(), 1);
    q_resid_ = precision_ * resid_;
  }

  std::vector<Angle> theta_;
  Eigen::VectorXd dir_;
  DistanceMatrix dists_;
  CorrelationSpec base_;
  AdaptSettings adapt_settings_;
  BivariateNormalPrior alpha_prior_;
  std::vector<BlockParam> block_;

  Eigen::Vector2d alpha_ = Eigen::Vector2d(1.0, 0.0);
  Eigen::VectorXd r_;
  Eigen::VectorXd cov_x_;
  BlockAdaptState adapt_;
  ScalarAdaptState radius_;
  std::int64_t iteration_ = 0;
  ChainStats stats_;

  Eigen::MatrixXd precision_;
  Eigen::Matrix2d aqa_ = Eigen::Matrix2d::Zero();
  double logdet_ = 0.0;
  Eigen::VectorXd resid_;
  Eigen::VectorXd q_resid_;
};

[[nodiscard]] inline FitResult<PnChainState> fit_pn(const CircularDataset& data, const CorrelationSpec& spec,
                                                    const PnPriors& priors, const McmcSchedule& schedule,
                                                    const AdaptSettings& adapt, const FitOptions& opts,
                                                    const std::vector<PnChainState>* warm_start = nullptr) {
  data.validate();
  schedule.validate();
  priors.validate(spec);
  if (opts.n_chains < 1) throw std::invalid_argument("n_chains must be >= 1");
  if (spec.temporal() != data.temporal())
    throw std::invalid_argument("the gneiting family is required for spatio-temporal data and only for them");
  if (warm_start && warm_start->size() != static_cast<std::size_t>(opts.n_chains))
    throw std::invalid_argument("warm start has a different number of chains");

  const DistanceMatrix dists = data.sites.distances();
  FitResult<PnChainState> out;
  out.draws.kind = ModelKind::pn;
  out.draws.spec = spec;
  out.draws.chains.resize(static_cast<std::size_t>(opts.n_chains));
  out.draws.stats.resize(static_cast<std::size_t>(opts.n_chains));
  out.end_states.resize(static_cast<std::size_t>(opts.n_chains));

  for_each_chain(opts.n_chains, opts.parallel, [&](int c) {
    const auto idx = static_cast<std::size_t>(c);
    Rng rng{opts.seed + static_cast<std::uint64_t>(c)};
    PnSampler sampler(data.angles, dists, spec, priors, adapt);
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
