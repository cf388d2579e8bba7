#include "da/enkf.hpp"

#include "da/rng.hpp"

#include <Eigen/Eigenvalues>

#include <iostream>

namespace da {

KalmanGainFactors::KalmanGainFactors(const CovarianceFactor& s,
                                     const ObservationOperator& h,
                                     const DiagonalCovariance& r,
                                     double condition_warn_threshold)
    : factor_(s.factor()), projected_(h.apply_matrix(s.factor())) {
  if (h.obs_dim() != r.dim()) {
    throw DimensionError("observation operator/noise size mismatch");
  }
  Matrix innovation = projected_ * projected_.transpose();
  innovation.diagonal() += r.scale() * r.base_variances();

  const Eigen::SelfAdjointEigenSolver<Matrix> eig(innovation);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  if (!(max_eig > 0.0) || min_eig <= 1e-15 * max_eig) {
    throw IllConditioningError("innovation system is numerically singular");
  }
  condition_ = max_eig / min_eig;
  if (condition_ > condition_warn_threshold) {
    std::cerr << "warning: innovation system condition " << condition_
              << " exceeds " << condition_warn_threshold << "\n";
  }
  innovation_solver_.compute(innovation);
}

Vector KalmanGainFactors::apply(const Vector& v) const {
  if (v.size() != projected_.rows()) {
    throw DimensionError("Kalman gain applied to wrong innovation size");
  }
  return factor_ * (projected_.transpose() * innovation_solver_.solve(v));
}

Ensemble enkf_analysis(const Ensemble& e, const Observation& obs,
                       std::uint64_t seed, const EnkfOptions& opts) {
  if (obs.op.state_dim() != e.state_dim()) {
    throw DimensionError("observation operator does not match ensemble state size");
  }
  const KalmanGainFactors gain(sample_covariance(e), obs.op, obs.noise,
                               opts.condition_warn_threshold);
  const Vector noise_sd = obs.noise.stddev();

  Ensemble analysis = e;
  for (Index i = 0; i < e.member_count(); ++i) {
    Vector perturbed = obs.value;
    if (!opts.suppress_noise) {
      const CounterRng rng(seed, static_cast<std::uint64_t>(i));
      for (Index j = 0; j < perturbed.size(); ++j) {
        perturbed[j] += noise_sd[j] * rng.normal(static_cast<std::uint64_t>(j));
      }
    }
    const Vector innovation = perturbed - obs.op.apply(e.members.col(i));
    analysis.members.col(i) += gain.apply(innovation);
  }
  return analysis;
}

}  // namespace da
