#include "da/reduced.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

namespace da {

Matrix build_deviation_snapshots(const SnapshotMatrix& snapshots) {
  const Index n = snapshots.state_dim();
  const int nens = snapshots.nens();
  const auto num_blocks = static_cast<Index>(snapshots.blocks.size());
  Matrix stacked(num_blocks * n, nens);
  const double inv_sqrt = 1.0 / std::sqrt(double(nens));
  for (Index k = 0; k < num_blocks; ++k) {
    stacked.middleRows(k * n, n) =
        inv_sqrt * anomaly_matrix(snapshots.blocks[static_cast<std::size_t>(k)]);
  }
  return stacked;
}

PodBasis pod_decompose(const SnapshotMatrix& snapshots, PodScaling scaling) {
  const Matrix stacked = build_deviation_snapshots(snapshots);
  const int nens = snapshots.nens();

  // Method of snapshots: the Nens x Nens Gram matrix shares its nonzero
  // spectrum with the stacked deviations.
  const Matrix gram = stacked.transpose() * stacked;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) {
    throw IllConditioningError("snapshot Gram eigendecomposition failed");
  }

  // Eigen returns ascending order; flip to nonincreasing singular values.
  const Index m = eig.eigenvalues().size();
  Vector sigma(m);
  Matrix v(m, m);
  for (Index i = 0; i < m; ++i) {
    const double lambda = std::max(eig.eigenvalues()[m - 1 - i], 0.0);
    sigma[i] = std::sqrt(lambda);
    v.col(i) = eig.eigenvectors().col(m - 1 - i);
  }

  Index retained = 0;
  const double cutoff = 1e-12 * (m > 0 ? sigma[0] : 0.0);
  while (retained < m && sigma[retained] > cutoff && sigma[retained] > 0.0) {
    ++retained;
  }

  PodBasis basis;
  basis.nens = nens;
  basis.scaling = scaling;
  basis.singular_values = sigma.head(retained);
  basis.means.reserve(snapshots.blocks.size());
  basis.phi.reserve(snapshots.blocks.size());

  Matrix weights = v.leftCols(retained);  // V_r scaled per variant
  for (Index i = 0; i < retained; ++i) {
    const double s = (scaling == PodScaling::sigma_inv_sqrt)
                         ? 1.0 / std::sqrt(sigma[i])
                         : 1.0 / (sigma[i] * std::sqrt(double(nens)));
    weights.col(i) *= s;
  }
  for (const Ensemble& block : snapshots.blocks) {
    basis.means.push_back(empirical_mean(block));
    basis.phi.push_back(anomaly_matrix(block) * weights);
  }
  return basis;
}

int select_num_modes(const Vector& sigma, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigurationError("energy fraction must lie in (0, 1)");
  }
  const double total = sigma.sum();
  if (sigma.size() == 0 || !(total > 0.0)) {
    throw DegenerateBasisError("all singular values are zero");
  }
  double cumulative = 0.0;
  for (Index p = 0; p < sigma.size(); ++p) {
    cumulative += sigma[p];
    if (cumulative / total > gamma) {
      return static_cast<int>(p) + 1;
    }
  }
  return static_cast<int>(sigma.size());
}

namespace {

const Observation& find_observation_times_checked(
    const std::vector<Observation>& observations, std::size_t i,
    int max_time) {
  const Observation& obs = observations[i];
  if (obs.time_index < 0 || obs.time_index > max_time) {
    throw ConfigurationError("observation time outside the window");
  }
  return obs;
}

}  // namespace

ReducedProblem build_ensemble_problem(const std::vector<Matrix>& basis_blocks,
                                      const std::vector<StateVector>& means,
                                      const StateVector& background,
                                      const DiagonalCovariance& b0,
                                      const std::vector<Observation>& observations) {
  if (basis_blocks.empty() || basis_blocks.size() != means.size()) {
    throw DimensionError("basis blocks and means must align");
  }
  if (background.size() != means[0].size() || b0.dim() != background.size()) {
    throw DimensionError("background/basis size mismatch");
  }
  ReducedProblem p;
  p.kind = BasisKind::anomaly;
  p.basis0 = basis_blocks[0];
  p.background_innovation = background - means[0];
  p.b0 = b0;
  p.obs.reserve(observations.size());
  const int max_time = static_cast<int>(basis_blocks.size()) - 1;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const Observation& obs = find_observation_times_checked(observations, i, max_time);
    const auto k = static_cast<std::size_t>(obs.time_index);
    p.obs.push_back(ReducedObsBlock{obs.value - obs.op.apply(means[k]),
                                    obs.op.apply_matrix(basis_blocks[k]),
                                    obs.noise});
  }
  return p;
}

ReducedProblem build_ensemble_problem(const AnomalyBasis& basis,
                                      const StateVector& background,
                                      const DiagonalCovariance& b0,
                                      const std::vector<Observation>& observations) {
  return build_ensemble_problem(basis.psi, basis.means, background, b0,
                                observations);
}

ReducedProblem build_pod_problem(const PodBasis& basis, int num_modes,
                                 const std::vector<Observation>& observations) {
  if (num_modes < 1 || num_modes > basis.retained()) {
    throw ConfigurationError("requested POD mode count is unavailable");
  }
  ReducedProblem p;
  p.kind = BasisKind::pod;
  p.basis0 = basis.phi[0].leftCols(num_modes);
  p.ridge_weight = double(basis.nens);
  p.obs.reserve(observations.size());
  const int max_time = static_cast<int>(basis.phi.size()) - 1;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const Observation& obs = find_observation_times_checked(observations, i, max_time);
    const auto k = static_cast<std::size_t>(obs.time_index);
    p.obs.push_back(
        ReducedObsBlock{obs.value - obs.op.apply(basis.means[k]),
                        obs.op.apply_matrix(basis.phi[k].leftCols(num_modes)),
                        obs.noise});
  }
  return p;
}

namespace {

void check_weight_size(const ReducedProblem& p, const Vector& w) {
  if (w.size() != p.width()) {
    throw DimensionError("weight vector does not match basis width");
  }
}

double reduced_cost_impl(const ReducedProblem& p, const Vector& w) {
  check_weight_size(p, w);
  double cost = 0.0;
  if (p.kind == BasisKind::anomaly) {
    cost += 0.5 * weighted_sq_norm(p.background_innovation - p.basis0 * w, p.b0);
  } else {
    cost += 0.5 * p.ridge_weight * w.squaredNorm();
  }
  for (const ReducedObsBlock& block : p.obs) {
    cost += 0.5 * weighted_sq_norm(block.innovation - block.projected * w,
                                   block.noise);
  }
  return cost;
}

/// c with gradient = hessian * w - c.
Vector reduced_rhs_impl(const ReducedProblem& p) {
  Vector c = Vector::Zero(p.width());
  if (p.kind == BasisKind::anomaly) {
    c += p.basis0.transpose() * p.b0.inverse_apply(p.background_innovation);
  }
  for (const ReducedObsBlock& block : p.obs) {
    c += block.projected.transpose() * block.noise.inverse_apply(block.innovation);
  }
  return c;
}

Matrix reduced_hessian_impl(const ReducedProblem& p) {
  const Index width = p.width();
  Matrix hess = Matrix::Zero(width, width);
  if (p.kind == BasisKind::anomaly) {
    const Vector inv_b =
        (p.b0.scale() * p.b0.base_variances().array()).inverse().matrix();
    hess += p.basis0.transpose() * inv_b.asDiagonal() * p.basis0;
  } else {
    hess += p.ridge_weight * Matrix::Identity(width, width);
  }
  for (const ReducedObsBlock& block : p.obs) {
    const Vector inv_r =
        (block.noise.scale() * block.noise.base_variances().array())
            .inverse()
            .matrix();
    hess += block.projected.transpose() * inv_r.asDiagonal() * block.projected;
  }
  return hess;
}

Vector reduced_grad_impl(const ReducedProblem& p, const Vector& w) {
  check_weight_size(p, w);
  return reduced_hessian_impl(p) * w - reduced_rhs_impl(p);
}

Vector reduced_solve_impl(const ReducedProblem& p) {
  const Matrix hess = reduced_hessian_impl(p);
  const Vector c = reduced_rhs_impl(p);
  const Eigen::LDLT<Matrix> solver(hess);
  Vector w = solver.solve(c);
  const double tol = 1e-8 * (1.0 + c.lpNorm<Eigen::Infinity>());
  if (!w.allFinite() ||
      (hess * w - c).lpNorm<Eigen::Infinity>() > tol) {
    throw IllConditioningError("reduced Hessian is numerically singular");
  }
  return w;
}

void require_kind(const ReducedProblem& p, BasisKind kind) {
  if (p.kind != kind) {
    throw ConfigurationError("reduced problem has the wrong basis kind");
  }
}

}  // namespace

double reduced_cost(const ReducedProblem& p, const Vector& w) {
  return reduced_cost_impl(p, w);
}

Vector reduced_grad(const ReducedProblem& p, const Vector& w) {
  return reduced_grad_impl(p, w);
}

Matrix reduced_hessian(const ReducedProblem& p) {
  return reduced_hessian_impl(p);
}

double ensemble_cost(const ReducedProblem& p, const Vector& w) {
  require_kind(p, BasisKind::anomaly);
  return reduced_cost_impl(p, w);
}

Vector ensemble_grad(const ReducedProblem& p, const Vector& w) {
  require_kind(p, BasisKind::anomaly);
  return reduced_grad_impl(p, w);
}

Matrix ensemble_hessian(const ReducedProblem& p) {
  require_kind(p, BasisKind::anomaly);
  return reduced_hessian_impl(p);
}

Vector solve_weights(const ReducedProblem& p) {
  require_kind(p, BasisKind::anomaly);
  return reduced_solve_impl(p);
}

double pod_cost(const ReducedProblem& p, const Vector& beta) {
  require_kind(p, BasisKind::pod);
  return reduced_cost_impl(p, beta);
}

Vector pod_grad(const ReducedProblem& p, const Vector& beta) {
  require_kind(p, BasisKind::pod);
  return reduced_grad_impl(p, beta);
}

Matrix pod_hessian(const ReducedProblem& p) {
  require_kind(p, BasisKind::pod);
  return reduced_hessian_impl(p);
}

Vector solve_beta(const ReducedProblem& p) {
  require_kind(p, BasisKind::pod);
  return reduced_solve_impl(p);
}

StateVector reconstruct_state(const AnomalyBasis& basis, int k, const Vector& w) {
  const auto idx = static_cast<std::size_t>(k);
  if (k < 0 || idx >= basis.psi.size()) {
    throw ConfigurationError("reconstruction time outside the window");
  }
  if (w.size() != basis.psi[idx].cols()) {
    throw DimensionError("weight vector does not match basis width");
  }
  return basis.means[idx] + basis.psi[idx] * w;
}

StateVector reconstruct_state(const PodBasis& basis, int num_modes, int k,
                              const Vector& beta) {
  const auto idx = static_cast<std::size_t>(k);
  if (k < 0 || idx >= basis.phi.size()) {
    throw ConfigurationError("reconstruction time outside the window");
  }
  if (num_modes < 1 || num_modes > basis.retained() || beta.size() != num_modes) {
    throw DimensionError("weight vector does not match requested mode count");
  }
  return basis.means[idx] + basis.phi[idx].leftCols(num_modes) * beta;
}

Vector coordinate_search(const std::function<double(const Vector&)>& objective,
                         const Vector& start, double step0, int budget,
                         double tol) {
  if (budget < 1) {
    throw ConfigurationError("coordinate search budget must be >= 1");
  }
  Vector best = start;
  double best_value = objective(best);
  int evaluations = 1;
  double step = step0;
  const Index dim = start.size();

  while (step >= tol && evaluations < budget) {
    bool improved = false;
    for (Index i = 0; i < dim && evaluations < budget; ++i) {
      for (const double direction : {+1.0, -1.0}) {
        Vector probe = best;
        probe[i] += direction * step;
        const double value = objective(probe);
        ++evaluations;
        if (value < best_value) {
          best = std::move(probe);
          best_value = value;
          improved = true;
          break;
        }
        if (evaluations >= budget) break;
      }
    }
    if (!improved) {
      step *= 0.5;
    }
  }
  return best;
}

}  // namespace da
