#pragma once

#include "da/core.hpp"
#include "da/ensemble.hpp"

#include <functional>
#include <vector>

namespace da {

enum class BasisKind { anomaly, pod };

enum class PodScaling {
  /// Phi_k = Psi_k V Sigma^{-1/2}.
  sigma_inv_sqrt,
  /// Phi_k scaled so the stacked basis [Phi_0; ...; Phi_N] has orthonormal
  /// columns.
  normalized,
};

/// POD basis built from snapshot deviations by the method of snapshots:
/// per-time matrices Phi_k, the singular values of the deviation stack, and
/// the ensemble means needed for reconstruction. Modes with singular value
/// below 1e-12 * sigma_1 are truncated.
struct PodBasis {
  std::vector<Matrix> phi;          // per-time, n x retained
  std::vector<StateVector> means;   // per-time ensemble means
  Vector singular_values;           // nonincreasing, length = retained
  int nens = 0;
  PodScaling scaling = PodScaling::sigma_inv_sqrt;

  Index retained() const { return singular_values.size(); }
};

/// Stacks the per-time anomaly matrices into the ((N+1) n) x Nens deviation
/// snapshot matrix, scaled by 1/sqrt(Nens).
Matrix build_deviation_snapshots(const SnapshotMatrix& snapshots);

PodBasis pod_decompose(const SnapshotMatrix& snapshots,
                       PodScaling scaling = PodScaling::sigma_inv_sqrt);

/// Smallest p such that (sum_{i<=p} sigma_i) / (sum_i sigma_i) > gamma.
/// Throws DegenerateBasisError when every singular value is zero.
int select_num_modes(const Vector& sigma, double gamma);

/// One observation time of a reduced problem: innovation d_k, projected
/// basis (H_k Psi_k or H_k Phi_k), and the observation error covariance.
struct ReducedObsBlock {
  Vector innovation;
  Matrix projected;
  DiagonalCovariance noise;
};

/// The 4D-Var cost restricted to the span of a per-time basis. Two forms
/// share the observation term:
///   anomaly: (1/2)|d_b - Psi_0 w|^2_{B0^-1} + (1/2) sum_k |d_k - Q_k w|^2_{R_k^-1}
///   pod:     (Nens/2)|beta|^2              + (1/2) sum_k |d_k - Z_k w|^2_{R_k^-1}
struct ReducedProblem {
  BasisKind kind = BasisKind::anomaly;
  Matrix basis0;            // Psi_0 or Phi_0^{nPOD}; used by the background term
  Vector background_innovation;  // d_b = x_b - mean_0 (anomaly form)
  DiagonalCovariance b0;         // anomaly form only
  double ridge_weight = 0.0;     // Nens (pod form)
  std::vector<ReducedObsBlock> obs;

  Index width() const { return basis0.cols(); }
};

/// Anomaly-basis reduced problem (the ensemble-space 4D-Var cost). The basis
/// blocks may be any per-time spanning set with matching means; pass the
/// AnomalyBasis overload for the standard choice.
ReducedProblem build_ensemble_problem(const std::vector<Matrix>& basis_blocks,
                                      const std::vector<StateVector>& means,
                                      const StateVector& background,
                                      const DiagonalCovariance& b0,
                                      const std::vector<Observation>& observations);

ReducedProblem build_ensemble_problem(const AnomalyBasis& basis,
                                      const StateVector& background,
                                      const DiagonalCovariance& b0,
                                      const std::vector<Observation>& observations);

/// POD-basis reduced problem with the ridge background term.
ReducedProblem build_pod_problem(const PodBasis& basis, int num_modes,
                                 const std::vector<Observation>& observations);

/// Kind-agnostic evaluations; the ensemble_*/pod_* wrappers below add a
/// basis-kind check.
double reduced_cost(const ReducedProblem& p, const Vector& w);
Vector reduced_grad(const ReducedProblem& p, const Vector& w);
Matrix reduced_hessian(const ReducedProblem& p);

double ensemble_cost(const ReducedProblem& p, const Vector& w);
Vector ensemble_grad(const ReducedProblem& p, const Vector& w);
Matrix ensemble_hessian(const ReducedProblem& p);
/// Closed-form minimizer of the anomaly-form cost via a symmetric solve.
Vector solve_weights(const ReducedProblem& p);

double pod_cost(const ReducedProblem& p, const Vector& beta);
Vector pod_grad(const ReducedProblem& p, const Vector& beta);
Matrix pod_hessian(const ReducedProblem& p);
Vector solve_beta(const ReducedProblem& p);

/// mean_k + Psi_k w.
StateVector reconstruct_state(const AnomalyBasis& basis, int k, const Vector& w);
/// mean_k + Phi_k^{num_modes} beta.
StateVector reconstruct_state(const PodBasis& basis, int num_modes, int k,
                              const Vector& beta);

/// Derivative-free compass search: probe +/- step along each coordinate,
/// accept the first improvement, halve the step after a failed sweep. Stops
/// when step < tol or after `budget` objective evaluations. The returned
/// point is never worse than the start.
Vector coordinate_search(const std::function<double(const Vector&)>& objective,
                         const Vector& start, double step0, int budget,
                         double tol);

}  // namespace da
