#pragma once

#include "da/core.hpp"
#include "da/models.hpp"

#include <cstdint>
#include <vector>

namespace da {

/// An ensemble of Nens+1 model states at one time; column i is member i.
struct Ensemble {
  Matrix members;  // n x (Nens+1)
  int time_index = 0;

  Index state_dim() const { return members.rows(); }
  Index member_count() const { return members.cols(); }  // Nens + 1
  int nens() const { return static_cast<int>(members.cols()) - 1; }
};

/// Draws Nens+1 independent Gaussian members about `mean` with covariance
/// `b`. Member i, component j is mean_j + sqrt(b_jj) * z(seed, i, j) with a
/// counter-based generator, so the ensemble is reproducible regardless of
/// evaluation order.
Ensemble sample_ensemble(const StateVector& mean, const DiagonalCovariance& b,
                         int nens, std::uint64_t seed);

/// Shifts all members by the same vector so the empirical mean equals
/// `center`. Spread and anomalies are unchanged.
void recenter_ensemble(Ensemble& e, const StateVector& center);

/// Arithmetic mean over all Nens+1 members.
StateVector empirical_mean(const Ensemble& e);

/// The first Nens deviations from the empirical mean, one per column.
/// The redundant (Nens+1)-th deviation is dropped.
Matrix anomaly_matrix(const Ensemble& e);

/// All Nens+1 deviations from the empirical mean.
Matrix deviation_matrix(const Ensemble& e);

/// Sample covariance in factored form, S = F F^T with F = dX / sqrt(Nens)
/// over all Nens+1 deviations. Never densified; apply() costs
/// O(n * (Nens+1)).
class CovarianceFactor {
 public:
  explicit CovarianceFactor(Matrix factor) : factor_(std::move(factor)) {}

  const Matrix& factor() const { return factor_; }

  /// S v.
  Vector apply(const Vector& v) const { return factor_ * (factor_.transpose() * v); }

  /// Dense S; for small-n tests only.
  Matrix dense() const { return factor_ * factor_.transpose(); }

 private:
  Matrix factor_;
};

CovarianceFactor sample_covariance(const Ensemble& e);

/// Per-time ensembles over an assimilation window, blocks[k] at time t_k for
/// k = 0..N.
struct SnapshotMatrix {
  std::vector<Ensemble> blocks;

  int num_steps() const { return static_cast<int>(blocks.size()) - 1; }  // N
  Index state_dim() const { return blocks.front().state_dim(); }
  int nens() const { return blocks.front().nens(); }
};

/// Propagates each member through the model over num_steps intervals and
/// stores every intermediate ensemble; blocks[0] is e0.
SnapshotMatrix propagate_ensemble(const Model& model, const Ensemble& e0,
                                  int num_steps);

/// Per-time anomaly matrices Psi_k (n x Nens) and ensemble means.
struct AnomalyBasis {
  std::vector<Matrix> psi;
  std::vector<StateVector> means;

  int num_steps() const { return static_cast<int>(psi.size()) - 1; }
};

AnomalyBasis build_anomaly_basis(const SnapshotMatrix& snapshots);

}  // namespace da
