#include "da/ensemble.hpp"

#include "da/rng.hpp"

#include <cmath>

namespace da {

Ensemble sample_ensemble(const StateVector& mean, const DiagonalCovariance& b,
                         int nens, std::uint64_t seed) {
  if (nens < 1) {
    throw ConfigurationError("ensemble size must be at least 1");
  }
  if (mean.size() != b.dim()) {
    throw DimensionError("mean/covariance size mismatch");
  }
  const Index n = mean.size();
  const Vector sd = b.stddev();
  Ensemble e;
  e.members.resize(n, nens + 1);
  for (int i = 0; i <= nens; ++i) {
    const CounterRng rng(seed, static_cast<std::uint64_t>(i));
    for (Index j = 0; j < n; ++j) {
      e.members(j, i) = mean[j] + sd[j] * rng.normal(static_cast<std::uint64_t>(j));
    }
  }
  return e;
}

void recenter_ensemble(Ensemble& e, const StateVector& center) {
  if (center.size() != e.state_dim()) {
    throw DimensionError("recenter target has wrong size");
  }
  const StateVector shift = center - empirical_mean(e);
  e.members.colwise() += shift;
}

StateVector empirical_mean(const Ensemble& e) {
  return e.members.rowwise().mean();
}

Matrix anomaly_matrix(const Ensemble& e) {
  const StateVector mean = empirical_mean(e);
  return e.members.leftCols(e.nens()).colwise() - mean;
}

Matrix deviation_matrix(const Ensemble& e) {
  const StateVector mean = empirical_mean(e);
  return e.members.colwise() - mean;
}

CovarianceFactor sample_covariance(const Ensemble& e) {
  return CovarianceFactor(deviation_matrix(e) / std::sqrt(double(e.nens())));
}

SnapshotMatrix propagate_ensemble(const Model& model, const Ensemble& e0,
                                  int num_steps) {
  if (num_steps < 0) {
    throw ConfigurationError("number of propagation steps must be >= 0");
  }
  SnapshotMatrix snapshots;
  snapshots.blocks.reserve(static_cast<std::size_t>(num_steps) + 1);
  Ensemble current = e0;
  current.time_index = 0;
  snapshots.blocks.push_back(current);
  for (int k = 0; k < num_steps; ++k) {
    Ensemble next;
    next.time_index = k + 1;
    next.members.resize(current.state_dim(), current.member_count());
    for (Index i = 0; i < current.member_count(); ++i) {
      next.members.col(i) = model.step(current.members.col(i));
    }
    snapshots.blocks.push_back(next);
    current = std::move(next);
  }
  return snapshots;
}

AnomalyBasis build_anomaly_basis(const SnapshotMatrix& snapshots) {
  AnomalyBasis basis;
  basis.psi.reserve(snapshots.blocks.size());
  basis.means.reserve(snapshots.blocks.size());
  for (const Ensemble& block : snapshots.blocks) {
    basis.means.push_back(empirical_mean(block));
    basis.psi.push_back(anomaly_matrix(block));
  }
  return basis;
}

}  // namespace da
