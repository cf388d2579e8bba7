#include "da/core.hpp"

#include <cmath>

namespace da {

DiagonalCovariance::DiagonalCovariance(Vector variances, double scale)
    : variances_(std::move(variances)), scale_(scale) {
  if (variances_.size() == 0) {
    throw ConfigurationError("covariance must have at least one component");
  }
  if (!(scale_ >= 0.0) || !std::isfinite(scale_)) {
    throw ConfigurationError("covariance scale must be finite and >= 0");
  }
  for (Index i = 0; i < variances_.size(); ++i) {
    if (!(variances_[i] > 0.0) || !std::isfinite(variances_[i])) {
      throw ConfigurationError("covariance variances must be finite and > 0");
    }
  }
}

DiagonalCovariance DiagonalCovariance::scaled_identity(Index n, double variance) {
  return DiagonalCovariance(Vector::Ones(n), variance);
}

Vector DiagonalCovariance::stddev() const {
  return (scale_ * variances_.array()).sqrt().matrix();
}

Vector DiagonalCovariance::apply(const Vector& v) const {
  if (v.size() != variances_.size()) {
    throw DimensionError("covariance/vector length mismatch");
  }
  return scale_ * variances_.cwiseProduct(v);
}

Vector DiagonalCovariance::inverse_apply(const Vector& v) const {
  if (v.size() != variances_.size()) {
    throw DimensionError("covariance/vector length mismatch");
  }
  if (scale_ == 0.0) {
    throw IllConditioningError("degenerate covariance has no inverse");
  }
  return v.cwiseQuotient(variances_) / scale_;
}

void DiagonalCovariance::rescale(double factor) {
  if (!(factor >= 0.0) || !std::isfinite(factor)) {
    throw ConfigurationError("covariance rescale factor must be finite and >= 0");
  }
  scale_ *= factor;
}

ObservationOperator::ObservationOperator(std::vector<Index> indices,
                                         Index state_dim)
    : indices_(std::move(indices)), state_dim_(state_dim) {
  if (indices_.empty()) {
    throw ConfigurationError("observation operator must select at least one index");
  }
  Index prev = -1;
  for (Index idx : indices_) {
    if (idx < 0 || idx >= state_dim_) {
      throw ConfigurationError("observation index out of range");
    }
    if (idx <= prev) {
      throw ConfigurationError("observation indices must be strictly increasing");
    }
    prev = idx;
  }
}

ObservationOperator ObservationOperator::all(Index state_dim) {
  std::vector<Index> idx(static_cast<std::size_t>(state_dim));
  for (Index i = 0; i < state_dim; ++i) idx[static_cast<std::size_t>(i)] = i;
  return ObservationOperator(std::move(idx), state_dim);
}

Vector ObservationOperator::apply(const StateVector& x) const {
  if (x.size() != state_dim_) {
    throw DimensionError("observation operator applied to wrong state size");
  }
  Vector out(obs_dim());
  for (Index i = 0; i < obs_dim(); ++i) {
    out[i] = x[indices_[static_cast<std::size_t>(i)]];
  }
  return out;
}

Matrix ObservationOperator::apply_matrix(const Matrix& x) const {
  if (x.rows() != state_dim_) {
    throw DimensionError("observation operator applied to wrong state size");
  }
  Matrix out(obs_dim(), x.cols());
  for (Index i = 0; i < obs_dim(); ++i) {
    out.row(i) = x.row(indices_[static_cast<std::size_t>(i)]);
  }
  return out;
}

Observation::Observation(int k, Vector y, ObservationOperator h,
                         DiagonalCovariance r)
    : time_index(k), value(std::move(y)), op(std::move(h)), noise(std::move(r)) {
  if (value.size() != op.obs_dim() || noise.dim() != op.obs_dim()) {
    throw DimensionError("observation value/operator/noise size mismatch");
  }
}

double weighted_sq_norm(const Vector& v, const DiagonalCovariance& cov) {
  if (v.size() != cov.dim()) {
    throw DimensionError("weighted norm length mismatch");
  }
  return v.dot(cov.inverse_apply(v));
}

Vector apply_operator(const ObservationOperator& h, const StateVector& x) {
  return h.apply(x);
}

}  // namespace da
