#include "da/models.hpp"

namespace da {

StateVector lorenz96_rhs(const StateVector& x, double forcing) {
  const Index n = x.size();
  if (n < 4) {
    throw ConfigurationError("Lorenz-96 needs at least 4 components");
  }
  StateVector dx(n);
  for (Index i = 0; i < n; ++i) {
    const Index ip1 = (i + 1) % n;
    const Index im1 = (i + n - 1) % n;
    const Index im2 = (i + n - 2) % n;
    dx[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + forcing;
  }
  return dx;
}

Lorenz96Model::Lorenz96Model(Index n, double forcing, double dt,
                             int steps_per_window)
    : n_(n), forcing_(forcing), dt_(dt), steps_per_window_(steps_per_window) {
  if (n_ < 4) {
    throw ConfigurationError("Lorenz-96 needs at least 4 components");
  }
  if (!(dt_ > 0.0)) {
    throw ConfigurationError("Lorenz-96 integration step must be positive");
  }
  if (steps_per_window_ < 1) {
    throw ConfigurationError("Lorenz-96 needs at least one substep per window");
  }
}

StateVector Lorenz96Model::step(const StateVector& x) const {
  if (x.size() != n_) {
    throw DimensionError("state size does not match model dimension");
  }
  StateVector state = x;
  for (int s = 0; s < steps_per_window_; ++s) {
    const StateVector k1 = lorenz96_rhs(state, forcing_);
    const StateVector k2 = lorenz96_rhs(state + 0.5 * dt_ * k1, forcing_);
    const StateVector k3 = lorenz96_rhs(state + 0.5 * dt_ * k2, forcing_);
    const StateVector k4 = lorenz96_rhs(state + dt_ * k3, forcing_);
    state += (dt_ / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (!state.allFinite()) {
    throw DivergenceError("Lorenz-96 integration diverged");
  }
  return state;
}

StateVector Lorenz96Model::equilibrium() const {
  return StateVector::Constant(n_, forcing_);
}

LinearModel::LinearModel(Matrix a) : a_(std::move(a)) {
  if (a_.rows() != a_.cols()) {
    throw ConfigurationError("linear model matrix must be square");
  }
  if (!a_.allFinite()) {
    throw ConfigurationError("linear model matrix must be finite");
  }
}

StateVector LinearModel::step(const StateVector& x) const {
  if (x.size() != a_.rows()) {
    throw DimensionError("state size does not match model dimension");
  }
  StateVector out = a_ * x;
  if (!out.allFinite()) {
    throw DivergenceError("linear model step diverged");
  }
  return out;
}

}  // namespace da
