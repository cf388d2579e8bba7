#pragma once

#include "da/core.hpp"

namespace da {

/// Discrete-time model solution operator M_{t_k -> t_{k+1}}. All algorithms
/// in this library interact with dynamics only through step().
class Model {
 public:
  virtual ~Model() = default;

  virtual Index dim() const = 0;

  /// Advances a state over one observation interval. Deterministic and pure:
  /// identical inputs give bit-identical outputs.
  virtual StateVector step(const StateVector& x) const = 0;
};

/// Lorenz-96 tendency, dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F with
/// cyclic indexing. Requires n >= 4.
StateVector lorenz96_rhs(const StateVector& x, double forcing);

/// Lorenz-96 integrated with classical fixed-step RK4; one step() covers
/// steps_per_window substeps of size dt.
class Lorenz96Model final : public Model {
 public:
  explicit Lorenz96Model(Index n = 40, double forcing = 8.0, double dt = 0.05,
                         int steps_per_window = 1);

  Index dim() const override { return n_; }
  StateVector step(const StateVector& x) const override;

  double forcing() const { return forcing_; }
  double dt() const { return dt_; }
  int steps_per_window() const { return steps_per_window_; }

  /// The constant equilibrium state F * (1, ..., 1).
  StateVector equilibrium() const;

 private:
  Index n_;
  double forcing_;
  double dt_;
  int steps_per_window_;
};

/// Linear map x_{k+1} = A x_k. Used as an exactness oracle: its solution
/// operator is exactly linear, so reduced-space costs match full-space costs
/// to rounding error.
class LinearModel final : public Model {
 public:
  explicit LinearModel(Matrix a);

  Index dim() const override { return a_.rows(); }
  StateVector step(const StateVector& x) const override;

  const Matrix& matrix() const { return a_; }

 private:
  Matrix a_;
};

}  // namespace da
