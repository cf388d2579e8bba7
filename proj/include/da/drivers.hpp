#pragma once

#include "da/core.hpp"
#include "da/ensemble.hpp"
#include "da/models.hpp"
#include "da/reduced.hpp"
#include "da/trustregion.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace da {

/// One 4D-Var assimilation window: background, covariances, observations at
/// time indices within 0..num_steps, the model, and the ensemble settings.
struct AssimilationProblem {
  std::shared_ptr<const Model> model;
  StateVector background;       // x_b at t_0
  DiagonalCovariance b0;
  std::vector<Observation> observations;
  int num_steps = 0;            // N; the window covers t_0..t_N
  int nens = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-iteration record emitted by the drivers. rho, delta and lambda_b are
/// NaN for the non-trust-region methods.
struct IterationDiag {
  double cost_full = 0.0;             // J at the iterate after this iteration
  double cost_surrogate_start = 0.0;  // reduced cost at zero weights
  double cost_surrogate = 0.0;        // reduced cost at the step taken
  double rho = 0.0;
  double delta = 0.0;
  double lambda_b = 0.0;
  bool accepted = true;
  StateVector state;                  // iterate after this iteration
};

struct AnalysisResult {
  StateVector analysis;                  // x_a at t_0
  std::vector<StateVector> trajectory;   // N+1 states from the analysis
  std::vector<IterationDiag> iterations;
  double wall_seconds = 0.0;

  int iteration_count() const { return static_cast<int>(iterations.size()); }
};

/// Full 4D-Var cost: propagates x0 through the model and returns
/// (1/2)|x0 - x_b|^2_{B0^-1} + (1/2) sum_k |y_k - H_k x_k|^2_{R_k^-1}.
double full_cost(const AssimilationProblem& p, const StateVector& x0);

/// x0 and its num_steps successors under the model.
std::vector<StateVector> run_model_trajectory(const Model& model,
                                              const StateVector& x0,
                                              int num_steps);

struct PodOptions {
  double energy_fraction = 0.95;  // gamma of the mode-selection rule
  PodScaling scaling = PodScaling::sigma_inv_sqrt;
};

enum class InnerSolver { closed_form, coordinate_search };

struct CsmOptions {
  double step0 = 1.0;
  int budget_per_dim = 100;
  double tol = 1e-3;
};

struct IsmOptions {
  PodOptions pod;
  int iterations = 5;
  InnerSolver inner = InnerSolver::closed_form;
  CsmOptions csm;
};

/// Single-pass POD-4D-EnKF: sample, propagate, project onto the truncated
/// POD basis, solve the reduced problem in closed form, reconstruct and
/// propagate the analysis.
AnalysisResult run_pod_4denkf(const AssimilationProblem& p,
                              const PodOptions& options = {});

/// Iterative subspace minimization: repeats the POD reduction about the
/// current iterate with a fixed sampling covariance; the inner problem is
/// solved either in closed form or by coordinate search. One closed-form
/// iteration is identical to run_pod_4denkf.
AnalysisResult run_ism(const AssimilationProblem& p, const IsmOptions& options = {});

struct TrStopRules {
  int max_iterations = 5;
  double min_delta = 1e-6;    // stop when the radius falls below this
  double min_trace_b = 0.0;   // stop when trace(B) falls below this; 0 disables
};

struct TrOptions {
  TRParams params;
  TrStopRules stop;
  /// Use the truncated POD basis as the spanning set instead of the raw
  /// anomalies.
  bool use_pod_basis = false;
  PodOptions pod;
};

/// Trust-region 4D-EnKF: per iteration, sample about the current iterate
/// with the scaled covariance, build the ensemble-space quadratic model at
/// w = 0, solve the radius-constrained subproblem, accept or reject by the
/// full-vs-surrogate decrease ratio, update the radius, and shrink the
/// sampling covariance by lambda_B.
AnalysisResult run_tr_4denkf(const AssimilationProblem& p,
                             const TrOptions& options = {});

}  // namespace da
