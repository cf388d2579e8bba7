#include "da/drivers.hpp"

#include "da/rng.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace da {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double elapsed_seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

void AssimilationProblem::validate() const {
  if (!model) {
    throw ConfigurationError("assimilation problem has no model");
  }
  if (background.size() != model->dim() || b0.dim() != model->dim()) {
    throw DimensionError("background/covariance size does not match the model");
  }
  if (num_steps < 0) {
    throw ConfigurationError("window length must be >= 0");
  }
  if (nens < 1) {
    throw ConfigurationError("ensemble size must be >= 1");
  }
  for (const Observation& obs : observations) {
    if (obs.time_index < 0 || obs.time_index > num_steps) {
      throw ConfigurationError("observation time outside the window");
    }
    if (obs.op.state_dim() != model->dim()) {
      throw DimensionError("observation operator does not match the model");
    }
  }
}

std::vector<StateVector> run_model_trajectory(const Model& model,
                                              const StateVector& x0,
                                              int num_steps) {
  std::vector<StateVector> trajectory;
  trajectory.reserve(static_cast<std::size_t>(num_steps) + 1);
  trajectory.push_back(x0);
  for (int k = 0; k < num_steps; ++k) {
    trajectory.push_back(model.step(trajectory.back()));
  }
  return trajectory;
}

double full_cost(const AssimilationProblem& p, const StateVector& x0) {
  const std::vector<StateVector> trajectory =
      run_model_trajectory(*p.model, x0, p.num_steps);
  double cost = 0.5 * weighted_sq_norm(x0 - p.background, p.b0);
  for (const Observation& obs : p.observations) {
    const StateVector& xk = trajectory[static_cast<std::size_t>(obs.time_index)];
    cost += 0.5 * weighted_sq_norm(obs.value - obs.op.apply(xk), obs.noise);
  }
  return cost;
}

namespace {

struct PodIterationOutcome {
  StateVector next_state;
  double surrogate_start = 0.0;
  double surrogate = 0.0;
};

/// One POD reduction about `center`: sample, recenter so the ensemble mean
/// is exactly the current iterate, propagate, project, solve, reconstruct.
PodIterationOutcome pod_iteration(const AssimilationProblem& p,
                                  const StateVector& center,
                                  const DiagonalCovariance& sampling_b,
                                  std::uint64_t seed, const PodOptions& pod_opts,
                                  InnerSolver inner, const CsmOptions& csm) {
  Ensemble e = sample_ensemble(center, sampling_b, p.nens, seed);
  recenter_ensemble(e, center);
  const SnapshotMatrix snapshots = propagate_ensemble(*p.model, e, p.num_steps);
  const PodBasis basis = pod_decompose(snapshots, pod_opts.scaling);
  const int num_modes =
      select_num_modes(basis.singular_values, pod_opts.energy_fraction);
  const ReducedProblem reduced = build_pod_problem(basis, num_modes, p.observations);

  const Vector zero = Vector::Zero(num_modes);
  Vector beta;
  if (inner == InnerSolver::closed_form) {
    beta = solve_beta(reduced);
  } else {
    beta = coordinate_search(
        [&reduced](const Vector& b) { return pod_cost(reduced, b); }, zero,
        csm.step0, csm.budget_per_dim * num_modes, csm.tol);
  }

  PodIterationOutcome outcome;
  outcome.next_state = reconstruct_state(basis, num_modes, 0, beta);
  outcome.surrogate_start = pod_cost(reduced, zero);
  outcome.surrogate = pod_cost(reduced, beta);
  return outcome;
}

}  // namespace

AnalysisResult run_ism(const AssimilationProblem& p, const IsmOptions& options) {
  p.validate();
  if (options.iterations < 1) {
    throw ConfigurationError("ISM needs at least one iteration");
  }
  const auto start = Clock::now();

  AnalysisResult result;
  StateVector x = p.background;
  for (int j = 0; j < options.iterations; ++j) {
    // The sampling covariance is held fixed across iterations.
    const PodIterationOutcome outcome =
        pod_iteration(p, x, p.b0, derive_seed(p.seed, static_cast<std::uint64_t>(j)),
                      options.pod, options.inner, options.csm);
    x = outcome.next_state;

    IterationDiag diag;
    diag.cost_full = full_cost(p, x);
    diag.cost_surrogate_start = outcome.surrogate_start;
    diag.cost_surrogate = outcome.surrogate;
    diag.rho = kNan;
    diag.delta = kNan;
    diag.lambda_b = kNan;
    diag.accepted = true;
    diag.state = x;
    result.iterations.push_back(std::move(diag));
  }

  result.analysis = x;
  result.trajectory = run_model_trajectory(*p.model, x, p.num_steps);
  result.wall_seconds = elapsed_seconds(start);
  return result;
}

AnalysisResult run_pod_4denkf(const AssimilationProblem& p,
                              const PodOptions& options) {
  // By construction one closed-form ISM iteration is the POD-4D-EnKF pass.
  IsmOptions ism;
  ism.pod = options;
  ism.iterations = 1;
  ism.inner = InnerSolver::closed_form;
  return run_ism(p, ism);
}

AnalysisResult run_tr_4denkf(const AssimilationProblem& p,
                             const TrOptions& options) {
  p.validate();
  options.params.validate();
  const auto start = Clock::now();

  AnalysisResult result;
  StateVector x = p.background;
  DiagonalCovariance sampling_b = p.b0;
  double delta = options.params.delta0;

  for (int j = 0; j < options.stop.max_iterations; ++j) {
    Ensemble e = sample_ensemble(x, sampling_b, p.nens,
                                 derive_seed(p.seed, static_cast<std::uint64_t>(j)));
    recenter_ensemble(e, x);
    const SnapshotMatrix snapshots = propagate_ensemble(*p.model, e, p.num_steps);

    // The surrogate keeps the original background term; lambda_B only
    // shrinks the sampling spread.
    ReducedProblem reduced;
    std::vector<StateVector> means;
    if (options.use_pod_basis) {
      const PodBasis basis = pod_decompose(snapshots, options.pod.scaling);
      const int num_modes =
          select_num_modes(basis.singular_values, options.pod.energy_fraction);
      std::vector<Matrix> blocks;
      blocks.reserve(basis.phi.size());
      for (const Matrix& phi : basis.phi) {
        blocks.push_back(phi.leftCols(num_modes));
      }
      reduced = build_ensemble_problem(blocks, basis.means, p.background, p.b0,
                                       p.observations);
      means = basis.means;
    } else {
      const AnomalyBasis basis = build_anomaly_basis(snapshots);
      reduced = build_ensemble_problem(basis, p.background, p.b0, p.observations);
      means = basis.means;
    }

    const Vector zero = Vector::Zero(reduced.width());
    const double surrogate_start = ensemble_cost(reduced, zero);
    const double cost_current = full_cost(p, x);

    double rho = 0.0;
    double surrogate_trial = surrogate_start;
    double cost_after = cost_current;
    bool accepted = false;
    StateVector x_next = x;
    try {
      const SubproblemSolution sol =
          solve_subproblem(ensemble_grad(reduced, zero), ensemble_hessian(reduced),
                           zero, SubspaceMetric::from_basis(reduced.basis0), delta);
      const StateVector x_trial = means[0] + reduced.basis0 * sol.step;
      surrogate_trial = ensemble_cost(reduced, sol.step);
      const double cost_trial = full_cost(p, x_trial);
      rho = prediction_ratio(cost_current, cost_trial, surrogate_start,
                             surrogate_trial);
      x_next = update_solution(x, x_trial, rho, options.params.eta);
      accepted = rho > options.params.eta;
      if (accepted) {
        cost_after = cost_trial;
      }
    } catch (const SubproblemError&) {
      // Counted as a rejection; rho = 0 shrinks the radius below.
    }

    const double delta_used = delta;
    delta = update_radius(delta, rho, options.params);
    const double lambda_b = covariance_scale(delta, options.params.delta_max);
    sampling_b.rescale(lambda_b);

    IterationDiag diag;
    diag.cost_full = cost_after;
    diag.cost_surrogate_start = surrogate_start;
    diag.cost_surrogate = surrogate_trial;
    diag.rho = rho;
    diag.delta = delta_used;
    diag.lambda_b = lambda_b;
    diag.accepted = accepted;
    diag.state = x_next;
    result.iterations.push_back(std::move(diag));

    x = x_next;
    if (delta < options.stop.min_delta) break;
    if (options.stop.min_trace_b > 0.0 &&
        sampling_b.trace() < options.stop.min_trace_b) {
      break;
    }
  }

  result.analysis = x;
  result.trajectory = run_model_trajectory(*p.model, x, p.num_steps);
  result.wall_seconds = elapsed_seconds(start);
  return result;
}

}  // namespace da
