#include "da/reduced.hpp"

#include "da/models.hpp"
#include "da/rng.hpp"

#include <doctest.h>

#include <Eigen/SVD>

#include <cmath>

using namespace da;

namespace {

Ensemble random_ensemble(Index n, int nens, std::uint64_t seed, double scale = 1.0) {
  const CounterRng rng(seed, 0);
  std::uint64_t c = 0;
  Ensemble e;
  e.members.resize(n, nens + 1);
  for (Index i = 0; i < e.members.size(); ++i) {
    e.members.data()[i] = scale * rng.normal(c++);
  }
  return e;
}

Matrix random_contraction(Index n, std::uint64_t seed) {
  const CounterRng rng(seed, 1);
  std::uint64_t c = 0;
  Matrix a(n, n);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal(c++);
  a *= 0.8 / a.jacobiSvd().singularValues()[0];
  return a;
}

}  // namespace

TEST_CASE("deviation snapshot stacking") {
  SUBCASE("identical members stack to zero") {
    Ensemble e;
    e.members = Matrix::Constant(3, 4, 1.0);
    const SnapshotMatrix snaps =
        propagate_ensemble(LinearModel(Matrix::Identity(3, 3)), e, 2);
    CHECK(build_deviation_snapshots(snaps).lpNorm<Eigen::Infinity>() == 0.0);
  }

  SUBCASE("single block is the scaled anomaly matrix") {
    const Ensemble e = random_ensemble(4, 3, 11);
    const SnapshotMatrix snaps =
        propagate_ensemble(LinearModel(Matrix::Identity(4, 4)), e, 0);
    const Matrix stacked = build_deviation_snapshots(snaps);
    CHECK((stacked - anomaly_matrix(e) / std::sqrt(3.0))
              .lpNorm<Eigen::Infinity>() < 1e-15);
  }

  SUBCASE("stack matches explicit concatenation at n=3, N=2") {
    const Ensemble e = random_ensemble(3, 4, 12);
    const SnapshotMatrix snaps =
        propagate_ensemble(LinearModel(random_contraction(3, 12)), e, 2);
    const Matrix stacked = build_deviation_snapshots(snaps);
    REQUIRE(stacked.rows() == 9);
    REQUIRE(stacked.cols() == 4);
    for (int k = 0; k <= 2; ++k) {
      const Matrix expect =
          anomaly_matrix(snaps.blocks[static_cast<std::size_t>(k)]) / 2.0;
      CHECK((stacked.middleRows(3 * k, 3) - expect).lpNorm<Eigen::Infinity>() <
            1e-15);
    }
  }
}

TEST_CASE("pod_decompose") {
  SUBCASE("rank-1 snapshots produce a single mode") {
    // All anomalies proportional to one direction.
    Ensemble e;
    e.members.resize(3, 4);
    Vector direction(3);
    direction << 1.0, 2.0, -1.0;
    for (Index i = 0; i < 4; ++i) {
      e.members.col(i) = double(i) * direction;
    }
    const SnapshotMatrix snaps =
        propagate_ensemble(LinearModel(Matrix::Identity(3, 3)), e, 1);
    const PodBasis basis = pod_decompose(snaps);
    REQUIRE(basis.retained() == 1);
    // The single mode is parallel to the anomaly direction.
    const Vector phi0 = basis.phi[0].col(0);
    const double cosine =
        std::abs(phi0.dot(direction)) / (phi0.norm() * direction.norm());
    CHECK(cosine == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("singular values match a full SVD of the stack") {
    const Ensemble e = random_ensemble(6, 5, 21);
    const SnapshotMatrix snaps =
        propagate_ensemble(LinearModel(random_contraction(6, 21)), e, 3);
    const PodBasis basis = pod_decompose(snaps);
    const Vector svd_sigma =
        build_deviation_snapshots(snaps).jacobiSvd().singularValues();
    REQUIRE(basis.retained() == 5);
    for (Index i = 0; i < 5; ++i) {
      CHECK(basis.singular_values[i] ==
            doctest::Approx(svd_sigma[i]).epsilon(1e-10));
    }
    // Nonincreasing.
    for (Index i = 1; i < 5; ++i) {
      CHECK(basis.singular_values[i] <= basis.singular_values[i - 1]);
    }
  }

  SUBCASE("normalized variant stacks to orthonormal columns") {
    const Ensemble e = random_ensemble(5, 4, 22);
    const SnapshotMatrix snaps =
        propagate_ensemble(LinearModel(random_contraction(5, 22)), e, 2);
    const PodBasis basis = pod_decompose(snaps, PodScaling::normalized);
    Matrix stacked(3 * 5, basis.retained());
    for (int k = 0; k < 3; ++k) {
      stacked.middleRows(5 * k, 5) = basis.phi[static_cast<std::size_t>(k)];
    }
    const Matrix gram = stacked.transpose() * stacked;
    CHECK((gram - Matrix::Identity(gram.rows(), gram.cols()))
              .lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("select_num_modes") {
  Vector s1(3);
  s1 << 1.0, 0.0, 0.0;
  CHECK(select_num_modes(s1, 0.9) == 1);

  Vector s2(2);
  s2 << 3.0, 1.0;
  CHECK(select_num_modes(s2, 0.7) == 1);  // 0.75 > 0.7
  CHECK(select_num_modes(s2, 0.8) == 2);

  CHECK_THROWS_AS(select_num_modes(Vector::Zero(3), 0.9), DegenerateBasisError);
  CHECK_THROWS_AS(select_num_modes(s2, 1.5), ConfigurationError);

  // The selected count satisfies the ratio strictly and is minimal.
  const CounterRng rng(31, 0);
  std::uint64_t c = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Vector sigma(6);
    for (Index i = 0; i < 6; ++i) sigma[i] = rng.uniform(c++);
    std::sort(sigma.data(), sigma.data() + 6, std::greater<double>());
    const double gamma = 0.5 + 0.45 * rng.uniform(c++);
    const int p = select_num_modes(sigma, gamma);
    const double total = sigma.sum();
    CHECK(sigma.head(p).sum() / total > gamma);
    if (p > 1) {
      CHECK(sigma.head(p - 1).sum() / total <= gamma);
    }
  }
}

namespace {

struct ReducedFixture {
  std::shared_ptr<LinearModel> model;
  SnapshotMatrix snaps;
  AnomalyBasis basis;
  StateVector background;
  DiagonalCovariance b0 = DiagonalCovariance::scaled_identity(1, 1.0);
  std::vector<Observation> observations;
  ReducedProblem problem;
};

ReducedFixture make_fixture(Index n, int nens, int num_steps, std::uint64_t seed) {
  ReducedFixture f;
  f.model = std::make_shared<LinearModel>(random_contraction(n, seed));
  const Ensemble e = random_ensemble(n, nens, seed);
  f.snaps = propagate_ensemble(*f.model, e, num_steps);
  f.basis = build_anomaly_basis(f.snaps);

  const CounterRng rng(seed, 2);
  std::uint64_t c = 0;
  f.background = f.basis.means[0];
  for (Index i = 0; i < n; ++i) f.background[i] += 0.3 * rng.normal(c++);
  f.b0 = DiagonalCovariance::scaled_identity(n, 0.4);

  for (int k = 0; k <= num_steps; ++k) {
    if (k % 2 == 1) continue;  // leave gaps in the observation times
    std::vector<Index> idx;
    for (Index i = 0; i < n; i += 2) idx.push_back(i);
    ObservationOperator op(idx, n);
    Vector y(op.obs_dim());
    for (Index i = 0; i < y.size(); ++i) y[i] = rng.normal(c++);
    f.observations.emplace_back(k, y, op,
                                DiagonalCovariance::scaled_identity(op.obs_dim(), 0.25));
  }
  f.problem = build_ensemble_problem(f.basis, f.background, f.b0, f.observations);
  return f;
}

double full_cost_oracle(const ReducedFixture& f, const StateVector& x0,
                        int num_steps) {
  double cost = 0.5 * weighted_sq_norm(x0 - f.background, f.b0);
  StateVector x = x0;
  for (int k = 0; k <= num_steps; ++k) {
    for (const Observation& obs : f.observations) {
      if (obs.time_index == k) {
        cost += 0.5 * weighted_sq_norm(obs.value - obs.op.apply(x), obs.noise);
      }
    }
    if (k < num_steps) x = f.model->step(x);
  }
  return cost;
}

}  // namespace

TEST_CASE("ensemble cost values and consistency") {
  ReducedFixture f = make_fixture(6, 4, 4, 101);

  SUBCASE("zero weights reproduce the pure innovation cost") {
    double expect = 0.5 * weighted_sq_norm(f.problem.background_innovation, f.b0);
    for (const ReducedObsBlock& block : f.problem.obs) {
      expect += 0.5 * weighted_sq_norm(block.innovation, block.noise);
    }
    CHECK(ensemble_cost(f.problem, Vector::Zero(4)) ==
          doctest::Approx(expect).epsilon(1e-14));
  }

  SUBCASE("cost matches the full-space cost along the subspace") {
    const CounterRng rng(7, 7);
    for (int trial = 0; trial < 5; ++trial) {
      Vector w(4);
      for (Index i = 0; i < 4; ++i) {
        w[i] = rng.normal(static_cast<std::uint64_t>(4 * trial + i));
      }
      const StateVector x0 = reconstruct_state(f.basis, 0, w);
      const double reduced = ensemble_cost(f.problem, w);
      const double full = full_cost_oracle(f, x0, 4);
      CHECK(reduced == doctest::Approx(full).epsilon(1e-9));
    }
  }

  SUBCASE("zero innovations make the cost vanish at zero weights") {
    ReducedFixture g = f;
    g.background = g.basis.means[0];
    std::vector<Observation> exact;
    for (const Observation& obs : g.observations) {
      exact.emplace_back(obs.time_index,
                         obs.op.apply(g.basis.means[static_cast<std::size_t>(
                             obs.time_index)]),
                         obs.op, obs.noise);
    }
    const ReducedProblem p =
        build_ensemble_problem(g.basis, g.background, g.b0, exact);
    CHECK(ensemble_cost(p, Vector::Zero(4)) < 1e-20);
  }
}

TEST_CASE("ensemble derivatives") {
  ReducedFixture f = make_fixture(5, 4, 3, 102);
  const CounterRng rng(55, 0);
  std::uint64_t c = 0;

  SUBCASE("gradient matches central finite differences") {
    Vector w(4);
    for (Index i = 0; i < 4; ++i) w[i] = rng.normal(c++);
    const Vector grad = ensemble_grad(f.problem, w);
    for (Index i = 0; i < 4; ++i) {
      const double h = 1e-5 * (1.0 + std::abs(w[i]));
      Vector wp = w, wm = w;
      wp[i] += h;
      wm[i] -= h;
      const double fd =
          (ensemble_cost(f.problem, wp) - ensemble_cost(f.problem, wm)) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-6 * (1.0 + std::abs(grad[i])));
    }
  }

  SUBCASE("hessian is symmetric positive semidefinite") {
    const Matrix hess = ensemble_hessian(f.problem);
    CHECK((hess - hess.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(hess);
    CHECK(eig.eigenvalues().minCoeff() > -1e-10);
  }

  SUBCASE("gradient vanishes at the closed-form solution") {
    const Vector w_star = solve_weights(f.problem);
    const Vector c_vec = -ensemble_grad(f.problem, Vector::Zero(4));
    CHECK(ensemble_grad(f.problem, w_star).lpNorm<Eigen::Infinity>() <=
          1e-8 * (1.0 + c_vec.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("solve_weights special cases") {
  SUBCASE("zero innovations give zero weights") {
    ReducedFixture f = make_fixture(5, 3, 3, 103);
    f.background = f.basis.means[0];
    std::vector<Observation> exact;
    for (const Observation& obs : f.observations) {
      exact.emplace_back(
          obs.time_index,
          obs.op.apply(f.basis.means[static_cast<std::size_t>(obs.time_index)]),
          obs.op, obs.noise);
    }
    const ReducedProblem p =
        build_ensemble_problem(f.basis, f.background, f.b0, exact);
    CHECK(solve_weights(p).lpNorm<Eigen::Infinity>() < 1e-12);
  }

  SUBCASE("1-D hand oracle") {
    // Psi_0 = (1), B_0 = 1, no observations, d_b = 2  =>  W* = 2.
    std::vector<Matrix> blocks{Matrix::Ones(1, 1)};
    std::vector<StateVector> means{StateVector::Zero(1)};
    StateVector background(1);
    background << 2.0;
    const ReducedProblem p = build_ensemble_problem(
        blocks, means, background, DiagonalCovariance::scaled_identity(1, 1.0), {});
    const Vector w = solve_weights(p);
    CHECK(w[0] == doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("random instance matches a dense solve oracle") {
    ReducedFixture f = make_fixture(7, 5, 4, 104);
    const Matrix hess = ensemble_hessian(f.problem);
    const Vector c_vec = -ensemble_grad(f.problem, Vector::Zero(5));
    const Vector oracle = hess.fullPivLu().solve(c_vec);
    CHECK((solve_weights(f.problem) - oracle).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("pod problem derivatives and solution") {
  const Ensemble e = random_ensemble(6, 4, 23);
  const SnapshotMatrix snaps =
      propagate_ensemble(LinearModel(random_contraction(6, 23)), e, 3);
  const PodBasis basis = pod_decompose(snaps);
  const int num_modes = select_num_modes(basis.singular_values, 0.95);

  const CounterRng rng(77, 0);
  std::uint64_t c = 0;
  std::vector<Observation> observations;
  for (int k = 0; k <= 3; ++k) {
    ObservationOperator op({0, 2, 4}, 6);
    Vector y(3);
    for (Index i = 0; i < 3; ++i) y[i] = rng.normal(c++);
    observations.emplace_back(k, y, op,
                              DiagonalCovariance::scaled_identity(3, 0.2));
  }
  const ReducedProblem p = build_pod_problem(basis, num_modes, observations);

  SUBCASE("no observations reduce to a pure ridge") {
    const ReducedProblem ridge_only = build_pod_problem(basis, num_modes, {});
    CHECK(solve_beta(ridge_only).lpNorm<Eigen::Infinity>() == 0.0);
    Vector beta = Vector::Ones(num_modes);
    CHECK(pod_cost(ridge_only, beta) ==
          doctest::Approx(0.5 * 4.0 * double(num_modes)));
  }

  SUBCASE("gradient vanishes at the closed-form solution") {
    const Vector beta_star = solve_beta(p);
    CHECK(pod_grad(p, beta_star).lpNorm<Eigen::Infinity>() < 1e-10);
  }

  SUBCASE("gradient matches central finite differences") {
    Vector beta(num_modes);
    for (Index i = 0; i < num_modes; ++i) beta[i] = rng.normal(c++);
    const Vector grad = pod_grad(p, beta);
    for (Index i = 0; i < num_modes; ++i) {
      const double h = 1e-5 * (1.0 + std::abs(beta[i]));
      Vector bp = beta, bm = beta;
      bp[i] += h;
      bm[i] -= h;
      const double fd = (pod_cost(p, bp) - pod_cost(p, bm)) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-6 * (1.0 + std::abs(grad[i])));
    }
  }

  SUBCASE("kind mismatch is rejected") {
    CHECK_THROWS_AS(ensemble_cost(p, Vector::Zero(num_modes)),
                    ConfigurationError);
  }
}

TEST_CASE("reconstruct_state") {
  ReducedFixture f = make_fixture(3, 3, 2, 105);

  CHECK(reconstruct_state(f.basis, 1, Vector::Zero(3)) == f.basis.means[1]);

  Vector e2 = Vector::Zero(3);
  e2[1] = 1.0;
  CHECK((reconstruct_state(f.basis, 0, e2) -
         (f.basis.means[0] + f.basis.psi[0].col(1)))
            .lpNorm<Eigen::Infinity>() == 0.0);

  const CounterRng rng(4, 4);
  Vector w(3);
  for (Index i = 0; i < 3; ++i) w[i] = rng.normal(static_cast<std::uint64_t>(i));
  StateVector expect = f.basis.means[2];
  for (Index i = 0; i < 3; ++i) expect += w[i] * f.basis.psi[2].col(i);
  CHECK((reconstruct_state(f.basis, 2, w) - expect).lpNorm<Eigen::Infinity>() <
        1e-14);

  CHECK_THROWS_AS(reconstruct_state(f.basis, 7, w), ConfigurationError);
}

TEST_CASE("coordinate_search") {
  SUBCASE("constant objective returns the start") {
    const Vector start = Vector::Ones(3);
    const Vector result = coordinate_search(
        [](const Vector&) { return 1.0; }, start, 1.0, 100, 1e-8);
    CHECK(result == start);
  }

  SUBCASE("1-D quadratic converges to the minimum") {
    const Vector start = Vector::Zero(1);
    const double tol = 1e-6;
    const Vector result = coordinate_search(
        [](const Vector& b) { return (b[0] - 1.0) * (b[0] - 1.0); }, start, 1.0,
        10000, tol);
    CHECK(std::abs(result[0] - 1.0) <= tol);
  }

  SUBCASE("separable 3-D quadratic converges") {
    Vector target(3);
    target << 1.0, -2.0, 0.5;
    const double tol = 1e-5;
    const Vector result = coordinate_search(
        [&](const Vector& b) { return (b - target).squaredNorm(); },
        Vector::Zero(3), 1.0, 100000, tol);
    CHECK((result - target).lpNorm<Eigen::Infinity>() <= 10 * tol);
  }

  SUBCASE("result is never worse than the start") {
    const CounterRng rng(6, 6);
    std::uint64_t c = 0;
    for (int trial = 0; trial < 10; ++trial) {
      Vector start(2);
      start << rng.normal(c++), rng.normal(c++);
      const auto objective = [&](const Vector& b) {
        return std::sin(3.0 * b[0]) + b.squaredNorm();
      };
      const Vector result = coordinate_search(objective, start, 0.7, 37, 1e-4);
      CHECK(objective(result) <= objective(start));
    }
  }
}
