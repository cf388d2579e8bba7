#include "da/ensemble.hpp"
#include "da/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace da;

TEST_CASE("sample_ensemble degenerate and deterministic cases") {
  const StateVector mean = StateVector::LinSpaced(4, 1.0, 4.0);

  // Zero-scale covariance collapses every member onto the mean.
  const auto degenerate = DiagonalCovariance::scaled_identity(4, 0.0);
  const Ensemble flat = sample_ensemble(mean, degenerate, 3, 7);
  for (Index i = 0; i < flat.member_count(); ++i) {
    CHECK((flat.members.col(i) - mean).lpNorm<Eigen::Infinity>() == 0.0);
  }

  const auto b = DiagonalCovariance::scaled_identity(4, 0.25);
  const Ensemble a1 = sample_ensemble(mean, b, 5, 42);
  const Ensemble a2 = sample_ensemble(mean, b, 5, 42);
  CHECK(a1.members == a2.members);
  const Ensemble other = sample_ensemble(mean, b, 5, 43);
  CHECK(a1.members != other.members);

  CHECK_THROWS_AS(sample_ensemble(mean, b, 0, 1), ConfigurationError);
}

TEST_CASE("sample_ensemble statistics at large ensemble size") {
  const Index n = 5;
  const int nens = 9999;  // Nens + 1 = 10^4 members
  const StateVector mean = StateVector::Constant(n, 2.0);
  const auto b = DiagonalCovariance::scaled_identity(n, 1.0);
  const Ensemble e = sample_ensemble(mean, b, nens, 2024);

  const StateVector emp_mean = empirical_mean(e);
  const double m = double(e.member_count());
  CHECK((emp_mean - mean).lpNorm<Eigen::Infinity>() <= 5.0 * std::sqrt(1.0 / m));

  // Per-component sample variance within 5% of 1.
  for (Index i = 0; i < n; ++i) {
    const double var =
        (e.members.row(i).array() - emp_mean[i]).square().sum() / (m - 1.0);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("empirical mean") {
  Ensemble e;
  e.members.resize(2, 3);
  e.members.col(0) << 1.0, 2.0;
  e.members.col(1) << 1.0, 2.0;
  e.members.col(2) << 1.0, 2.0;
  CHECK(empirical_mean(e) == e.members.col(0));

  Ensemble two;
  two.members.resize(2, 2);
  two.members.col(0) << 0.0, 4.0;
  two.members.col(1) << 2.0, 0.0;
  const StateVector mean = empirical_mean(two);
  CHECK(mean[0] == doctest::Approx(1.0));
  CHECK(mean[1] == doctest::Approx(2.0));

  const CounterRng rng(5, 0);
  Ensemble random;
  random.members.resize(3, 3);
  std::uint64_t c = 0;
  for (Index i = 0; i < random.members.size(); ++i) {
    random.members.data()[i] = rng.normal(c++);
  }
  const StateVector expect =
      (random.members.col(0) + random.members.col(1) + random.members.col(2)) /
      3.0;
  CHECK((empirical_mean(random) - expect).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("anomaly matrix drops the redundant deviation") {
  Ensemble identical;
  identical.members = Matrix::Constant(3, 4, 1.5);
  CHECK(anomaly_matrix(identical).lpNorm<Eigen::Infinity>() == 0.0);

  // 1-D members {0, 2}: mean 1, first deviation -1.
  Ensemble pair;
  pair.members.resize(1, 2);
  pair.members << 0.0, 2.0;
  const Matrix psi = anomaly_matrix(pair);
  CHECK(psi.rows() == 1);
  CHECK(psi.cols() == 1);
  CHECK(psi(0, 0) == doctest::Approx(-1.0));

  // All Nens+1 deviations sum to zero.
  const CounterRng rng(11, 0);
  Ensemble random;
  random.members.resize(4, 6);
  std::uint64_t c = 0;
  for (Index i = 0; i < random.members.size(); ++i) {
    random.members.data()[i] = rng.normal(c++);
  }
  const Matrix all_dev = deviation_matrix(random);
  CHECK(all_dev.rowwise().sum().lpNorm<Eigen::Infinity>() < 1e-13);
  CHECK(anomaly_matrix(random) == all_dev.leftCols(5));
}

TEST_CASE("sample covariance factored form") {
  Ensemble identical;
  identical.members = Matrix::Constant(2, 3, 4.0);
  CHECK(sample_covariance(identical).factor().lpNorm<Eigen::Infinity>() == 0.0);

  // 1-D members {-1, +1}: S = (1/1)((-1)^2 + 1^2) = 2.
  Ensemble pair;
  pair.members.resize(1, 2);
  pair.members << -1.0, 1.0;
  CHECK(sample_covariance(pair).dense()(0, 0) == doctest::Approx(2.0));

  // Factored application matches the dense covariance at small n.
  const CounterRng rng(23, 0);
  Ensemble random;
  random.members.resize(6, 5);
  std::uint64_t c = 0;
  for (Index i = 0; i < random.members.size(); ++i) {
    random.members.data()[i] = rng.normal(c++);
  }
  const CovarianceFactor s = sample_covariance(random);
  const Matrix dense = deviation_matrix(random) *
                       deviation_matrix(random).transpose() / 4.0;
  Vector v(6);
  for (Index i = 0; i < 6; ++i) v[i] = rng.normal(c++);
  CHECK((s.apply(v) - dense * v).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((s.dense() - dense).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("recenter_ensemble pins the empirical mean") {
  const CounterRng rng(31, 0);
  Ensemble e;
  e.members.resize(3, 5);
  std::uint64_t c = 0;
  for (Index i = 0; i < e.members.size(); ++i) {
    e.members.data()[i] = rng.normal(c++);
  }
  const Matrix anomalies_before = anomaly_matrix(e);
  StateVector target(3);
  target << 1.0, -2.0, 3.0;
  recenter_ensemble(e, target);
  CHECK((empirical_mean(e) - target).lpNorm<Eigen::Infinity>() < 1e-14);
  CHECK((anomaly_matrix(e) - anomalies_before).lpNorm<Eigen::Infinity>() < 1e-13);
}

TEST_CASE("propagate_ensemble") {
  const CounterRng rng(47, 0);
  Ensemble e0;
  e0.members.resize(3, 4);
  std::uint64_t c = 0;
  for (Index i = 0; i < e0.members.size(); ++i) {
    e0.members.data()[i] = rng.normal(c++);
  }

  SUBCASE("zero steps keeps a single block") {
    const LinearModel identity(Matrix::Identity(3, 3));
    const SnapshotMatrix snaps = propagate_ensemble(identity, e0, 0);
    CHECK(snaps.blocks.size() == 1);
    CHECK(snaps.blocks[0].members == e0.members);
  }

  SUBCASE("identity model repeats the block") {
    const LinearModel identity(Matrix::Identity(3, 3));
    const SnapshotMatrix snaps = propagate_ensemble(identity, e0, 3);
    CHECK(snaps.num_steps() == 3);
    for (const Ensemble& block : snaps.blocks) {
      CHECK(block.members == e0.members);
    }
  }

  SUBCASE("linear model matches the repeated matrix-vector oracle") {
    Matrix a(3, 3);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = 0.3 * rng.normal(c++);
    const LinearModel model(a);
    const SnapshotMatrix snaps = propagate_ensemble(model, e0, 4);
    for (Index member = 0; member < e0.member_count(); ++member) {
      StateVector x = e0.members.col(member);
      for (int k = 0; k <= 4; ++k) {
        CHECK((snaps.blocks[static_cast<std::size_t>(k)].members.col(member) - x)
                  .lpNorm<Eigen::Infinity>() < 1e-12);
        x = a * x;
      }
    }
    CHECK(snaps.blocks[2].time_index == 2);
  }
}

TEST_CASE("anomaly basis blocks are mean-centered") {
  const CounterRng rng(53, 0);
  Ensemble e0;
  e0.members.resize(4, 5);
  std::uint64_t c = 0;
  for (Index i = 0; i < e0.members.size(); ++i) {
    e0.members.data()[i] = rng.normal(c++);
  }
  Matrix a = 0.2 * Matrix::Identity(4, 4);
  a(0, 1) = 0.1;
  const SnapshotMatrix snaps = propagate_ensemble(LinearModel(a), e0, 2);
  const AnomalyBasis basis = build_anomaly_basis(snaps);
  CHECK(basis.num_steps() == 2);
  for (std::size_t k = 0; k < basis.psi.size(); ++k) {
    const Ensemble& block = snaps.blocks[k];
    const Matrix expect = anomaly_matrix(block);
    CHECK((basis.psi[k] - expect).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((basis.means[k] - empirical_mean(block)).lpNorm<Eigen::Infinity>() ==
          0.0);
    // The dropped deviation closes the sum to zero.
    const Vector dropped =
        block.members.col(block.nens()) - empirical_mean(block);
    CHECK((basis.psi[k].rowwise().sum() + dropped).lpNorm<Eigen::Infinity>() <
          1e-12);
  }
}
