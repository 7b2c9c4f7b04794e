#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "noisywalk/ensemble.hpp"
#include "noisywalk/errors.hpp"
#include "noisywalk/observables.hpp"
#include "support.hpp"

using namespace nw;
using nw::testing::random_density;

namespace {

Eigen::MatrixXcd projector(const WalkerState& s) { return s.amplitudes * s.amplitudes.adjoint(); }

ObservableSeries series(std::vector<double> values) {
  ObservableSeries s;
  for (std::size_t i = 0; i < values.size(); ++i) s.times.push_back(static_cast<double>(i));
  s.values = std::move(values);
  return s;
}

// <psi| P |psi> written out as a sum over sites.
double momentum_oracle(const Eigen::VectorXcd& psi) {
  Complex total = 0.0;
  const Eigen::Index n = psi.size();
  for (Eigen::Index j = 0; j < n; ++j) {
    const Complex right = j + 1 < n ? psi(j + 1) : Complex(0.0);
    const Complex left = j > 0 ? psi(j - 1) : Complex(0.0);
    total += std::conj(psi(j)) * Complex(0.0, 0.5) * (right - left);
  }
  return total.real();
}

}  // namespace

TEST_CASE("trace_distance examples") {
  const auto rho = random_density(5, 1);
  CHECK(trace_distance(rho, rho) == doctest::Approx(0.0));
  CHECK(trace_distance(projector(localized_state(4, 1)), projector(localized_state(4, 2))) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(trace_distance(projector(localized_state(2, 1)), Eigen::MatrixXcd::Identity(2, 2) / 2.0) ==
        doctest::Approx(0.5).epsilon(1e-14));
  Eigen::MatrixXcd skew = Eigen::MatrixXcd::Identity(2, 2) / 2.0;
  skew(0, 1) = 0.1;
  CHECK_THROWS_AS(trace_distance(skew, skew), std::invalid_argument);
  CHECK_THROWS_AS(trace_distance(rho, random_density(4, 2)), std::invalid_argument);
}

TEST_CASE("trace_distance is a metric on density matrices") {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const int n = 2 + static_cast<int>(s % 7);
    const auto a = random_density(n, 3 * s);
    const auto b = random_density(n, 3 * s + 1);
    const auto c = random_density(n, 3 * s + 2);
    const double ab = trace_distance(a, b);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0 + 1e-12);
    CHECK(std::abs(ab - trace_distance(b, a)) < 1e-10);
    CHECK(trace_distance(a, c) <= ab + trace_distance(b, c) + 1e-10);
  }
}

TEST_CASE("blp_fixed_pair examples") {
  CHECK(blp_fixed_pair(series({1.0, 0.8, 0.5, 0.1})) == 0.0);
  CHECK(blp_fixed_pair(series({0.5, 0.3, 0.4, 0.2})) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(blp_fixed_pair(series({0.2, 0.5, 0.4, 0.6})) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK_THROWS_AS(blp_fixed_pair(series({0.3})), std::invalid_argument);
}

TEST_CASE("noiseless pair has no information backflow") {
  RunConfig c;
  c.lattice_size = 30;
  c.realizations = 1;
  c.tau = 10.0;
  c.grid_points = 101;
  c.noise.nu = 0.0;
  c.initial_states = {InitialState::localized(15), InitialState::localized(16)};
  const auto res = run_ensemble(c);
  const auto d = trace_distance_series(res.states[0], res.states[1]);
  for (double v : d.values) CHECK(std::abs(v - 1.0) < 1e-12);
  CHECK(blp_fixed_pair(d) < 1e-12);
}

TEST_CASE("ipr examples") {
  CHECK(ipr(projector(localized_state(7, 3))) == 1.0);
  CHECK(ipr(Eigen::MatrixXcd::Identity(8, 8) / 8.0) == doctest::Approx(1.0 / 8.0).epsilon(1e-15));

  RunConfig c;
  c.lattice_size = 2;
  c.realizations = 1;
  c.tau = std::numbers::pi / 4.0;
  c.grid_points = 2;
  c.noise.nu = 0.0;
  c.initial_states = {InitialState::localized(1)};
  const auto res = run_ensemble(c);
  CHECK(std::abs(ipr(res.states[0].rho.back()) - 0.5) < 1e-12);
}

TEST_CASE("long_time_ipr") {
  const auto flat = long_time_ipr(series(std::vector<double>(50, 0.37)));
  CHECK(flat.mean == doctest::Approx(0.37).epsilon(1e-15));
  CHECK(flat.stddev == doctest::Approx(0.0));
  CHECK(flat.samples == 10);
  CHECK(long_time_ipr(series(std::vector<double>(10, 0.01))).mean == doctest::Approx(0.01).epsilon(1e-15));
  CHECK_THROWS_AS(long_time_ipr(series({}), 0.2), std::invalid_argument);
  CHECK_THROWS_AS(long_time_ipr(series({1.0, 2.0}), 0.0), std::invalid_argument);

  RunConfig c;
  c.lattice_size = 100;
  c.realizations = 1;
  c.tau = 40.0;
  c.grid_points = 201;
  c.noise.nu = 0.0;
  c.initial_states = {InitialState::localized(50)};
  const auto res = run_ensemble(c);
  const auto s = ipr_series(res.states[0]);
  double direct = 0.0;
  for (std::size_t i = s.values.size() - 41; i < s.values.size(); ++i) direct += ipr(res.states[0].rho[i]);
  CHECK(long_time_ipr(s).mean == doctest::Approx(direct / 41.0).epsilon(1e-14));
  CHECK(long_time_ipr(s).samples == 41);
}

TEST_CASE("momentum operator") {
  const auto p = momentum_operator(12);
  CHECK((p.matrix - p.matrix.adjoint()).cwiseAbs().maxCoeff() == 0.0);
  const auto real_state = random_density(12, 9).real().cast<Complex>().eval();
  // Real symmetric states carry no current.
  CHECK(std::abs(momentum_expectation(real_state, p)) < 1e-15);

  const auto wave = gaussian_state(100, std::numbers::pi / 2, 10.0, 50.0);
  const double value = momentum_expectation(projector(wave), momentum_operator(100));
  CHECK(value == doctest::Approx(momentum_oracle(wave.amplitudes)).epsilon(1e-13));
  CHECK(std::abs(value - 1.0) < 0.01);
  CHECK(value > 0.0);

  const auto still = gaussian_state(100, 0.0, 10.0, 50.0);
  CHECK(std::abs(momentum_expectation(projector(still), momentum_operator(100))) < 1e-10);

  SUBCASE("matches the site-sum oracle on random pure states") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Eigen::VectorXcd psi = nw::testing::random_vector(15, s).normalized();
      CHECK(momentum_expectation(psi * psi.adjoint(), momentum_operator(15)) ==
            doctest::Approx(momentum_oracle(psi)).epsilon(1e-12));
    }
  }
  SUBCASE("non-Hermitian input is rejected") {
    Eigen::MatrixXcd bad = Eigen::MatrixXcd::Zero(3, 3);
    bad(0, 1) = 1.0;
    CHECK_THROWS_AS(momentum_expectation(bad, momentum_operator(3)), NumericalInvariantError);
  }
}

TEST_CASE("gaussian_state") {
  const auto g = gaussian_state(100, std::numbers::pi / 2, 10.0, 50.0);
  CHECK(std::abs(g.norm() - 1.0) < 1e-12);
  const auto sym = gaussian_state(100, std::numbers::pi / 2, 5.0, 50.0);
  double mean = 0.0;
  for (int j = 1; j <= 100; ++j) mean += j * std::norm(sym.amplitudes(j - 1));
  CHECK(std::abs(mean - 50.0) < 1e-6);

  // Wide, unmodulated envelopes approach the uniform state.
  const auto wide = gaussian_state(20, 0.0, 19.9, 10.5);
  for (int j = 0; j < 20; ++j) {
    CHECK(wide.amplitudes(j).real() > 0.0);
    CHECK(std::abs(wide.amplitudes(j) - 1.0 / std::sqrt(20.0)) < 0.01);
  }
  CHECK_THROWS_AS(gaussian_state(10, 0.0, 0.0, 5.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_state(10, 0.0, 10.0, 5.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_state(10, 0.0, 2.0, 11.0), std::invalid_argument);
}

TEST_CASE("localized_state") {
  CHECK(ipr(projector(localized_state(100, 50))) == 1.0);
  for (int j = 1; j <= 5; ++j) {
    for (int k = 1; k <= 5; ++k) {
      const Complex overlap = localized_state(5, j).amplitudes.dot(localized_state(5, k).amplitudes);
      CHECK(overlap == Complex(j == k ? 1.0 : 0.0));
      if (j != k) {
        CHECK(trace_distance(projector(localized_state(5, j)), projector(localized_state(5, k))) ==
              doctest::Approx(1.0).epsilon(1e-14));
      }
    }
  }
  CHECK_THROWS_AS(localized_state(5, 0), std::invalid_argument);
  CHECK_THROWS_AS(localized_state(5, 6), std::invalid_argument);
}

TEST_CASE("populations and edge arrival") {
  AveragedState avg;
  avg.times = {0.0, 1.0, 2.0};
  avg.rho = {projector(localized_state(6, 3)), Eigen::MatrixXcd::Identity(6, 6) / 6.0, projector(localized_state(6, 6))};
  const auto pop = populations(avg, 1);
  REQUIRE(pop.size() == 6);
  for (double v : pop) CHECK(v == doctest::Approx(1.0 / 6.0));
  CHECK(edge_arrival_time(avg, 1, 0.5) == 2.0);
  CHECK(edge_arrival_time(avg, 1, 0.1) == 1.0);
  CHECK(edge_arrival_time(avg, 1, 2.0) == 2.0);
  CHECK_THROWS_AS(edge_arrival_time(avg, 4, 0.1), std::invalid_argument);
}

TEST_CASE("global noise conserves momentum until the packet reaches an edge") {
  RunConfig c;
  c.lattice_size = 60;
  c.realizations = 40;
  c.tau = 10.0;
  c.grid_points = 101;
  c.noise = NoiseConfig{1.0, 1.0, 1.0, 1.0};
  c.initial_states = {InitialState::gaussian(std::numbers::pi / 2, 5.0, 30.0)};
  const auto res = run_ensemble(c);
  const auto& avg = res.states[0];
  const auto p = momentum_series(avg, momentum_operator(60));
  const double arrival = edge_arrival_time(avg, 5, 1e-3);
  CHECK(arrival > 2.0);
  for (std::size_t i = 0; i < p.values.size() && avg.times[i] <= arrival; ++i) {
    CHECK(std::abs(p.values[i] - p.values[0]) < 1e-3 * std::abs(p.values[0]));
  }
}

TEST_CASE("ipr stays within its bounds for noisy ensembles") {
  RunConfig c;
  c.lattice_size = 16;
  c.realizations = 100;
  c.tau = 8.0;
  c.grid_points = 41;
  c.noise = NoiseConfig{0.5, 0.2, 1.0, 1.0};
  c.initial_states = {InitialState::localized(8)};
  const auto s = ipr_series(run_ensemble(c).states[0]);
  for (double v : s.values) {
    CHECK(v >= 1.0 / 16 - 1e-9);
    CHECK(v <= 1.0 + 1e-9);
  }
}
