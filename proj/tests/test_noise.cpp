#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "noisywalk/noise.hpp"
#include "noisywalk/random.hpp"

using namespace nw;

namespace {

// Enumerates all 2^(n-1) cut patterns and returns the exact P(M).
std::vector<double> enumerate_domain_counts(int n, double p) {
  std::vector<double> pm(static_cast<std::size_t>(n) + 1, 0.0);
  for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
    int cuts = 0;
    double weight = 1.0;
    for (int j = 0; j < n - 1; ++j) {
      const bool cut = (mask >> j) & 1u;
      cuts += cut;
      weight *= cut ? (1.0 - p) : p;
    }
    pm[static_cast<std::size_t>(cuts) + 1] += weight;
  }
  return pm;
}

}  // namespace

TEST_CASE("sample_domains: degenerate probabilities") {
  RandomStream rng(7);
  const auto one = sample_domains(100, 1.0, rng);
  CHECK(one.domain_count == 1);
  CHECK(one.domain_lengths() == std::vector<int>{100});

  const auto all = sample_domains(100, 0.0, rng);
  CHECK(all.domain_count == 100);
  for (int len : all.domain_lengths()) CHECK(len == 1);

  CHECK_THROWS_AS(sample_domains(1, 0.5, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_domains(10, 1.5, rng), std::invalid_argument);
}

TEST_CASE("sample_domains: partition invariants hold on random draws") {
  RandomStream rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + trial % 40;
    const double p = (trial % 17) / 16.0;
    const auto part = sample_domains(n, p, rng);
    REQUIRE(part.size() == n);
    CHECK(part.site_to_domain.front() == 0);
    for (int j = 1; j < n; ++j) {
      const int step = part.site_to_domain[static_cast<std::size_t>(j)] - part.site_to_domain[static_cast<std::size_t>(j - 1)];
      CHECK((step == 0 || step == 1));
    }
    CHECK(part.domain_count == part.site_to_domain.back() + 1);
    CHECK(part.domain_count >= 1);
    CHECK(part.domain_count <= n);
    const auto lengths = part.domain_lengths();
    CHECK(std::accumulate(lengths.begin(), lengths.end(), 0) == n);
  }
}

TEST_CASE("sample_domains: N=3, p=0.5 matches cut-pattern enumeration") {
  const auto exact = enumerate_domain_counts(3, 0.5);
  CHECK(exact[1] == doctest::Approx(0.25));
  CHECK(exact[2] == doctest::Approx(0.5));
  CHECK(exact[3] == doctest::Approx(0.25));

  RandomStream rng(3);
  const int draws = 200000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_domains(3, 0.5, rng).domain_count)];
  for (int m = 1; m <= 3; ++m) {
    const double q = exact[static_cast<std::size_t>(m)];
    const double se = std::sqrt(q * (1 - q) / draws);
    CHECK(std::abs(counts[static_cast<std::size_t>(m)] / double(draws) - q) < 3 * se);
  }
}

TEST_CASE("from_site_domains rejects non-contiguous assignments") {
  CHECK(DomainPartition::from_site_domains({0, 0, 1, 1, 2}).domain_count == 3);
  CHECK_THROWS_AS(DomainPartition::from_site_domains({0, 2, 2}), std::invalid_argument);
  CHECK_THROWS_AS(DomainPartition::from_site_domains({1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(DomainPartition::from_site_domains({0, 1, 0}), std::invalid_argument);
}

TEST_CASE("domain_count_pmf") {
  CHECK(domain_count_pmf(3, 0.5, 2) == doctest::Approx(enumerate_domain_counts(3, 0.5)[2]).epsilon(1e-15));
  CHECK(domain_count_pmf(37, 1.0, 1) == 1.0);
  CHECK(domain_count_pmf(37, 0.0, 37) == 1.0);
  CHECK(domain_count_pmf(37, 1.0, 2) == 0.0);
  CHECK_THROWS_AS(domain_count_pmf(5, 0.5, 0), std::invalid_argument);
  CHECK_THROWS_AS(domain_count_pmf(5, 0.5, 6), std::invalid_argument);

  SUBCASE("agrees with enumeration for small lattices") {
    for (int n = 2; n <= 12; ++n) {
      for (double p : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
        const auto exact = enumerate_domain_counts(n, p);
        for (int m = 1; m <= n; ++m) {
          CHECK(std::abs(domain_count_pmf(n, p, m) - exact[static_cast<std::size_t>(m)]) < 1e-14);
        }
      }
    }
  }
  SUBCASE("normalized") {
    for (int n : {2, 3, 10, 50, 100, 400}) {
      for (double p : {0.0, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0}) {
        double total = 0.0;
        for (int m = 1; m <= n; ++m) total += domain_count_pmf(n, p, m);
        CHECK(std::abs(total - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("domain histogram matches the binomial law (N=10, p=0.3)") {
  RandomStream rng(2024);
  const int n = 10;
  const int draws = 100000;
  std::vector<int> counts(n + 1, 0);
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_domains(n, 0.3, rng).domain_count)];
  double tv = 0.0;
  for (int m = 1; m <= n; ++m) tv += 0.5 * std::abs(counts[static_cast<std::size_t>(m)] / double(draws) - domain_count_pmf(n, 0.3, m));
  CHECK(tv < 0.01);
}

TEST_CASE("mean_domain_length") {
  CHECK(mean_domain_length(100, 1.0) == 100.0);
  CHECK(mean_domain_length(100, 0.0) == 1.0);
  CHECK(mean_domain_length(3, 0.5) == doctest::Approx(1.0 + 0.5 + 0.25).epsilon(1e-15));
  // Closed form away from p = 1.
  CHECK(mean_domain_length(40, 0.8) == doctest::Approx((std::pow(0.8, 40) - 1) / (0.8 - 1)).epsilon(1e-13));
  // Continuous as p -> 1.
  CHECK(mean_domain_length(100, 1.0 - 1e-12) == doctest::Approx(100.0).epsilon(1e-8));
  CHECK_THROWS_AS(mean_domain_length(1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(mean_domain_length(10, -0.1), std::invalid_argument);
}

TEST_CASE("p_from_mean_length") {
  CHECK(p_from_mean_length(50, 1.0) == 0.0);
  CHECK(p_from_mean_length(50, 50.0) == 1.0);
  // For large N the sum tends to 1/(1-p).
  CHECK(std::abs(p_from_mean_length(1000, 2.0) - 0.5) < 1e-12);
  CHECK(std::abs(mean_domain_length(100, p_from_mean_length(100, 37.5)) - 37.5) < 1e-12);
  CHECK_THROWS_AS(p_from_mean_length(50, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(p_from_mean_length(50, 51.0), std::invalid_argument);

  SUBCASE("round trip on a grid of lengths") {
    for (int n : {2, 10, 50, 100, 1000}) {
      for (int i = 0; i <= 40; ++i) {
        const double lbar = 1.0 + (n - 1.0) * i / 40.0;
        CHECK(std::abs(mean_domain_length(n, p_from_mean_length(n, lbar)) - lbar) < 1e-9);
      }
    }
  }
}

TEST_CASE("sample_rtn: frozen noise at gamma = 0") {
  RandomStream rng(5);
  int plus = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto traj = sample_rtn(0.0, 20.0, rng);
    CHECK(traj.switch_times.empty());
    CHECK(rtn_value(traj, 0.0) == rtn_value(traj, 20.0));
    plus += traj.initial_sign == 1;
  }
  CHECK(plus > 430);
  CHECK(plus < 570);
  CHECK_THROWS_AS(sample_rtn(-1.0, 1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_rtn(1.0, 0.0, rng), std::invalid_argument);
}

TEST_CASE("sample_rtn: switch times are strictly increasing and inside the horizon") {
  RandomStream rng(9);
  for (int i = 0; i < 2000; ++i) {
    const auto traj = sample_rtn(3.0, 5.0, rng);
    for (std::size_t k = 0; k < traj.switch_times.size(); ++k) {
      CHECK(traj.switch_times[k] >= 0.0);
      CHECK(traj.switch_times[k] < 5.0);
      if (k > 0) CHECK(traj.switch_times[k] > traj.switch_times[k - 1]);
    }
  }
}

TEST_CASE("sample_rtn: exponential waiting times and e^{-2 gamma t} autocorrelation") {
  RandomStream rng(42);
  const double gamma = 1.0;
  const int trajectories = 100000;
  // Horizon long enough that the first three waits are never censored.
  const double horizon = 60.0;
  double sum = 0.0;
  double sum2 = 0.0;
  long count = 0;
  std::vector<double> lags{0.5, 1.0, 2.0};
  std::vector<double> corr(lags.size(), 0.0);
  for (int i = 0; i < trajectories; ++i) {
    const auto traj = sample_rtn(gamma, horizon, rng);
    double prev = 0.0;
    for (std::size_t k = 0; k < 3 && k < traj.switch_times.size(); ++k) {
      const double w = traj.switch_times[k] - prev;
      prev = traj.switch_times[k];
      sum += w;
      sum2 += w * w;
      ++count;
    }
    for (std::size_t l = 0; l < lags.size(); ++l) corr[l] += rtn_value(traj, lags[l]) * rtn_value(traj, 0.0);
  }
  const double mean = sum / count;
  const double se = std::sqrt((sum2 / count - mean * mean) / count);
  CHECK(std::abs(mean - 1.0 / gamma) < 3 * se);
  for (std::size_t l = 0; l < lags.size(); ++l) {
    const double expected = std::exp(-2.0 * gamma * lags[l]);
    const double c = corr[l] / trajectories;
    const double se_c = std::sqrt((1.0 - expected * expected) / trajectories);
    CHECK(std::abs(c - expected) < 3 * se_c);
  }
}

TEST_CASE("rtn_value") {
  RtnTrajectory flat{1, {}, 5.0};
  CHECK(rtn_value(flat, 0.0) == 1);
  CHECK(rtn_value(flat, 4.9) == 1);

  RtnTrajectory one{1, {1.0}, 5.0};
  CHECK(rtn_value(one, 0.5) == 1);
  CHECK(rtn_value(one, 1.5) == -1);
  // Right-continuous: the switch instant already carries the new sign.
  CHECK(rtn_value(one, 1.0) == -1);
  CHECK(rtn_value(one, std::nextafter(1.0, 0.0)) == 1);

  RtnTrajectory two{-1, {0.2, 0.4}, 5.0};
  CHECK(rtn_value(two, 0.5) == -1);
  CHECK(rtn_value(two, 0.3) == 1);

  CHECK_THROWS_AS(rtn_value(one, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(rtn_value(one, 5.1), std::invalid_argument);
}

TEST_CASE("child streams depend only on (seed, index)") {
  RandomStream a = RandomStream::child(99, 17);
  RandomStream other = RandomStream::child(99, 3);
  (void)other.next_u64();
  RandomStream b = RandomStream::child(99, 17);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(RandomStream::child(99, 17).next_u64() != RandomStream::child(99, 18).next_u64());
  CHECK(RandomStream::child(99, 17).next_u64() != RandomStream::child(98, 17).next_u64());
}
