#include "noisywalk/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nw {

DomainPartition DomainPartition::from_site_domains(std::vector<int> site_to_domain) {
  if (site_to_domain.empty() || site_to_domain.front() != 0) {
    throw std::invalid_argument("domain partition must start with domain 0");
  }
  for (std::size_t j = 1; j < site_to_domain.size(); ++j) {
    const int step = site_to_domain[j] - site_to_domain[j - 1];
    if (step != 0 && step != 1) {
      throw std::invalid_argument("domains must be contiguous runs of sites");
    }
  }
  DomainPartition out;
  out.domain_count = site_to_domain.back() + 1;
  out.site_to_domain = std::move(site_to_domain);
  return out;
}

std::vector<int> DomainPartition::domain_lengths() const {
  std::vector<int> lengths(static_cast<std::size_t>(domain_count), 0);
  for (int d : site_to_domain) ++lengths[static_cast<std::size_t>(d)];
  return lengths;
}

void NoiseConfig::validate() const {
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0, 1]");
  if (!(nu0 > 0.0)) throw std::invalid_argument("nu0 must be > 0");
  if (!(nu >= 0.0)) throw std::invalid_argument("nu must be >= 0");
}

DomainPartition sample_domains(int n, double p, RandomStream& rng) {
  if (n < 2) throw std::invalid_argument("sample_domains: need at least 2 sites");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sample_domains: p outside [0, 1]");
  DomainPartition out;
  out.site_to_domain.resize(static_cast<std::size_t>(n));
  int domain = 0;
  out.site_to_domain[0] = 0;
  const double cut_probability = 1.0 - p;
  for (int j = 1; j < n; ++j) {
    if (rng.uniform() < cut_probability) ++domain;
    out.site_to_domain[static_cast<std::size_t>(j)] = domain;
  }
  out.domain_count = domain + 1;
  return out;
}

double domain_count_pmf(int n, double p, int m) {
  if (n < 1 || m < 1 || m > n) {
    throw std::invalid_argument("domain_count_pmf: M must lie in [1, N]");
  }
  // C(n-1, m-1) by the multiplicative formula over the shorter side.
  const int top = n - 1;
  const int k = std::min(m - 1, top - (m - 1));
  double binom = 1.0;
  for (int i = 1; i <= k; ++i) {
    binom = binom * static_cast<double>(top - k + i) / static_cast<double>(i);
  }
  return binom * std::pow(1.0 - p, m - 1) * std::pow(p, n - m);
}

double mean_domain_length(int n, double p) {
  if (n < 2) throw std::invalid_argument("mean_domain_length: need at least 2 sites");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mean_domain_length: p outside [0, 1]");
  if (p == 1.0) return static_cast<double>(n);
  // Horner form of 1 + p + ... + p^(n-1); stable near p = 1.
  double sum = 1.0;
  for (int k = 1; k < n; ++k) sum = 1.0 + p * sum;
  return sum;
}

double p_from_mean_length(int n, double lbar) {
  if (n < 2) throw std::invalid_argument("p_from_mean_length: need at least 2 sites");
  if (!(lbar >= 1.0 && lbar <= static_cast<double>(n))) {
    throw std::invalid_argument("p_from_mean_length: Lbar must lie in [1, N], got " +
                                std::to_string(lbar));
  }
  if (lbar == 1.0) return 0.0;
  if (lbar == static_cast<double>(n)) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  // Bisect down to adjacent doubles.
  while (true) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (mean_domain_length(n, mid) < lbar) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double err_lo = std::abs(mean_domain_length(n, lo) - lbar);
  const double err_hi = std::abs(mean_domain_length(n, hi) - lbar);
  return err_lo <= err_hi ? lo : hi;
}

RtnTrajectory sample_rtn(double gamma, double t_max, RandomStream& rng) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("sample_rtn: gamma must be >= 0");
  if (!(t_max > 0.0)) throw std::invalid_argument("sample_rtn: t_max must be > 0");
  RtnTrajectory traj;
  traj.t_max = t_max;
  traj.initial_sign = rng.sign();
  if (gamma == 0.0) return traj;
  double t = rng.exponential(gamma);
  while (t < t_max) {
    // A zero-length wait would duplicate a switch time; parity of the pair
    // cancels, so drop both.
    if (!traj.switch_times.empty() && t <= traj.switch_times.back()) {
      traj.switch_times.pop_back();
    } else {
      traj.switch_times.push_back(t);
    }
    t += rng.exponential(gamma);
  }
  return traj;
}

int rtn_value(const RtnTrajectory& traj, double t) {
  if (!(t >= 0.0 && t <= traj.t_max)) {
    throw std::invalid_argument("rtn_value: t outside [0, t_max]");
  }
  const auto flips = std::upper_bound(traj.switch_times.begin(), traj.switch_times.end(), t) -
                     traj.switch_times.begin();
  return (flips % 2 == 0) ? traj.initial_sign : -traj.initial_sign;
}

}  // namespace nw
