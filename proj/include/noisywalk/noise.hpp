#pragma once

#include <vector>

#include "noisywalk/random.hpp"

namespace nw {

/// Assignment of lattice sites to contiguous noise domains.
///
/// Domain indices are 0-based and nondecreasing along the chain; consecutive
/// sites differ by 0 (same domain) or 1 (a cut between them).
struct DomainPartition {
  std::vector<int> site_to_domain;
  int domain_count = 0;

  /// Validates the contiguity invariants and fills in domain_count.
  static DomainPartition from_site_domains(std::vector<int> site_to_domain);

  int size() const { return static_cast<int>(site_to_domain.size()); }
  std::vector<int> domain_lengths() const;
};

/// One realization of a dichotomic +-1 telegraph process on [0, t_max].
struct RtnTrajectory {
  int initial_sign = 1;
  std::vector<double> switch_times;  // strictly increasing, all < t_max
  double t_max = 0.0;
};

/// Noise parameters. Amplitudes and times are in units of the uniform hopping
/// nu0; the percolation regime is nu == nu0.
struct NoiseConfig {
  double gamma = 1.0;
  double p = 0.0;
  double nu0 = 1.0;
  double nu = 1.0;

  void validate() const;
  bool percolation() const { return nu == nu0; }
};

/// Cuts each of the n-1 adjacencies independently with probability 1-p.
DomainPartition sample_domains(int n, double p, RandomStream& rng);

/// Probability of observing m domains: C(n-1, m-1) (1-p)^(m-1) p^(n-m).
double domain_count_pmf(int n, double p, int m);

/// Average domain length 1 + p + ... + p^(n-1); equals n at p = 1.
double mean_domain_length(int n, double p);

/// Inverse of mean_domain_length in p (the map is strictly increasing).
double p_from_mean_length(int n, double lbar);

/// Samples a telegraph trajectory: random initial sign, exponential waiting
/// times with mean 1/gamma. gamma == 0 gives frozen noise.
RtnTrajectory sample_rtn(double gamma, double t_max, RandomStream& rng);

/// Sign at time t. The value at a switch time is the post-switch sign.
int rtn_value(const RtnTrajectory& traj, double t);

}  // namespace nw
