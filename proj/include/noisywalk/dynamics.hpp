#pragma once

#include <complex>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "noisywalk/noise.hpp"

namespace nw {

using Complex = std::complex<double>;

/// Pure single-particle state in the site basis.
struct WalkerState {
  Eigen::VectorXcd amplitudes;

  int size() const { return static_cast<int>(amplitudes.size()); }
  double norm() const { return amplitudes.norm(); }
};

enum class Boundary { open, periodic };

/// Lattice geometry and the constant on-site energy. A uniform diagonal only
/// contributes a global phase.
struct ChainOptions {
  Boundary boundary = Boundary::open;
  double onsite_energy = 0.0;
};

/// Link amplitudes nu0 + nu g_d(t). Entry j couples sites j and j+1; with
/// periodic boundaries the extra last entry couples site N-1 back to site 0.
struct HoppingProfile {
  std::vector<double> link_amplitudes;
};

enum class PropagatorMethod { exact_event, taylor_grid };

struct PropagatorSpec {
  PropagatorMethod method = PropagatorMethod::exact_event;
  int taylor_order = 8;
  std::optional<double> dt_cap;  // default: min(0.5, 0.2 / gamma)

  double resolved_dt_cap(double gamma) const;
  void validate() const;
};

/// Number of links for a chain of n sites.
int link_count(int n, Boundary boundary);

/// Link j inherits the domain of site j.
HoppingProfile hopping_profile(const DomainPartition& partition,
                               std::span<const RtnTrajectory> trajectories, double t,
                               const NoiseConfig& cfg, Boundary boundary = Boundary::open);

/// H psi with H = onsite - sum_j A_j (|j><j+1| + |j+1><j|).
WalkerState apply_hamiltonian(const WalkerState& state, const HoppingProfile& profile,
                              double onsite_energy = 0.0);

/// Raw kernel behind apply_hamiltonian; `out` must not alias `in`.
void apply_hamiltonian(std::span<const Complex> in, std::span<Complex> out,
                       std::span<const double> links, double onsite_energy);

/// Scratch buffers reused across propagation steps.
struct PropagationWorkspace {
  std::vector<Complex> a, b, c, acc;
  std::vector<double> bessel;
  void resize(std::size_t n);
};

/// psi <- exp(-i H dt) psi for constant H, via a Chebyshev expansion whose
/// Bessel coefficients are truncated below 1e-17. Exact to rounding.
void exact_step(std::span<Complex> psi, std::span<const double> links, double onsite_energy,
                double dt, PropagationWorkspace& ws);

/// psi <- sum_{k<=order} (-i H dt)^k / k! psi.
void taylor_step(std::span<Complex> psi, std::span<const double> links, double onsite_energy,
                 double dt, int order, PropagationWorkspace& ws);

/// Bessel functions J_0..J_kmax at x >= 0 by Miller's backward recurrence.
void bessel_j_sequence(double x, int kmax, std::vector<double>& out);

/// One event on the merged time axis.
struct TimeEvent {
  double time = 0.0;
  std::optional<int> grid_index;     // set when the event is an output time
  std::vector<int> flipped_domains;  // domains that switch sign at this time
};

/// Sorted union of all switch times and grid times, merged within 1e-15.
std::vector<TimeEvent> merge_event_times(std::span<const RtnTrajectory> trajectories,
                                         std::span<const double> grid);

/// Propagates several initial states through the same noise realization.
/// `out` receives the amplitudes laid out as [state][grid index][site] and
/// must hold initials.size() * grid.size() * N entries.
void evolve_states_into(std::span<const WalkerState> initials, const DomainPartition& partition,
                        std::span<const RtnTrajectory> trajectories, const NoiseConfig& cfg,
                        const PropagatorSpec& spec, std::span<const double> grid,
                        const ChainOptions& chain, std::span<Complex> out);

/// Propagates one noise realization and returns the state at every grid time.
std::vector<WalkerState> evolve_realization(const WalkerState& initial,
                                            const DomainPartition& partition,
                                            std::span<const RtnTrajectory> trajectories,
                                            const NoiseConfig& cfg, const PropagatorSpec& spec,
                                            std::span<const double> grid,
                                            const ChainOptions& chain = {});

}  // namespace nw
