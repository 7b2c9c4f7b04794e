#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "noisywalk/dynamics.hpp"
#include "noisywalk/noise.hpp"

namespace nw {

/// Initial walker state description; sites are 1-based.
struct InitialState {
  enum class Kind { localized, gaussian };
  Kind kind = Kind::localized;
  int site = 1;             // localized
  double k0 = 0.0;          // gaussian
  double delta = 1.0;       // gaussian
  double center = 0.0;      // gaussian; 0 selects N/2

  static InitialState localized(int site);
  static InitialState gaussian(double k0, double delta, double center = 0.0);

  WalkerState build(int n) const;
  std::string describe() const;
};

struct RunConfig {
  int lattice_size = 50;
  int realizations = 2000;
  double tau = 10.0;
  int grid_points = 200;
  NoiseConfig noise;
  PropagatorSpec propagator;
  ChainOptions chain;
  std::uint64_t seed = 1;
  std::vector<InitialState> initial_states;  // one state, or a trace-distance pair
  int workers = 1;
  int batch_groups = 10;               // realizations split into this many groups
  std::size_t memory_limit_bytes = std::size_t{4} << 30;
  int checkpoint_every = 0;            // realizations; 0 disables
  std::string checkpoint_path;
  std::uint64_t config_hash = 0;       // stamped into checkpoints

  void validate() const;
  std::vector<double> grid() const;
  std::size_t required_bytes() const;

  /// Master seed mixed with (gamma, p): runs that differ in those parameters
  /// draw independent noise, while identical parameters reproduce exactly.
  std::uint64_t stream_seed() const;
};

/// Noise-averaged density matrices on the output grid.
struct AveragedState {
  std::vector<double> times;
  std::vector<Eigen::MatrixXcd> rho;
};

/// Called once per realization group with that group's own averages (one
/// AveragedState per configured initial state).
using GroupCallback = std::function<void(int group, const std::vector<AveragedState>& averages)>;

struct EnsembleResult {
  std::vector<AveragedState> states;  // one per initial state
  int groups = 0;
};

/// Averages |psi_r(t)><psi_r(t)| over R realizations. Every configured initial
/// state sees the same noise in realization r. The output is a pure function of
/// the config, independent of the worker count.
EnsembleResult run_ensemble(const RunConfig& config, const GroupCallback& on_group = {});

/// Samples the partition and per-domain trajectories of realization r.
struct NoiseRealization {
  DomainPartition partition;
  std::vector<RtnTrajectory> trajectories;
};
NoiseRealization sample_realization(const RunConfig& config, std::uint64_t index);

/// trace(rho^2) at one grid time.
double purity(const AveragedState& avg, std::size_t t_index);
double purity(const Eigen::MatrixXcd& rho);

/// Checks trace, Hermiticity, positivity (optional) and diagonal bounds; throws
/// NumericalInvariantError with a description on failure.
void check_density_invariants(const AveragedState& avg, bool check_positivity,
                              const std::string& label = {});

/// Accumulator snapshot on disk: header with config hash, then row-major
/// complex doubles for every state and grid time.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t realizations_done = 0;
  std::uint32_t lattice_size = 0;
  std::uint32_t grid_points = 0;
  std::uint32_t state_count = 0;
  std::vector<Complex> data;  // running sums, not yet divided by the count
};
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace nw
