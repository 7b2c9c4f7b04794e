#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "noisywalk/dynamics.hpp"
#include "noisywalk/ensemble.hpp"

namespace nw {

enum class ObservableKind { trace_distance, ipr, momentum, population };

/// Scalar time series derived from averaged states.
struct ObservableSeries {
  ObservableKind kind = ObservableKind::ipr;
  std::vector<double> times;
  std::vector<double> values;
};

/// Central-difference discretization of -i d/dx:
/// (P psi)_j = i (psi_{j+1} - psi_{j-1}) / 2. A plane wave exp(-i k j) has
/// expectation +sin k.
struct MomentumOperator {
  Eigen::MatrixXcd matrix;
  Boundary boundary = Boundary::open;
};

MomentumOperator momentum_operator(int n, Boundary boundary = Boundary::open);

/// Half the trace norm of rho1 - rho2.
double trace_distance(const Eigen::MatrixXcd& rho1, const Eigen::MatrixXcd& rho2);
ObservableSeries trace_distance_series(const AveragedState& a, const AveragedState& b);

/// Accumulated positive increments of D over the sampled grid.
double blp_fixed_pair(const ObservableSeries& distance);

/// Sum of squared populations.
double ipr(const Eigen::MatrixXcd& rho);
ObservableSeries ipr_series(const AveragedState& avg);

struct WindowAverage {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t samples = 0;
};

/// Mean of the last `window` fraction of the series, with its spread.
WindowAverage long_time_ipr(const ObservableSeries& series, double window = 0.2);

/// Re trace(rho P); throws NumericalInvariantError if the imaginary residue
/// exceeds 1e-10.
double momentum_expectation(const Eigen::MatrixXcd& rho, const MomentumOperator& p);
ObservableSeries momentum_series(const AveragedState& avg, const MomentumOperator& p);

/// Site populations at grid index t (1-based site j is entry j-1).
std::vector<double> populations(const AveragedState& avg, std::size_t t_index);

/// First grid time at which more than `threshold` probability sits on the
/// outermost `margin` sites at either end; the last grid time if never.
double edge_arrival_time(const AveragedState& avg, int margin, double threshold);

/// Amplitudes exp(-(j-center)^2 / (4 delta^2)) exp(-i k0 j) for j = 1..N,
/// renormalized. delta is the standard deviation of the position probability.
WalkerState gaussian_state(int n, double k0, double delta, double center);

/// |j> with 1-based j.
WalkerState localized_state(int n, int j);

}  // namespace nw
