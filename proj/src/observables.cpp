#include "noisywalk/observables.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "noisywalk/errors.hpp"

namespace nw {

namespace {

double hermiticity_error(const Eigen::MatrixXcd& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

}  // namespace

MomentumOperator momentum_operator(int n, Boundary boundary) {
  if (n < 2) throw std::invalid_argument("momentum_operator: need at least 2 sites");
  MomentumOperator p;
  p.boundary = boundary;
  p.matrix = Eigen::MatrixXcd::Zero(n, n);
  const Complex half_i(0.0, 0.5);
  for (int j = 0; j + 1 < n; ++j) {
    p.matrix(j, j + 1) += half_i;
    p.matrix(j + 1, j) -= half_i;
  }
  if (boundary == Boundary::periodic && n > 2) {
    p.matrix(n - 1, 0) += half_i;
    p.matrix(0, n - 1) -= half_i;
  }
  return p;
}

double trace_distance(const Eigen::MatrixXcd& rho1, const Eigen::MatrixXcd& rho2) {
  if (rho1.rows() != rho2.rows() || rho1.cols() != rho2.cols() || rho1.rows() != rho1.cols()) {
    throw std::invalid_argument("trace_distance: dimension mismatch");
  }
  if (hermiticity_error(rho1) > 1e-10 || hermiticity_error(rho2) > 1e-10) {
    throw std::invalid_argument("trace_distance: input is not Hermitian");
  }
  const Eigen::MatrixXcd diff = rho1 - rho2;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(diff, Eigen::EigenvaluesOnly);
  const double d = 0.5 * solver.eigenvalues().cwiseAbs().sum();
  return std::clamp(d, 0.0, 1.0);
}

ObservableSeries trace_distance_series(const AveragedState& a, const AveragedState& b) {
  if (a.rho.size() != b.rho.size()) throw std::invalid_argument("trace_distance_series: grid mismatch");
  ObservableSeries out;
  out.kind = ObservableKind::trace_distance;
  out.times = a.times;
  out.values.reserve(a.rho.size());
  for (std::size_t t = 0; t < a.rho.size(); ++t) out.values.push_back(trace_distance(a.rho[t], b.rho[t]));
  return out;
}

double blp_fixed_pair(const ObservableSeries& distance) {
  if (distance.values.size() < 2) throw std::invalid_argument("blp_fixed_pair: need at least 2 samples");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < distance.values.size(); ++i) {
    total += std::max(0.0, distance.values[i + 1] - distance.values[i]);
  }
  return total;
}

double ipr(const Eigen::MatrixXcd& rho) {
  return rho.diagonal().real().squaredNorm();
}

ObservableSeries ipr_series(const AveragedState& avg) {
  ObservableSeries out;
  out.kind = ObservableKind::ipr;
  out.times = avg.times;
  for (const auto& rho : avg.rho) out.values.push_back(ipr(rho));
  return out;
}

WindowAverage long_time_ipr(const ObservableSeries& series, double window) {
  if (!(window > 0.0 && window <= 1.0)) throw std::invalid_argument("long_time_ipr: window must lie in (0, 1]");
  const std::size_t size = series.values.size();
  const auto count = static_cast<std::size_t>(std::ceil(window * static_cast<double>(size) - 1e-9));
  if (count == 0) throw std::invalid_argument("long_time_ipr: empty window");
  WindowAverage out;
  out.samples = count;
  const auto first = series.values.end() - static_cast<std::ptrdiff_t>(count);
  out.mean = std::accumulate(first, series.values.end(), 0.0) / static_cast<double>(count);
  double var = 0.0;
  for (auto it = first; it != series.values.end(); ++it) var += (*it - out.mean) * (*it - out.mean);
  out.stddev = std::sqrt(var / static_cast<double>(count));
  return out;
}

double momentum_expectation(const Eigen::MatrixXcd& rho, const MomentumOperator& p) {
  if (rho.rows() != p.matrix.rows()) throw std::invalid_argument("momentum_expectation: dimension mismatch");
  // P is tridiagonal (plus corners when periodic); sum only its nonzeros.
  const Eigen::Index n = rho.rows();
  Complex trace(0.0, 0.0);
  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    trace += rho(j, j + 1) * p.matrix(j + 1, j) + rho(j + 1, j) * p.matrix(j, j + 1);
  }
  if (p.boundary == Boundary::periodic && n > 2) {
    trace += rho(0, n - 1) * p.matrix(n - 1, 0) + rho(n - 1, 0) * p.matrix(0, n - 1);
  }
  if (std::abs(trace.imag()) > 1e-10) {
    throw NumericalInvariantError("momentum expectation has imaginary residue " +
                                  std::to_string(trace.imag()));
  }
  return trace.real();
}

ObservableSeries momentum_series(const AveragedState& avg, const MomentumOperator& p) {
  ObservableSeries out;
  out.kind = ObservableKind::momentum;
  out.times = avg.times;
  for (const auto& rho : avg.rho) out.values.push_back(momentum_expectation(rho, p));
  return out;
}

std::vector<double> populations(const AveragedState& avg, std::size_t t_index) {
  if (t_index >= avg.rho.size()) throw std::invalid_argument("populations: time index out of range");
  const Eigen::VectorXd diag = avg.rho[t_index].diagonal().real();
  return {diag.data(), diag.data() + diag.size()};
}

double edge_arrival_time(const AveragedState& avg, int margin, double threshold) {
  if (avg.rho.empty()) throw std::invalid_argument("edge_arrival_time: empty series");
  const Eigen::Index n = avg.rho.front().rows();
  if (margin < 1 || 2 * margin > n) throw std::invalid_argument("edge_arrival_time: bad margin");
  for (std::size_t t = 0; t < avg.rho.size(); ++t) {
    const Eigen::VectorXd diag = avg.rho[t].diagonal().real();
    const double edge = diag.head(margin).sum() + diag.tail(margin).sum();
    if (edge > threshold) return avg.times[t];
  }
  return avg.times.back();
}

WalkerState gaussian_state(int n, double k0, double delta, double center) {
  if (n < 1) throw std::invalid_argument("gaussian_state: empty lattice");
  if (!(delta > 0.0 && delta < n)) throw std::invalid_argument("gaussian_state: delta outside (0, N)");
  if (!(center >= 1.0 && center <= n)) throw std::invalid_argument("gaussian_state: center outside [1, N]");
  WalkerState state;
  state.amplitudes.resize(n);
  for (int j = 1; j <= n; ++j) {
    const double x = j - center;
    const double envelope = std::exp(-x * x / (4.0 * delta * delta));
    state.amplitudes(j - 1) = envelope * std::exp(Complex(0.0, -k0 * j));
  }
  state.amplitudes /= state.amplitudes.norm();
  return state;
}

WalkerState localized_state(int n, int j) {
  if (j < 1 || j > n) throw std::invalid_argument("localized_state: site outside [1, N]");
  WalkerState state;
  state.amplitudes = Eigen::VectorXcd::Zero(n);
  state.amplitudes(j - 1) = 1.0;
  return state;
}

}  // namespace nw
