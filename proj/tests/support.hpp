#pragma once

// Test-only oracles. Nothing here shares code with the propagators under test
// beyond the public data types.

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "noisywalk/dynamics.hpp"
#include "noisywalk/noise.hpp"

namespace nw::testing {

/// Dense Hamiltonian built entry by entry from link amplitudes.
inline Eigen::MatrixXcd dense_hamiltonian(std::span<const double> links, int n, double onsite = 0.0) {
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(n, n);
  for (int j = 0; j < n; ++j) h(j, j) = onsite;
  for (std::size_t j = 0; j < links.size(); ++j) {
    const int a = static_cast<int>(j);
    const int b = static_cast<int>((j + 1) % static_cast<std::size_t>(n));
    h(a, b) -= links[j];
    h(b, a) -= links[j];
  }
  return h;
}

/// exp(-i H t) psi through a full Hermitian eigendecomposition.
inline Eigen::VectorXcd eig_propagate(const Eigen::MatrixXcd& h, const Eigen::VectorXcd& psi, double t) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h);
  const Eigen::MatrixXcd& v = solver.eigenvectors();
  Eigen::VectorXcd coeff = v.adjoint() * psi;
  for (Eigen::Index k = 0; k < coeff.size(); ++k) {
    coeff(k) *= std::exp(std::complex<double>(0.0, -solver.eigenvalues()(k) * t));
  }
  return v * coeff;
}

/// Moves every switch to the first time in `times` at or after it. Two
/// switches landing on the same time cancel.
inline RtnTrajectory snap_switches(const RtnTrajectory& traj, std::span<const double> times) {
  RtnTrajectory out;
  out.initial_sign = traj.initial_sign;
  out.t_max = traj.t_max;
  for (double s : traj.switch_times) {
    auto it = std::lower_bound(times.begin(), times.end(), s);
    if (it == times.end()) continue;
    if (!out.switch_times.empty() && out.switch_times.back() == *it) {
      out.switch_times.pop_back();
    } else {
      out.switch_times.push_back(*it);
    }
  }
  return out;
}

inline double max_abs_diff(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

/// Random density matrix A A^dagger / tr.
inline Eigen::MatrixXcd random_density(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXcd a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = {g(rng), g(rng)};
  }
  Eigen::MatrixXcd rho = a * a.adjoint();
  rho /= rho.trace().real();
  return 0.5 * (rho + rho.adjoint());
}

inline Eigen::VectorXcd random_vector(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) v(i) = {g(rng), g(rng)};
  return v;
}

/// Exact ensemble of frozen percolation noise (gamma = 0, nu = nu0 = 1) on a
/// small open chain: every cut pattern and every domain sign pattern, weighted
/// by its probability. Returns the mean projector and the per-entry variance
/// of the real and imaginary parts of a single realization's projector.
struct StaticEnsemble {
  std::vector<Eigen::MatrixXcd> mean;
  std::vector<Eigen::MatrixXd> var_re;
  std::vector<Eigen::MatrixXd> var_im;
};

inline StaticEnsemble enumerate_static_percolation(int n, double p, const Eigen::VectorXcd& psi0,
                                                   std::span<const double> times) {
  struct Outcome {
    double weight;
    std::vector<Eigen::MatrixXcd> proj;
  };
  std::vector<Outcome> outcomes;
  for (unsigned cuts = 0; cuts < (1u << (n - 1)); ++cuts) {
    std::vector<int> domain(static_cast<std::size_t>(n), 0);
    double w_cut = 1.0;
    for (int j = 0; j + 1 < n; ++j) {
      const bool cut = (cuts >> j) & 1u;
      w_cut *= cut ? (1.0 - p) : p;
      domain[static_cast<std::size_t>(j + 1)] = domain[static_cast<std::size_t>(j)] + (cut ? 1 : 0);
    }
    if (w_cut == 0.0) continue;
    const int m = domain.back() + 1;
    for (unsigned signs = 0; signs < (1u << m); ++signs) {
      std::vector<double> links(static_cast<std::size_t>(n - 1));
      for (int j = 0; j + 1 < n; ++j) {
        const bool up = (signs >> domain[static_cast<std::size_t>(j)]) & 1u;
        links[static_cast<std::size_t>(j)] = up ? 2.0 : 0.0;
      }
      const Eigen::MatrixXcd h = dense_hamiltonian(links, n);
      Outcome o{w_cut / double(1u << m), {}};
      for (double t : times) {
        const Eigen::VectorXcd psi = eig_propagate(h, psi0, t);
        o.proj.push_back(psi * psi.adjoint());
      }
      outcomes.push_back(std::move(o));
    }
  }
  StaticEnsemble out;
  for (std::size_t k = 0; k < times.size(); ++k) {
    Eigen::MatrixXcd mean = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& o : outcomes) mean += o.weight * o.proj[k];
    Eigen::MatrixXd vr = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd vi = Eigen::MatrixXd::Zero(n, n);
    for (const auto& o : outcomes) {
      const Eigen::MatrixXcd d = o.proj[k] - mean;
      vr += o.weight * d.real().cwiseAbs2();
      vi += o.weight * d.imag().cwiseAbs2();
    }
    out.mean.push_back(mean);
    out.var_re.push_back(vr);
    out.var_im.push_back(vi);
  }
  return out;
}

}  // namespace nw::testing
