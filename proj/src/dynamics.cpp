#include "noisywalk/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nw {

namespace {

constexpr double kEventMergeTolerance = 1e-15;
constexpr double kBesselCutoff = 1e-17;

void check_normalized(const WalkerState& state) {
  if (std::abs(state.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("initial state is not normalized");
  }
}

// Largest row sum of |H - onsite|; bounds the spectrum of the hopping part.
double spectral_half_width(std::span<const double> links, std::size_t n) {
  const std::size_t nl = links.size();
  double bound = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double left = (j > 0) ? std::abs(links[j - 1]) : (nl == n ? std::abs(links[nl - 1]) : 0.0);
    const double right = (j < nl) ? std::abs(links[j]) : 0.0;
    bound = std::max(bound, left + right);
  }
  return bound;
}

int chebyshev_terms(double x) {
  // Smallest k >= x with (x/2)^k / k! below the cutoff; this bounds |J_k(x)|.
  const double log_cut = std::log(kBesselCutoff);
  int k = std::max(1, static_cast<int>(std::ceil(x)));
  while (k * std::log(0.5 * x) - std::lgamma(k + 1.0) > log_cut) ++k;
  return k;
}

// Link j's domain, with first/last link for every domain.
struct DomainLinks {
  std::vector<int> first, last;  // half-open [first, last)
};

DomainLinks domain_link_ranges(const DomainPartition& partition, std::size_t nlinks) {
  DomainLinks out;
  out.first.assign(static_cast<std::size_t>(partition.domain_count), 0);
  out.last.assign(static_cast<std::size_t>(partition.domain_count), 0);
  std::vector<bool> seen(static_cast<std::size_t>(partition.domain_count), false);
  for (std::size_t j = 0; j < nlinks; ++j) {
    const auto d = static_cast<std::size_t>(partition.site_to_domain[j]);
    if (!seen[d]) {
      out.first[d] = static_cast<int>(j);
      seen[d] = true;
    }
    out.last[d] = static_cast<int>(j) + 1;
  }
  return out;
}

void check_inputs(std::span<const WalkerState> initials, const DomainPartition& partition,
                  std::span<const RtnTrajectory> trajectories, const NoiseConfig& cfg,
                  const PropagatorSpec& spec, std::span<const double> grid,
                  const ChainOptions& chain) {
  cfg.validate();
  spec.validate();
  if (trajectories.size() != static_cast<std::size_t>(partition.domain_count)) {
    throw std::invalid_argument("one trajectory per domain required");
  }
  const int n = partition.size();
  if (chain.boundary == Boundary::periodic && n < 3) {
    throw std::invalid_argument("periodic chains need at least 3 sites");
  }
  for (const auto& s : initials) {
    if (s.size() != n) throw std::invalid_argument("state dimension does not match the lattice");
    check_normalized(s);
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0 || (i > 0 && !(grid[i] > grid[i - 1]))) {
      throw std::invalid_argument("grid times must be nonnegative and increasing");
    }
  }
  for (const auto& traj : trajectories) {
    if (!grid.empty() && grid.back() > traj.t_max) {
      throw std::invalid_argument("grid extends past the trajectory horizon");
    }
  }
}

}  // namespace

double PropagatorSpec::resolved_dt_cap(double gamma) const {
  if (dt_cap) return *dt_cap;
  return gamma > 0.0 ? std::min(0.5, 0.2 / gamma) : 0.5;
}

void PropagatorSpec::validate() const {
  if (taylor_order < 1) throw std::invalid_argument("taylor_order must be >= 1");
  if (dt_cap && !(*dt_cap > 0.0)) throw std::invalid_argument("dt_cap must be > 0");
}

int link_count(int n, Boundary boundary) {
  return boundary == Boundary::periodic ? n : n - 1;
}

HoppingProfile hopping_profile(const DomainPartition& partition,
                               std::span<const RtnTrajectory> trajectories, double t,
                               const NoiseConfig& cfg, Boundary boundary) {
  if (trajectories.size() != static_cast<std::size_t>(partition.domain_count)) {
    throw std::invalid_argument("hopping_profile: one trajectory per domain required");
  }
  std::vector<int> signs(trajectories.size());
  for (std::size_t d = 0; d < trajectories.size(); ++d) signs[d] = rtn_value(trajectories[d], t);
  HoppingProfile profile;
  const int nlinks = link_count(partition.size(), boundary);
  profile.link_amplitudes.resize(static_cast<std::size_t>(nlinks));
  for (int j = 0; j < nlinks; ++j) {
    const auto d = static_cast<std::size_t>(partition.site_to_domain[static_cast<std::size_t>(j)]);
    profile.link_amplitudes[static_cast<std::size_t>(j)] = cfg.nu0 + cfg.nu * signs[d];
  }
  return profile;
}

void apply_hamiltonian(std::span<const Complex> in, std::span<Complex> out,
                       std::span<const double> links, double onsite_energy) {
  const std::size_t n = in.size();
  const std::size_t nl = links.size();
  if (out.size() != n || (nl != n - 1 && nl != n)) {
    throw std::invalid_argument("apply_hamiltonian: dimension mismatch");
  }
  for (std::size_t j = 0; j < n; ++j) out[j] = onsite_energy * in[j];
  for (std::size_t j = 0; j + 1 < n; ++j) {
    out[j] -= links[j] * in[j + 1];
    out[j + 1] -= links[j] * in[j];
  }
  if (nl == n) {
    out[n - 1] -= links[n - 1] * in[0];
    out[0] -= links[n - 1] * in[n - 1];
  }
}

WalkerState apply_hamiltonian(const WalkerState& state, const HoppingProfile& profile,
                              double onsite_energy) {
  WalkerState out;
  out.amplitudes.resize(state.amplitudes.size());
  apply_hamiltonian(std::span<const Complex>(state.amplitudes.data(), state.amplitudes.size()),
                    std::span<Complex>(out.amplitudes.data(), out.amplitudes.size()),
                    profile.link_amplitudes, onsite_energy);
  return out;
}

void PropagationWorkspace::resize(std::size_t n) {
  a.resize(n);
  b.resize(n);
  c.resize(n);
  acc.resize(n);
}

void bessel_j_sequence(double x, int kmax, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(kmax) + 1, 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return;
  }
  int start = kmax + 30 + static_cast<int>(std::sqrt(40.0 * (kmax + x + 1.0)));
  start += start % 2;
  double next = 0.0;  // J_{k+1}
  double cur = 1.0;   // J_k, arbitrary scale
  double norm = 0.0;  // J_0 + 2 sum_{even k >= 2} J_k
  if (start <= kmax) out[static_cast<std::size_t>(start)] = cur;
  for (int k = start; k >= 1; --k) {
    if (k % 2 == 0) norm += 2.0 * cur;
    const double prev = (2.0 * k / x) * cur - next;  // J_{k-1}
    next = cur;
    cur = prev;
    if (k - 1 <= kmax) out[static_cast<std::size_t>(k - 1)] = cur;
    if (std::abs(cur) > 1e250) {
      cur *= 1e-250;
      next *= 1e-250;
      norm *= 1e-250;
      for (int i = k - 1; i <= kmax; ++i) out[static_cast<std::size_t>(i)] *= 1e-250;
    }
  }
  norm += cur;
  for (double& v : out) v /= norm;
}

void exact_step(std::span<Complex> psi, std::span<const double> links, double onsite_energy,
                double dt, PropagationWorkspace& ws) {
  const std::size_t n = psi.size();
  const Complex global_phase = std::exp(Complex(0.0, -onsite_energy * dt));
  const double half_width = spectral_half_width(links, n);
  const double x = half_width * dt;
  if (x == 0.0) {
    for (auto& v : psi) v *= global_phase;
    return;
  }
  ws.resize(n);
  const int terms = chebyshev_terms(x);
  bessel_j_sequence(x, terms, ws.bessel);

  // T_k recurrence on the rescaled hopping operator H' = (H - onsite) / half_width.
  const double scale = 1.0 / half_width;
  auto rescaled_apply = [&](std::span<const Complex> in, std::span<Complex> out) {
    apply_hamiltonian(in, out, links, 0.0);
    for (auto& v : out) v *= scale;
  };

  std::span<Complex> prev(ws.a), cur(ws.b), next(ws.c);
  std::copy(psi.begin(), psi.end(), prev.begin());
  for (std::size_t j = 0; j < n; ++j) ws.acc[j] = ws.bessel[0] * prev[j];
  rescaled_apply(prev, cur);
  Complex coeff = 2.0 * Complex(0.0, -1.0) * ws.bessel[1];
  for (std::size_t j = 0; j < n; ++j) ws.acc[j] += coeff * cur[j];

  Complex minus_i_power(0.0, -1.0);
  for (int k = 2; k <= terms; ++k) {
    rescaled_apply(cur, next);
    for (std::size_t j = 0; j < n; ++j) next[j] = 2.0 * next[j] - prev[j];
    minus_i_power *= Complex(0.0, -1.0);
    coeff = 2.0 * minus_i_power * ws.bessel[static_cast<std::size_t>(k)];
    for (std::size_t j = 0; j < n; ++j) ws.acc[j] += coeff * next[j];
    std::swap(prev, cur);
    std::swap(cur, next);
  }
  for (std::size_t j = 0; j < n; ++j) psi[j] = global_phase * ws.acc[j];
}

void taylor_step(std::span<Complex> psi, std::span<const double> links, double onsite_energy,
                 double dt, int order, PropagationWorkspace& ws) {
  const std::size_t n = psi.size();
  ws.resize(n);
  std::copy(psi.begin(), psi.end(), ws.a.begin());
  for (int k = 1; k <= order; ++k) {
    apply_hamiltonian(ws.a, ws.b, links, onsite_energy);
    const Complex factor(0.0, -dt / k);
    for (std::size_t j = 0; j < n; ++j) {
      ws.a[j] = factor * ws.b[j];
      psi[j] += ws.a[j];
    }
  }
}

std::vector<TimeEvent> merge_event_times(std::span<const RtnTrajectory> trajectories,
                                         std::span<const double> grid) {
  struct Raw {
    double time;
    int grid_index;  // -1 for switches
    int domain;      // -1 for grid times
  };
  std::vector<Raw> raw;
  raw.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    raw.push_back({grid[i], static_cast<int>(i), -1});
  }
  for (std::size_t d = 0; d < trajectories.size(); ++d) {
    for (double t : trajectories[d].switch_times) raw.push_back({t, -1, static_cast<int>(d)});
  }
  std::stable_sort(raw.begin(), raw.end(),
                   [](const Raw& a, const Raw& b) { return a.time < b.time; });

  std::vector<TimeEvent> events;
  for (const Raw& r : raw) {
    if (events.empty() || r.time - events.back().time > kEventMergeTolerance) {
      events.push_back(TimeEvent{r.time, std::nullopt, {}});
    }
    TimeEvent& ev = events.back();
    if (r.grid_index >= 0) {
      ev.grid_index = r.grid_index;
      ev.time = r.time;
    }
    if (r.domain >= 0) {
      // Two switches of one domain inside the merge window cancel.
      auto it = std::find(ev.flipped_domains.begin(), ev.flipped_domains.end(), r.domain);
      if (it == ev.flipped_domains.end()) {
        ev.flipped_domains.push_back(r.domain);
      } else {
        ev.flipped_domains.erase(it);
      }
    }
  }
  for (auto& ev : events) std::sort(ev.flipped_domains.begin(), ev.flipped_domains.end());
  return events;
}

void evolve_states_into(std::span<const WalkerState> initials, const DomainPartition& partition,
                        std::span<const RtnTrajectory> trajectories, const NoiseConfig& cfg,
                        const PropagatorSpec& spec, std::span<const double> grid,
                        const ChainOptions& chain, std::span<Complex> out) {
  check_inputs(initials, partition, trajectories, cfg, spec, grid, chain);
  const auto n = static_cast<std::size_t>(partition.size());
  const std::size_t ng = grid.size();
  if (out.size() != initials.size() * ng * n) {
    throw std::invalid_argument("evolve_states_into: output buffer has the wrong size");
  }

  std::vector<std::vector<Complex>> states;
  states.reserve(initials.size());
  for (const auto& s : initials) states.emplace_back(s.amplitudes.data(), s.amplitudes.data() + n);

  auto record = [&](std::size_t grid_index) {
    for (std::size_t s = 0; s < states.size(); ++s) {
      std::copy(states[s].begin(), states[s].end(), out.begin() + (s * ng + grid_index) * n);
    }
  };

  PropagationWorkspace ws;
  ws.resize(n);

  if (spec.method == PropagatorMethod::exact_event) {
    HoppingProfile profile = hopping_profile(partition, trajectories, 0.0, cfg, chain.boundary);
    const DomainLinks ranges = domain_link_ranges(partition, profile.link_amplitudes.size());
    const auto events = merge_event_times(trajectories, grid);
    double t_cur = 0.0;
    for (const TimeEvent& ev : events) {
      if (ev.time > t_cur) {
        for (auto& st : states) {
          exact_step(st, profile.link_amplitudes, chain.onsite_energy, ev.time - t_cur, ws);
        }
        t_cur = ev.time;
      }
      if (ev.grid_index) record(static_cast<std::size_t>(*ev.grid_index));
      for (int d : ev.flipped_domains) {
        const auto du = static_cast<std::size_t>(d);
        const double amp = cfg.nu0 + cfg.nu * rtn_value(trajectories[du], ev.time);
        for (int j = ranges.first[du]; j < ranges.last[du]; ++j) {
          profile.link_amplitudes[static_cast<std::size_t>(j)] = amp;
        }
      }
    }
    return;
  }

  // Taylor grid: hopping frozen over each substep at its starting value.
  const double dt_cap = spec.resolved_dt_cap(cfg.gamma);
  double t_cur = 0.0;
  for (std::size_t i = 0; i < ng; ++i) {
    const double span_len = grid[i] - t_cur;
    if (span_len > 0.0) {
      const int substeps = std::max(1, static_cast<int>(std::ceil(span_len / dt_cap - 1e-9)));
      const double h = span_len / substeps;
      for (int s = 0; s < substeps; ++s) {
        const double ts = t_cur + s * h;
        const HoppingProfile profile = hopping_profile(partition, trajectories, ts, cfg, chain.boundary);
        for (auto& st : states) {
          taylor_step(st, profile.link_amplitudes, chain.onsite_energy, h, spec.taylor_order, ws);
          double norm2 = 0.0;
          for (const auto& v : st) norm2 += std::norm(v);
          const double norm = std::sqrt(norm2);
          if (std::abs(norm - 1.0) > 1e-12) {
            for (auto& v : st) v /= norm;
          }
        }
      }
      t_cur = grid[i];
    }
    record(i);
  }
}

std::vector<WalkerState> evolve_realization(const WalkerState& initial,
                                            const DomainPartition& partition,
                                            std::span<const RtnTrajectory> trajectories,
                                            const NoiseConfig& cfg, const PropagatorSpec& spec,
                                            std::span<const double> grid,
                                            const ChainOptions& chain) {
  const auto n = static_cast<std::size_t>(partition.size());
  std::vector<Complex> buffer(grid.size() * n);
  evolve_states_into(std::span<const WalkerState>(&initial, 1), partition, trajectories, cfg,
                     spec, grid, chain, buffer);
  std::vector<WalkerState> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out[i].amplitudes = Eigen::Map<const Eigen::VectorXcd>(buffer.data() + i * n,
                                                           static_cast<Eigen::Index>(n));
  }
  return out;
}

}  // namespace nw
