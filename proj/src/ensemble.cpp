#include "noisywalk/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "noisywalk/errors.hpp"
#include "noisywalk/observables.hpp"

namespace nw {

namespace {

constexpr int kBatchSize = 32;
constexpr char kCheckpointMagic[8] = {'N', 'W', 'C', 'K', 'P', 'T', '0', '1'};

// Runs body(i) for i in [0, count) on up to `workers` threads. The body must
// write only to index-owned storage, so results do not depend on scheduling.
template <typename Body>
void parallel_for(std::size_t count, int workers, Body&& body) {
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = count;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

using MatrixSeries = std::vector<std::vector<Eigen::MatrixXcd>>;  // [state][time]

MatrixSeries zero_series(std::size_t states, std::size_t times, Eigen::Index n) {
  return MatrixSeries(states, std::vector<Eigen::MatrixXcd>(times, Eigen::MatrixXcd::Zero(n, n)));
}

void set_zero(MatrixSeries& series) {
  for (auto& per_state : series) {
    for (auto& m : per_state) m.setZero();
  }
}

// Builds the averaged state from a lower-triangle accumulator.
AveragedState finalize(const std::vector<Eigen::MatrixXcd>& sums, double count,
                       const std::vector<double>& times, const WalkerState& initial) {
  AveragedState avg;
  avg.times = times;
  avg.rho.reserve(sums.size());
  for (const auto& sum : sums) {
    Eigen::MatrixXcd rho = sum / count;
    const Eigen::Index n = rho.rows();
    for (Eigen::Index k = 0; k < n; ++k) {
      rho(k, k) = Complex(rho(k, k).real(), 0.0);
      for (Eigen::Index j = 0; j < k; ++j) rho(j, k) = std::conj(rho(k, j));
    }
    avg.rho.push_back(std::move(rho));
  }
  if (!times.empty() && times.front() == 0.0) {
    avg.rho.front() = initial.amplitudes * initial.amplitudes.adjoint();
  }
  return avg;
}

void check_norms(std::span<const Complex> series, std::size_t n, std::uint64_t realization) {
  for (std::size_t off = 0; off < series.size(); off += n) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) norm2 += std::norm(series[off + j]);
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-9) {
      std::ostringstream msg;
      msg << "unitarity violated in realization " << realization << ": |psi| = "
          << std::sqrt(norm2);
      throw NumericalInvariantError(msg.str());
    }
  }
}

}  // namespace

InitialState InitialState::localized(int site) {
  InitialState s;
  s.kind = Kind::localized;
  s.site = site;
  return s;
}

InitialState InitialState::gaussian(double k0, double delta, double center) {
  InitialState s;
  s.kind = Kind::gaussian;
  s.k0 = k0;
  s.delta = delta;
  s.center = center;
  return s;
}

WalkerState InitialState::build(int n) const {
  if (kind == Kind::localized) return localized_state(n, site);
  return gaussian_state(n, k0, delta, center > 0.0 ? center : n / 2.0);
}

std::string InitialState::describe() const {
  std::ostringstream out;
  out.precision(17);
  if (kind == Kind::localized) {
    out << "localized:" << site;
  } else {
    out << "gaussian:" << k0 << "," << delta;
    if (center > 0.0) out << "," << center;
  }
  return out.str();
}

void RunConfig::validate() const {
  if (lattice_size < 2) throw ConfigError("lattice size must be >= 2");
  if (chain.boundary == Boundary::periodic && lattice_size < 3) {
    throw ConfigError("periodic chains need at least 3 sites");
  }
  if (realizations < 1) throw ConfigError("realizations must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("time must be > 0");
  if (grid_points < 2) throw ConfigError("grid points must be >= 2");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (batch_groups < 1) throw ConfigError("batch groups must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint interval must be >= 0");
  if (checkpoint_every > 0 && checkpoint_path.empty()) {
    throw ConfigError("checkpoint interval set without a checkpoint path");
  }
  try {
    noise.validate();
    propagator.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (initial_states.empty() || initial_states.size() > 2) {
    throw ConfigError("need one initial state or a pair");
  }
  for (const auto& s : initial_states) {
    if (s.kind == InitialState::Kind::localized) {
      if (s.site < 1 || s.site > lattice_size) throw ConfigError("localized site outside [1, N]");
    } else {
      if (!(s.delta > 0.0 && s.delta < lattice_size)) throw ConfigError("gaussian spread outside (0, N)");
      if (s.center != 0.0 && !(s.center >= 1.0 && s.center <= lattice_size)) {
        throw ConfigError("gaussian center outside [1, N]");
      }
    }
  }
}

std::vector<double> RunConfig::grid() const {
  std::vector<double> out(static_cast<std::size_t>(grid_points));
  const double last = static_cast<double>(grid_points - 1);
  for (int i = 0; i < grid_points; ++i) out[static_cast<std::size_t>(i)] = tau * (i / last);
  out.back() = tau;
  return out;
}

std::size_t RunConfig::required_bytes() const {
  const std::size_t n = static_cast<std::size_t>(lattice_size);
  const std::size_t per_series = initial_states.size() * static_cast<std::size_t>(grid_points) * n * n *
                                 sizeof(Complex);
  const std::size_t buffer = static_cast<std::size_t>(kBatchSize) * initial_states.size() *
                             static_cast<std::size_t>(grid_points) * n * sizeof(Complex);
  return 2 * per_series + buffer;
}

std::uint64_t RunConfig::stream_seed() const {
  return mix64(seed ^ mix64(std::bit_cast<std::uint64_t>(noise.gamma)) ^
               mix64(std::bit_cast<std::uint64_t>(noise.p) ^ 0x5851f42d4c957f2dULL));
}

NoiseRealization sample_realization(const RunConfig& config, std::uint64_t index) {
  RandomStream rng = RandomStream::child(config.stream_seed(), index);
  NoiseRealization out;
  out.partition = sample_domains(config.lattice_size, config.noise.p, rng);
  out.trajectories.reserve(static_cast<std::size_t>(out.partition.domain_count));
  for (int d = 0; d < out.partition.domain_count; ++d) {
    out.trajectories.push_back(sample_rtn(config.noise.gamma, config.tau, rng));
  }
  return out;
}

EnsembleResult run_ensemble(const RunConfig& config, const GroupCallback& on_group) {
  config.validate();
  if (config.required_bytes() > config.memory_limit_bytes) {
    std::ostringstream msg;
    msg << "run needs " << config.required_bytes() << " bytes of accumulator storage, limit is "
        << config.memory_limit_bytes;
    throw CapacityError(msg.str());
  }

  const auto n = static_cast<std::size_t>(config.lattice_size);
  const Eigen::Index ni = config.lattice_size;
  const std::vector<double> grid = config.grid();
  const std::size_t ng = grid.size();
  const std::size_t ns = config.initial_states.size();
  const auto total_r = static_cast<std::uint64_t>(config.realizations);
  const int groups = static_cast<int>(std::min<std::uint64_t>(static_cast<std::uint64_t>(config.batch_groups), total_r));

  std::vector<WalkerState> initials;
  for (const auto& s : config.initial_states) initials.push_back(s.build(config.lattice_size));

  MatrixSeries total = zero_series(ns, ng, ni);
  MatrixSeries group_sum = zero_series(ns, ng, ni);
  const std::size_t stride = ns * ng * n;  // one realization in the buffer
  std::vector<Complex> buffer(static_cast<std::size_t>(kBatchSize) * stride);

  std::uint64_t done = 0;
  auto maybe_checkpoint = [&](std::uint64_t before, std::uint64_t after) {
    if (config.checkpoint_every <= 0) return;
    const auto every = static_cast<std::uint64_t>(config.checkpoint_every);
    if (after / every == before / every) return;
    Checkpoint ckpt;
    ckpt.config_hash = config.config_hash;
    ckpt.realizations_done = after;
    ckpt.lattice_size = static_cast<std::uint32_t>(n);
    ckpt.grid_points = static_cast<std::uint32_t>(ng);
    ckpt.state_count = static_cast<std::uint32_t>(ns);
    ckpt.data.reserve(ns * ng * n * n);
    for (std::size_t s = 0; s < ns; ++s) {
      for (std::size_t t = 0; t < ng; ++t) {
        Eigen::MatrixXcd m = total[s][t] + group_sum[s][t];
        for (Eigen::Index k = 0; k < ni; ++k) {
          for (Eigen::Index j = 0; j < k; ++j) m(j, k) = std::conj(m(k, j));
        }
        for (Eigen::Index r = 0; r < ni; ++r) {
          for (Eigen::Index c = 0; c < ni; ++c) ckpt.data.push_back(m(r, c));
        }
      }
    }
    write_checkpoint(config.checkpoint_path, ckpt);
  };

  for (int g = 0; g < groups; ++g) {
    const std::uint64_t begin = total_r * static_cast<std::uint64_t>(g) / static_cast<std::uint64_t>(groups);
    const std::uint64_t end = total_r * static_cast<std::uint64_t>(g + 1) / static_cast<std::uint64_t>(groups);
    set_zero(group_sum);

    for (std::uint64_t batch = begin; batch < end; batch += kBatchSize) {
      const std::size_t count = static_cast<std::size_t>(std::min<std::uint64_t>(kBatchSize, end - batch));

      parallel_for(count, config.workers, [&](std::size_t i) {
        const std::uint64_t r = batch + i;
        const NoiseRealization noise = sample_realization(config, r);
        std::span<Complex> slot(buffer.data() + i * stride, stride);
        evolve_states_into(initials, noise.partition, noise.trajectories, config.noise,
                           config.propagator, grid, config.chain, slot);
        check_norms(slot, n, r);
      });

      // Each (state, time) accumulator sums realizations in ascending order.
      parallel_for(ns * ng, config.workers, [&](std::size_t idx) {
        const std::size_t s = idx / ng;
        const std::size_t t = idx % ng;
        auto acc = group_sum[s][t].selfadjointView<Eigen::Lower>();
        for (std::size_t i = 0; i < count; ++i) {
          Eigen::Map<const Eigen::VectorXcd> psi(buffer.data() + i * stride + (s * ng + t) * n, ni);
          acc.rankUpdate(psi, 1.0);
        }
      });

      const std::uint64_t before = done;
      done += count;
      maybe_checkpoint(before, done);
    }

    if (on_group) {
      std::vector<AveragedState> group_avg;
      for (std::size_t s = 0; s < ns; ++s) {
        group_avg.push_back(finalize(group_sum[s], static_cast<double>(end - begin), grid, initials[s]));
        check_density_invariants(group_avg.back(), false, "group " + std::to_string(g));
      }
      on_group(g, group_avg);
    }

    parallel_for(ns * ng, config.workers, [&](std::size_t idx) {
      const std::size_t s = idx / ng;
      const std::size_t t = idx % ng;
      total[s][t] += group_sum[s][t];
    });
  }

  EnsembleResult result;
  result.groups = groups;
  for (std::size_t s = 0; s < ns; ++s) {
    result.states.push_back(finalize(total[s], static_cast<double>(total_r), grid, initials[s]));
    check_density_invariants(result.states.back(), true, "state " + std::to_string(s));
  }
  return result;
}

double purity(const Eigen::MatrixXcd& rho) {
  // trace(rho^2) = sum |rho_jk|^2 for Hermitian rho.
  return rho.squaredNorm();
}

double purity(const AveragedState& avg, std::size_t t_index) {
  if (t_index >= avg.rho.size()) throw std::invalid_argument("purity: time index out of range");
  return purity(avg.rho[t_index]);
}

void check_density_invariants(const AveragedState& avg, bool check_positivity,
                              const std::string& label) {
  auto fail = [&](std::size_t t, const std::string& what, double value) {
    std::ostringstream msg;
    msg.precision(6);
    msg << "density-matrix invariant violated";
    if (!label.empty()) msg << " (" << label << ")";
    msg << " at t=" << avg.times[t] << ": " << what << " = " << value;
    throw NumericalInvariantError(msg.str());
  };
  for (std::size_t t = 0; t < avg.rho.size(); ++t) {
    const Eigen::MatrixXcd& rho = avg.rho[t];
    const double trace_err = std::abs(rho.trace() - Complex(1.0, 0.0));
    if (!(trace_err < 1e-9)) fail(t, "trace error", trace_err);
    const double herm_err = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (!(herm_err <= 1e-12)) fail(t, "Hermiticity error", herm_err);
    const double min_diag = rho.diagonal().real().minCoeff();
    if (!(min_diag >= -1e-12)) fail(t, "smallest population", min_diag);
    if (check_positivity) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(rho, Eigen::EigenvaluesOnly);
      const double min_eig = solver.eigenvalues().minCoeff();
      if (!(min_eig > -1e-9)) fail(t, "smallest eigenvalue", min_eig);
    }
  }
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::size_t expected = static_cast<std::size_t>(ckpt.state_count) * ckpt.grid_points *
                               ckpt.lattice_size * ckpt.lattice_size;
  if (ckpt.data.size() != expected) throw std::invalid_argument("checkpoint payload size mismatch");
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint file " + tmp);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    out.write(reinterpret_cast<const char*>(&ckpt.config_hash), sizeof(ckpt.config_hash));
    out.write(reinterpret_cast<const char*>(&ckpt.realizations_done), sizeof(ckpt.realizations_done));
    out.write(reinterpret_cast<const char*>(&ckpt.lattice_size), sizeof(ckpt.lattice_size));
    out.write(reinterpret_cast<const char*>(&ckpt.grid_points), sizeof(ckpt.grid_points));
    out.write(reinterpret_cast<const char*>(&ckpt.state_count), sizeof(ckpt.state_count));
    out.write(reinterpret_cast<const char*>(ckpt.data.data()),
              static_cast<std::streamsize>(ckpt.data.size() * sizeof(Complex)));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot move checkpoint into place at " + path);
  }
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  Checkpoint ckpt;
  in.read(reinterpret_cast<char*>(&ckpt.config_hash), sizeof(ckpt.config_hash));
  in.read(reinterpret_cast<char*>(&ckpt.realizations_done), sizeof(ckpt.realizations_done));
  in.read(reinterpret_cast<char*>(&ckpt.lattice_size), sizeof(ckpt.lattice_size));
  in.read(reinterpret_cast<char*>(&ckpt.grid_points), sizeof(ckpt.grid_points));
  in.read(reinterpret_cast<char*>(&ckpt.state_count), sizeof(ckpt.state_count));
  const std::size_t count = static_cast<std::size_t>(ckpt.state_count) * ckpt.grid_points *
                            ckpt.lattice_size * ckpt.lattice_size;
  ckpt.data.resize(count);
  in.read(reinterpret_cast<char*>(ckpt.data.data()), static_cast<std::streamsize>(count * sizeof(Complex)));
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  return ckpt;
}

}  // namespace nw
