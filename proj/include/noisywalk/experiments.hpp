#pragma once

#include <optional>
#include <string>
#include <vector>

#include "noisywalk/config.hpp"
#include "noisywalk/ensemble.hpp"
#include "noisywalk/observables.hpp"

namespace nw {

enum class PresetName { nonmark_map, ipr_map, wavepacket, domain_stats, single_run };

PresetName parse_preset_name(const std::string& name);
std::string preset_name(PresetName name);

/// Scale defaults and parameter grids for one figure-style experiment.
struct ExperimentPreset {
  PresetName name = PresetName::single_run;
  Settings defaults;           // lowest-precedence settings layer
  std::vector<double> gammas;  // empty when not a sweep
  std::vector<double> lbars;
};

/// Desk scale: N=50, R=2000, time 10. Paper scale: N=100, R=10000, time 20.
/// The wavepacket preset always uses N=100.
ExperimentPreset make_preset(PresetName name, bool paper_scale);

/// Grids are read from `gammas` / `lbars` in the merged settings when present;
/// defaults depend on the final lattice size.
void resolve_grids(ExperimentPreset& preset, const Settings& merged);

/// One ensemble run with every derived observable and delete-one-group
/// jackknife errors over the realization groups.
struct RunAnalysis {
  RunConfig config;
  EnsembleResult ensemble;
  std::optional<ObservableSeries> distance;  // pair runs only
  ObservableSeries ipr;                      // first initial state
  ObservableSeries momentum;
  std::vector<double> purity;
  std::optional<double> n_tau;
  double n_tau_error = 0.0;
  WindowAverage long_ipr;
  double long_ipr_error = 0.0;
  double momentum_error_at_end = 0.0;
  double wall_seconds = 0.0;
};

RunAnalysis analyze_run(const RunConfig& config, double window = 0.2);

/// Jackknife standard error sqrt((G-1)/G sum (x_g - mean)^2).
double jackknife_error(const std::vector<double>& leave_one_out);

enum class SweepMetric { non_markovianity, long_time_ipr };

struct SweepCell {
  double gamma = 0.0;
  double lbar = 0.0;
  double p = 0.0;
  double value = 0.0;
  double mc_error = 0.0;
  RunAnalysis analysis;
};

/// Runs each (gamma, Lbar) cell as an independent ensemble; a cell's noise
/// depends only on the master seed and its own parameters.
std::vector<SweepCell> run_sweep_cells(const Settings& base, SweepMetric metric,
                                       const std::vector<double>& gammas,
                                       const std::vector<double>& lbars,
                                       const std::string& cell_dir = {});

struct WavepacketCurve {
  double gamma = 0.0;
  double lbar = 0.0;
  double p = 0.0;
  bool noiseless = false;
  RunAnalysis analysis;
};

/// One curve per (gamma, Lbar) plus the noiseless baseline (last entry).
std::vector<WavepacketCurve> run_wavepacket_curves(const Settings& base,
                                                   const std::vector<double>& gammas,
                                                   const std::vector<double>& lbars);

struct DomainStatsRow {
  int m = 0;
  double empirical = 0.0;
  double analytic = 0.0;
};

struct DomainStats {
  int lattice_size = 0;
  double p = 0.0;
  long long draws = 0;
  std::vector<DomainStatsRow> rows;
  double total_variation = 0.0;
};

DomainStats domain_statistics(int n, double p, long long draws, std::uint64_t seed);

// File output. Every file is written to a temporary name and renamed.
void write_file_atomic(const std::string& path, const std::string& content);
std::string series_csv(const RunAnalysis& run);
std::string map_csv(const std::vector<SweepCell>& cells);
std::string wavepacket_csv(const RunAnalysis& run);
std::string stats_csv(const DomainStats& stats);

/// CLI entry points; each writes its files under out_dir and returns the
/// meta.json text it wrote.
std::string run_single(const Settings& merged, const std::string& out_dir);
/// `preset` must already have its grids resolved against `merged`.
std::string run_sweep(const ExperimentPreset& preset, const Settings& merged, const std::string& out_dir);
std::string run_wavepacket(const ExperimentPreset& preset, const Settings& merged, const std::string& out_dir);
std::string run_domain_stats(const Settings& merged, const std::string& out_dir);

/// Settings stored in the "config" object of a meta.json file.
Settings settings_from_meta(const std::string& meta_json_text);

}  // namespace nw
