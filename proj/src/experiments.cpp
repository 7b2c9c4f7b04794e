#include "noisywalk/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "noisywalk/errors.hpp"

namespace nw {

namespace {

using json = nlohmann::json;

double half_trace_norm(const Eigen::MatrixXcd& diff) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(diff, Eigen::EigenvaluesOnly);
  return std::clamp(0.5 * solver.eigenvalues().cwiseAbs().sum(), 0.0, 1.0);
}

std::vector<double> default_lbars(int n) {
  std::vector<double> out;
  for (double v : {1.0, 2.0, 5.0, std::floor(n / 4.0), std::floor(n / 2.0), static_cast<double>(n)}) {
    if (v >= 1.0 && v <= n && std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> out;
  for (int i = 0; i < points; ++i) {
    const double e = std::log10(lo) + (std::log10(hi) - std::log10(lo)) * i / (points - 1);
    out.push_back(std::pow(10.0, e));
  }
  return out;
}

int lattice_size_of(const Settings& s) {
  auto it = s.find("lattice-size");
  return it == s.end() ? RunConfig{}.lattice_size : static_cast<int>(parse_integer(it->second, "lattice-size"));
}

double window_of(const Settings& s) {
  auto it = s.find("window");
  return it == s.end() ? 0.2 : parse_real(it->second, "window");
}

// Settings for one sweep cell: gamma and p pinned, lbar dropped.
Settings cell_settings(const Settings& base, double gamma, double p) {
  Settings s = base;
  s.erase("lbar");
  s.erase("gammas");
  s.erase("lbars");
  s["gamma"] = format_real(gamma);
  s["p"] = format_real(p);
  return s;
}

std::string cell_label(double gamma, double lbar) {
  std::ostringstream out;
  out << "gamma_" << format_real(gamma) << "_Lbar_" << format_real(lbar);
  return out.str();
}

json record_base(const RunConfig& config) {
  json meta;
  meta["code_version"] = NOISYWALK_VERSION;
  json cfg = json::object();
  for (const auto& [k, v] : echo_config(config)) cfg[k] = v;
  meta["config"] = cfg;
  meta["config_hash"] = hex64(config.config_hash);
  return meta;
}

std::string hash_comment(std::uint64_t hash) { return "# config_hash=" + hex64(hash) + "\n"; }

}  // namespace

PresetName parse_preset_name(const std::string& name) {
  if (name == "nonmark-map") return PresetName::nonmark_map;
  if (name == "ipr-map") return PresetName::ipr_map;
  if (name == "wavepacket") return PresetName::wavepacket;
  if (name == "domain-stats") return PresetName::domain_stats;
  if (name == "single-run") return PresetName::single_run;
  throw ConfigError("unknown preset '" + name + "'");
}

std::string preset_name(PresetName name) {
  switch (name) {
    case PresetName::nonmark_map: return "nonmark-map";
    case PresetName::ipr_map: return "ipr-map";
    case PresetName::wavepacket: return "wavepacket";
    case PresetName::domain_stats: return "domain-stats";
    case PresetName::single_run: return "single-run";
  }
  return "single-run";
}

ExperimentPreset make_preset(PresetName name, bool paper_scale) {
  ExperimentPreset preset;
  preset.name = name;
  Settings& d = preset.defaults;
  d["lattice-size"] = paper_scale ? "100" : "50";
  d["realizations"] = paper_scale ? "10000" : "2000";
  d["time"] = paper_scale ? "20" : "10";
  d["grid-points"] = "200";
  switch (name) {
    case PresetName::wavepacket:
      d["lattice-size"] = "100";
      d["initial"] = "gaussian:pi/2,10";
      break;
    case PresetName::domain_stats:
      d["draws"] = "100000";
      d["p"] = "0.3";
      d["lattice-size"] = "10";
      break;
    default:
      break;
  }
  return preset;
}

void resolve_grids(ExperimentPreset& preset, const Settings& merged) {
  const int n = lattice_size_of(merged);
  const bool paper_scale = preset.defaults.at("realizations") == "10000";
  if (auto it = merged.find("gammas"); it != merged.end()) {
    preset.gammas = parse_real_list(it->second, "gammas");
  } else if (preset.name == PresetName::wavepacket) {
    preset.gammas = {0.1, 1.0, 10.0};
  } else if (preset.name == PresetName::nonmark_map || preset.name == PresetName::ipr_map) {
    preset.gammas = paper_scale ? log_grid(0.01, 1.0, 7) : std::vector<double>{0.1, 0.5, 1.0};
  }
  if (auto it = merged.find("lbars"); it != merged.end()) {
    preset.lbars = parse_real_list(it->second, "lbars");
  } else if (preset.name == PresetName::wavepacket) {
    preset.lbars = {1.0, 10.0, static_cast<double>(n)};
  } else if (preset.name == PresetName::nonmark_map || preset.name == PresetName::ipr_map) {
    preset.lbars = default_lbars(n);
  }
  const bool sweep = preset.name == PresetName::nonmark_map || preset.name == PresetName::ipr_map ||
                     preset.name == PresetName::wavepacket;
  if (sweep && (preset.gammas.empty() || preset.lbars.empty())) throw ConfigError("sweep grids must be non-empty");
  for (double g : preset.gammas) {
    if (!(g >= 0.0)) throw ConfigError("gamma grid values must be >= 0");
  }
  for (double l : preset.lbars) {
    if (!(l >= 1.0 && l <= n)) throw ConfigError("Lbar grid value " + format_real(l) + " outside [1, N]");
  }
}

double jackknife_error(const std::vector<double>& leave_one_out) {
  const std::size_t g = leave_one_out.size();
  if (g < 2) return 0.0;
  const double mean = std::accumulate(leave_one_out.begin(), leave_one_out.end(), 0.0) / static_cast<double>(g);
  double ss = 0.0;
  for (double v : leave_one_out) ss += (v - mean) * (v - mean);
  return std::sqrt(static_cast<double>(g - 1) / static_cast<double>(g) * ss);
}

RunAnalysis analyze_run(const RunConfig& config, double window) {
  const auto start = std::chrono::steady_clock::now();
  const bool pair = config.initial_states.size() == 2;
  const std::size_t ng = static_cast<std::size_t>(config.grid_points);

  // Compact per-group data: the pair difference and first-state populations.
  std::vector<double> group_sizes;
  std::vector<std::vector<Eigen::MatrixXcd>> group_diff;
  std::vector<std::vector<Eigen::VectorXd>> group_pops;
  auto on_group = [&](int g, const std::vector<AveragedState>& avg) {
    const auto r = static_cast<std::uint64_t>(config.realizations);
    const auto groups = static_cast<std::uint64_t>(std::min(config.batch_groups, config.realizations));
    const std::uint64_t begin = r * static_cast<std::uint64_t>(g) / groups;
    const std::uint64_t end = r * static_cast<std::uint64_t>(g + 1) / groups;
    group_sizes.push_back(static_cast<double>(end - begin));
    std::vector<Eigen::VectorXd> pops;
    for (const auto& rho : avg[0].rho) pops.push_back(rho.diagonal().real());
    group_pops.push_back(std::move(pops));
    if (pair) {
      std::vector<Eigen::MatrixXcd> diff;
      for (std::size_t t = 0; t < ng; ++t) diff.push_back(avg[0].rho[t] - avg[1].rho[t]);
      group_diff.push_back(std::move(diff));
    }
  };

  RunAnalysis out;
  out.config = config;
  out.ensemble = run_ensemble(config, on_group);
  const AveragedState& first = out.ensemble.states[0];
  const int n = config.lattice_size;

  out.ipr = ipr_series(first);
  for (std::size_t t = 0; t < ng; ++t) {
    const double v = out.ipr.values[t];
    if (!(v >= 1.0 / n - 1e-9 && v <= 1.0 + 1e-9)) {
      throw NumericalInvariantError("IPR " + format_real(v) + " outside [1/N, 1] at t=" + format_real(first.times[t]));
    }
  }
  out.momentum = momentum_series(first, momentum_operator(n, config.chain.boundary));
  for (const auto& rho : first.rho) out.purity.push_back(purity(rho));
  out.long_ipr = long_time_ipr(out.ipr, window);

  const double total = static_cast<double>(config.realizations);
  const std::size_t groups = group_sizes.size();
  std::vector<double> ipr_loo;
  for (std::size_t g = 0; g < groups && groups > 1; ++g) {
    const double rest = total - group_sizes[g];
    ObservableSeries series;
    series.times = first.times;
    for (std::size_t t = 0; t < ng; ++t) {
      const Eigen::VectorXd pops =
          (total * first.rho[t].diagonal().real() - group_sizes[g] * group_pops[g][t]) / rest;
      series.values.push_back(pops.squaredNorm());
    }
    ipr_loo.push_back(long_time_ipr(series, window).mean);
  }
  out.long_ipr_error = jackknife_error(ipr_loo);

  if (pair) {
    out.distance = trace_distance_series(out.ensemble.states[0], out.ensemble.states[1]);
    out.n_tau = blp_fixed_pair(*out.distance);
    std::vector<double> n_tau_loo;
    for (std::size_t g = 0; g < groups && groups > 1; ++g) {
      const double rest = total - group_sizes[g];
      ObservableSeries series;
      series.kind = ObservableKind::trace_distance;
      series.times = first.times;
      for (std::size_t t = 0; t < ng; ++t) {
        const Eigen::MatrixXcd diff = out.ensemble.states[0].rho[t] - out.ensemble.states[1].rho[t];
        series.values.push_back(half_trace_norm((total * diff - group_sizes[g] * group_diff[g][t]) / rest));
      }
      n_tau_loo.push_back(blp_fixed_pair(series));
    }
    out.n_tau_error = jackknife_error(n_tau_loo);
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<SweepCell> run_sweep_cells(const Settings& base, SweepMetric metric,
                                       const std::vector<double>& gammas,
                                       const std::vector<double>& lbars, const std::string& cell_dir) {
  const int n = lattice_size_of(base);
  const double window = window_of(base);
  std::vector<SweepCell> cells;
  for (double gamma : gammas) {
    for (double lbar : lbars) {
      SweepCell cell;
      cell.gamma = gamma;
      cell.lbar = lbar;
      try {
        cell.p = p_from_mean_length(n, lbar);
        const RunConfig config = build_run_config(cell_settings(base, gamma, cell.p));
        cell.analysis = analyze_run(config, window);
      } catch (const NumericalInvariantError& e) {
        throw NumericalInvariantError("cell " + cell_label(gamma, lbar) + ": " + e.what());
      } catch (const ConfigError& e) {
        throw ConfigError("cell " + cell_label(gamma, lbar) + ": " + e.what());
      } catch (const std::exception& e) {
        throw std::runtime_error("cell " + cell_label(gamma, lbar) + ": " + e.what());
      }
      if (metric == SweepMetric::non_markovianity) {
        if (!cell.analysis.n_tau) throw ConfigError("non-Markovianity sweeps need a pair of initial states");
        cell.value = *cell.analysis.n_tau;
        cell.mc_error = cell.analysis.n_tau_error;
      } else {
        cell.value = cell.analysis.long_ipr.mean;
        cell.mc_error = cell.analysis.long_ipr_error;
      }
      if (!cell_dir.empty()) {
        write_file_atomic((std::filesystem::path(cell_dir) / (cell_label(gamma, lbar) + ".csv")).string(),
                          series_csv(cell.analysis));
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::vector<WavepacketCurve> run_wavepacket_curves(const Settings& base, const std::vector<double>& gammas,
                                                   const std::vector<double>& lbars) {
  const int n = lattice_size_of(base);
  const double window = window_of(base);
  std::vector<WavepacketCurve> curves;
  for (double gamma : gammas) {
    for (double lbar : lbars) {
      WavepacketCurve curve;
      curve.gamma = gamma;
      curve.lbar = lbar;
      curve.p = p_from_mean_length(n, lbar);
      curve.analysis = analyze_run(build_run_config(cell_settings(base, gamma, curve.p)), window);
      curves.push_back(std::move(curve));
    }
  }
  WavepacketCurve baseline;
  baseline.noiseless = true;
  Settings s = cell_settings(base, 0.0, 0.0);
  s["noise-amp"] = "0";
  s["realizations"] = "1";
  s["batch-groups"] = "1";
  baseline.analysis = analyze_run(build_run_config(s), window);
  curves.push_back(std::move(baseline));
  return curves;
}

DomainStats domain_statistics(int n, double p, long long draws, std::uint64_t seed) {
  if (draws < 1) throw ConfigError("draws must be >= 1");
  DomainStats stats;
  stats.lattice_size = n;
  stats.p = p;
  stats.draws = draws;
  std::vector<long long> counts(static_cast<std::size_t>(n) + 1, 0);
  RandomStream rng(mix64(seed));
  for (long long i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_domains(n, p, rng).domain_count)];
  for (int m = 1; m <= n; ++m) {
    DomainStatsRow row;
    row.m = m;
    row.empirical = static_cast<double>(counts[static_cast<std::size_t>(m)]) / static_cast<double>(draws);
    row.analytic = domain_count_pmf(n, p, m);
    stats.total_variation += 0.5 * std::abs(row.empirical - row.analytic);
    stats.rows.push_back(row);
  }
  return stats;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    if (!out) throw std::runtime_error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

std::string series_csv(const RunAnalysis& run) {
  std::ostringstream out;
  out << hash_comment(run.config.config_hash);
  const bool pair = run.distance.has_value();
  out << "t" << (pair ? ",D" : "") << ",ipr,p_avg,purity\n";
  for (std::size_t i = 0; i < run.ipr.times.size(); ++i) {
    out << format_real(run.ipr.times[i]);
    if (pair) out << "," << format_real(run.distance->values[i]);
    out << "," << format_real(run.ipr.values[i]) << "," << format_real(run.momentum.values[i]) << ","
        << format_real(run.purity[i]) << "\n";
  }
  return out.str();
}

std::string map_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream out;
  out << "gamma,Lbar,p,value,mc_error\n";
  for (const auto& c : cells) {
    out << format_real(c.gamma) << "," << format_real(c.lbar) << "," << format_real(c.p) << ","
        << format_real(c.value) << "," << format_real(c.mc_error) << "\n";
  }
  return out.str();
}

std::string wavepacket_csv(const RunAnalysis& run) {
  std::ostringstream out;
  out << hash_comment(run.config.config_hash);
  out << "t,p_avg,ipr\n";
  for (std::size_t i = 0; i < run.ipr.times.size(); ++i) {
    out << format_real(run.ipr.times[i]) << "," << format_real(run.momentum.values[i]) << ","
        << format_real(run.ipr.values[i]) << "\n";
  }
  return out.str();
}

std::string stats_csv(const DomainStats& stats) {
  std::ostringstream out;
  out << "M,empirical,analytic\n";
  for (const auto& r : stats.rows) {
    out << r.m << "," << format_real(r.empirical) << "," << format_real(r.analytic) << "\n";
  }
  return out.str();
}

std::string run_single(const Settings& merged, const std::string& out_dir) {
  const RunConfig config = build_run_config(merged);
  const RunAnalysis run = analyze_run(config, window_of(merged));
  json meta = record_base(config);
  meta["Lbar"] = mean_domain_length(config.lattice_size, config.noise.p);
  meta["wall_time_seconds"] = run.wall_seconds;
  meta["batch_groups"] = run.ensemble.groups;
  meta["summary"]["long_time_ipr"] = run.long_ipr.mean;
  meta["summary"]["long_time_ipr_window_std"] = run.long_ipr.stddev;
  meta["mc_errors"]["long_time_ipr"] = run.long_ipr_error;
  if (run.n_tau) {
    meta["summary"]["n_tau"] = *run.n_tau;
    meta["mc_errors"]["n_tau"] = run.n_tau_error;
  }
  meta["files"] = {"series.csv"};
  const std::filesystem::path dir(out_dir);
  write_file_atomic((dir / "series.csv").string(), series_csv(run));
  const std::string text = meta.dump(2) + "\n";
  write_file_atomic((dir / "meta.json").string(), text);
  return text;
}

std::string run_sweep(const ExperimentPreset& preset, const Settings& merged, const std::string& out_dir) {
  const SweepMetric metric =
      preset.name == PresetName::nonmark_map ? SweepMetric::non_markovianity : SweepMetric::long_time_ipr;
  Settings base = merged;
  if (!base.count("initial")) {
    const int n = lattice_size_of(base);
    base["initial"] = metric == SweepMetric::non_markovianity
                          ? "pair:" + std::to_string(n / 2) + "," + std::to_string(n / 2 + 1)
                          : "localized:" + std::to_string(n / 2);
  }
  const auto start = std::chrono::steady_clock::now();
  const std::filesystem::path dir(out_dir);
  const auto cells = run_sweep_cells(base, metric, preset.gammas, preset.lbars, (dir / "cells").string());
  write_file_atomic((dir / "map.csv").string(), map_csv(cells));

  const RunConfig reference = build_run_config(cell_settings(base, preset.gammas.front(), 0.0));
  json meta = record_base(reference);
  meta["config"].erase("gamma");
  meta["config"].erase("p");
  meta["preset"] = preset_name(preset.name);
  meta["gammas"] = preset.gammas;
  meta["lbars"] = preset.lbars;
  meta["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json cell_meta = json::array();
  for (const auto& c : cells) {
    cell_meta.push_back({{"gamma", c.gamma},
                         {"Lbar", c.lbar},
                         {"p", c.p},
                         {"value", c.value},
                         {"mc_error", c.mc_error},
                         {"config_hash", hex64(c.analysis.config.config_hash)},
                         {"file", "cells/" + cell_label(c.gamma, c.lbar) + ".csv"}});
  }
  meta["cells"] = cell_meta;
  meta["files"] = {"map.csv"};
  const std::string text = meta.dump(2) + "\n";
  write_file_atomic((dir / "meta.json").string(), text);
  return text;
}

std::string run_wavepacket(const ExperimentPreset& preset, const Settings& merged, const std::string& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  const auto curves = run_wavepacket_curves(merged, preset.gammas, preset.lbars);
  const std::filesystem::path dir(out_dir);
  json files = json::array();
  json curve_meta = json::array();
  for (const auto& c : curves) {
    const std::string name = c.noiseless ? "baseline.csv" : "wavepacket_" + cell_label(c.gamma, c.lbar) + ".csv";
    write_file_atomic((dir / name).string(), wavepacket_csv(c.analysis));
    files.push_back(name);
    curve_meta.push_back({{"gamma", c.gamma},
                          {"Lbar", c.lbar},
                          {"p", c.p},
                          {"noiseless", c.noiseless},
                          {"long_time_ipr", c.analysis.long_ipr.mean},
                          {"long_time_ipr_mc_error", c.analysis.long_ipr_error},
                          {"config_hash", hex64(c.analysis.config.config_hash)},
                          {"file", name}});
  }
  json meta = record_base(curves.front().analysis.config);
  meta["config"].erase("gamma");
  meta["config"].erase("p");
  meta["preset"] = "wavepacket";
  meta["gammas"] = preset.gammas;
  meta["lbars"] = preset.lbars;
  meta["curves"] = curve_meta;
  meta["files"] = files;
  meta["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::string text = meta.dump(2) + "\n";
  write_file_atomic((dir / "meta.json").string(), text);
  return text;
}

std::string run_domain_stats(const Settings& merged, const std::string& out_dir) {
  const int n = lattice_size_of(merged);
  if (n < 2) throw ConfigError("lattice size must be >= 2");
  const double p = resolve_p(merged, n);
  const long long draws = merged.count("draws") ? parse_integer(merged.at("draws"), "draws") : 100000;
  const std::uint64_t seed = merged.count("seed") ? static_cast<std::uint64_t>(parse_integer(merged.at("seed"), "seed")) : 1;
  const DomainStats stats = domain_statistics(n, p, draws, seed);
  const std::filesystem::path dir(out_dir);
  write_file_atomic((dir / "stats.csv").string(), stats_csv(stats));
  json meta;
  meta["code_version"] = NOISYWALK_VERSION;
  meta["preset"] = "domain-stats";
  meta["config"] = {{"lattice-size", std::to_string(n)},
                    {"p", format_real(p)},
                    {"draws", std::to_string(draws)},
                    {"seed", std::to_string(seed)}};
  meta["Lbar"] = mean_domain_length(n, p);
  meta["total_variation"] = stats.total_variation;
  meta["files"] = {"stats.csv"};
  const std::string text = meta.dump(2) + "\n";
  write_file_atomic((dir / "meta.json").string(), text);
  return text;
}

Settings settings_from_meta(const std::string& meta_json_text) {
  json meta;
  try {
    meta = json::parse(meta_json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cannot parse meta.json: ") + e.what());
  }
  if (!meta.contains("config") || !meta["config"].is_object()) throw ConfigError("meta.json has no config object");
  Settings s;
  for (const auto& [k, v] : meta["config"].items()) {
    s[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  reject_unknown_keys(s, "meta.json");
  return s;
}

}  // namespace nw
