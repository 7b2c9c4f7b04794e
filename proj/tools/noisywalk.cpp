// noisywalk: Monte Carlo quantum walks on a chain with spatially correlated
// telegraph (percolation) noise.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "noisywalk/config.hpp"
#include "noisywalk/errors.hpp"
#include "noisywalk/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::map<std::string, std::string> values;  // key -> flag value
  std::string config_file;
  std::string meta_file;
  std::string out_dir = "out";
  bool paper_scale = false;
};

// Registers one string option per settings key; only flags actually given on
// the command line end up in the override layer.
void add_common(CLI::App& cmd, CommonOptions& opts, bool sweep_grids) {
  auto add = [&](const std::string& key, const std::string& help) {
    return cmd.add_option("--" + key, opts.values[key], help);
  };
  add("lattice-size", "number of sites N");
  add("realizations", "noise realizations R");
  add("time", "final time tau (units 1/nu0)");
  add("grid-points", "output samples over [0, tau]");
  add("gamma", "RTN switching rate (units nu0)");
  auto* lbar = add("lbar", "average domain length");
  auto* p = add("p", "link correlation probability");
  lbar->excludes(p);
  add("noise-amp", "noise strength nu (nu = nu0 is percolation)");
  add("coupling", "uniform hopping nu0");
  add("propagator", "exact | taylor");
  add("taylor-order", "Taylor order K for the grid propagator");
  add("dt-cap", "maximum grid step for the Taylor propagator");
  add("seed", "64-bit master seed");
  add("initial", "localized:J | pair:J,K | gaussian:K0,DELTA[,CENTER]");
  add("boundary", "open | periodic");
  add("onsite-energy", "constant diagonal energy");
  add("workers", "worker threads");
  add("batch-groups", "realization groups for error bars");
  add("checkpoint-every", "write the accumulator every this many realizations");
  add("checkpoint-path", "checkpoint file");
  add("memory-limit-mb", "accumulator memory budget");
  add("window", "final fraction of the grid used for long-time averages");
  if (sweep_grids) {
    add("gammas", "comma-separated gamma grid");
    add("lbars", "comma-separated Lbar grid");
  }
  cmd.add_option("--config", opts.config_file, "flat key = value config file");
  cmd.add_option("--out", opts.out_dir, "output directory")->capture_default_str();
  cmd.add_flag("--paper-scale", opts.paper_scale, "N=100, R=10000, time 20 defaults");
}

nw::Settings flag_layer(const CLI::App& cmd, const CommonOptions& opts) {
  nw::Settings s;
  for (const auto& [key, value] : opts.values) {
    if (cmd.count("--" + key) > 0) s[key] = value;
  }
  return s;
}

nw::Settings layered(const CLI::App& cmd, const CommonOptions& opts, const nw::Settings& preset_defaults) {
  nw::Settings file;
  if (!opts.meta_file.empty()) {
    std::ifstream in(opts.meta_file);
    if (!in) throw nw::ConfigError("cannot read " + opts.meta_file);
    std::stringstream text;
    text << in.rdbuf();
    file = nw::settings_from_meta(text.str());
  }
  if (!opts.config_file.empty()) {
    const nw::Settings from_file = nw::load_settings_file(opts.config_file);
    for (const auto& [k, v] : from_file) file[k] = v;
  }
  const nw::Settings env = nw::settings_from_env([](const char* name) { return std::getenv(name); });
  const nw::Settings flags = flag_layer(cmd, opts);
  nw::Settings merged = nw::merge_settings({&preset_defaults, &file, &env, &flags});
  // A higher layer naming p or lbar replaces the other from lower layers.
  for (const nw::Settings* top : {&flags, &env}) {
    const bool has_p = top->count("p") > 0;
    const bool has_lbar = top->count("lbar") > 0;
    if (has_p != has_lbar) {
      merged.erase(has_p ? "lbar" : "p");
      if (has_p) merged["p"] = top->at("p");
      if (has_lbar) merged["lbar"] = top->at("lbar");
      break;
    }
  }
  return merged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous-time quantum walks with spatially correlated telegraph noise"};
  app.require_subcommand(1);

  CommonOptions run_opts, sweep_opts, wave_opts, stats_opts;
  std::string sweep_preset = "nonmark-map";
  long long draws = 100000;

  auto* run = app.add_subcommand("run", "single ensemble run: series.csv + meta.json");
  add_common(*run, run_opts, false);
  run->add_option("--meta", run_opts.meta_file, "re-run the config recorded in a meta.json");

  auto* sweep = app.add_subcommand("sweep", "(gamma, Lbar) map: map.csv + meta.json");
  add_common(*sweep, sweep_opts, true);
  sweep->add_option("--preset", sweep_preset, "nonmark-map | ipr-map")
      ->check(CLI::IsMember({"nonmark-map", "ipr-map"}))
      ->capture_default_str();

  auto* wave = app.add_subcommand("wavepacket", "Gaussian packet momentum and IPR curves");
  add_common(*wave, wave_opts, true);

  auto* stats = app.add_subcommand("stats", "empirical vs analytic domain-count distribution");
  add_common(*stats, stats_opts, false);
  stats->add_option("--draws", draws, "number of sampled partitions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    std::string meta;
    if (*run) {
      const auto preset = nw::make_preset(nw::PresetName::single_run, run_opts.paper_scale);
      meta = nw::run_single(layered(*run, run_opts, preset.defaults), run_opts.out_dir);
      std::cout << "wrote " << run_opts.out_dir << "/series.csv\n";
    } else if (*sweep) {
      auto preset = nw::make_preset(nw::parse_preset_name(sweep_preset), sweep_opts.paper_scale);
      const nw::Settings merged = layered(*sweep, sweep_opts, preset.defaults);
      nw::resolve_grids(preset, merged);
      meta = nw::run_sweep(preset, merged, sweep_opts.out_dir);
      std::cout << "wrote " << sweep_opts.out_dir << "/map.csv\n";
    } else if (*wave) {
      auto preset = nw::make_preset(nw::PresetName::wavepacket, wave_opts.paper_scale);
      const nw::Settings merged = layered(*wave, wave_opts, preset.defaults);
      nw::resolve_grids(preset, merged);
      meta = nw::run_wavepacket(preset, merged, wave_opts.out_dir);
      std::cout << "wrote " << wave_opts.out_dir << "/meta.json\n";
    } else if (*stats) {
      const auto preset = nw::make_preset(nw::PresetName::domain_stats, false);
      nw::Settings merged = layered(*stats, stats_opts, preset.defaults);
      if (stats->count("--draws") > 0) merged["draws"] = std::to_string(draws);
      meta = nw::run_domain_stats(merged, stats_opts.out_dir);
      std::cout << "wrote " << stats_opts.out_dir << "/stats.csv\n";
    }
    return 0;
  } catch (const nw::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nw::NumericalInvariantError& e) {
    std::cerr << "numerical invariant violated: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
