#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "noisywalk/ensemble.hpp"

namespace nw {

/// Flat key -> value settings. Keys use the long CLI flag spelling without the
/// leading dashes, e.g. "lattice-size".
using Settings = std::map<std::string, std::string>;

/// Every key accepted in config files, env overrides and meta.json echoes.
const std::vector<std::string>& known_keys();

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
/// Unknown keys raise ConfigError naming all of them.
Settings parse_settings(std::istream& in, const std::string& source = "config");
Settings load_settings_file(const std::string& path);

/// Collects NW_<KEY> environment overrides (dashes become underscores).
Settings settings_from_env(const std::function<const char*(const char*)>& getenv_fn);

/// Later layers override earlier ones key by key.
Settings merge_settings(std::initializer_list<const Settings*> layers);

/// Throws ConfigError listing keys not in known_keys().
void reject_unknown_keys(const Settings& settings, const std::string& source);

/// Resolves the link correlation p from `p` or `lbar`; both present must agree.
double resolve_p(const Settings& settings, int lattice_size);

/// Builds and validates a RunConfig. Missing keys keep RunConfig defaults.
RunConfig build_run_config(const Settings& settings);

/// Parses "localized:J", "pair:J,K" or "gaussian:K0,DELTA[,CENTER]".
std::vector<InitialState> parse_initial(const std::string& text);

/// Reals accept plain numbers and multiples of pi ("pi/2", "0.5pi").
double parse_real(const std::string& text, const std::string& key);
long long parse_integer(const std::string& text, const std::string& key);
std::vector<double> parse_real_list(const std::string& text, const std::string& key);

/// Canonical echo of every setting that affects results (not workers or
/// checkpointing), with reals at 17 significant digits.
Settings echo_config(const RunConfig& config);

/// FNV-1a over the canonical echo.
std::uint64_t config_hash(const RunConfig& config);
std::string hex64(std::uint64_t value);

/// %.17g formatting.
std::string format_real(double value);

}  // namespace nw
