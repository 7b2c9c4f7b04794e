#include "noisywalk/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "noisywalk/errors.hpp"

namespace nw {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

const std::string* find(const Settings& s, const std::string& key) {
  auto it = s.find(key);
  return it == s.end() ? nullptr : &it->second;
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "lattice-size", "realizations", "time",         "grid-points",     "gamma",
      "lbar",         "p",            "noise-amp",    "coupling",        "propagator",
      "taylor-order", "dt-cap",       "seed",         "initial",         "boundary",
      "onsite-energy", "workers",     "batch-groups", "checkpoint-every", "checkpoint-path",
      "gammas",       "lbars",        "window",       "draws",           "memory-limit-mb",
  };
  return keys;
}

void reject_unknown_keys(const Settings& settings, const std::string& source) {
  const auto& keys = known_keys();
  std::vector<std::string> unknown;
  for (const auto& [k, v] : settings) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) unknown.push_back(k);
  }
  if (unknown.empty()) return;
  std::string msg = source + ": unknown keys:";
  for (const auto& k : unknown) msg += " " + k;
  throw ConfigError(msg);
}

Settings parse_settings(std::istream& in, const std::string& source) {
  Settings out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    if (out.count(key)) throw ConfigError(source + ": duplicate key " + key);
    out[key] = value;
  }
  reject_unknown_keys(out, source);
  return out;
}

Settings load_settings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  return parse_settings(in, path);
}

Settings settings_from_env(const std::function<const char*(const char*)>& getenv_fn) {
  Settings out;
  for (const auto& key : known_keys()) {
    std::string name = "NW_";
    for (char c : key) name += (c == '-') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = getenv_fn(name.c_str())) out[key] = v;
  }
  return out;
}

Settings merge_settings(std::initializer_list<const Settings*> layers) {
  Settings out;
  for (const Settings* layer : layers) {
    if (!layer) continue;
    for (const auto& [k, v] : *layer) out[k] = v;
  }
  return out;
}

double parse_real(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  const auto pi_pos = t.find("pi");
  try {
    if (pi_pos == std::string::npos) {
      std::size_t used = 0;
      const double v = std::stod(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    }
    // [coef][*]pi[/den]
    std::string coef = trim(t.substr(0, pi_pos));
    if (!coef.empty() && coef.back() == '*') coef.pop_back();
    double value = std::numbers::pi;
    if (!coef.empty()) value *= (coef == "-") ? -1.0 : std::stod(coef);
    const std::string rest = trim(t.substr(pi_pos + 2));
    if (!rest.empty()) {
      if (rest.front() != '/') throw std::invalid_argument(t);
      value /= std::stod(rest.substr(1));
    }
    return value;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for " + key + ": '" + text + "'");
  }
}

long long parse_integer(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer for " + key + ": '" + text + "'");
  }
}

std::vector<double> parse_real_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) {
    if (!item.empty()) out.push_back(parse_real(item, key));
  }
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

std::vector<InitialState> parse_initial(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("initial state must look like kind:args, got '" + text + "'");
  const std::string kind = trim(text.substr(0, colon));
  const auto args = split(text.substr(colon + 1), ',');
  if (kind == "localized" && args.size() == 1) {
    return {InitialState::localized(static_cast<int>(parse_integer(args[0], "initial")))};
  }
  if (kind == "pair" && args.size() == 2) {
    return {InitialState::localized(static_cast<int>(parse_integer(args[0], "initial"))),
            InitialState::localized(static_cast<int>(parse_integer(args[1], "initial")))};
  }
  if (kind == "gaussian" && (args.size() == 2 || args.size() == 3)) {
    const double center = args.size() == 3 ? parse_real(args[2], "initial") : 0.0;
    return {InitialState::gaussian(parse_real(args[0], "initial"), parse_real(args[1], "initial"), center)};
  }
  throw ConfigError("unrecognized initial state '" + text + "'");
}

double resolve_p(const Settings& settings, int lattice_size) {
  const std::string* p_text = find(settings, "p");
  const std::string* lbar_text = find(settings, "lbar");
  if (!p_text && !lbar_text) return 0.0;
  double p = 0.0;
  if (p_text) {
    p = parse_real(*p_text, "p");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p must lie in [0, 1]");
  }
  if (lbar_text) {
    const double lbar = parse_real(*lbar_text, "lbar");
    if (!(lbar >= 1.0 && lbar <= lattice_size)) throw ConfigError("lbar must lie in [1, N]");
    const double from_lbar = p_from_mean_length(lattice_size, lbar);
    if (p_text && std::abs(from_lbar - p) > 1e-9) {
      throw ConfigError("inconsistent lbar/p: lbar=" + *lbar_text + " implies p=" + format_real(from_lbar) +
                        " but p=" + *p_text);
    }
    p = from_lbar;
  }
  return p;
}

RunConfig build_run_config(const Settings& settings) {
  reject_unknown_keys(settings, "settings");
  RunConfig c;
  auto get_int = [&](const char* key, int& target) {
    if (auto v = find(settings, key)) target = static_cast<int>(parse_integer(*v, key));
  };
  auto get_real = [&](const char* key, double& target) {
    if (auto v = find(settings, key)) target = parse_real(*v, key);
  };
  get_int("lattice-size", c.lattice_size);
  get_int("realizations", c.realizations);
  get_real("time", c.tau);
  get_int("grid-points", c.grid_points);
  get_real("gamma", c.noise.gamma);
  get_real("noise-amp", c.noise.nu);
  get_real("coupling", c.noise.nu0);
  get_real("onsite-energy", c.chain.onsite_energy);
  get_int("taylor-order", c.propagator.taylor_order);
  get_int("workers", c.workers);
  get_int("batch-groups", c.batch_groups);
  get_int("checkpoint-every", c.checkpoint_every);
  if (auto v = find(settings, "checkpoint-path")) c.checkpoint_path = *v;
  if (auto v = find(settings, "memory-limit-mb")) {
    c.memory_limit_bytes = static_cast<std::size_t>(parse_integer(*v, "memory-limit-mb")) << 20;
  }
  if (auto v = find(settings, "dt-cap")) c.propagator.dt_cap = parse_real(*v, "dt-cap");
  if (auto v = find(settings, "seed")) {
    try {
      std::size_t used = 0;
      c.seed = std::stoull(trim(*v), &used);
      if (used != trim(*v).size()) throw std::invalid_argument(*v);
    } catch (const std::exception&) {
      throw ConfigError("invalid seed '" + *v + "'");
    }
  }
  if (auto v = find(settings, "propagator")) {
    if (*v == "exact") {
      c.propagator.method = PropagatorMethod::exact_event;
    } else if (*v == "taylor") {
      c.propagator.method = PropagatorMethod::taylor_grid;
    } else {
      throw ConfigError("propagator must be exact or taylor, got '" + *v + "'");
    }
  }
  if (auto v = find(settings, "boundary")) {
    if (*v == "open") {
      c.chain.boundary = Boundary::open;
    } else if (*v == "periodic") {
      c.chain.boundary = Boundary::periodic;
    } else {
      throw ConfigError("boundary must be open or periodic, got '" + *v + "'");
    }
  }
  if (c.lattice_size < 2) throw ConfigError("lattice size must be >= 2");
  c.noise.p = resolve_p(settings, c.lattice_size);
  if (auto v = find(settings, "initial")) {
    c.initial_states = parse_initial(*v);
  } else {
    c.initial_states = {InitialState::localized(c.lattice_size / 2),
                        InitialState::localized(c.lattice_size / 2 + 1)};
  }
  c.validate();
  c.config_hash = config_hash(c);
  return c;
}

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string hex64(std::uint64_t value) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

Settings echo_config(const RunConfig& c) {
  Settings s;
  s["lattice-size"] = std::to_string(c.lattice_size);
  s["realizations"] = std::to_string(c.realizations);
  s["time"] = format_real(c.tau);
  s["grid-points"] = std::to_string(c.grid_points);
  s["gamma"] = format_real(c.noise.gamma);
  s["p"] = format_real(c.noise.p);
  s["noise-amp"] = format_real(c.noise.nu);
  s["coupling"] = format_real(c.noise.nu0);
  s["propagator"] = c.propagator.method == PropagatorMethod::exact_event ? "exact" : "taylor";
  s["taylor-order"] = std::to_string(c.propagator.taylor_order);
  if (c.propagator.dt_cap) s["dt-cap"] = format_real(*c.propagator.dt_cap);
  s["seed"] = std::to_string(c.seed);
  s["boundary"] = c.chain.boundary == Boundary::open ? "open" : "periodic";
  s["onsite-energy"] = format_real(c.chain.onsite_energy);
  s["batch-groups"] = std::to_string(c.batch_groups);
  if (c.initial_states.size() == 2) {
    s["initial"] = "pair:" + std::to_string(c.initial_states[0].site) + "," +
                   std::to_string(c.initial_states[1].site);
  } else if (!c.initial_states.empty()) {
    s["initial"] = c.initial_states[0].describe();
  }
  return s;
}

std::uint64_t config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : echo_config(config)) {
    for (char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace nw
