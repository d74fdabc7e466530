#include "homog/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace homog {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

/// Accepts plain decimals and small rationals like "1/32".
double parse_real(const std::string& tok, const std::string& where) {
  const auto slash = tok.find('/');
  try {
    if (slash != std::string::npos) {
      const double num = std::stod(tok.substr(0, slash));
      const double den = std::stod(tok.substr(slash + 1));
      if (den == 0.0) throw std::invalid_argument("division by zero");
      return num / den;
    }
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad number '" + tok + "' in " + where);
  }
}

long parse_int(const std::string& tok, const std::string& where) {
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad integer '" + tok + "' in " + where);
  }
}

bool parse_bool(const std::string& tok, const std::string& where) {
  if (tok == "true" || tok == "1") return true;
  if (tok == "false" || tok == "0") return false;
  throw std::runtime_error("config: bad boolean '" + tok + "' in " + where);
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Section {
  std::map<std::string, std::string> entries;
  std::vector<std::string> order;
};

}  // namespace

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  std::map<std::string, Section> sections;
  std::vector<std::string> section_order;
  {
    std::istringstream in(text);
    std::string line, current;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash_pos = line.find('#');
      if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw std::runtime_error("config: malformed section at line " +
                                   std::to_string(lineno));
        current = trim(line.substr(1, line.size() - 2));
        if (current.empty())
          throw std::runtime_error("config: empty section name at line " +
                                   std::to_string(lineno));
        if (sections.count(current) == 0) section_order.push_back(current);
        sections[current];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos || current.empty())
        throw std::runtime_error("config: expected 'key = value' at line " +
                                 std::to_string(lineno));
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      Section& sec = sections[current];
      if (sec.entries.count(key))
        throw std::runtime_error("config: duplicate key '" + key + "' in [" + current +
                                 "] at line " + std::to_string(lineno));
      sec.entries[key] = value;
      sec.order.push_back(key);
    }
  }

  ExperimentConfig cfg;
  cfg.ensemble.epsilons.clear();
  cfg.ensemble.functionals.clear();

  auto take = [](Section& sec, const std::string& key) -> const std::string* {
    auto it = sec.entries.find(key);
    return it == sec.entries.end() ? nullptr : &it->second;
  };
  auto finish_section = [](const std::string& name, Section& sec,
                           std::initializer_list<const char*> known) {
    for (const auto& [key, value] : sec.entries) {
      bool ok = false;
      for (const char* k : known)
        if (key == k) ok = true;
      if (!ok)
        throw std::runtime_error("config: unknown key '" + key + "' in [" + name + "]");
      (void)value;
    }
  };

  for (const std::string& name : section_order) {
    Section& sec = sections[name];
    const std::string where = "[" + name + "]";
    if (name == "model") {
      if (const auto* v = take(sec, "d")) cfg.ensemble.dim = static_cast<int>(parse_int(*v, where));
      if (const auto* v = take(sec, "beta")) cfg.ensemble.beta = parse_real(*v, where);
      if (const auto* v = take(sec, "kappa")) cfg.ensemble.kappa = static_cast<int>(parse_int(*v, where));
      if (const auto* v = take(sec, "family")) cfg.ensemble.family = *v;
      if (const auto* v = take(sec, "lambda")) cfg.ensemble.lambda = parse_real(*v, where);
      if (const auto* v = take(sec, "constant_value")) cfg.ensemble.constant_value = parse_real(*v, where);
      if (const auto* v = take(sec, "C0")) cfg.ensemble.C0 = parse_real(*v, where);
      if (const auto* v = take(sec, "profile_scale"))
        cfg.ensemble.profile_scale = parse_real(*v, where);
      finish_section(name, sec,
                     {"d", "beta", "kappa", "family", "lambda", "constant_value", "C0",
                      "profile_scale"});
    } else if (name == "grid") {
      if (const auto* v = take(sec, "side")) cfg.ensemble.side = static_cast<int>(parse_int(*v, where));
      finish_section(name, sec, {"side"});
    } else if (name == "ensemble") {
      if (const auto* v = take(sec, "samples")) cfg.ensemble.samples = parse_int(*v, where);
      if (const auto* v = take(sec, "base_seed"))
        cfg.ensemble.base_seed = static_cast<std::uint64_t>(parse_int(*v, where));
      if (const auto* v = take(sec, "epsilons"))
        for (const auto& tok : split_ws(*v)) cfg.ensemble.epsilons.push_back(parse_real(tok, where));
      if (const auto* v = take(sec, "shift"))
        for (const auto& tok : split_ws(*v)) cfg.ensemble.shift.push_back(parse_real(tok, where));
      if (const auto* v = take(sec, "use_ensemble_abar"))
        cfg.ensemble.use_ensemble_abar = parse_bool(*v, where);
      finish_section(name, sec, {"samples", "base_seed", "epsilons", "shift", "use_ensemble_abar"});
    } else if (name.rfind("functional.", 0) == 0) {
      FunctionalSpec f;
      f.id = name.substr(std::string("functional.").size());
      if (f.id.empty()) throw std::runtime_error("config: functional needs a name");
      if (const auto* v = take(sec, "center")) {
        const auto toks = split_ws(*v);
        if (toks.size() != static_cast<std::size_t>(cfg.ensemble.dim))
          throw std::runtime_error("config: center needs d entries in " + where);
        for (std::size_t k = 0; k < toks.size(); ++k)
          f.center[k] = parse_real(toks[k], where);
      }
      if (const auto* v = take(sec, "radius")) f.radius = parse_real(*v, where);
      if (const auto* v = take(sec, "slot")) {
        const auto toks = split_ws(*v);
        if (toks.size() != 2) throw std::runtime_error("config: slot needs two indices in " + where);
        f.slot_i = static_cast<int>(parse_int(toks[0], where)) - 1;
        f.slot_j = static_cast<int>(parse_int(toks[1], where)) - 1;
        if (f.slot_i < 0 || f.slot_i >= cfg.ensemble.dim || f.slot_j < 0 ||
            f.slot_j >= cfg.ensemble.dim)
          throw std::runtime_error("config: slot out of range in " + where);
      }
      finish_section(name, sec, {"center", "radius", "slot"});
      cfg.ensemble.functionals.push_back(std::move(f));
    } else if (name == "solver") {
      if (const auto* v = take(sec, "tol")) cfg.ensemble.solver_tol = parse_real(*v, where);
      finish_section(name, sec, {"tol"});
    } else if (name == "medium") {
      if (const auto* v = take(sec, "type")) cfg.medium_type = *v;
      if (const auto* v = take(sec, "axis")) cfg.medium_axis = static_cast<int>(parse_int(*v, where)) - 1;
      if (const auto* v = take(sec, "value_hi")) cfg.medium_hi = parse_real(*v, where);
      if (const auto* v = take(sec, "value_lo")) cfg.medium_lo = parse_real(*v, where);
      if (const auto* v = take(sec, "stripe_period"))
        cfg.stripe_period = static_cast<int>(parse_int(*v, where));
      if (const auto* v = take(sec, "cell")) cfg.checker_cell = static_cast<int>(parse_int(*v, where));
      if (const auto* v = take(sec, "flux_corrector")) cfg.flux_corrector = parse_bool(*v, where);
      finish_section(name, sec,
                     {"type", "axis", "value_hi", "value_lo", "stripe_period", "cell",
                      "flux_corrector"});
    } else if (name == "scan") {
      if (const auto* v = take(sec, "sides"))
        for (const auto& tok : split_ws(*v))
          cfg.scan_sides.push_back(static_cast<int>(parse_int(tok, where)));
      if (const auto* v = take(sec, "samples")) cfg.scan_samples = parse_int(*v, where);
      if (const auto* v = take(sec, "z"))
        for (const auto& tok : split_ws(*v)) cfg.scan_z.push_back(parse_real(tok, where));
      finish_section(name, sec, {"sides", "samples", "z"});
    } else if (name == "sample") {
      if (const auto* v = take(sec, "count")) cfg.field_count = parse_int(*v, where);
      if (const auto* v = take(sec, "lags")) {
        // Lags as semicolon-separated vectors: "0 0; 1 0; 8 0".
        std::istringstream in(*v);
        std::string group;
        while (std::getline(in, group, ';')) {
          const auto toks = split_ws(trim(group));
          if (toks.empty()) continue;
          if (toks.size() != static_cast<std::size_t>(cfg.ensemble.dim))
            throw std::runtime_error("config: each lag needs d entries in " + where);
          std::vector<int> lag;
          for (const auto& tok : toks) lag.push_back(static_cast<int>(parse_int(tok, where)));
          cfg.lags.push_back(std::move(lag));
        }
      }
      finish_section(name, sec, {"count", "lags"});
    } else if (name == "run") {
      if (const auto* v = take(sec, "workers")) cfg.workers = static_cast<int>(parse_int(*v, where));
      if (const auto* v = take(sec, "quiet")) cfg.quiet = parse_bool(*v, where);
      if (const auto* v = take(sec, "out")) cfg.out_dir = *v;
      finish_section(name, sec, {"workers", "quiet", "out"});
    } else {
      throw std::runtime_error("config: unknown section [" + name + "]");
    }
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream out;
  const auto& e = ensemble;
  out << "[model]\n";
  out << "d = " << e.dim << "\n";
  out << "beta = " << format_real(e.beta) << "\n";
  out << "kappa = " << e.kappa << "\n";
  out << "family = " << e.family << "\n";
  out << "lambda = " << format_real(e.lambda) << "\n";
  out << "constant_value = " << format_real(e.constant_value) << "\n";
  out << "C0 = " << format_real(e.C0) << "\n";
  out << "profile_scale = " << format_real(e.profile_scale) << "\n";
  out << "\n[grid]\nside = " << e.side << "\n";
  out << "\n[ensemble]\n";
  out << "samples = " << e.samples << "\n";
  out << "base_seed = " << e.base_seed << "\n";
  if (!e.epsilons.empty()) {
    out << "epsilons =";
    for (double v : e.epsilons) out << " " << format_real(v);
    out << "\n";
  }
  if (!e.shift.empty()) {
    out << "shift =";
    for (double v : e.shift) out << " " << format_real(v);
    out << "\n";
  }
  out << "use_ensemble_abar = " << (e.use_ensemble_abar ? "true" : "false") << "\n";
  for (const auto& f : e.functionals) {
    out << "\n[functional." << f.id << "]\n";
    out << "center =";
    for (int k = 0; k < e.dim; ++k) out << " " << format_real(f.center[static_cast<std::size_t>(k)]);
    out << "\n";
    out << "radius = " << format_real(f.radius) << "\n";
    out << "slot = " << (f.slot_i + 1) << " " << (f.slot_j + 1) << "\n";
  }
  out << "\n[solver]\ntol = " << format_real(e.solver_tol) << "\n";
  out << "\n[medium]\n";
  out << "type = " << medium_type << "\n";
  out << "axis = " << (medium_axis + 1) << "\n";
  out << "value_hi = " << format_real(medium_hi) << "\n";
  out << "value_lo = " << format_real(medium_lo) << "\n";
  out << "stripe_period = " << stripe_period << "\n";
  out << "cell = " << checker_cell << "\n";
  out << "flux_corrector = " << (flux_corrector ? "true" : "false") << "\n";
  if (!scan_sides.empty() || !scan_z.empty()) {
    out << "\n[scan]\n";
    if (!scan_sides.empty()) {
      out << "sides =";
      for (int v : scan_sides) out << " " << v;
      out << "\n";
    }
    out << "samples = " << scan_samples << "\n";
    if (!scan_z.empty()) {
      out << "z =";
      for (double v : scan_z) out << " " << format_real(v);
      out << "\n";
    }
  }
  out << "\n[sample]\ncount = " << field_count << "\n";
  if (!lags.empty()) {
    out << "lags = ";
    for (std::size_t i = 0; i < lags.size(); ++i) {
      if (i) out << "; ";
      for (std::size_t k = 0; k < lags[i].size(); ++k) {
        if (k) out << " ";
        out << lags[i][k];
      }
    }
    out << "\n";
  }
  out << "\n[run]\n";
  out << "workers = " << workers << "\n";
  out << "quiet = " << (quiet ? "true" : "false") << "\n";
  out << "out = " << out_dir << "\n";
  return out.str();
}

std::string ExperimentConfig::hash() const {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize())));
  return buf;
}

}  // namespace homog
