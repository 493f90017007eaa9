#include "wcontract/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace wcontract {

ConfigError::ConfigError(const std::string& field, int line, const std::string& what)
    : std::runtime_error(what), field_(field), line_(line) {}

const std::vector<std::string>& operation_names() {
  static const std::vector<std::string> names{"fk-eig",   "fk-sweep", "kappa",   "gp",
                                              "lyapunov", "couple",   "constants", "certify",
                                              "kinetic-rate", "mass-bound"};
  return names;
}

const std::vector<ConfigKey>& config_schema() {
  using V = ValueType;
  static const std::vector<ConfigKey> schema{
      {"model", "kind", V::text, "none",
       "none | overdamped1d | ornstein_uhlenbeck | kinetic_langevin | colored_noise | linear"},
      {"model", "potential", V::text, "U1", "U0, U1, U2 or an expression in x (U or V)"},
      {"model", "params", V::text, "", "expression parameters, e.g. a=0.25, b=1"},
      {"model", "theta", V::real, "1", "noise level"},
      {"model", "rate", V::real, "1", "Ornstein-Uhlenbeck rate"},
      {"model", "dim", V::integer, "1", "dimension (OU, kinetic)"},
      {"model", "gamma", V::real, "2", "kinetic friction"},
      {"model", "A", V::matrix, "1", "colored-noise coupling matrix"},
      {"model", "sigma0", V::matrix, "1", "colored-noise noise matrix"},
      {"model", "eta_cv", V::real, "0", "colored-noise change-of-variables weight; 0 = default"},
      {"model", "drift_matrix", V::matrix, "", "linear model drift matrix"},
      {"model", "sigma_matrix", V::matrix, "", "linear model noise; empty = sqrt(2) theta I"},

      {"operation", "name", V::text, nullptr, "operation to run"},
      {"operation", "p", V::real, "1", "order p"},
      {"operation", "ps", V::list, "1,2,3", "orders for kappa"},
      {"operation", "t", V::real, "1", "time horizon for kappa and gp"},
      {"operation", "times", V::list, "", "times for kappa; empty = t"},
      {"operation", "x0", V::list, "0", "initial condition"},
      {"operation", "x0p", V::list, "", "second initial condition (couple); empty = -x0"},
      {"operation", "grid_lo", V::real, "-3", "1D search grid start"},
      {"operation", "grid_hi", V::real, "3", "1D search grid end"},
      {"operation", "grid_step", V::real, "0.25", "1D search grid step"},
      {"operation", "points", V::matrix, "", "multi-d search points, one per row; empty = x0"},
      {"operation", "p_min", V::real, "1", "sweep"},
      {"operation", "p_max", V::real, "3", "sweep"},
      {"operation", "p_count", V::integer, "25", "sweep"},
      {"operation", "theta2_min", V::real, "0.1", "sweep"},
      {"operation", "theta2_max", V::real, "5", "sweep"},
      {"operation", "theta2_count", V::integer, "25", "sweep"},
      {"operation", "sensitivity", V::flag, "true", "couple: repeat at 2 xi"},

      {"numeric", "seed", V::u64, nullptr, "master seed"},
      {"numeric", "N", V::integer, "1000", "sample count"},
      {"numeric", "dt", V::real, "0.001", "time step"},
      {"numeric", "T", V::real, "20", "horizon for lyapunov and couple"},
      {"numeric", "checkpoints", V::integer, "20", "checkpoint count"},
      {"numeric", "batches", V::integer, "20", "batches for the couple rate error"},
      {"numeric", "fit_from", V::real, "0.5", "couple fit window starts at fit_from * T"},
      {"numeric", "xi", V::real, "0.001", "coupling regularization"},
      {"numeric", "tol", V::real, "1e-10", "eigenvalue tolerance"},
      {"numeric", "dx", V::real, "0.001", "grid step"},
      {"numeric", "x_min", V::real, "-5", "domain start"},
      {"numeric", "x_max", V::real, "5", "domain end"},
      {"numeric", "boundary", V::text, "reflecting", "reflecting | dirichlet"},
      {"numeric", "method", V::text, "automatic", "automatic | sturm | power"},
      {"numeric", "max_iterations", V::integer, "2000000", "power iteration cap"},

      {"coupling", "source", V::text, "params", "params | model"},
      {"coupling", "rho1", V::real, "1", ""},
      {"coupling", "L1", V::real, "1", ""},
      {"coupling", "L2", V::real, "1", ""},
      {"coupling", "L3", V::real, "1", ""},
      {"coupling", "theta", V::real, "1", ""},
      {"coupling", "Q", V::matrix, "1", "metric; 1x1 means identity of size n+m"},
      {"coupling", "rho2", V::real, "1", ""},
      {"coupling", "S_star", V::real, "1", ""},
      {"coupling", "n", V::integer, "1", "y-block size"},
      {"coupling", "m", V::integer, "1", "z-block size"},
      {"coupling", "use_Q_norm", V::flag, "false", "replace |Q22| by |Q|"},

      {"certify", "mu_eta", V::real, "-1", "mean of eta under the invariant measure"},
      {"certify", "L_eta", V::real, "0", "Lipschitz constant of eta"},
      {"certify", "C1", V::real, "0", "0 = C_p at p = 1 from [coupling]"},
      {"certify", "lambda1", V::real, "0", "0 = lambda_p at p = 1 from [coupling]"},
      {"certify", "sigma_norm", V::real, "1", "|sigma|"},
      {"certify", "R", V::real, "0", ""},
      {"certify", "mu_abs_moment", V::real, "0", "first absolute moment"},
      {"certify", "rho", V::real, "0", "contraction rate of eta at infinity"},
      {"certify", "eta_delta", V::real, "0", "eta-bar level; 0 = skip"},
      {"certify", "eta_q", V::real, "0.5", ""},
      {"certify", "eta_S", V::real, "1", ""},
      {"certify", "eta_S2", V::real, "2", ""},
      {"certify", "eta_Q", V::matrix, "1", ""},

      {"mass", "K", V::real, "1", ""},
      {"mass", "R", V::real, "1", ""},
      {"mass", "R2", V::real, "2", ""},
      {"mass", "theta", V::real, "1", ""},
      {"mass", "d", V::real, "1", ""},

      {"kinetic", "ell", V::real, "1", ""},
      {"kinetic", "Lambda", V::real, "1", ""},
      {"kinetic", "gamma", V::real, "2", ""},
      {"kinetic", "xi0", V::real, "0", "infimum of the Hessian spectrum of V"},
      {"kinetic", "d", V::integer, "1", ""},

      {"output", "dir", V::text, ".", "output directory"},
      {"output", "formats", V::text, "csv,json,svg", "subset of csv,json,svg"},
      {"output", "color_lo", V::real, "-4", "heatmap scale"},
      {"output", "color_hi", V::real, "4", "heatmap scale"},
  };
  return schema;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

const ConfigKey* find_key(const std::string& section, const std::string& key) {
  for (const auto& k : config_schema())
    if (section == k.section && key == k.key) return &k;
  return nullptr;
}

bool known_section(const std::string& s) {
  for (const auto& k : config_schema())
    if (s == k.section) return true;
  return false;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double to_real(const std::string& s, const std::string& field, int line) {
  if (s.empty()) throw ConfigError(field, line, field + ": expected a number");
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s.c_str(), &end);
  if (*end != '\0' || errno == ERANGE || !std::isfinite(v))
    throw ConfigError(field, line, field + ": '" + s + "' is not a finite number");
  return v;
}

std::string canonical(const ConfigKey& k, const std::string& value, int line) {
  const std::string field = std::string(k.section) + "." + k.key;
  switch (k.type) {
    case ValueType::real:
      return format_real(to_real(value, field, line));
    case ValueType::integer: {
      char* end = nullptr;
      errno = 0;
      long v = std::strtol(value.c_str(), &end, 10);
      if (value.empty() || *end != '\0' || errno == ERANGE)
        throw ConfigError(field, line, field + ": '" + value + "' is not an integer");
      return std::to_string(v);
    }
    case ValueType::u64: {
      if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError(field, line, field + ": '" + value + "' is not an unsigned integer");
      errno = 0;
      unsigned long long v = std::strtoull(value.c_str(), nullptr, 10);
      if (errno == ERANGE) throw ConfigError(field, line, field + ": value out of range");
      return std::to_string(v);
    }
    case ValueType::text:
      return value;
    case ValueType::list: {
      if (trim(value).empty()) return "";
      std::string out;
      for (const auto& item : split(value, ',')) {
        if (!out.empty()) out += ',';
        out += format_real(to_real(item, field, line));
      }
      return out;
    }
    case ValueType::matrix: {
      if (trim(value).empty()) return "";
      std::string out;
      std::size_t cols = 0;
      auto rows = split(value, ';');
      for (std::size_t r = 0; r < rows.size(); ++r) {
        auto items = split(rows[r], ',');
        if (r == 0) cols = items.size();
        if (items.size() != cols)
          throw ConfigError(field, line, field + ": rows have different lengths");
        if (r) out += ';';
        for (std::size_t c = 0; c < items.size(); ++c) {
          if (c) out += ',';
          out += format_real(to_real(items[c], field, line));
        }
      }
      return out;
    }
    case ValueType::flag: {
      std::string v = value;
      std::transform(v.begin(), v.end(), v.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (v == "true" || v == "yes" || v == "on" || v == "1") return "true";
      if (v == "false" || v == "no" || v == "off" || v == "0") return "false";
      throw ConfigError(field, line, field + ": expected true or false");
    }
  }
  return value;
}

void check_choice(const ExperimentConfig& cfg, const char* section, const char* key,
                  const std::vector<std::string>& allowed, int line) {
  const std::string& v = cfg.text(section, key);
  if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    std::string field = std::string(section) + "." + key;
    throw ConfigError(field, line, field + ": '" + v + "' is not one of " + list);
  }
}

// Value with optional surrounding quotes; returns the unquoted text.
std::string parse_value(const std::string& rest, const std::string& field, int line) {
  std::string s = trim(rest);
  if (s.empty() || s[0] != '"') {
    // unquoted: a '#' or ';' preceded by whitespace starts a comment
    for (std::size_t i = 1; i < s.size(); ++i)
      if ((s[i] == '#' || s[i] == ';') && (s[i - 1] == ' ' || s[i - 1] == '\t'))
        return trim(s.substr(0, i));
    return s;
  }
  std::string out;
  std::size_t i = 1;
  for (; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      out += s[++i];
    } else if (s[i] == '"') {
      break;
    } else {
      out += s[i];
    }
  }
  if (i >= s.size()) throw ConfigError(field, line, field + ": unterminated quoted string");
  std::string tail = trim(s.substr(i + 1));
  if (!tail.empty() && tail[0] != '#' && tail[0] != ';')
    throw ConfigError(field, line, field + ": unexpected text after closing quote");
  return out;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

ExperimentConfig parse_config(const std::string& text,
                              const std::map<std::string, std::string>& overrides,
                              const std::map<std::string, std::string>& fallbacks) {
  ExperimentConfig cfg;
  std::map<std::string, int> lines;  // field -> line of definition
  std::istringstream in(text);
  std::string raw_line, section;
  int lineno = 0;
  while (std::getline(in, raw_line)) {
    ++lineno;
    std::string s = trim(raw_line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s[0] == '[') {
      auto close = s.find(']');
      if (close == std::string::npos)
        throw ConfigError("", lineno, "line " + std::to_string(lineno) + ": missing ']'");
      section = trim(s.substr(1, close - 1));
      if (!known_section(section))
        throw ConfigError(section, lineno,
                          "line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", lineno, "line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    if (section.empty())
      throw ConfigError(key, lineno,
                        "line " + std::to_string(lineno) + ": key '" + key + "' outside a section");
    const std::string field = section + "." + key;
    const ConfigKey* k = find_key(section, key);
    if (!k)
      throw ConfigError(field, lineno, "line " + std::to_string(lineno) + ": unknown key " + field);
    if (lines.count(field))
      throw ConfigError(field, lineno,
                        "line " + std::to_string(lineno) + ": duplicate key " + field +
                            " (first set on line " + std::to_string(lines[field]) + ")");
    lines[field] = lineno;
    std::string value = parse_value(s.substr(eq + 1), field, lineno);
    try {
      cfg.values_[section][key] = canonical(*k, value, lineno);
    } catch (const ConfigError& e) {
      throw ConfigError(e.field(), lineno, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }

  auto apply = [&](const std::map<std::string, std::string>& extra, bool replace) {
    for (const auto& [field, value] : extra) {
      auto dot = field.find('.');
      std::string sec = field.substr(0, dot);
      std::string key = dot == std::string::npos ? "" : field.substr(dot + 1);
      const ConfigKey* k = find_key(sec, key);
      if (!k) throw ConfigError(field, 0, "unknown key " + field);
      if (!replace && cfg.values_[sec].count(key)) continue;
      cfg.values_[sec][key] = canonical(*k, value, 0);
      lines[field] = 0;
    }
  };
  apply(overrides, true);
  apply(fallbacks, false);

  for (const auto& k : config_schema()) {
    auto& sec = cfg.values_[k.section];
    if (sec.count(k.key)) continue;
    if (!k.fallback) {
      std::string field = std::string(k.section) + "." + k.key;
      throw ConfigError(field, 0, "missing required key " + field);
    }
    sec[k.key] = canonical(k, k.fallback, 0);
  }

  auto line_of = [&](const char* f) {
    auto it = lines.find(f);
    return it == lines.end() ? 0 : it->second;
  };
  check_choice(cfg, "operation", "name", operation_names(), line_of("operation.name"));
  check_choice(cfg, "model", "kind",
               {"none", "overdamped1d", "ornstein_uhlenbeck", "kinetic_langevin", "colored_noise",
                "linear"},
               line_of("model.kind"));
  check_choice(cfg, "numeric", "boundary", {"reflecting", "dirichlet"}, line_of("numeric.boundary"));
  check_choice(cfg, "numeric", "method", {"automatic", "sturm", "power"}, line_of("numeric.method"));
  check_choice(cfg, "coupling", "source", {"params", "model"}, line_of("coupling.source"));
  for (const auto& f : split(cfg.text("output", "formats"), ','))
    if (f != "csv" && f != "json" && f != "svg")
      throw ConfigError("output.formats", line_of("output.formats"),
                        "output.formats: unknown format '" + f + "'");
  try {
    cfg.params();
  } catch (const ConfigError& e) {
    throw ConfigError(e.field(), line_of("model.params"), e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path,
                             const std::map<std::string, std::string>& overrides,
                             const std::map<std::string, std::string>& fallbacks) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", 0, "cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, fallbacks);
}

const std::string& ExperimentConfig::raw(const std::string& section, const std::string& key) const {
  auto s = values_.find(section);
  if (s != values_.end()) {
    auto v = s->second.find(key);
    if (v != s->second.end()) return v->second;
  }
  throw ConfigError(section + "." + key, 0, "no config key " + section + "." + key);
}

double ExperimentConfig::real(const std::string& section, const std::string& key) const {
  return std::strtod(raw(section, key).c_str(), nullptr);
}

long ExperimentConfig::integer(const std::string& section, const std::string& key) const {
  return std::strtol(raw(section, key).c_str(), nullptr, 10);
}

std::uint64_t ExperimentConfig::u64(const std::string& section, const std::string& key) const {
  return std::strtoull(raw(section, key).c_str(), nullptr, 10);
}

const std::string& ExperimentConfig::text(const std::string& section, const std::string& key) const {
  return raw(section, key);
}

std::vector<double> ExperimentConfig::list(const std::string& section, const std::string& key) const {
  std::vector<double> out;
  const std::string& s = raw(section, key);
  if (s.empty()) return out;
  for (const auto& item : split(s, ',')) out.push_back(std::strtod(item.c_str(), nullptr));
  return out;
}

Mat ExperimentConfig::matrix(const std::string& section, const std::string& key) const {
  const std::string& s = raw(section, key);
  if (s.empty()) return Mat(0, 0);
  auto rows = split(s, ';');
  auto first = split(rows[0], ',');
  Mat m(rows.size(), first.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto items = split(rows[r], ',');
    for (std::size_t c = 0; c < items.size(); ++c) m(r, c) = std::strtod(items[c].c_str(), nullptr);
  }
  return m;
}

bool ExperimentConfig::flag(const std::string& section, const std::string& key) const {
  return raw(section, key) == "true";
}

ParamMap ExperimentConfig::params() const {
  ParamMap out;
  const std::string& s = raw("model", "params");
  if (trim(s).empty()) return out;
  for (const auto& item : split(s, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw ConfigError("model.params", 0, "model.params: expected name=value, got '" + item + "'");
    std::string name = trim(item.substr(0, eq));
    out[name] = to_real(trim(item.substr(eq + 1)), "model.params", 0);
  }
  return out;
}

void ExperimentConfig::set(const std::string& section, const std::string& key,
                           const std::string& value) {
  const ConfigKey* k = find_key(section, key);
  if (!k) throw ConfigError(section + "." + key, 0, "unknown key " + section + "." + key);
  values_[section][key] = canonical(*k, value, 0);
}

std::string ExperimentConfig::serialize() const {
  std::string out;
  std::string section;
  for (const auto& k : config_schema()) {
    if (section != k.section) {
      if (!section.empty()) out += '\n';
      section = k.section;
      out += "[" + section + "]\n";
    }
    const std::string& v = raw(k.section, k.key);
    bool bare = k.type == ValueType::real || k.type == ValueType::integer ||
                k.type == ValueType::u64 || k.type == ValueType::flag;
    out += std::string(k.key) + " = " + (bare ? v : quote(v)) + "\n";
  }
  return out;
}

}  // namespace wcontract
