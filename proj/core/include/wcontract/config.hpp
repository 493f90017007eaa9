#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "wcontract/model.hpp"

namespace wcontract {

class ConfigError : public std::runtime_error {
 public:
  //! line = 0 when the problem is not tied to a line of the file.
  ConfigError(const std::string& field, int line, const std::string& what);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

enum class ValueType { real, integer, u64, text, list, matrix, flag };

struct ConfigKey {
  const char* section;
  const char* key;
  ValueType type;
  //! Default value; nullptr marks a required key.
  const char* fallback;
  const char* help;
};

//! All recognised keys, in serialization order.
const std::vector<ConfigKey>& config_schema();

//! Operation names accepted in [operation] name and as CLI subcommands.
const std::vector<std::string>& operation_names();

//! Resolved configuration: every schema key present, values canonical
//! (reals and lists printed with 17 significant digits).
class ExperimentConfig {
 public:
  using Section = std::map<std::string, std::string>;

  double real(const std::string& section, const std::string& key) const;
  long integer(const std::string& section, const std::string& key) const;
  std::uint64_t u64(const std::string& section, const std::string& key) const;
  const std::string& text(const std::string& section, const std::string& key) const;
  std::vector<double> list(const std::string& section, const std::string& key) const;
  //! Rows separated by ';', entries by ','. Empty text gives a 0 x 0 matrix.
  Mat matrix(const std::string& section, const std::string& key) const;
  bool flag(const std::string& section, const std::string& key) const;

  //! Named parameters "a=0.25, b=1" of the model expression.
  ParamMap params() const;

  const std::string& operation() const { return text("operation", "name"); }
  std::uint64_t seed() const { return u64("numeric", "seed"); }

  //! Overwrites a value after canonicalizing it; throws ConfigError.
  void set(const std::string& section, const std::string& key, const std::string& value);

  //! INI text that parses back to an identical resolved config.
  std::string serialize() const;

  const std::map<std::string, Section>& sections() const { return values_; }
  bool operator==(const ExperimentConfig& o) const { return values_ == o.values_; }

  friend ExperimentConfig parse_config(const std::string&, const std::map<std::string, std::string>&,
                                      const std::map<std::string, std::string>&);

 private:
  const std::string& raw(const std::string& section, const std::string& key) const;
  std::map<std::string, Section> values_;
};

//! Parses INI text, applies overrides ("section.key" -> value), then
//! fallbacks for keys still unset, then schema defaults. Errors carry the
//! offending line and field.
ExperimentConfig parse_config(const std::string& text,
                              const std::map<std::string, std::string>& overrides = {},
                              const std::map<std::string, std::string>& fallbacks = {});
ExperimentConfig load_config(const std::string& path,
                             const std::map<std::string, std::string>& overrides = {},
                             const std::map<std::string, std::string>& fallbacks = {});

//! "%.17g" with a fixed spelling for non-finite values.
std::string format_real(double v);

}  // namespace wcontract
