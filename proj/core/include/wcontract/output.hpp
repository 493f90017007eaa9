#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wcontract/fk.hpp"

namespace wcontract {

//! Streaming JSON writer with fixed key order and "%.17g" numbers.
//! Non-finite numbers are written as null.
class JsonWriter {
 public:
  JsonWriter& begin_object(const std::string& key = "");
  JsonWriter& end_object();
  JsonWriter& begin_array(const std::string& key = "");
  JsonWriter& end_array();
  JsonWriter& value(const std::string& key, double v);
  JsonWriter& value(const std::string& key, long v);
  JsonWriter& value(const std::string& key, int v) { return value(key, static_cast<long>(v)); }
  JsonWriter& value(const std::string& key, bool v);
  JsonWriter& value(const std::string& key, const std::string& v);
  JsonWriter& value(const std::string& key, const char* v) { return value(key, std::string(v)); }
  JsonWriter& array(const std::string& key, const std::vector<double>& v);
  //! Array element (key must be empty inside arrays).
  JsonWriter& element(double v) { return value("", v); }

  std::string str() const;

 private:
  void prefix(const std::string& key);
  std::string out_;
  std::vector<bool> first_;
};

std::string json_escape(const std::string& s);

//! Comma-separated table; reals as "%.17g".
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add_row(const std::vector<std::string>& cells);
  std::size_t rows() const { return rows_.size(); }
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct HeatmapOptions {
  double lo = -4, hi = 4;
  std::string title;
};

//! Self-contained SVG: one rect per cell (p on the vertical axis, theta^2
//! horizontal), diverging palette clamped to [lo, hi], and a colour bar.
std::string render_heatmap(const SweepResult& sweep, const HeatmapOptions& opts = {});

//! "#rrggbb" for v on the blue-white-red scale over [lo, hi].
std::string diverging_color(double v, double lo, double hi);

//! Writes text to path, creating parent directories; throws std::runtime_error.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace wcontract
