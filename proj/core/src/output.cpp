#include "wcontract/output.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "wcontract/config.hpp"

namespace wcontract {

std::string json_escape(const std::string& s) {
  std::string out;
  for (unsigned char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (ch < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", ch);
          out += buf;
        } else {
          out += static_cast<char>(ch);
        }
    }
  }
  return out;
}

void JsonWriter::prefix(const std::string& key) {
  if (!first_.empty()) {
    if (!first_.back()) out_ += ',';
    first_.back() = false;
    out_ += '\n';
    out_.append(2 * first_.size(), ' ');
  }
  if (!key.empty()) out_ += "\"" + json_escape(key) + "\": ";
}

JsonWriter& JsonWriter::begin_object(const std::string& key) {
  prefix(key);
  out_ += '{';
  first_.push_back(true);
  return *this;
}

JsonWriter& JsonWriter::end_object() {
  bool empty = first_.back();
  first_.pop_back();
  if (!empty) {
    out_ += '\n';
    out_.append(2 * first_.size(), ' ');
  }
  out_ += '}';
  return *this;
}

JsonWriter& JsonWriter::begin_array(const std::string& key) {
  prefix(key);
  out_ += '[';
  first_.push_back(true);
  return *this;
}

JsonWriter& JsonWriter::end_array() {
  bool empty = first_.back();
  first_.pop_back();
  if (!empty) {
    out_ += '\n';
    out_.append(2 * first_.size(), ' ');
  }
  out_ += ']';
  return *this;
}

JsonWriter& JsonWriter::value(const std::string& key, double v) {
  prefix(key);
  out_ += std::isfinite(v) ? format_real(v) : "null";
  return *this;
}

JsonWriter& JsonWriter::value(const std::string& key, long v) {
  prefix(key);
  out_ += std::to_string(v);
  return *this;
}

JsonWriter& JsonWriter::value(const std::string& key, bool v) {
  prefix(key);
  out_ += v ? "true" : "false";
  return *this;
}

JsonWriter& JsonWriter::value(const std::string& key, const std::string& v) {
  prefix(key);
  out_ += "\"" + json_escape(v) + "\"";
  return *this;
}

JsonWriter& JsonWriter::array(const std::string& key, const std::vector<double>& v) {
  prefix(key);
  out_ += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out_ += ", ";
    out_ += std::isfinite(v[i]) ? format_real(v[i]) : "null";
  }
  out_ += ']';
  return *this;
}

std::string JsonWriter::str() const { return out_ + "\n"; }

void CsvTable::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size()) throw std::logic_error("csv row width mismatch");
  rows_.push_back(cells);
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

std::string diverging_color(double v, double lo, double hi) {
  double u = 0.5;
  if (hi > lo && std::isfinite(v)) u = (std::clamp(v, lo, hi) - lo) / (hi - lo);
  // blue (negative) -> white -> red (positive)
  double r, g, b;
  if (u < 0.5) {
    double s = u / 0.5;
    r = 0.13 + (1 - 0.13) * s;
    g = 0.40 + (1 - 0.40) * s;
    b = 0.67 + (1 - 0.67) * s;
  } else {
    double s = (u - 0.5) / 0.5;
    r = 1 + (0.70 - 1) * s;
    g = 1 + (0.09 - 1) * s;
    b = 1 + (0.17 - 1) * s;
  }
  if (!std::isfinite(v)) r = g = b = 0.5;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(r * 255)),
                static_cast<int>(std::lround(g * 255)), static_cast<int>(std::lround(b * 255)));
  return buf;
}

namespace {

std::string num(double v, int digits = 4) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string px(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::string render_heatmap(const SweepResult& sweep, const HeatmapOptions& opts) {
  const std::size_t np = sweep.ps.size(), nt = sweep.theta2s.size();
  if (np == 0 || nt == 0) throw std::invalid_argument("render_heatmap: empty sweep");
  const double left = 70, top = 40, plot_w = 500, plot_h = 400, bar_x = left + plot_w + 30,
               bar_w = 20, width = bar_x + bar_w + 70, height = top + plot_h + 60;
  const double cw = plot_w / nt, ch = plot_h / np;

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(width) + "\" height=\"" +
       px(height) + "\" viewBox=\"0 0 " + px(width) + " " + px(height) +
       "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + px(width) + "\" height=\"" + px(height) +
       "\" fill=\"#ffffff\"/>\n";
  if (!opts.title.empty())
    s += "<text x=\"" + px(left + plot_w / 2) + "\" y=\"20\" text-anchor=\"middle\">" +
         json_escape(opts.title) + "</text>\n";

  s += "<g id=\"cells\">\n";
  for (std::size_t ip = 0; ip < np; ++ip) {
    for (std::size_t it = 0; it < nt; ++it) {
      double v = sweep.at(ip, it);
      // largest p at the top
      double y = top + (np - 1 - ip) * ch;
      double x = left + it * cw;
      s += "<rect x=\"" + px(x) + "\" y=\"" + px(y) + "\" width=\"" + px(cw) + "\" height=\"" +
           px(ch) + "\" fill=\"" + diverging_color(v, opts.lo, opts.hi) + "\"><title>p=" +
           num(sweep.ps[ip], 6) + " theta2=" + num(sweep.theta2s[it], 6) + " J/p=" +
           format_real(v) + "</title></rect>\n";
    }
  }
  s += "</g>\n";
  if (np == 1 && nt == 1)
    s += "<text x=\"" + px(left + plot_w / 2) + "\" y=\"" + px(top + plot_h / 2) +
         "\" text-anchor=\"middle\">" + num(sweep.values[0], 6) + "</text>\n";

  s += "<rect x=\"" + px(left) + "\" y=\"" + px(top) + "\" width=\"" + px(plot_w) +
       "\" height=\"" + px(plot_h) + "\" fill=\"none\" stroke=\"#000000\"/>\n";

  // axis ticks: first, middle and last grid values
  auto ticks = [](std::size_t n) {
    std::vector<std::size_t> t{0};
    if (n > 2) t.push_back((n - 1) / 2);
    if (n > 1) t.push_back(n - 1);
    return t;
  };
  for (std::size_t it : ticks(nt)) {
    double x = left + (it + 0.5) * cw;
    s += "<text x=\"" + px(x) + "\" y=\"" + px(top + plot_h + 16) + "\" text-anchor=\"middle\">" +
         num(sweep.theta2s[it]) + "</text>\n";
  }
  for (std::size_t ip : ticks(np)) {
    double y = top + (np - 1 - ip + 0.5) * ch + 4;
    s += "<text x=\"" + px(left - 6) + "\" y=\"" + px(y) + "\" text-anchor=\"end\">" +
         num(sweep.ps[ip]) + "</text>\n";
  }
  s += "<text x=\"" + px(left + plot_w / 2) + "\" y=\"" + px(top + plot_h + 40) +
       "\" text-anchor=\"middle\">&#952;&#178;</text>\n";
  s += "<text x=\"" + px(left - 45) + "\" y=\"" + px(top + plot_h / 2) +
       "\" text-anchor=\"middle\" font-style=\"italic\">p</text>\n";

  // colour bar
  const int steps = 64;
  s += "<g id=\"colorbar\">\n";
  for (int k = 0; k < steps; ++k) {
    double v = opts.hi - (opts.hi - opts.lo) * (k + 0.5) / steps;
    s += "<rect x=\"" + px(bar_x) + "\" y=\"" + px(top + k * plot_h / steps) + "\" width=\"" +
         px(bar_w) + "\" height=\"" + px(plot_h / steps + 0.5) + "\" fill=\"" +
         diverging_color(v, opts.lo, opts.hi) + "\"/>\n";
  }
  s += "<rect x=\"" + px(bar_x) + "\" y=\"" + px(top) + "\" width=\"" + px(bar_w) +
       "\" height=\"" + px(plot_h) + "\" fill=\"none\" stroke=\"#000000\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    double v = opts.hi - (opts.hi - opts.lo) * k / 4;
    s += "<text x=\"" + px(bar_x + bar_w + 5) + "\" y=\"" + px(top + k * plot_h / 4 + 4) + "\">" +
         num(v) + "</text>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace wcontract
