#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mtgp/errors.hpp"

namespace mtgp {

/// Marker for a missing label.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

/// Reflectance spectra with per-sample biochemical labels.
///
/// CSV layout (UTF-8, '.' decimal separator, comma delimited):
///
///   header:  <wl_1>,...,<wl_d>,<task_1>[unit],...,<task_M>[unit]
///   rows:    <refl_1>,...,<refl_d>,<label_1>,...,<label_M>
///
/// Wavelength columns are the leading numeric header cells (nm, strictly
/// increasing). The remaining header cells name tasks, optionally with a
/// bracketed unit, e.g. "nitrogen[% dry weight]". An empty label cell is a
/// missing label.
struct SpectraTable {
  std::vector<double> wavelengths;
  Eigen::MatrixXd spectra;  // samples x bands
  Eigen::MatrixXd labels;   // samples x tasks, kMissing where absent
  std::vector<std::string> task_names;
  std::vector<std::string> task_units;

  Eigen::Index num_samples() const { return spectra.rows(); }
  int num_tasks() const { return static_cast<int>(task_names.size()); }

  int task_index(std::string_view name) const {
    for (int t = 0; t < num_tasks(); ++t)
      if (task_names[t] == name) return t;
    std::string valid;
    for (const auto& n : task_names) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown task '" + std::string(name) + "' (valid tasks: " + valid + ")");
  }

  int count_labels(int task) const {
    int c = 0;
    for (Eigen::Index i = 0; i < labels.rows(); ++i) c += !is_missing(labels(i, task));
    return c;
  }

  void validate() const {
    if (wavelengths.empty()) throw DataError("no wavelength columns");
    for (std::size_t k = 1; k < wavelengths.size(); ++k) {
      if (!(wavelengths[k] > wavelengths[k - 1])) {
        throw DataError("wavelengths not strictly increasing at band " + std::to_string(k));
      }
    }
    if (spectra.cols() != static_cast<Eigen::Index>(wavelengths.size())) {
      throw ShapeError("spectra have " + std::to_string(spectra.cols()) + " bands, expected " +
                       std::to_string(wavelengths.size()));
    }
    if (labels.rows() != spectra.rows() || labels.cols() != num_tasks()) {
      throw ShapeError("label matrix does not match samples x tasks");
    }
    if (task_units.size() != task_names.size()) throw ShapeError("task units size mismatch");
    for (Eigen::Index i = 0; i < spectra.size(); ++i) {
      const double v = spectra.data()[i];
      if (!(v >= -0.05 && v <= 1.5)) {
        throw DataError("reflectance value " + std::to_string(v) + " outside [-0.05, 1.5]");
      }
    }
    for (int t = 0; t < num_tasks(); ++t) {
      if (count_labels(t) == 0) throw DataError("task '" + task_names[t] + "' has no labels");
    }
  }
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline SpectraTable parse_spectra_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  SpectraTable t;
  const auto header = detail::split_csv(line);
  std::size_t col = 0;
  for (; col < header.size(); ++col) {
    const auto wl = detail::parse_double(header[col]);
    if (!wl) break;
    if (!t.wavelengths.empty() && !(*wl > t.wavelengths.back())) {
      throw ParseError("wavelength header not strictly increasing at column " +
                           std::to_string(col + 1) + " ('" + std::string(detail::trim(header[col])) +
                           "')",
                       line_no);
    }
    t.wavelengths.push_back(*wl);
  }
  if (t.wavelengths.empty()) throw ParseError("header has no wavelength columns", line_no);
  for (; col < header.size(); ++col) {
    auto cell = detail::trim(header[col]);
    if (cell.empty()) throw ParseError("empty task name in column " + std::to_string(col + 1), line_no);
    if (detail::parse_double(cell)) {
      throw ParseError("numeric header cell after task names in column " + std::to_string(col + 1),
                       line_no);
    }
    std::string unit;
    if (const auto open = cell.find('['); open != std::string_view::npos && cell.back() == ']') {
      unit = std::string(cell.substr(open + 1, cell.size() - open - 2));
      cell = detail::trim(cell.substr(0, open));
    }
    t.task_names.emplace_back(cell);
    t.task_units.push_back(std::move(unit));
  }

  const std::size_t bands = t.wavelengths.size();
  const std::size_t width = header.size();
  std::vector<double> spec, lab;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    for (std::size_t c = 0; c < width; ++c) {
      const auto v = detail::parse_double(cells[c]);
      if (c < bands) {
        if (!v) throw ParseError("bad reflectance value in column " + std::to_string(c + 1), line_no);
        spec.push_back(*v);
      } else if (detail::trim(cells[c]).empty()) {
        lab.push_back(kMissing);
      } else {
        if (!v) throw ParseError("bad label value in column " + std::to_string(c + 1), line_no);
        lab.push_back(*v);
      }
    }
    ++rows;
  }
  const auto n = static_cast<Eigen::Index>(rows);
  t.spectra = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      spec.data(), n, static_cast<Eigen::Index>(bands));
  t.labels = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      lab.data(), n, t.num_tasks());
  t.validate();
  return t;
}

inline SpectraTable load_spectra_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_spectra_csv(in);
}

inline void write_spectra_csv(std::ostream& out, const SpectraTable& t) {
  for (std::size_t k = 0; k < t.wavelengths.size(); ++k) {
    out << (k ? "," : "") << detail::format_double(t.wavelengths[k]);
  }
  for (int j = 0; j < t.num_tasks(); ++j) {
    out << ',' << t.task_names[j];
    if (!t.task_units[j].empty()) out << '[' << t.task_units[j] << ']';
  }
  out << '\n';
  for (Eigen::Index i = 0; i < t.num_samples(); ++i) {
    for (Eigen::Index k = 0; k < t.spectra.cols(); ++k) {
      out << (k ? "," : "") << detail::format_double(t.spectra(i, k));
    }
    for (int j = 0; j < t.num_tasks(); ++j) {
      out << ',';
      if (!is_missing(t.labels(i, j))) out << detail::format_double(t.labels(i, j));
    }
    out << '\n';
  }
}

inline void save_spectra_csv(const std::string& path, const SpectraTable& t) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_spectra_csv(out, t);
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace mtgp
