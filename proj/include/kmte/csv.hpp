#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmte/dataset.hpp"

namespace kmte {

// header-name column map; z empty means no instrument column
struct ColumnMap {
  std::string q = "q";
  std::string delta = "delta";
  std::string t = "t";
  std::vector<std::string> x = {"x1"};
  std::string z;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ' ||
                              field.back() == '\t'))
      field.pop_back();
    std::size_t b = 0;
    while (b < field.size() && (field[b] == ' ' || field[b] == '\t')) ++b;
    out.push_back(field.substr(b));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_real(const std::string& s, std::size_t line_no,
                         const std::string& col) {
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw std::invalid_argument("line " + std::to_string(line_no) +
                                ", column '" + col + "': non-numeric value '" +
                                s + "'");
  return v;
}

inline int parse_binary(const std::string& s, std::size_t line_no,
                        const std::string& col) {
  double v = parse_real(s, line_no, col);
  if (v != 0.0 && v != 1.0)
    throw std::invalid_argument("line " + std::to_string(line_no) +
                                ", column '" + col + "': value '" + s +
                                "' is not 0 or 1");
  return static_cast<int>(v);
}

inline std::size_t find_column(const std::vector<std::string>& header,
                               const std::string& name) {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return j;
  throw std::invalid_argument("missing column '" + name + "' in CSV header");
}

}  // namespace detail

// UTF-8, comma separated, header row required; line numbers in errors count
// the header as line 1
inline Dataset load_csv(const std::string& path, const ColumnMap& schema) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("empty file: " + path);
  auto header = detail::split_csv_line(line);

  const std::size_t jq = detail::find_column(header, schema.q);
  const std::size_t jd = detail::find_column(header, schema.delta);
  const std::size_t jt = detail::find_column(header, schema.t);
  std::vector<std::size_t> jx;
  for (const auto& name : schema.x)
    jx.push_back(detail::find_column(header, name));
  const bool with_z = !schema.z.empty();
  const std::size_t jz = with_z ? detail::find_column(header, schema.z) : 0;

  Dataset d;
  d.k = jx.size();
  d.has_instrument = with_z;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw std::invalid_argument("line " + std::to_string(line_no) + ": has " +
                                  std::to_string(cells.size()) +
                                  " fields, header has " +
                                  std::to_string(header.size()));
    double qv = detail::parse_real(cells[jq], line_no, schema.q);
    if (qv < 0.0)
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ", column '" + schema.q + "': negative q");
    d.q.push_back(qv);
    d.delta.push_back(detail::parse_binary(cells[jd], line_no, schema.delta));
    d.t.push_back(detail::parse_binary(cells[jt], line_no, schema.t));
    std::vector<double> row(d.k);
    for (std::size_t c = 0; c < d.k; ++c)
      row[c] = detail::parse_real(cells[jx[c]], line_no, schema.x[c]);
    d.x.push_back(std::move(row));
    if (with_z)
      d.z.push_back(detail::parse_binary(cells[jz], line_no, schema.z));
  }
  validate_dataset(d);
  return d;
}

inline void write_csv(const Dataset& d, const std::string& path,
                      const ColumnMap& schema) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot open file for write: " + path);
  out.precision(17);
  out << schema.q << ',' << schema.delta << ',' << schema.t;
  for (const auto& name : schema.x) out << ',' << name;
  if (!schema.z.empty()) out << ',' << schema.z;
  out << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << d.q[i] << ',' << d.delta[i] << ',' << d.t[i];
    for (std::size_t c = 0; c < d.k; ++c) out << ',' << d.x[i][c];
    if (!schema.z.empty()) out << ',' << d.z[i];
    out << '\n';
  }
}

}  // namespace kmte
