#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

namespace fracdiff {

// Nodes j*h for j = first_index .. first_index + n_points - 1, with a < 0 < b.
class Mesh {
 public:
  Mesh(double h, long first_index, std::size_t n_points)
      : h_(h), first_(first_index), n_(n_points) {
    if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("Mesh: h must be positive");
    if (n_points < 3) throw std::invalid_argument("Mesh: need at least three nodes");
    if (!(first_ < 0 && last_index() > 0))
      throw std::invalid_argument("Mesh: interval must satisfy a < 0 < b");
  }

  // All nodes j*h lying in [a, b] (a small relative slack absorbs rounding in a/h).
  static Mesh covering(double a, double b, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("Mesh: h must be positive");
    if (!(a < b)) throw std::invalid_argument("Mesh: need a < b");
    const long first = static_cast<long>(std::ceil(a / h - 1e-9));
    const long last = static_cast<long>(std::floor(b / h + 1e-9));
    if (last - first + 1 < 3) throw std::invalid_argument("Mesh: interval shorter than 2h");
    return Mesh(h, first, static_cast<std::size_t>(last - first + 1));
  }

  double h() const { return h_; }
  long first_index() const { return first_; }
  long last_index() const { return first_ + static_cast<long>(n_) - 1; }
  std::size_t size() const { return n_; }
  double a() const { return h_ * static_cast<double>(first_); }
  double b() const { return h_ * static_cast<double>(last_index()); }
  double node(std::size_t i) const { return h_ * static_cast<double>(first_ + static_cast<long>(i)); }

  // Index range [lo, hi) of nodes inside the closed interval [c, d].
  std::pair<std::size_t, std::size_t> window(double c, double d) const {
    const long lo = std::max(first_, static_cast<long>(std::ceil(c / h_ - 1e-9)));
    const long hi = std::min(last_index(), static_cast<long>(std::floor(d / h_ + 1e-9)));
    if (hi < lo) return {0, 0};
    return {static_cast<std::size_t>(lo - first_), static_cast<std::size_t>(hi - first_ + 1)};
  }

  // Mesh formed by nodes [offset, offset + count).
  Mesh sub_mesh(std::size_t offset, std::size_t count) const {
    if (offset + count > n_) throw std::out_of_range("Mesh::sub_mesh");
    return Mesh(h_, first_ + static_cast<long>(offset), count);
  }

  friend bool operator==(const Mesh& x, const Mesh& y) {
    return x.h_ == y.h_ && x.first_ == y.first_ && x.n_ == y.n_;
  }

 private:
  double h_;
  long first_;
  std::size_t n_;
};

// Values on a mesh; zero outside it.
class GridFunction {
 public:
  explicit GridFunction(Mesh mesh) : mesh_(mesh), values_(mesh.size(), 0.0) {}
  GridFunction(Mesh mesh, std::vector<double> values) : mesh_(mesh), values_(std::move(values)) {
    if (values_.size() != mesh_.size())
      throw std::invalid_argument("GridFunction: value count does not match mesh");
    for (double v : values_)
      if (!std::isfinite(v)) throw std::invalid_argument("GridFunction: non-finite value");
  }

  const Mesh& mesh() const { return mesh_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  double sup_norm() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  Mesh mesh_;
  std::vector<double> values_;
};

// 17 significant digits in the shortest notation; identical input gives identical bytes.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_real(const std::string& text) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse number '" + text + "'");
  }
  while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  if (pos != text.size()) throw std::invalid_argument("cannot parse number '" + text + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline void write_csv(const GridFunction& u, std::ostream& out) {
  out << "x,value\n";
  for (std::size_t i = 0; i < u.size(); ++i)
    out << format_real(u.mesh().node(i)) << ',' << format_real(u[i]) << '\n';
}

// Reads an `x,value` table whose abscissae are consecutive multiples of one spacing.
inline GridFunction read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("x,value", 0) != 0)
    throw std::invalid_argument("read_csv: expected header x,value");
  std::vector<double> xs, vs;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 2) throw std::invalid_argument("read_csv: malformed row '" + line + "'");
    xs.push_back(parse_real(f[0]));
    vs.push_back(parse_real(f[1]));
  }
  if (xs.size() < 3) throw std::invalid_argument("read_csv: need at least three rows");
  const double h = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
  const long first = std::lround(xs.front() / h);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double expected = h * static_cast<double>(first + static_cast<long>(i));
    if (std::abs(xs[i] - expected) > 1e-6 * h)
      throw std::invalid_argument("read_csv: abscissae are not a uniform mesh through 0");
  }
  return GridFunction(Mesh(h, first, xs.size()), std::move(vs));
}

}  // namespace fracdiff
