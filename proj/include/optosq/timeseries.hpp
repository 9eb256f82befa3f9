#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "optosq/errors.hpp"

namespace optosq {

/// Scalar observables sampled against dimensionless time omega_m * t.
class TimeSeries {
 public:
  TimeSeries() = default;
  explicit TimeSeries(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }

  void append(double t, std::vector<double> row) {
    if (row.size() != columns_.size()) {
      throw InvalidDimensionError("TimeSeries::append: row width does not match columns");
    }
    times_.push_back(t);
    rows_.push_back(std::move(row));
  }

  const std::vector<double>& times() const { return times_; }
  double time(std::size_t i) const { return times_.at(i); }
  const std::vector<double>& row(std::size_t i) const { return rows_.at(i); }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      if (columns_[k] == name) return k;
    }
    throw RangeError("TimeSeries: no column named '" + name + "'");
  }

  std::vector<double> column(const std::string& name) const {
    const std::size_t k = column_index(name);
    std::vector<double> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) out.push_back(r[k]);
    return out;
  }

  double back(const std::string& name) const { return rows_.back()[column_index(name)]; }

 private:
  std::vector<std::string> columns_;
  std::vector<double> times_;
  std::vector<std::vector<double>> rows_;
};

/// Fixed 17-significant-digit rendering so identical runs give identical bytes.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_csv(std::ostream& os, const TimeSeries& series, const std::string& time_column = "t") {
  os << time_column;
  for (const auto& c : series.columns()) os << ',' << c;
  os << '\n';
  for (std::size_t i = 0; i < series.size(); ++i) {
    os << format_number(series.time(i));
    for (double v : series.row(i)) os << ',' << format_number(v);
    os << '\n';
  }
}

/// Outcome of reducing the tail of a sampled trajectory to one steady number.
struct SteadyEstimate {
  double value = std::nan("");
  double drift = std::nan("");  ///< relative change between the two halves of the tail
  bool converged = false;
};

/// Mean of the final `tail_fraction` of the samples; converged when the means
/// of the two halves of that tail differ by less than `tolerance` (relative).
inline SteadyEstimate tail_average(std::span<const double> values, double tail_fraction = 0.1,
                                   double tolerance = 1e-4) {
  SteadyEstimate est;
  const std::size_t n = values.size();
  if (n < 4) return est;
  std::size_t tail = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n)));
  if (tail < 4) tail = 4;
  if (tail > n) tail = n;
  const std::size_t start = n - tail;
  const std::size_t mid = start + tail / 2;
  double first = 0.0, second = 0.0;
  for (std::size_t i = start; i < mid; ++i) first += values[i];
  for (std::size_t i = mid; i < n; ++i) second += values[i];
  first /= static_cast<double>(mid - start);
  second /= static_cast<double>(n - mid);
  est.value = (first * static_cast<double>(mid - start) + second * static_cast<double>(n - mid)) /
              static_cast<double>(tail);
  const double scale = std::abs(est.value) > 0.0 ? std::abs(est.value) : 1.0;
  est.drift = std::abs(second - first) / scale;
  est.converged = std::isfinite(est.drift) && est.drift < tolerance;
  return est;
}

}  // namespace optosq
