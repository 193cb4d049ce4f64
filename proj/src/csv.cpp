#include "dvi/csv.hpp"

#include "dvi/types.hpp"

#include <cmath>
#include <cstdio>

namespace dvi {

std::string CsvWriter::format(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void CsvWriter::header(const std::vector<std::string>& columns) {
  width_ = columns.size();
  for (std::size_t i = 0; i < columns.size(); ++i) *out_ << (i ? "," : "") << columns[i];
  *out_ << '\n';
}

void CsvWriter::row(const std::vector<std::optional<double>>& values) {
  if (width_ && values.size() != width_) throw DimensionError("csv row width differs from the header");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) *out_ << ',';
    if (values[i]) *out_ << format(*values[i]);
  }
  *out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  row(std::vector<std::optional<double>>(values.begin(), values.end()));
}

void CsvWriter::cells(const std::vector<std::string>& values) {
  if (width_ && values.size() != width_) throw DimensionError("csv row width differs from the header");
  for (std::size_t i = 0; i < values.size(); ++i) *out_ << (i ? "," : "") << values[i];
  *out_ << '\n';
}

}  // namespace dvi
