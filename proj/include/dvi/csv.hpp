#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dvi {

/// Comma-separated output with a header row; reals use 17 significant digits.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(&out) {}

  void header(const std::vector<std::string>& columns);
  /// Empty optionals are written as empty cells.
  void row(const std::vector<std::optional<double>>& values);
  void row(const std::vector<double>& values);
  /// Pre-formatted cells, for rows mixing text and numbers.
  void cells(const std::vector<std::string>& values);

  static std::string format(double v);

 private:
  std::ostream* out_;
  std::size_t width_ = 0;
};

}  // namespace dvi
