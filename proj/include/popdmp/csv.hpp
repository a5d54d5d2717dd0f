#pragma once

#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace popdmp {

/// Number formatted with 9 significant digits.
std::string format_number(double v);

/// Minimal CSV writer; cells are written verbatim, so callers must not pass commas.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);

  void header(std::initializer_list<std::string> names);
  void header(const std::vector<std::string>& names);
  void row(const std::vector<std::string>& cells);

  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(long long v);
  CsvWriter& operator<<(const std::string& s);
  void end_row();

 private:
  void separator();

  std::ofstream out_;
  bool row_started_ = false;
};

/// Splits one CSV line on commas, honouring double quotes.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace popdmp
