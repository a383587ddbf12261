#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace attnforge {

/// RFC 4180 table: CRLF line endings, fields quoted when they contain a
/// comma, quote, CR or LF, embedded quotes doubled.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  /// Throws ContractError when the row width differs from the header.
  void add_row(std::vector<std::string> row);
  std::string str() const;
  void write(const std::filesystem::path& path) const;

  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string csv_escape(std::string_view field);
/// Shortest round-trippable decimal form of a double.
std::string format_double(double value);

}  // namespace attnforge
