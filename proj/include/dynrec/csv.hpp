#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dynrec {

/// A header row plus string cells; every row has header.size() cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  bool operator==(const CsvTable&) const = default;
};

/// 17 significant digits, so parsing recovers the exact double.
std::string format_double(double value);
std::string format_bool(bool value);

/// RFC 4180: CRLF-free output with "\n" line ends, fields quoted only when
/// they contain a comma, quote or line break.
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(std::string_view text);

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace dynrec
