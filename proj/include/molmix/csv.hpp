// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace molmix {

/// Streaming RFC 4180 reader: comma separated, double-quoted fields with ""
/// escapes, quoted fields may span lines. A UTF-8 BOM on the first line is
/// skipped. CR LF and LF line endings are both accepted.
class CsvReader {
 public:
  explicit CsvReader(std::istream &in): in_(in) { }

  // Next record, or nullopt at end of input. Throws DataError on an
  // unterminated quote.
  std::optional<std::vector<std::string>> next();
  // 1-based line number where the last returned record started.
  std::size_t line() const { return record_line_; }

 private:
  std::istream &in_;
  std::size_t line_ = 0;
  std::size_t record_line_ = 0;
  bool first_ = true;
};

std::string csv_escape(std::string_view field);

}  // namespace molmix
