// SPDX-License-Identifier: Apache-2.0

#include "molmix/csv.hpp"

#include "molmix/error.hpp"

namespace molmix {

std::optional<std::vector<std::string>> CsvReader::next() {
  std::string line;
  if (!std::getline(in_, line)) {
    return std::nullopt;
  }
  ++line_;
  record_line_ = line_;
  if (first_) {
    first_ = false;
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) {
      line.erase(0, 3);
    }
  }

  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  for (;;) {
    if (i >= line.size()) {
      if (quoted) {
        std::string more;
        if (!std::getline(in_, more)) {
          throw DataError("CSV line " + std::to_string(record_line_)
                          + ": unterminated quoted field");
        }
        ++line_;
        field += '\n';
        line = std::move(more);
        i = 0;
        continue;
      }
      break;
    }
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r' && i + 1 == line.size()) {
      // CR of a CR LF ending.
    } else {
      field += c;
    }
    ++i;
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c: field) {
    if (c == '"') {
      out += '"';
    }
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace molmix
