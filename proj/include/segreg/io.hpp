#pragma once

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "segreg/types.hpp"

namespace segreg {

/// Malformed input data (maps to CLI exit code 2, unlike configuration
/// errors which throw std::invalid_argument).
struct CsvParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shortest round-trip decimal rendering of a double (lossless).
inline std::string format_double(double value) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline double parse_double_field(std::string_view field, std::size_t line,
                                 std::size_t column) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    std::ostringstream msg;
    msg << "csv: line " << line << ", column " << column + 1 << ": '" << field
        << "' is not a number";
    throw CsvParseError(msg.str());
  }
  return value;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

/// Reads the dataset CSV: header row, first column y, remaining columns the
/// covariates, no index column. When order_by names a column, rows are
/// stably sorted by it and the column is dropped before interpreting the
/// rest (first remaining column is y).
inline Dataset read_dataset_csv(std::istream& in, const std::string& order_by = "") {
  std::string line;
  if (!std::getline(in, line)) throw CsvParseError("csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string_view> header = split_csv_line(line);
  if (header.size() < 2) throw CsvParseError("csv: need a y column and at least one covariate");

  std::ptrdiff_t order_col = -1;
  if (!order_by.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == order_by) {
        order_col = static_cast<std::ptrdiff_t>(c);
        break;
      }
    if (order_col < 0)
      throw std::invalid_argument("order-by column '" + order_by + "' not in header");
    if (header.size() < 3)
      throw CsvParseError("csv: need a y column and at least one covariate besides the order column");
  }

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string_view> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << "csv: line " << line_no << ": expected " << header.size()
          << " fields, found " << fields.size();
      throw CsvParseError(msg.str());
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c)
      row[c] = parse_double_field(fields[c], line_no, c);
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw CsvParseError("csv: need at least 2 data rows");

  if (order_col >= 0) {
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return rows[a][static_cast<std::size_t>(order_col)] <
             rows[b][static_cast<std::size_t>(order_col)];
    });
    std::vector<std::vector<double>> sorted;
    sorted.reserve(rows.size());
    for (std::size_t idx : order) {
      std::vector<double> row = std::move(rows[idx]);
      row.erase(row.begin() + order_col);
      sorted.push_back(std::move(row));
    }
    rows = std::move(sorted);
  }

  const Index n = static_cast<Index>(rows.size());
  const Index p = static_cast<Index>(rows.front().size()) - 1;
  RowMatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    y[i] = rows[static_cast<std::size_t>(i)][0];
    for (Index j = 0; j < p; ++j)
      x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j) + 1];
  }
  try {
    return make_dataset(std::move(x), std::move(y));
  } catch (const std::invalid_argument& e) {
    throw CsvParseError(std::string("csv: ") + e.what());
  }
}

inline Dataset read_dataset_csv_file(const std::filesystem::path& path,
                                     const std::string& order_by = "") {
  std::ifstream in(path);
  if (!in) throw CsvParseError("cannot open input file: " + path.string());
  return read_dataset_csv(in, order_by);
}

inline std::string dataset_to_csv(const Dataset& data) {
  std::string out = "y";
  for (Index j = 1; j <= data.p(); ++j) {
    out += ",x";
    out += std::to_string(j);
  }
  out += '\n';
  for (Index i = 0; i < data.n(); ++i) {
    out += format_double(data.y[i]);
    for (Index j = 0; j < data.p(); ++j) {
      out += ',';
      out += format_double(data.x(i, j));
    }
    out += '\n';
  }
  return out;
}

/// Writes via a temp file in the same directory plus rename, so a failed run
/// leaves no partial artifact.
inline void write_text_atomic(const std::filesystem::path& path,
                              std::string_view contents) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("rename failed for: " + path.string());
  }
}

/// FNV-1a 64-bit content digest, rendered as "fnv1a64:<hex>".
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

inline std::string digest_string(std::string_view bytes) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

inline std::string digest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for digest: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return digest_string(buf.str());
}

}  // namespace segreg
