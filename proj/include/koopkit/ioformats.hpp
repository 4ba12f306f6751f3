#pragma once

// CSV and JSON serialization shared by all modules. Numbers are written with
// 17 significant digits, independent of the C locale, so every finite double
// survives a write/read cycle bit for bit.

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "koopkit/errors.hpp"
#include "koopkit/types.hpp"

namespace koopkit::io {

using Json = nlohmann::ordered_json;

inline std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value,
                                 std::chars_format::general, 17);
  if (ec != std::errc{}) throw IoError("format_double: conversion failed");
  return std::string(buf.data(), end);
}

inline double parse_double(std::string_view text, std::size_t line) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    throw ParseError("malformed numeral '" + std::string(text) + "'", line);
  return value;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  RealMatrix as_matrix() const {
    RealMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
  }
};

inline void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
}

inline std::string join_header(const std::vector<std::string>& header) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  return out;
}

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].size() != header.size())
      throw InvalidInput("write_csv: row " + std::to_string(i) + " has " +
                         std::to_string(rows[i].size()) + " fields, header has " +
                         std::to_string(header.size()));
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << join_header(header) << '\n';
  std::string line;
  for (const auto& row : rows) {
    line.clear();
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) line += ',';
      line += format_double(row[j]);
    }
    out << line << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const RealMatrix& m) {
  if (static_cast<std::size_t>(m.cols()) != header.size())
    throw InvalidInput("write_csv: matrix column count does not match header");
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  }
  write_csv(path, header, rows);
}

// Parses a header line followed by numeric rows from a stream. `first_line`
// is the 1-based line number of the header, used in error messages.
inline CsvTable parse_csv(std::istream& in, std::size_t first_line = 1) {
  CsvTable table;
  std::string line;
  std::size_t line_no = first_line;
  if (!std::getline(in, line)) throw ParseError("missing header", line_no);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  for (auto f : split_fields(line)) table.header.emplace_back(f);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != table.header.size())
      throw ParseError("ragged row: expected " + std::to_string(table.header.size()) +
                           " fields, found " + std::to_string(fields.size()),
                       line_no);
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) row.push_back(parse_double(f, line_no));
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv(in);
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw IoError("sha256: digest initialisation failed");
  }
  std::array<char, 1 << 15> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest.data(), &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

/// Record of an experiment run: every artifact with its checksum, plus the
/// seeds, residuals and timings that produced it.
class Manifest {
 public:
  explicit Manifest(std::string experiment) : experiment_(std::move(experiment)) {}

  void add_file(const std::filesystem::path& root, const std::filesystem::path& relative) {
    const auto full = root / relative;
    if (!std::filesystem::exists(full)) throw IoError("manifest: missing artifact " + full.string());
    files_.push_back({relative.generic_string(), sha256_file(full),
                      static_cast<std::uintmax_t>(std::filesystem::file_size(full))});
  }

  Json& seeds() { return seeds_; }
  Json& residuals() { return residuals_; }
  Json& timings() { return timings_; }
  Json& extra() { return extra_; }

  Json to_json() const {
    Json j;
    j["experiment"] = experiment_;
    j["library_version"] = kVersion;
    Json files = Json::array();
    for (const auto& f : files_) files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    j["files"] = files;
    j["seeds"] = seeds_.is_null() ? Json::object() : seeds_;
    j["residuals"] = residuals_.is_null() ? Json::object() : residuals_;
    j["timings"] = timings_.is_null() ? Json::object() : timings_;
    if (!extra_.is_null())
      for (auto it = extra_.begin(); it != extra_.end(); ++it) j[it.key()] = it.value();
    return j;
  }

  void write(const std::filesystem::path& path) const { write_json(path, to_json()); }

  // Recomputes every checksum; returns the paths that are missing or differ.
  static std::vector<std::string> verify(const std::filesystem::path& root, const Json& manifest) {
    std::vector<std::string> bad;
    for (const auto& f : manifest.at("files")) {
      const auto full = root / f.at("path").get<std::string>();
      if (!std::filesystem::exists(full) || sha256_file(full) != f.at("sha256").get<std::string>())
        bad.push_back(f.at("path").get<std::string>());
    }
    return bad;
  }

 private:
  struct FileEntry {
    std::string path;
    std::string sha256;
    std::uintmax_t bytes;
  };
  std::string experiment_;
  std::vector<FileEntry> files_;
  Json seeds_, residuals_, timings_, extra_;
};

}  // namespace koopkit::io
