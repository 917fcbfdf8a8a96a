#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "irregular_sde/version.hpp"

namespace irregular_sde {

using json = nlohmann::ordered_json;

// Shortest-exact decimal formatting: byte-identical output for identical
// doubles, which is what the reproducibility contract is stated over.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// CSV artifacts: schema comment line, header row, data rows, '.' decimal
// point, fixed row order. Content is assembled in memory and written once.
class CsvBuilder {
 public:
  explicit CsvBuilder(const std::string& kind) {
    body_ = std::string(kCsvSchemaPrefix) + " " + kind + "\n";
  }

  void header(const std::vector<std::string>& cols) { raw_row(cols); }

  void row(const std::vector<std::string>& cells) { raw_row(cells); }

  const std::string& str() const { return body_; }

 private:
  void raw_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) body_ += ',';
      body_ += cells[i];
    }
    body_ += '\n';
  }

  std::string body_;
};

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

}  // namespace irregular_sde
