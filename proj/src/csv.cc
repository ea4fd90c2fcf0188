#include "gstab/csv.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "gstab/types.h"

namespace gstab {

std::string FormatDouble(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void CsvRow::Sep() {
  if (!line_.empty()) line_ += ',';
}

CsvRow& CsvRow::Add(double v) {
  Sep();
  line_ += FormatDouble(v);
  return *this;
}

CsvRow& CsvRow::Add(long v) {
  Sep();
  line_ += std::to_string(v);
  return *this;
}

CsvRow& CsvRow::Add(unsigned long v) {
  Sep();
  line_ += std::to_string(v);
  return *this;
}

CsvRow& CsvRow::Add(const std::string& v) {
  Sep();
  line_ += v;
  return *this;
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double ParseDouble(const std::string& field) {
  if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    throw InvalidInput("bad numeric field '" + field + "'");
  }
  return v;
}

CsvTextTable ReadCsvText(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTextTable t;
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput(path + ": missing header");
  t.header = SplitCsvLine(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = SplitCsvLine(line);
    if (fields.size() != t.header.size()) {
      throw InvalidInput(path + ": row has " + std::to_string(fields.size()) +
                         " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  return t;
}

CsvTable ReadCsv(const std::string& path) {
  CsvTextTable text = ReadCsvText(path);
  CsvTable t;
  t.header = std::move(text.header);
  for (const auto& r : text.rows) {
    std::vector<double> row;
    row.reserve(r.size());
    for (const auto& f : r) row.push_back(ParseDouble(f));
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace gstab
