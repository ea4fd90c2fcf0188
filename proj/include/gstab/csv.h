#ifndef GSTAB_CSV_H_
#define GSTAB_CSV_H_

#include <string>
#include <vector>

namespace gstab {

// Builds one comma-separated line. Doubles use the shortest representation
// that round-trips, so rewritten files are byte-identical.
class CsvRow {
 public:
  CsvRow& Add(double v);
  CsvRow& Add(long v);
  CsvRow& Add(int v) { return Add(static_cast<long>(v)); }
  CsvRow& Add(unsigned long v);
  CsvRow& Add(const std::string& v);
  CsvRow& Add(const char* v) { return Add(std::string(v)); }
  const std::string& str() const { return line_; }

 private:
  void Sep();
  std::string line_;
};

std::string FormatDouble(double v);
std::vector<std::string> SplitCsvLine(const std::string& line);

struct CsvTextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTextTable ReadCsvText(const std::string& path);
// All fields numeric ("nan" accepted).
CsvTable ReadCsv(const std::string& path);

double ParseDouble(const std::string& field);

}  // namespace gstab

#endif  // GSTAB_CSV_H_
