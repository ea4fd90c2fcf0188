#include "gstab/config_file.h"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace gstab {
namespace {

std::string Trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double ParseNumber(const std::string& token, int line_no) {
  std::string t = Trim(token);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError("line " + std::to_string(line_no) + ": bad number '" +
                      t + "'");
  }
  return v;
}

}  // namespace

KeyValues ParseKeyValues(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    line = Trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = Trim(line.substr(0, eq));
    std::string rest = line.substr(eq + 1);
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    std::vector<double> values;
    std::stringstream fields(rest);
    std::string field;
    while (std::getline(fields, field, ',')) {
      values.push_back(ParseNumber(field, line_no));
    }
    if (values.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": no value for " + key);
    }
    if (!out.emplace(key, std::move(values)).second) {
      throw ConfigError("duplicate key " + key);
    }
  }
  return out;
}

KeyValues ReadKeyValueFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseKeyValues(buf.str());
}

}  // namespace gstab
