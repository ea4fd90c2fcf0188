#ifndef GSTAB_CONFIG_FILE_H_
#define GSTAB_CONFIG_FILE_H_

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gstab {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat key-value text: one `key = v0, v1, ...` per line, `#` starts a comment.
// Values are numeric. Duplicate keys are an error.
using KeyValues = std::map<std::string, std::vector<double>>;

KeyValues ParseKeyValues(const std::string& text);
KeyValues ReadKeyValueFile(const std::string& path);

}  // namespace gstab

#endif  // GSTAB_CONFIG_FILE_H_
