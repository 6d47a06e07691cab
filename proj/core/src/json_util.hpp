#pragma once

// Internal JSON (de)serialization helpers. Not installed; public headers
// stay free of the JSON dependency.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "relab/error.hpp"

namespace relab::detail {

inline nlohmann::json read_json_file(const std::filesystem::path& path,
                                     const char* what = "config") {
  std::ifstream in(path);
  if (!in) throw DataError(std::string("cannot open ") + what + " file: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  return doc;
}

inline void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path,
                            const char* what = "output") {
  std::ofstream out(path);
  if (!out) throw DataError(std::string("cannot write ") + what + " file: " + path.string());
  out << doc.dump(2) << "\n";
}

/// Throws DataError when `doc` holds a key outside `allowed`. Guards against
/// silently ignored typos in config files.
void check_known_keys(const nlohmann::json& doc, std::initializer_list<const char*> allowed,
                      const std::string& where);

}  // namespace relab::detail
