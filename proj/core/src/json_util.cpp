#include "json_util.hpp"

#include <algorithm>
#include <cstring>

namespace relab::detail {

void check_known_keys(const nlohmann::json& doc, std::initializer_list<const char*> allowed,
                      const std::string& where) {
  if (!doc.is_object()) throw DataError(where + ": expected an object");
  for (const auto& [key, value] : doc.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return key == k; });
    if (!known) throw DataError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace relab::detail
