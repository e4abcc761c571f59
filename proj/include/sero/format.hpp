#pragma once

#include <optional>
#include <string>

namespace sero {

std::string trim(const std::string &s);

// Last line of `text` matching `pattern` (ECMAScript regex, searched per
// line). Empty pattern matches the last nonempty line. nullopt when nothing
// matches: the canonical-extraction failure case.
std::optional<std::string> last_matching_line(const std::string &text,
                                              const std::string &pattern);

} // namespace sero
