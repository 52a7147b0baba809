#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stylerl {

// Entry point of the `stylerl` tool. `args` excludes the program name.
// Returns 0 on success, 2 for usage errors and 1 for runtime failures; a
// failure prints one line `error: <Category>: <message>` to `err`.
int cli_main(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

} // namespace stylerl
