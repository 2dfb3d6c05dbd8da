#pragma once

#include <iosfwd>

namespace canreveal {

/// Entry point of the canreveal command line. Returns 0 on success, 2 on a
/// usage or configuration error, 1 on a runtime error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace canreveal
