#pragma once

#include <ostream>

namespace sawspe::cli {

/// Runs the `sawspe` command line. Reports and curves sent to "-" go to
/// `out`, diagnostics to `err`.
///
/// Returns 0 on success, 1 on a usage or configuration error, 2 when the
/// input data, a fit, or file I/O fails.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sawspe::cli
