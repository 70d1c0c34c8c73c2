#pragma once

#include <cstddef>
#include <vector>

namespace sawspe {

/// `points` evenly spaced samples over [start, stop], endpoints exact.
/// Throws DomainError if points < 2 or stop <= start.
std::vector<double> linspace(double start, double stop, std::size_t points);

}  // namespace sawspe
