#include "sawspe/grid.hpp"

#include "sawspe/error.hpp"

namespace sawspe {

std::vector<double> linspace(double start, double stop, std::size_t points) {
    if (points < 2 || !(stop > start)) throw DomainError("linspace needs points >= 2 and stop > start");
    std::vector<double> g(points);
    const double step = (stop - start) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) g[i] = start + step * static_cast<double>(i);
    g.back() = stop;
    return g;
}

}  // namespace sawspe
