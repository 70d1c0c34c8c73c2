#include "sawspe/rng.hpp"

#include <cmath>
#include <random>

#include "sawspe/units.hpp"

namespace sawspe {

double CounterStream::exponential(double mean) noexcept { return -mean * std::log(uniform()); }

double CounterStream::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = units::kTwoPi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double CounterStream::cauchy(double gamma) noexcept { return gamma * std::tan(units::kPi * (uniform() - 0.5)); }

std::uint64_t poisson(CounterStream& rng, double mean) {
    if (!(mean > 0.0)) return 0;
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(rng);
}

}  // namespace sawspe
