#pragma once

// Synthetic data generators shared by unit and acceptance tests. They are
// written directly from the model formulas, independent of the library code
// they exercise.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sawspe/photonstats.hpp"
#include "sawspe/sweep.hpp"

namespace testgen {

inline double g2_model(double g0, double tau0, double tau) { return 1.0 - (1.0 - g0) * std::exp(-std::abs(tau) / tau0); }

/// Correlation histogram with `base` expected coincidences per bin at g2 = 1.
/// Poisson noise when `rng` is given, exact (non-integer rounded) otherwise.
inline sawspe::photonstats::CorrelationHistogram g2_histogram(double g0, double tau0, std::int64_t bin_width,
                                                               int half_bins, double base,
                                                               std::mt19937_64* rng = nullptr) {
    sawspe::photonstats::CorrelationHistogram h;
    h.bin_width = bin_width;
    h.normalization = base;
    const int n = 2 * half_bins + 1;
    for (int i = 0; i <= n; ++i) h.tau_edges.push_back((i - half_bins - 0.5) * static_cast<double>(bin_width));
    for (int i = 0; i < n; ++i) {
        const double mean = base * g2_model(g0, tau0, (i - half_bins) * static_cast<double>(bin_width));
        if (rng) {
            h.counts.push_back(std::poisson_distribution<std::uint64_t>(mean)(*rng));
        } else {
            h.counts.push_back(static_cast<std::uint64_t>(std::llround(mean)));
        }
    }
    return h;
}

/// Pulsed-laser decay: flat background, a one-bin rise at `peak_bin`, then
/// A exp(-(t - t_peak) / tau) + B, bins of `bin_ps` starting at t = 0.
inline sawspe::photonstats::DecayHistogram decay_histogram(double tau_ps, double amplitude, double background,
                                                           double bin_ps, int n_bins, int peak_bin,
                                                           std::mt19937_64* rng = nullptr) {
    sawspe::photonstats::DecayHistogram d;
    for (int i = 0; i < n_bins; ++i) {
        const double t = i * bin_ps;
        double mean = background;
        if (i >= peak_bin) mean += amplitude * std::exp(-(t - peak_bin * bin_ps) / tau_ps);
        d.time_ps.push_back(t);
        d.counts.push_back(rng ? static_cast<double>(std::poisson_distribution<std::uint64_t>(mean)(*rng)) : mean);
    }
    return d;
}

/// delta_e = slope * sqrt(P_mW), optionally clamped at P(sat_dbm) and
/// with multiplicative Gaussian noise.
inline std::vector<sawspe::sweep::PowerSweepPoint> sqrtp_points(double slope, double dbm_lo, double dbm_hi, int n,
                                                                double sat_dbm = 1e9, double rel_noise = 0.0,
                                                                std::mt19937_64* rng = nullptr) {
    std::vector<sawspe::sweep::PowerSweepPoint> pts;
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        const double dbm = dbm_lo + (dbm_hi - dbm_lo) * i / (n - 1);
        const double mw = std::pow(10.0, std::min(dbm, sat_dbm) / 10.0);
        double de = slope * std::sqrt(mw);
        if (rng && rel_noise > 0.0) de *= 1.0 + rel_noise * noise(*rng);
        pts.push_back({dbm, de, rel_noise > 0.0 ? rel_noise * slope * std::sqrt(mw) : 0.0, 303.5e6});
    }
    return pts;
}

/// delta_e = c * P_mW.
inline std::vector<sawspe::sweep::PowerSweepPoint> linear_points(double c, double dbm_lo, double dbm_hi, int n) {
    std::vector<sawspe::sweep::PowerSweepPoint> pts;
    for (int i = 0; i < n; ++i) {
        const double dbm = dbm_lo + (dbm_hi - dbm_lo) * i / (n - 1);
        pts.push_back({dbm, c * std::pow(10.0, dbm / 10.0), 0.0, 303.5e6});
    }
    return pts;
}

}  // namespace testgen
