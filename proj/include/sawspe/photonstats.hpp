#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sawspe/fit_report.hpp"
#include "sawspe/levmar.hpp"
#include "sawspe/photon.hpp"

// Photon correlation and lifetime analysis on time tags (ps).
namespace sawspe::photonstats {

struct CorrelationHistogram {
    /// Delay edges (ps), symmetric about 0; bin k is centered on k * bin_width.
    std::vector<double> tau_edges;
    std::vector<std::uint64_t> counts;
    /// Expected coincidences per bin for uncorrelated streams.
    double normalization = 0.0;
    std::int64_t bin_width = 0;
    std::vector<std::string> warnings;

    std::size_t bins() const { return counts.size(); }
    double center(std::size_t i) const { return 0.5 * (tau_edges[i] + tau_edges[i + 1]); }
    /// counts / normalization.
    std::vector<double> g2() const;
    void validate() const;
    /// Adds counts and normalization of a histogram over a disjoint time segment.
    void merge(const CorrelationHistogram& other);
};

struct CorrelateOptions {
    /// Total acquisition time (ps) for the rate estimate; defaults to the
    /// span of the records.
    std::optional<double> duration_ps;
    /// Far-wing cross-check threshold on |mean wing g2 - 1|.
    double wing_tolerance = 0.1;
};

/// All pairwise delays t_b - t_a within +/- window (ps), binned at
/// bin_width (ps). A delay exactly on a bin boundary goes to the bin farther
/// from 0, which keeps correlate(a, b) the mirror image of correlate(b, a).
/// Same-channel correlation skips each photon's pairing with itself.
/// Normalization = n_a n_b bin_width / T.
///
/// Throws DataError for an empty channel, DomainError unless
/// window > bin_width > 0.
CorrelationHistogram correlate(const PhotonStream& records, std::uint32_t ch_a, std::uint32_t ch_b,
                               std::int64_t window, std::int64_t bin_width, const CorrelateOptions& options = {});

struct G2FitOptions {
    /// Starting dip width (ps); estimated from the data when unset.
    std::optional<double> tau0_guess;
    fit::LmOptions lm{};
};

/// Weighted least squares of g2(tau) = 1 - (1 - g2_0) exp(-|tau| / tau0).
/// Parameters: g2_0, tau0 (ps). Annotation single_emitter is "true" iff
/// g2_0 < 0.5.
FitReport fit_g2(const CorrelationHistogram& hist, const G2FitOptions& options = {});

struct PulsedG2 {
    double ratio = 0.0;   ///< zero-delay peak area / mean side-peak area
    double stderr_ = 0.0;
    int side_peaks = 0;
};

/// Pulsed-excitation g2(0): coincidences within +/- half_width of tau = 0
/// over the mean of those around tau = k * rep_period, k != 0, inside the
/// histogram.
PulsedG2 pulsed_g2(const CorrelationHistogram& hist, double rep_period_ps, double half_width_ps);

struct DecayHistogram {
    std::vector<double> time_ps;  ///< bin start times, increasing
    std::vector<double> counts;

    std::size_t size() const { return time_ps.size(); }
    void validate() const;
};

struct LifetimeFitOptions {
    /// First fitted bin relative to the maximum.
    int start_offset = 2;
    /// Minimum F statistic of the exponential over a constant.
    double min_f_statistic = 10.0;
    fit::LmOptions lm{};
};

/// Tail fit of A exp(-t / tau) + B from the maximum + start_offset onward,
/// t measured from the first fitted bin. Parameters: tau (ps), amplitude,
/// background. Throws DataError("no decay detected ...") when the tail is
/// empty or an exponential does not beat a constant.
FitReport fit_lifetime(const DecayHistogram& decay, const LifetimeFitOptions& options = {});

/// Poisson photon stream at `rate_cps` over `duration_s`.
PhotonStream poisson_stream(double rate_cps, double duration_s, std::uint32_t channel, std::uint64_t seed);

/// CW-driven two-level emitter: excitation at pump_rate, decay at
/// 1 / lifetime, each photon detected with `efficiency` and routed to
/// channel 0 or 1 with equal probability; optional uncorrelated background
/// per channel. g2(tau) = 1 - rho^2 exp(-(pump_rate + 1/lifetime) |tau|)
/// with rho the signal fraction.
struct AntibunchedSource {
    double pump_rate = 5e7;     ///< 1/s
    double lifetime = 2e-9;     ///< s
    double efficiency = 1e-3;
    double background_cps = 0.0;
    double duration_s = 1.0;
};

PhotonStream antibunched_stream(const AntibunchedSource& source, std::uint64_t seed);

/// Merges streams and sorts by time (stable on ties).
PhotonStream merge_streams(std::vector<PhotonStream> streams);

}  // namespace sawspe::photonstats
