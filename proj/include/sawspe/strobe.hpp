#pragma once

#include <cstdint>
#include <vector>

#include "sawspe/emitter.hpp"
#include "sawspe/fit_report.hpp"
#include "sawspe/photon.hpp"

// Stroboscopic photon counting through a monochromator passband.
namespace sawspe::strobe {

struct BandpassFilter {
    double omega_low = 0.0;   ///< meV
    double omega_high = 0.0;  ///< meV
    /// Raised-cosine edge width (meV); 0 gives ideal step edges. Each edge
    /// ramps from 0 to 1 over [edge - w/2, edge + w/2].
    double edge_width = 0.0;

    void validate() const;
    /// Power transmission at `omega`, in [0, 1].
    double transmission(double omega) const;
};

/// Integral over the passband of instantaneous_lineshape(e, omega, t).
/// Closed form (arctangent) for step edges; the raised-cosine ramps are
/// integrated by Gauss-Legendre quadrature.
double analytic_count_rate(const emitter::ModulatedEmitter& e, const BandpassFilter& filter, double t);

/// Probability that a photon emitted at time t passes the filter, i.e. the
/// count rate divided by the full line integral pi * gamma * amplitude.
double acceptance_probability(const emitter::ModulatedEmitter& e, const BandpassFilter& filter, double t);

struct StrobeHistogram {
    std::vector<double> bin_edges;  ///< s, spanning [0, 1/f_rf]
    std::vector<std::uint64_t> counts;
    std::uint64_t total_emitted = 0;
    std::uint64_t total_detected = 0;

    std::size_t bins() const { return counts.size(); }
    double period() const { return bin_edges.back() - bin_edges.front(); }
    void validate() const;
    /// Adds another histogram with identical edges.
    void merge(const StrobeHistogram& other);
};

inline constexpr int kDefaultStrobeBins = 128;

/// Empty histogram with `bins` equal bins over one drive period.
StrobeHistogram make_histogram(double f_rf, int bins = kDefaultStrobeBins);

/// Folds absolute times (s) modulo 1/f_rf into `h`.
void fold_into(StrobeHistogram& h, double f_rf, const std::vector<double>& times_s);

struct StrobeConfig {
    std::uint64_t n_pulses = 0;
    double pulse_period = 12.5e-9;  ///< s
    double lifetime = 2e-9;         ///< s
    std::uint64_t seed = 0;
    int bins = kDefaultStrobeBins;
    /// Gaussian detector jitter (s); 0 disables.
    double jitter_sigma = 0.0;
    /// Worker threads; 0 picks the hardware concurrency. Output does not
    /// depend on this value.
    int threads = 1;
    std::uint32_t channel = 0;
};

struct StrobeRun {
    PhotonStream records;  ///< detected photons, sorted by time
    StrobeHistogram histogram;
};

/// Pulse k fires at k * pulse_period and emits one photon after an
/// exponential delay. Its energy is the instantaneous line center plus a
/// Lorentzian draw; the photon is kept if it passes the filter. Each pulse
/// draws from its own counter stream, so results depend only on the seed.
StrobeRun simulate_photon_stream(const emitter::ModulatedEmitter& e, const BandpassFilter& filter,
                                 const StrobeConfig& config);

/// Expected bin counts of simulate_photon_stream for the same arguments.
/// Emission phases are the pulse phases convolved with the folded
/// exponential delay; jitter adds a folded Gaussian blur.
std::vector<double> expected_histogram(const emitter::ModulatedEmitter& e, const BandpassFilter& filter,
                                       const StrobeConfig& config);

/// Pearson chi-square per degree of freedom of observed vs expected counts,
/// skipping bins with expectation below `min_expected`.
double chi2_per_dof(const StrobeHistogram& h, const std::vector<double>& expected, double min_expected = 5.0);

struct HarmonicReport {
    double magnitude1 = 0.0;  ///< |H1| / H0
    double phase1 = 0.0;      ///< rad
    double magnitude2 = 0.0;  ///< |H2| / H0
    double phase2 = 0.0;
    int dominant = 1;  ///< 1 or 2
};

/// Projection of the bin counts onto exp(-2 pi i k t / T), k = 0, 1, 2, with
/// t the bin centers. Needs >= 8 bins and at least one detected photon.
HarmonicReport harmonic_analysis(const StrobeHistogram& h, double f_rf);

struct StrobeFitOptions {
    fit::LmOptions lm{};
};

/// Fits counts_j = scale * <acceptance>_bin with the emitter's omega0 and
/// gamma fixed and delta_e, phase0 and scale free. The modulation enters
/// as (a, b) = delta_e (cos phase0, sin phase0), so delta_e = 0 is regular.
/// Parameters: delta_e (meV), phase0 (rad), scale (counts per bin).
FitReport fit_strobe(const StrobeHistogram& h, const emitter::ModulatedEmitter& guess, const BandpassFilter& filter,
                     const StrobeFitOptions& options = {});

}  // namespace sawspe::strobe
