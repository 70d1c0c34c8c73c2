#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sawspe/fit_report.hpp"
#include "sawspe/levmar.hpp"

// SAW-modulated emitter lineshapes. Energies in meV, times in s, drive
// frequency in Hz.
namespace sawspe::emitter {

struct ModulatedEmitter {
    double omega0 = 0.0;     ///< zero-phonon line center (meV)
    double gamma = 0.0;      ///< Lorentzian half width at half maximum (meV)
    double delta_e = 0.0;    ///< modulation amplitude (meV)
    double f_rf = 0.0;       ///< drive frequency (Hz)
    double phase0 = 0.0;     ///< modulation phase at t = 0 (rad)
    double amplitude = 1.0;  ///< peak spectral weight

    void validate() const;
    /// Instantaneous line center omega0 + delta_e sin(2 pi f_rf t + phase0).
    double center_at(double t) const;
};

/// Two fine-structure transitions (H below, V above the midpoint) sharing
/// one modulation.
struct FineStructureDoublet {
    double center = 0.0;     ///< midpoint energy (meV)
    double delta_fss = 0.0;  ///< H-V splitting (meV)
    double ratio = 1.0;      ///< V/H intensity ratio
    double delta_e = 0.0;
    double f_rf = 0.0;
    double phase0 = 0.0;
    double gamma_h = 0.0;
    double gamma_v = 0.0;
    double amplitude = 1.0;  ///< H peak weight; V carries amplitude * ratio

    void validate() const;
    ModulatedEmitter h() const;
    ModulatedEmitter v() const;
};

struct PLSpectrum {
    std::vector<double> energies;  ///< meV, increasing
    std::vector<double> counts;    ///< non-negative
    /// Set by synthesis when the grid does not span omega0 +/- (delta_e + 10 gamma).
    bool truncated = false;

    std::size_t size() const { return energies.size(); }
    void validate() const;
};

/// amplitude * gamma^2 / (gamma^2 + (omega - center_at(t))^2).
///
/// Peak value is amplitude rather than gamma because absolute PL counts are
/// arbitrary.
double instantaneous_lineshape(const ModulatedEmitter& e, double omega, double t);

inline constexpr int kDefaultQuadratureSamples = 512;

/// Phase samples needed for ~1e-12 relative accuracy of the periodic
/// trapezoid rule: the integrand's nearest complex singularity sits
/// asinh(gamma / delta_e) off the real axis, so the error decays like
/// exp(-n asinh(gamma / delta_e)). Never fewer than `floor`; multiple of 4.
int required_quadrature_samples(double gamma, double delta_e, int floor = kDefaultQuadratureSamples);

/// One-period average of the instantaneous lineshape, evaluated with
/// uniformly spaced times (periodic trapezoid rule). `samples` is a floor;
/// it is raised per required_quadrature_samples for deep modulation. Sets
/// `truncated` and appends a warning when the grid is too narrow.
PLSpectrum time_averaged_spectrum(const ModulatedEmitter& e, const std::vector<double>& grid,
                                  int samples = kDefaultQuadratureSamples,
                                  std::vector<std::string>* warnings = nullptr);

/// Sum of the H and V time-averaged spectra.
PLSpectrum doublet_spectrum(const FineStructureDoublet& d, const std::vector<double>& grid,
                            int samples = kDefaultQuadratureSamples);

enum class Mixing { separated, partially_mixed, fully_mixed };
const char* to_string(Mixing m);

struct MixingReport {
    Mixing state = Mixing::separated;
    /// delta_fss - 2 delta_e: gap between the H upper and V lower turning-point peaks (meV).
    double inner_gap = 0.0;
    /// Normalized overlap of the two inner peaks, in [0, 1].
    double overlap = 0.0;
};

/// fully_mixed iff |gap| <= gamma, partially_mixed iff gamma < |gap| <= 3 gamma,
/// separated otherwise; gamma is the mean of the two transition widths. A
/// degenerate doublet (delta_fss = 0) is fully mixed.
MixingReport classify_mixing(const FineStructureDoublet& d);

/// Local maxima of `counts` that rise above `min_fraction` of the global
/// range; returns their energies in increasing order.
std::vector<double> find_peaks(const PLSpectrum& s, double min_fraction = 0.1);

/// Outermost-peak separation (meV), 0 for a single peak.
double peak_separation(const PLSpectrum& s, double min_fraction = 0.1);

struct LineshapeFitOptions {
    int quadrature_samples = kDefaultQuadratureSamples;
    /// Add a linear background slope (per meV from the grid midpoint).
    bool background_slope = false;
    /// Modulated model is kept only if the F statistic of the extra parameter
    /// exceeds this value.
    double f_threshold = 10.0;
    fit::LmOptions lm{};
};

struct LineshapeFit {
    ModulatedEmitter emitter;
    double background = 0.0;
    double background_slope = 0.0;
    bool modulated = false;
    double ssr_modulated = 0.0;
    double ssr_unmodulated = 0.0;
    FitReport report;
};

/// Least squares of time_averaged_spectrum + background against the data,
/// for both the modulated model and the delta_e = 0 Lorentzian; the better
/// model (by an F test on the extra parameter) is reported.
///
/// Throws DataError("no peak ...") for flat data.
LineshapeFit fit_modulated_lineshape(const PLSpectrum& spectrum, const ModulatedEmitter& initial,
                                     const LineshapeFitOptions& options = {});

/// Data-driven starting point: background from the low quantile, center and
/// delta_e from the outermost strong peaks, gamma from the flank width.
ModulatedEmitter guess_emitter(const PLSpectrum& spectrum, double f_rf);

/// Frequency-sweep PL map: counts(energy, drive frequency).
struct PLMap {
    std::vector<double> energies;     ///< meV
    std::vector<double> frequencies;  ///< Hz, one per column
    std::vector<std::vector<double>> columns;  ///< columns[j][i] = counts at energies[i], frequencies[j]

    PLSpectrum column(std::size_t j) const;
};

/// Fits every column of a PL map. With `recenter` each column gets its own
/// omega0 (absorbs slow spectral jitter); otherwise omega0 is pinned to the
/// value fitted on the column-summed spectrum.
std::vector<LineshapeFit> fit_pl_map(const PLMap& map, const ModulatedEmitter& initial, bool recenter = true,
                                     const LineshapeFitOptions& options = {});

}  // namespace sawspe::emitter
