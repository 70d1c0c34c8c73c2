#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sawspe/fit_report.hpp"
#include "sawspe/levmar.hpp"

// One-port SAW resonator reflection: model, synthesis, fitting, coupling
// regime, and cavity geometry.
namespace sawspe::resonator {

/// A single cavity resonance.
struct ResonatorMode {
    double f_n = 0.0;  ///< Hz
    double q_i = 0.0;  ///< intrinsic quality factor
    double q_e = 0.0;  ///< extrinsic quality factor

    /// (1/q_i + 1/q_e)^-1
    double q_loaded() const { return 1.0 / (1.0 / q_i + 1.0 / q_e); }
    /// Full linewidth f_n / q_loaded in Hz.
    double linewidth() const { return f_n / q_loaded(); }
    /// Throws DomainError unless f_n, q_i, q_e are all positive and finite.
    void validate() const;
};

struct S11Spectrum {
    std::vector<double> frequencies;                ///< Hz, strictly increasing
    std::vector<std::complex<double>> values;       ///< paired 1:1 with frequencies

    std::size_t size() const { return frequencies.size(); }
    /// Throws DataError on length mismatch, fewer than 2 points, or a
    /// non-increasing grid.
    void validate() const;
};

/// Bragg mirror stopband.
struct MirrorBand {
    double f_low = 0.0;
    double f_high = 0.0;

    void validate() const;
    bool contains(double f) const { return f >= f_low && f <= f_high; }
};

/// Lengths in µm.
struct CavityGeometry {
    double d = 0.0;    ///< inner mirror edge separation
    double w = 0.0;    ///< reflector electrode width
    double r_s = 0.0;  ///< single-period reflectivity
};

enum class Coupling { undercoupled, critically_coupled, overcoupled };

const char* to_string(Coupling c);

/// One-port reflection of a single mode:
///
///   S11(f) = [(q_e - q_i)/q_e + 2i q_i (f - f_n)/f] / [(q_e + q_i)/q_e + 2i q_i (f - f_n)/f]
///
/// The detuning is normalized by f (not f_n); the two agree to O(1/q) near
/// resonance.
std::complex<double> s11_model(double f, const ResonatorMode& mode);

/// Product of per-mode reflections on `grid`, plus independent Gaussian noise
/// of `noise_sigma` on each quadrature. Duplicate f_n values add a warning.
S11Spectrum synthesize_s11(const std::vector<ResonatorMode>& modes, const std::vector<double>& grid,
                           double noise_sigma = 0.0, std::uint64_t seed = 0,
                           std::vector<std::string>* warnings = nullptr);

/// Uniform frequency grid of `points` samples over [f_start, f_stop].
std::vector<double> linear_grid(double f_start, double f_stop, std::size_t points);

struct FitS11Options {
    /// Half-width of each mode's fit window in loaded linewidths.
    double window_linewidths = 5.0;
    /// Multiply the model by a complex affine background a + b (f - f_ref).
    bool background = false;
    /// A mode whose fit removes less than this fraction of the no-mode
    /// residual is reported as "no resonance found".
    double min_improvement = 0.5;
    /// Per-mode passes (other modes held fixed) before the joint fit.
    int local_passes = 2;
    fit::LmOptions lm{};
};

struct FitS11Result {
    std::vector<ResonatorMode> modes;
    std::optional<std::complex<double>> background_offset;
    std::optional<std::complex<double>> background_slope;  ///< per MHz from the reference frequency
    double background_reference_hz = 0.0;
    FitReport report;
};

/// Nonlinear least squares of the multi-mode model against Re and Im of the
/// data, restricted to the union of per-mode windows around the initial
/// guesses. Report parameters are named mode<k>.f_n / mode<k>.q_i / mode<k>.q_e.
///
/// Throws DataError("no resonance found ...") on featureless windows and
/// ConvergenceError when the iteration cap is reached.
FitS11Result fit_s11(const S11Spectrum& spectrum, const std::vector<ResonatorMode>& initial,
                     const FitS11Options& options = {});

/// undercoupled iff q_e > q_i, overcoupled iff q_e < q_i, with a
/// critically-coupled band |q_e - q_i| <= tol (q_e + q_i).
Coupling classify_coupling(const ResonatorMode& mode, double tol = 1e-3);

/// Automatic seeds: local minima of |S11| with topographic prominence at
/// least `prominence`. f_n from the minimum, q_loaded from the width at half
/// depth of |S11|^2, q_i/q_e split from the signed on-resonance reflection.
std::vector<ResonatorMode> detect_dips(const S11Spectrum& spectrum, double prominence = 0.05,
                                       const std::optional<MirrorBand>& band = std::nullopt);

/// Mirror penetration depth w / r_s (µm).
double mirror_penetration(const CavityGeometry& geom);

/// Total acoustic length d + 2 w / r_s (µm).
double cavity_length(const CavityGeometry& geom);

}  // namespace sawspe::resonator
