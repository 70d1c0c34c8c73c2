#pragma once

#include <optional>
#include <vector>

#include "sawspe/fit_report.hpp"

// Drive-power dependence of the modulation amplitude and strain conversion.
namespace sawspe::sweep {

struct PowerSweepPoint {
    double p_dbm = 0.0;
    double delta_e = 0.0;      ///< meV
    double delta_e_err = 0.0;  ///< meV; 0 means unknown
    double f_drive = 0.0;      ///< Hz

    double p_mw() const;
    void validate() const;
};

/// RSS reduction the plateau model must achieve over pure sqrt(P).
inline constexpr double kDefaultSaturationMargin = 0.2;

struct SqrtPOptions {
    /// Points above this power (dBm) are excluded.
    std::optional<double> saturation_cut_dbm;
    /// Use detect_saturation to place the cut when none is given.
    bool auto_cut = false;
    double saturation_margin = kDefaultSaturationMargin;
};

/// Weighted least squares of delta_e = s sqrt(P_mW) and of delta_e = c P_mW
/// on the points at or below the cut. Weights are 1 / delta_e_err^2 when
/// every point has an error, unit otherwise. Parameters: slope
/// (meV/sqrt(mW)), linear_coeff (meV/mW). Annotations carry both residual
/// norms and the preferred model; a linear-in-P preference adds the warning
/// "not deformation-potential-like".
FitReport fit_sqrtp(const std::vector<PowerSweepPoint>& points, const SqrtPOptions& options = {});

struct Exponent {
    double value = 0.0;
    double stderr_ = 0.0;
    double intercept = 0.0;  ///< ln(meV) at P = 1 mW
};

/// OLS slope of ln delta_e against ln P_mW. Throws DomainError for
/// non-positive delta_e, DataError for fewer than 2 points.
Exponent loglog_exponent(const std::vector<PowerSweepPoint>& points);

struct SaturationReport {
    std::optional<double> breakpoint_dbm;
    double candidate_dbm = 0.0;  ///< best breakpoint whether or not accepted
    double ssr_sqrt = 0.0;
    double ssr_plateau = 0.0;
};

/// Fits delta_e = s sqrt(min(P, P_b)): sqrt(P) rising to a plateau that
/// joins it at P_b. P_b is scanned on a 0.01 dB grid between the lowest and
/// highest input power. The breakpoint is reported when the plateau model
/// lowers the residual sum of squares by at least `margin` (fractional).
SaturationReport saturation_analysis(const std::vector<PowerSweepPoint>& points,
                                     double margin = kDefaultSaturationMargin);

std::optional<double> detect_saturation(const std::vector<PowerSweepPoint>& points,
                                        double margin = kDefaultSaturationMargin);

/// Lower-bound deformation potential, meV per % strain.
inline constexpr double kDefaultDeformationPotential = 30.0;

struct StrainModel {
    double d_coupling = kDefaultDeformationPotential;  ///< meV per %
    std::optional<double> strain_ref;                  ///< % at p_ref_dbm
    double p_ref_dbm = 0.0;

    void validate() const;
};

/// shift = D * strain (meV for strain in %). Negative strain is a domain error.
double strain_to_shift(const StrainModel& model, double strain_percent);
double shift_to_strain(const StrainModel& model, double shift_mev);

/// strain_ref * sqrt(P / P_ref). Throws DomainError without a reference.
double strain_at_power(const StrainModel& model, double p_dbm);

}  // namespace sawspe::sweep
