#include "sawspe/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sawspe/error.hpp"
#include "sawspe/units.hpp"

namespace sawspe::sweep {

namespace {

struct ThroughOrigin {
    double coeff = 0.0;
    double stderr_ = 0.0;
    double ssr = 0.0;
};

// Weighted least squares of y = k x.
ThroughOrigin fit_through_origin(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& w, bool absolute) {
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * x[i] * x[i];
        sxy += w[i] * x[i] * y[i];
    }
    ThroughOrigin out;
    out.coeff = sxy / sxx;
    for (std::size_t i = 0; i < x.size(); ++i) out.ssr += w[i] * std::pow(y[i] - out.coeff * x[i], 2);
    const double sigma2 = absolute ? 1.0 : out.ssr / static_cast<double>(x.size() - 1);
    out.stderr_ = std::sqrt(sigma2 / sxx);
    return out;
}

std::vector<PowerSweepPoint> sorted(std::vector<PowerSweepPoint> pts) {
    for (const auto& p : pts) p.validate();
    std::stable_sort(pts.begin(), pts.end(),
                     [](const PowerSweepPoint& a, const PowerSweepPoint& b) { return a.p_dbm < b.p_dbm; });
    return pts;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

double PowerSweepPoint::p_mw() const { return units::dbm_to_mw(p_dbm); }

void PowerSweepPoint::validate() const {
    if (!std::isfinite(p_dbm)) throw DomainError("sweep point: power must be finite");
    if (!(delta_e >= 0.0)) throw DomainError("sweep point: delta_e must be non-negative");
    if (!(delta_e_err >= 0.0)) throw DomainError("sweep point: delta_e_err must be non-negative");
}

FitReport fit_sqrtp(const std::vector<PowerSweepPoint>& points, const SqrtPOptions& options) {
    const auto pts = sorted(points);
    std::optional<double> cut = options.saturation_cut_dbm;
    if (!cut && options.auto_cut && pts.size() >= 3) cut = detect_saturation(pts, options.saturation_margin);

    std::vector<double> root, lin, y, err;
    for (const auto& p : pts) {
        if (cut && p.p_dbm > *cut) continue;
        root.push_back(std::sqrt(p.p_mw()));
        lin.push_back(p.p_mw());
        y.push_back(p.delta_e);
        err.push_back(p.delta_e_err);
    }
    if (y.size() < 3) throw DataError("fit_sqrtp: need at least 3 points below the saturation cut");

    const bool weighted = std::all_of(err.begin(), err.end(), [](double e) { return e > 0.0; });
    std::vector<double> w(y.size(), 1.0);
    if (weighted)
        for (std::size_t i = 0; i < y.size(); ++i) w[i] = 1.0 / (err[i] * err[i]);

    const auto s = fit_through_origin(root, y, w, weighted);
    const auto c = fit_through_origin(lin, y, w, weighted);
    const bool prefer_sqrt = s.ssr <= c.ssr;

    FitReport rep;
    rep.model_name = "sqrt_power";
    rep.add("slope", s.coeff, s.stderr_, "meV/sqrt(mW)");
    rep.add("linear_coeff", c.coeff, c.stderr_, "meV/mW");
    rep.residual_norm = std::sqrt(s.ssr);
    rep.n_points = y.size();
    rep.converged = true;
    rep.annotate("residual_sqrt_p", fmt(std::sqrt(s.ssr)));
    rep.annotate("residual_linear_p", fmt(std::sqrt(c.ssr)));
    rep.annotate("preferred_model", prefer_sqrt ? "sqrt_p" : "linear_p");
    rep.annotate("deformation_potential_like", prefer_sqrt ? "true" : "false");
    rep.annotate("weighting", weighted ? "inverse_variance" : "unit");
    rep.annotate("saturation_cut_dbm", cut ? fmt(*cut) : "none");
    if (!prefer_sqrt) rep.warnings.push_back("not deformation-potential-like: delta_e scales linearly with power");

    std::vector<double> raw;
    for (const auto& p : pts) raw.insert(raw.end(), {p.p_dbm, p.delta_e, p.delta_e_err});
    rep.input_digest = content_digest(std::span<const double>(raw));
    return rep;
}

Exponent loglog_exponent(const std::vector<PowerSweepPoint>& points) {
    if (points.size() < 2) throw DataError("loglog_exponent: need at least 2 points");
    std::vector<double> x, y;
    for (const auto& p : points) {
        if (!(p.delta_e > 0.0)) throw DomainError("loglog_exponent: delta_e must be positive");
        x.push_back(std::log(p.p_mw()));
        y.push_back(std::log(p.delta_e));
    }
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw DataError("loglog_exponent: all points at the same power");
    Exponent out;
    out.value = sxy / sxx;
    out.intercept = my - out.value * mx;
    if (x.size() > 2) {
        double ssr = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) ssr += std::pow(y[i] - out.intercept - out.value * x[i], 2);
        out.stderr_ = std::sqrt(ssr / (n - 2.0) / sxx);
    }
    return out;
}

SaturationReport saturation_analysis(const std::vector<PowerSweepPoint>& points, double margin) {
    SaturationReport rep;
    if (points.size() < 3) return rep;
    const auto pts = sorted(points);
    const bool weighted = std::all_of(pts.begin(), pts.end(), [](const auto& p) { return p.delta_e_err > 0.0; });
    std::vector<double> y, w, mw;
    for (const auto& p : pts) {
        y.push_back(p.delta_e);
        w.push_back(weighted ? 1.0 / (p.delta_e_err * p.delta_e_err) : 1.0);
        mw.push_back(p.p_mw());
    }

    auto ssr_at = [&](double pb_mw) {
        std::vector<double> g(mw.size());
        for (std::size_t i = 0; i < mw.size(); ++i) g[i] = std::sqrt(std::min(mw[i], pb_mw));
        return fit_through_origin(g, y, w, true).ssr;
    };

    const double lo = pts.front().p_dbm, hi = pts.back().p_dbm;
    rep.ssr_sqrt = ssr_at(mw.back());
    rep.ssr_plateau = rep.ssr_sqrt;
    rep.candidate_dbm = hi;
    const auto steps = static_cast<long>(std::ceil((hi - lo) / 0.01));
    for (long k = 0; k <= steps; ++k) {
        const double dbm = std::min(lo + 0.01 * static_cast<double>(k), hi);
        const double ssr = ssr_at(units::dbm_to_mw(dbm));
        if (ssr < rep.ssr_plateau) {
            rep.ssr_plateau = ssr;
            rep.candidate_dbm = dbm;
        }
    }
    if (rep.ssr_sqrt > 0.0 && rep.ssr_plateau <= (1.0 - margin) * rep.ssr_sqrt) rep.breakpoint_dbm = rep.candidate_dbm;
    return rep;
}

std::optional<double> detect_saturation(const std::vector<PowerSweepPoint>& points, double margin) {
    return saturation_analysis(points, margin).breakpoint_dbm;
}

void StrainModel::validate() const {
    if (!(d_coupling > 0.0) || !std::isfinite(d_coupling)) throw DomainError("strain model: D must be positive");
    if (strain_ref && !(*strain_ref >= 0.0)) throw DomainError("strain model: reference strain must be non-negative");
}

double strain_to_shift(const StrainModel& model, double strain_percent) {
    model.validate();
    if (!(strain_percent >= 0.0)) throw DomainError("strain must be non-negative");
    return model.d_coupling * strain_percent;
}

double shift_to_strain(const StrainModel& model, double shift_mev) {
    model.validate();
    if (!(shift_mev >= 0.0)) throw DomainError("energy shift must be non-negative");
    return shift_mev / model.d_coupling;
}

double strain_at_power(const StrainModel& model, double p_dbm) {
    model.validate();
    if (!model.strain_ref) throw DomainError("strain_at_power: no reference strain set");
    if (!std::isfinite(p_dbm)) throw DomainError("strain_at_power: power must be finite");
    return *model.strain_ref * std::pow(10.0, (p_dbm - model.p_ref_dbm) / 20.0);
}

}  // namespace sawspe::sweep
