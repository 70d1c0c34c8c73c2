#include "sawspe/resonator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sawspe/error.hpp"
#include "sawspe/grid.hpp"
#include "sawspe/rng.hpp"

namespace sawspe::resonator {

using cplx = std::complex<double>;

namespace {

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

std::string fmt_hz(double f) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f MHz", f * 1e-6);
    return buf;
}

// Per-mode parameterization: x = (f_n - f_seed) / lw_seed, ln q_i, ln q_e.
struct ModeScale {
    double f_seed;
    double lw_seed;
};

ResonatorMode decode(const Eigen::VectorXd& p, Eigen::Index off, const ModeScale& s) {
    return {s.f_seed + p[off] * s.lw_seed, std::exp(p[off + 1]), std::exp(p[off + 2])};
}

void encode(const ResonatorMode& m, const ModeScale& s, Eigen::VectorXd& p, Eigen::Index off) {
    p[off] = (m.f_n - s.f_seed) / s.lw_seed;
    p[off + 1] = std::log(m.q_i);
    p[off + 2] = std::log(m.q_e);
}

cplx product_model(double f, const std::vector<ResonatorMode>& modes) {
    cplx v{1.0, 0.0};
    for (const auto& m : modes) v *= s11_model(f, m);
    return v;
}

struct Background {
    cplx offset{1.0, 0.0};
    cplx slope{0.0, 0.0};
    double f_ref = 0.0;

    cplx at(double f) const { return offset + slope * ((f - f_ref) * 1e-6); }
};

// Complex linear least squares of values ~ a + b (f - f_ref)/1e6.
Background fit_affine(const S11Spectrum& s, const std::vector<std::size_t>& idx, double f_ref) {
    Background bg;
    bg.f_ref = f_ref;
    if (idx.size() < 2) return bg;
    double sx = 0, sxx = 0;
    cplx sy{0, 0}, sxy{0, 0};
    for (auto i : idx) {
        const double x = (s.frequencies[i] - f_ref) * 1e-6;
        sx += x;
        sxx += x * x;
        sy += s.values[i];
        sxy += x * s.values[i];
    }
    const double n = static_cast<double>(idx.size());
    const double det = n * sxx - sx * sx;
    if (std::abs(det) < 1e-300) {
        bg.offset = sy / n;
        return bg;
    }
    bg.slope = (n * sxy - sx * sy) / det;
    bg.offset = (sy - bg.slope * sx) / n;
    return bg;
}

double window_ssr(const S11Spectrum& s, const std::vector<std::size_t>& idx, const std::vector<ResonatorMode>& modes,
                  const Background& bg) {
    double acc = 0.0;
    for (auto i : idx) acc += std::norm(s.values[i] - bg.at(s.frequencies[i]) * product_model(s.frequencies[i], modes));
    return acc;
}

}  // namespace

const char* to_string(Coupling c) {
    switch (c) {
        case Coupling::undercoupled: return "undercoupled";
        case Coupling::critically_coupled: return "critically_coupled";
        case Coupling::overcoupled: return "overcoupled";
    }
    return "unknown";
}

void ResonatorMode::validate() const {
    if (!finite_positive(f_n)) throw DomainError("resonance frequency must be positive");
    if (!finite_positive(q_i) || !finite_positive(q_e)) throw DomainError("quality factors must be positive");
}

void S11Spectrum::validate() const {
    if (frequencies.size() != values.size()) throw DataError("S11 spectrum: frequency/value length mismatch");
    if (frequencies.size() < 2) throw DataError("S11 spectrum needs at least 2 points");
    for (std::size_t i = 1; i < frequencies.size(); ++i)
        if (!(frequencies[i] > frequencies[i - 1]))
            throw DataError("S11 spectrum frequencies must be strictly increasing (index " + std::to_string(i) + ")");
}

void MirrorBand::validate() const {
    if (!(f_low < f_high)) throw DomainError("mirror band requires f_low < f_high");
}

cplx s11_model(double f, const ResonatorMode& mode) {
    if (!finite_positive(f)) throw DomainError("s11_model: frequency must be positive");
    mode.validate();
    const double detune = 2.0 * mode.q_i * (f - mode.f_n) / f;
    const cplx num{(mode.q_e - mode.q_i) / mode.q_e, detune};
    const cplx den{(mode.q_e + mode.q_i) / mode.q_e, detune};
    return num / den;
}

std::vector<double> linear_grid(double f_start, double f_stop, std::size_t points) {
    return linspace(f_start, f_stop, points);
}

S11Spectrum synthesize_s11(const std::vector<ResonatorMode>& modes, const std::vector<double>& grid,
                           double noise_sigma, std::uint64_t seed, std::vector<std::string>* warnings) {
    for (const auto& m : modes) m.validate();
    if (noise_sigma < 0.0) throw DomainError("noise_sigma must be non-negative");
    S11Spectrum out;
    out.frequencies = grid;
    out.values.resize(grid.size());
    if (grid.size() >= 2) out.validate();

    if (warnings) {
        std::set<double> seen;
        for (const auto& m : modes)
            if (!seen.insert(m.f_n).second) warnings->push_back("duplicate resonance frequency " + fmt_hz(m.f_n));
    }

    const Philox4x32 gen(seed);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        cplx v = product_model(grid[i], modes);
        if (noise_sigma > 0.0) {
            CounterStream rng(gen, i);
            const double re = rng.normal();
            const double im = rng.normal();
            v += cplx{noise_sigma * re, noise_sigma * im};
        }
        out.values[i] = v;
    }
    return out;
}

Coupling classify_coupling(const ResonatorMode& mode, double tol) {
    if (std::abs(mode.q_e - mode.q_i) <= tol * (mode.q_e + mode.q_i)) return Coupling::critically_coupled;
    return mode.q_e > mode.q_i ? Coupling::undercoupled : Coupling::overcoupled;
}

FitS11Result fit_s11(const S11Spectrum& spectrum, const std::vector<ResonatorMode>& initial,
                     const FitS11Options& options) {
    spectrum.validate();
    if (initial.empty()) throw DataError("fit_s11: no initial modes given");
    const double f_lo = spectrum.frequencies.front();
    const double f_hi = spectrum.frequencies.back();
    for (const auto& m : initial) {
        m.validate();
        if (m.f_n < f_lo || m.f_n > f_hi)
            throw DataError("fit_s11: initial resonance " + fmt_hz(m.f_n) + " outside the spectrum range");
    }

    const std::size_t n_modes = initial.size();
    std::vector<ModeScale> scales(n_modes);
    std::vector<std::vector<std::size_t>> windows(n_modes);
    std::set<std::size_t> union_set;
    for (std::size_t k = 0; k < n_modes; ++k) {
        scales[k] = {initial[k].f_n, initial[k].linewidth()};
        const double half = options.window_linewidths * scales[k].lw_seed;
        for (std::size_t i = 0; i < spectrum.size(); ++i) {
            const double f = spectrum.frequencies[i];
            if (f >= initial[k].f_n - half && f <= initial[k].f_n + half) windows[k].push_back(i);
        }
        if (windows[k].size() < 3)
            throw DataError("fit_s11: fewer than 3 points in the window around " + fmt_hz(initial[k].f_n));
        union_set.insert(windows[k].begin(), windows[k].end());
    }
    const std::vector<std::size_t> fit_idx(union_set.begin(), union_set.end());

    Background bg;
    bg.f_ref = 0.5 * (f_lo + f_hi);
    if (options.background) {
        std::vector<std::size_t> outside;
        for (std::size_t i = 0; i < spectrum.size(); ++i)
            if (!union_set.count(i)) outside.push_back(i);
        bg = fit_affine(spectrum, outside.size() >= 4 ? outside : fit_idx, bg.f_ref);
    }

    std::vector<ResonatorMode> modes = initial;

    // Per-mode passes with the other modes frozen.
    for (int pass = 0; pass < options.local_passes; ++pass) {
        for (std::size_t k = 0; k < n_modes; ++k) {
            const auto& idx = windows[k];
            std::vector<cplx> others(idx.size());
            for (std::size_t j = 0; j < idx.size(); ++j) {
                const double f = spectrum.frequencies[idx[j]];
                cplx o = bg.at(f);
                for (std::size_t q = 0; q < n_modes; ++q)
                    if (q != k) o *= s11_model(f, modes[q]);
                others[j] = o;
            }
            double null_ssr = 0.0;
            for (std::size_t j = 0; j < idx.size(); ++j) null_ssr += std::norm(spectrum.values[idx[j]] - others[j]);
            if (null_ssr <= 1e-24 * static_cast<double>(idx.size()))
                throw DataError("no resonance found near " + fmt_hz(initial[k].f_n));

            const ModeScale sc = scales[k];
            auto res = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
                const ResonatorMode m = decode(p, 0, sc);
                for (std::size_t j = 0; j < idx.size(); ++j) {
                    const double f = spectrum.frequencies[idx[j]];
                    const cplx d = spectrum.values[idx[j]] - others[j] * s11_model(f, m);
                    r[static_cast<Eigen::Index>(2 * j)] = d.real();
                    r[static_cast<Eigen::Index>(2 * j + 1)] = d.imag();
                }
            };
            Eigen::VectorXd p0(3);
            encode(modes[k], sc, p0, 0);
            fit::LmResult lr;
            try {
                lr = fit::levenberg_marquardt(res, p0, static_cast<Eigen::Index>(2 * idx.size()), options.lm);
            } catch (const ConvergenceError&) {
                if (pass == 0) throw DataError("no resonance found near " + fmt_hz(initial[k].f_n) +
                                               " (local fit did not converge)");
                throw;
            }
            const ResonatorMode fitted = decode(lr.params, 0, sc);
            if (!std::isfinite(fitted.q_i) || !std::isfinite(fitted.q_e) || fitted.f_n < f_lo || fitted.f_n > f_hi)
                throw DataError("no resonance found near " + fmt_hz(initial[k].f_n) + " (fit left the spectrum)");
            // Neighbours are still at their seeds on early passes and can
            // dominate an overlapping window, so only the last pass decides.
            if (pass + 1 == options.local_passes && 1.0 - lr.ssr / null_ssr < options.min_improvement)
                throw DataError("no resonance found near " + fmt_hz(initial[k].f_n) +
                                " (residual improvement below threshold)");
            modes[k] = fitted;
        }
    }

    // Joint refinement of all modes (and the background) on the union of windows.
    const Eigen::Index n_mode_params = static_cast<Eigen::Index>(3 * n_modes);
    const Eigen::Index n_params = n_mode_params + (options.background ? 4 : 0);
    Eigen::VectorXd p0(n_params);
    for (std::size_t k = 0; k < n_modes; ++k) encode(modes[k], scales[k], p0, static_cast<Eigen::Index>(3 * k));
    if (options.background) {
        p0[n_mode_params + 0] = bg.offset.real();
        p0[n_mode_params + 1] = bg.offset.imag();
        p0[n_mode_params + 2] = bg.slope.real();
        p0[n_mode_params + 3] = bg.slope.imag();
    }
    auto unpack = [&](const Eigen::VectorXd& p, std::vector<ResonatorMode>& ms, Background& b) {
        ms.resize(n_modes);
        for (std::size_t k = 0; k < n_modes; ++k) ms[k] = decode(p, static_cast<Eigen::Index>(3 * k), scales[k]);
        b.f_ref = bg.f_ref;
        if (options.background) {
            b.offset = {p[n_mode_params], p[n_mode_params + 1]};
            b.slope = {p[n_mode_params + 2], p[n_mode_params + 3]};
        }
    };
    auto joint = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        std::vector<ResonatorMode> ms;
        Background b;
        unpack(p, ms, b);
        for (std::size_t j = 0; j < fit_idx.size(); ++j) {
            const double f = spectrum.frequencies[fit_idx[j]];
            const cplx d = spectrum.values[fit_idx[j]] - b.at(f) * product_model(f, ms);
            r[static_cast<Eigen::Index>(2 * j)] = d.real();
            r[static_cast<Eigen::Index>(2 * j + 1)] = d.imag();
        }
    };
    const auto lr = fit::levenberg_marquardt(joint, p0, static_cast<Eigen::Index>(2 * fit_idx.size()), options.lm);

    FitS11Result out;
    Background final_bg;
    unpack(lr.params, out.modes, final_bg);
    if (options.background) {
        out.background_offset = final_bg.offset;
        out.background_slope = final_bg.slope;
        out.background_reference_hz = final_bg.f_ref;
    }

    FitReport& rep = out.report;
    rep.model_name = n_modes == 1 ? "s11_single_mode" : "s11_multi_mode";
    for (std::size_t k = 0; k < n_modes; ++k) {
        const auto off = static_cast<Eigen::Index>(3 * k);
        const auto& m = out.modes[k];
        const std::string pre = "mode" + std::to_string(k) + ".";
        rep.add(pre + "f_n", m.f_n, lr.stderr_[off] * scales[k].lw_seed, "Hz");
        rep.add(pre + "q_i", m.q_i, lr.stderr_[off + 1] * m.q_i, "");
        rep.add(pre + "q_e", m.q_e, lr.stderr_[off + 2] * m.q_e, "");
        rep.annotate(pre + "coupling", to_string(classify_coupling(m)));
    }
    if (options.background) {
        rep.add("background.offset_re", final_bg.offset.real(), lr.stderr_[n_mode_params], "");
        rep.add("background.offset_im", final_bg.offset.imag(), lr.stderr_[n_mode_params + 1], "");
        rep.add("background.slope_re", final_bg.slope.real(), lr.stderr_[n_mode_params + 2], "1/MHz");
        rep.add("background.slope_im", final_bg.slope.imag(), lr.stderr_[n_mode_params + 3], "1/MHz");
    }
    rep.residual_norm = lr.residual_norm();
    rep.n_points = fit_idx.size();
    rep.converged = lr.converged;
    rep.annotate("convergence", lr.reason);

    const double final_null = window_ssr(spectrum, fit_idx, {}, final_bg);
    if (final_null > 0.0 && lr.ssr > (1.0 - options.min_improvement) * final_null)
        rep.warnings.push_back("joint fit leaves more than half of the featureless-model residual");
    for (std::size_t a = 0; a < n_modes; ++a)
        for (std::size_t b = a + 1; b < n_modes; ++b)
            if (std::abs(out.modes[a].f_n - out.modes[b].f_n) <
                0.5 * std::min(out.modes[a].linewidth(), out.modes[b].linewidth()))
                rep.warnings.push_back("modes " + std::to_string(a) + " and " + std::to_string(b) +
                                       " converged within half a linewidth of each other");
    return out;
}

std::vector<ResonatorMode> detect_dips(const S11Spectrum& spectrum, double prominence,
                                       const std::optional<MirrorBand>& band) {
    spectrum.validate();
    if (band) band->validate();
    const std::size_t n = spectrum.size();
    std::vector<double> mag(n);
    for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(spectrum.values[i]);

    std::vector<ResonatorMode> seeds;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(mag[i] < mag[i - 1] && mag[i] <= mag[i + 1])) continue;
        if (band && !band->contains(spectrum.frequencies[i])) continue;

        // Topographic prominence: highest ground on each side before reaching
        // a lower minimum (or the edge); the lower of the two sides counts.
        double left_max = mag[i];
        for (std::size_t j = i; j-- > 0;) {
            if (mag[j] < mag[i]) break;
            left_max = std::max(left_max, mag[j]);
        }
        double right_max = mag[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            if (mag[j] < mag[i]) break;
            right_max = std::max(right_max, mag[j]);
        }
        const double prom = std::min(left_max, right_max) - mag[i];
        if (prom < prominence) continue;

        const double top = mag[i] + prom;
        const double level = std::sqrt(0.5 * (mag[i] * mag[i] + top * top));
        auto crossing = [&](std::size_t a, std::size_t b) {
            const double t = (level - mag[a]) / (mag[b] - mag[a]);
            return spectrum.frequencies[a] + t * (spectrum.frequencies[b] - spectrum.frequencies[a]);
        };
        std::size_t l = i;
        while (l > 0 && mag[l] < level) --l;
        std::size_t r = i;
        while (r + 1 < n && mag[r] < level) ++r;
        const double f_left = mag[l] >= level && l < i ? crossing(l + 1, l) : spectrum.frequencies[l];
        const double f_right = mag[r] >= level && r > i ? crossing(r - 1, r) : spectrum.frequencies[r];
        const double f0 = spectrum.frequencies[i];
        const double width = std::max(f_right - f_left, spectrum.frequencies[i + 1] - spectrum.frequencies[i - 1]);

        const double q_l = f0 / width;
        const double s_on = std::clamp(spectrum.values[i].real() / std::max(top, 1e-12), -0.999, 0.999);
        const double ratio = std::max((1.0 - s_on) / (1.0 + s_on), 1e-3);  // q_i / q_e
        const double q_i = q_l * (1.0 + ratio);
        seeds.push_back({f0, q_i, q_i / ratio});
    }
    return seeds;
}

double mirror_penetration(const CavityGeometry& geom) {
    if (geom.r_s == 0.0) throw DomainError("cavity geometry: reflectivity r_s must be non-zero");
    if (!(geom.w > 0.0) || !(geom.r_s > 0.0) || !(geom.r_s < 1.0))
        throw DomainError("cavity geometry: need w > 0 and 0 < r_s < 1");
    return geom.w / geom.r_s;
}

double cavity_length(const CavityGeometry& geom) {
    if (!(geom.d >= 0.0)) throw DomainError("cavity geometry: mirror separation d must be non-negative");
    return geom.d + 2.0 * mirror_penetration(geom);
}

}  // namespace sawspe::resonator
