#include "sawspe/emitter.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "sawspe/error.hpp"
#include "sawspe/units.hpp"

namespace sawspe::emitter {

namespace {

double lorentz(double gamma, double x) { return gamma * gamma / (gamma * gamma + x * x); }

// Distinct values of sin(2 pi k / n) with multiplicities; the full-period
// average of any g(sin) equals sum(w_j g(s_j)) / n.
struct PhaseTable {
    std::vector<double> values;
    std::vector<double> weights;
    double n = 0.0;

    explicit PhaseTable(int samples) : n(samples) {
        std::vector<double> s(static_cast<std::size_t>(samples));
        for (int k = 0; k < samples; ++k) s[static_cast<std::size_t>(k)] = std::sin(units::kTwoPi * k / samples);
        std::sort(s.begin(), s.end());
        for (double v : s) {
            if (!values.empty() && std::abs(v - values.back()) < 1e-14) {
                weights.back() += 1.0;
            } else {
                values.push_back(v);
                weights.push_back(1.0);
            }
        }
    }

    double average(double gamma, double delta_e, double x) const {
        // Caller guarantees the table is fine enough for gamma / delta_e.
        double acc = 0.0;
        for (std::size_t j = 0; j < values.size(); ++j) acc += weights[j] * lorentz(gamma, x - delta_e * values[j]);
        return acc / n;
    }
};

bool is_flat(const std::vector<double>& y) {
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    return !(*hi - *lo > 1e-12 * std::max(std::abs(*hi), 1e-300));
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1));
    return v[idx];
}

struct ModelSetup {
    bool modulated;
    bool slope;
    bool fix_omega0;
    double omega_ref;  // parameter 0 is omega0 - omega_ref
    double e_mid;
};

// Parameter layout: [d_omega0]? ln_gamma, (delta_e)?, amplitude, background, (slope)?
struct Unpacked {
    double omega0, gamma, delta_e, amplitude, background, slope;
};

Unpacked unpack(const Eigen::VectorXd& p, const ModelSetup& m) {
    Eigen::Index i = 0;
    Unpacked u{};
    u.omega0 = m.omega_ref + (m.fix_omega0 ? 0.0 : p[i++]);
    u.gamma = std::exp(p[i++]);
    u.delta_e = m.modulated ? std::abs(p[i++]) : 0.0;
    u.amplitude = p[i++];
    u.background = p[i++];
    u.slope = m.slope ? p[i++] : 0.0;
    return u;
}

Eigen::VectorXd pack(const Unpacked& u, const ModelSetup& m) {
    std::vector<double> v;
    if (!m.fix_omega0) v.push_back(u.omega0 - m.omega_ref);
    v.push_back(std::log(u.gamma));
    if (m.modulated) v.push_back(u.delta_e);
    v.push_back(u.amplitude);
    v.push_back(u.background);
    if (m.slope) v.push_back(u.slope);
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct BranchFit {
    fit::LmResult lm;
    Unpacked values;
    bool ok = false;
    std::string failure;
};

// Phase tables keyed by sample count; a fit revisits only a handful.
class PhaseTables {
public:
    explicit PhaseTables(int floor) : floor_(floor) {}

    const PhaseTable& for_params(double gamma, double delta_e) {
        const int n = required_quadrature_samples(gamma, delta_e, floor_);
        for (const auto& t : tables_)
            if (static_cast<int>(t.n) == n) return t;
        tables_.emplace_back(n);
        return tables_.back();
    }

private:
    int floor_;
    std::deque<PhaseTable> tables_;
};

BranchFit fit_branch(const PLSpectrum& s, const Unpacked& start, const ModelSetup& setup, PhaseTables& tables,
                     const fit::LmOptions& lm) {
    const auto n = static_cast<Eigen::Index>(s.size());
    auto res = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        const Unpacked u = unpack(p, setup);
        const PhaseTable& table = tables.for_params(u.gamma, u.delta_e);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double e = s.energies[static_cast<std::size_t>(i)];
            const double x = e - u.omega0;
            const double line = setup.modulated ? table.average(u.gamma, u.delta_e, x) : lorentz(u.gamma, x);
            r[i] = s.counts[static_cast<std::size_t>(i)] -
                   (u.amplitude * line + u.background + u.slope * (e - setup.e_mid));
        }
    };
    BranchFit out;
    try {
        out.lm = fit::levenberg_marquardt(res, pack(start, setup), n, lm);
        out.values = unpack(out.lm.params, setup);
        out.ok = true;
    } catch (const ConvergenceError& e) {
        out.failure = e.what();
    }
    return out;
}

LineshapeFit fit_impl(const PLSpectrum& spectrum, const ModulatedEmitter& initial, const LineshapeFitOptions& options,
                      bool fix_omega0) {
    spectrum.validate();
    initial.validate();
    if (spectrum.size() < 8) throw DataError("fit_modulated_lineshape: need at least 8 points");
    if (is_flat(spectrum.counts)) throw DataError("no peak: spectrum is flat");

    PhaseTables table(options.quadrature_samples);
    const double e_mid = 0.5 * (spectrum.energies.front() + spectrum.energies.back());
    const ModulatedEmitter guess = guess_emitter(spectrum, initial.f_rf);

    Unpacked start{initial.omega0, initial.gamma, initial.delta_e, initial.amplitude, quantile(spectrum.counts, 0.05),
                   0.0};
    if (!(start.amplitude > 0.0)) start.amplitude = guess.amplitude;

    ModelSetup mod_setup{true, options.background_slope, fix_omega0, initial.omega0, e_mid};
    ModelSetup lor_setup{false, options.background_slope, fix_omega0, initial.omega0, e_mid};

    Unpacked mod_start = start;
    if (!(mod_start.delta_e > 0.0)) mod_start.delta_e = std::max(guess.delta_e, 0.5 * start.gamma);
    Unpacked lor_start = start;
    lor_start.delta_e = 0.0;

    const BranchFit mod = fit_branch(spectrum, mod_start, mod_setup, table, options.lm);
    const BranchFit lor = fit_branch(spectrum, lor_start, lor_setup, table, options.lm);
    if (!mod.ok && !lor.ok) throw ConvergenceError("lineshape fit did not converge: " + mod.failure, {}, 0);

    const auto n = static_cast<double>(spectrum.size());
    const double mean = std::accumulate(spectrum.counts.begin(), spectrum.counts.end(), 0.0) / n;
    double total = 0.0;
    for (double c : spectrum.counts) total += (c - mean) * (c - mean);

    LineshapeFit out;
    out.ssr_modulated = mod.ok ? mod.lm.ssr : std::numeric_limits<double>::infinity();
    out.ssr_unmodulated = lor.ok ? lor.lm.ssr : std::numeric_limits<double>::infinity();
    const auto k_mod = mod.ok ? static_cast<double>(mod.lm.params.size()) : 0.0;

    double f_stat = 0.0;
    bool pick_mod = false;
    if (!lor.ok) {
        pick_mod = true;
    } else if (mod.ok) {
        const double gain = out.ssr_unmodulated - out.ssr_modulated;
        if (gain <= 1e-10 * total) {
            pick_mod = false;
        } else if (out.ssr_modulated <= 1e-14 * total) {
            pick_mod = true;
            f_stat = std::numeric_limits<double>::infinity();
        } else {
            f_stat = gain / (out.ssr_modulated / std::max(n - k_mod, 1.0));
            pick_mod = f_stat > options.f_threshold;
        }
    }
    const BranchFit& best = pick_mod ? mod : lor;
    const ModelSetup& setup = pick_mod ? mod_setup : lor_setup;

    out.modulated = pick_mod;
    out.emitter = initial;
    out.emitter.omega0 = best.values.omega0;
    out.emitter.gamma = best.values.gamma;
    out.emitter.delta_e = best.values.delta_e;
    out.emitter.amplitude = best.values.amplitude;
    out.background = best.values.background;
    out.background_slope = best.values.slope;

    FitReport& rep = out.report;
    rep.model_name = pick_mod ? "modulated_lorentzian" : "lorentzian";
    Eigen::Index i = 0;
    const auto& se = best.lm.stderr_;
    if (setup.fix_omega0) {
        rep.add("omega0", out.emitter.omega0, 0.0, "meV");
    } else {
        rep.add("omega0", out.emitter.omega0, se[i++], "meV");
    }
    rep.add("gamma", out.emitter.gamma, se[i++] * out.emitter.gamma, "meV");
    if (pick_mod) {
        rep.add("delta_e", out.emitter.delta_e, se[i++], "meV");
    } else {
        rep.add("delta_e", 0.0, 0.0, "meV");
    }
    rep.add("amplitude", out.emitter.amplitude, se[i++], "counts");
    rep.add("background", out.background, se[i++], "counts");
    if (setup.slope) rep.add("background_slope", out.background_slope, se[i++], "counts/meV");
    rep.residual_norm = best.lm.residual_norm();
    rep.n_points = spectrum.size();
    rep.converged = best.lm.converged;
    rep.annotate("model_selection", pick_mod ? "modulated" : "unmodulated");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", out.ssr_modulated);
    rep.annotate("ssr_modulated", buf);
    std::snprintf(buf, sizeof buf, "%.9g", out.ssr_unmodulated);
    rep.annotate("ssr_unmodulated", buf);
    std::snprintf(buf, sizeof buf, "%.9g", f_stat);
    rep.annotate("f_statistic", buf);
    if (!mod.ok) rep.warnings.push_back("modulated branch did not converge: " + mod.failure);
    if (!lor.ok) rep.warnings.push_back("unmodulated branch did not converge: " + lor.failure);
    if (spectrum.truncated) rep.warnings.push_back("input spectrum flagged as truncated");
    return out;
}

}  // namespace

void ModulatedEmitter::validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("emitter: gamma must be positive");
    if (!(delta_e >= 0.0)) throw DomainError("emitter: delta_e must be non-negative");
    if (!(f_rf > 0.0)) throw DomainError("emitter: f_rf must be positive");
    if (!(amplitude >= 0.0)) throw DomainError("emitter: amplitude must be non-negative");
}

double ModulatedEmitter::center_at(double t) const {
    return omega0 + delta_e * std::sin(units::kTwoPi * f_rf * t + phase0);
}

void FineStructureDoublet::validate() const {
    if (!(delta_fss >= 0.0)) throw DomainError("doublet: delta_fss must be non-negative");
    if (!(ratio > 0.0)) throw DomainError("doublet: intensity ratio must be positive");
    h().validate();
    v().validate();
}

ModulatedEmitter FineStructureDoublet::h() const {
    return {center - 0.5 * delta_fss, gamma_h, delta_e, f_rf, phase0, amplitude};
}

ModulatedEmitter FineStructureDoublet::v() const {
    return {center + 0.5 * delta_fss, gamma_v, delta_e, f_rf, phase0, amplitude * ratio};
}

void PLSpectrum::validate() const {
    if (energies.size() != counts.size()) throw DataError("PL spectrum: energy/count length mismatch");
    if (energies.size() < 2) throw DataError("PL spectrum needs at least 2 points");
    for (std::size_t i = 1; i < energies.size(); ++i)
        if (!(energies[i] > energies[i - 1])) throw DataError("PL spectrum energies must be strictly increasing");
    for (double c : counts)
        if (!(c >= 0.0)) throw DataError("PL spectrum counts must be non-negative");
}

double instantaneous_lineshape(const ModulatedEmitter& e, double omega, double t) {
    e.validate();
    return e.amplitude * lorentz(e.gamma, omega - e.center_at(t));
}

int required_quadrature_samples(double gamma, double delta_e, int floor) {
    int n = std::max(floor, 4);
    if (delta_e > 0.0 && gamma > 0.0) {
        const double need = 28.0 / std::asinh(gamma / delta_e);
        if (need > n) n = static_cast<int>(std::min(need, 1e7));
    }
    return (n + 3) / 4 * 4;
}

PLSpectrum time_averaged_spectrum(const ModulatedEmitter& e, const std::vector<double>& grid, int samples,
                                  std::vector<std::string>* warnings) {
    e.validate();
    if (samples < 4) throw DomainError("time_averaged_spectrum: need at least 4 quadrature samples");
    samples = required_quadrature_samples(e.gamma, e.delta_e, samples);
    PLSpectrum out;
    out.energies = grid;
    out.counts.assign(grid.size(), 0.0);

    // Sample times t_k = k T / N; sin(2 pi f t_k + phase0) needs no f_rf.
    std::vector<double> centers(static_cast<std::size_t>(samples));
    for (int k = 0; k < samples; ++k)
        centers[static_cast<std::size_t>(k)] =
            e.omega0 + e.delta_e * std::sin(units::kTwoPi * k / samples + e.phase0);

    for (std::size_t i = 0; i < grid.size(); ++i) {
        double acc = 0.0;
        for (double c : centers) acc += lorentz(e.gamma, grid[i] - c);
        out.counts[i] = e.amplitude * acc / samples;
    }

    const double reach = e.delta_e + 10.0 * e.gamma;
    if (grid.empty() || grid.front() > e.omega0 - reach || grid.back() < e.omega0 + reach) {
        out.truncated = true;
        if (warnings) warnings->push_back("energy grid does not span omega0 +/- (delta_e + 10 gamma); line is truncated");
    }
    return out;
}

PLSpectrum doublet_spectrum(const FineStructureDoublet& d, const std::vector<double>& grid, int samples) {
    d.validate();
    PLSpectrum out = time_averaged_spectrum(d.h(), grid, samples);
    const PLSpectrum v = time_averaged_spectrum(d.v(), grid, samples);
    for (std::size_t i = 0; i < grid.size(); ++i) out.counts[i] += v.counts[i];
    out.truncated = out.truncated || v.truncated;
    return out;
}

const char* to_string(Mixing m) {
    switch (m) {
        case Mixing::separated: return "separated";
        case Mixing::partially_mixed: return "partially_mixed";
        case Mixing::fully_mixed: return "fully_mixed";
    }
    return "unknown";
}

MixingReport classify_mixing(const FineStructureDoublet& d) {
    d.validate();
    MixingReport out;
    const double g1 = d.gamma_h, g2 = d.gamma_v;
    const double gamma = 0.5 * (g1 + g2);
    out.inner_gap = d.delta_fss - 2.0 * d.delta_e;
    const double gap = d.delta_fss == 0.0 ? 0.0 : out.inner_gap;
    // Normalized overlap of two Lorentzians (widths g1, g2) whose centers differ by `gap`.
    const double sum = g1 + g2;
    out.overlap = 2.0 * std::sqrt(g1 * g2) * sum / (sum * sum + gap * gap);

    if (d.delta_fss == 0.0 || std::abs(gap) <= gamma) {
        out.state = Mixing::fully_mixed;
    } else if (std::abs(gap) <= 3.0 * gamma) {
        out.state = Mixing::partially_mixed;
    } else {
        out.state = Mixing::separated;
    }
    return out;
}

std::vector<double> find_peaks(const PLSpectrum& s, double min_fraction) {
    std::vector<double> peaks;
    if (s.size() < 3) return peaks;
    const auto [lo, hi] = std::minmax_element(s.counts.begin(), s.counts.end());
    const double floor = *lo + min_fraction * (*hi - *lo);
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        if (!(s.counts[i] > s.counts[i - 1])) continue;
        // Walk across a flat top; the first sample of the plateau is reported.
        std::size_t j = i;
        while (j + 1 < s.size() && s.counts[j + 1] == s.counts[i]) ++j;
        if (j + 1 < s.size() && s.counts[j + 1] < s.counts[i] && s.counts[i] >= floor) peaks.push_back(s.energies[i]);
        i = j;
    }
    return peaks;
}

double peak_separation(const PLSpectrum& s, double min_fraction) {
    const auto peaks = find_peaks(s, min_fraction);
    return peaks.size() < 2 ? 0.0 : peaks.back() - peaks.front();
}

ModulatedEmitter guess_emitter(const PLSpectrum& spectrum, double f_rf) {
    spectrum.validate();
    ModulatedEmitter g;
    g.f_rf = f_rf > 0.0 ? f_rf : 1.0;
    const double bg = quantile(spectrum.counts, 0.05);
    const auto imax = static_cast<std::size_t>(
        std::max_element(spectrum.counts.begin(), spectrum.counts.end()) - spectrum.counts.begin());
    const double height = spectrum.counts[imax] - bg;
    const double half = bg + 0.5 * height;

    const auto peaks = find_peaks(spectrum, 0.5);
    const double left_peak = peaks.empty() ? spectrum.energies[imax] : peaks.front();
    const double right_peak = peaks.empty() ? spectrum.energies[imax] : peaks.back();

    // Half-maximum crossing on the outer flank of the rightmost peak.
    const auto ir = static_cast<std::size_t>(
        std::lower_bound(spectrum.energies.begin(), spectrum.energies.end(), right_peak) - spectrum.energies.begin());
    std::size_t j = ir;
    while (j + 1 < spectrum.size() && spectrum.counts[j] > half) ++j;
    double hw = spectrum.energies[j] - right_peak;
    if (!(hw > 0.0)) hw = spectrum.energies[1] - spectrum.energies[0];

    g.omega0 = 0.5 * (left_peak + right_peak);
    if (peaks.size() >= 2) {
        g.gamma = hw;
        g.delta_e = 0.5 * (right_peak - left_peak) + g.gamma / std::sqrt(3.0);
        // Turning-point peak height ~ 0.806 sqrt(gamma / (2 delta_e)) of the amplitude.
        g.amplitude = height / (0.806 * std::sqrt(g.gamma / (2.0 * g.delta_e)));
    } else {
        g.gamma = hw;
        g.delta_e = 0.0;
        g.amplitude = height;
    }
    return g;
}

LineshapeFit fit_modulated_lineshape(const PLSpectrum& spectrum, const ModulatedEmitter& initial,
                                     const LineshapeFitOptions& options) {
    return fit_impl(spectrum, initial, options, false);
}

PLSpectrum PLMap::column(std::size_t j) const {
    PLSpectrum s;
    s.energies = energies;
    s.counts = columns.at(j);
    return s;
}

std::vector<LineshapeFit> fit_pl_map(const PLMap& map, const ModulatedEmitter& initial, bool recenter,
                                     const LineshapeFitOptions& options) {
    if (map.columns.size() != map.frequencies.size()) throw DataError("PL map: column/frequency count mismatch");
    if (map.columns.empty()) throw DataError("PL map has no columns");
    ModulatedEmitter start = initial;
    if (!recenter) {
        PLSpectrum summed;
        summed.energies = map.energies;
        summed.counts.assign(map.energies.size(), 0.0);
        for (const auto& col : map.columns)
            for (std::size_t i = 0; i < col.size(); ++i) summed.counts[i] += col[i] / map.columns.size();
        start.omega0 = fit_impl(summed, initial, options, false).emitter.omega0;
    }
    std::vector<LineshapeFit> fits;
    fits.reserve(map.columns.size());
    for (std::size_t j = 0; j < map.columns.size(); ++j) {
        ModulatedEmitter e = start;
        e.f_rf = map.frequencies[j];
        fits.push_back(fit_impl(map.column(j), e, options, !recenter));
    }
    return fits;
}

}  // namespace sawspe::emitter
