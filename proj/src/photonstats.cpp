#include "sawspe/photonstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "sawspe/error.hpp"
#include "sawspe/rng.hpp"
#include "sawspe/units.hpp"

namespace sawspe::photonstats {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::vector<std::int64_t> channel_times(const PhotonStream& records, std::uint32_t ch) {
    std::vector<std::int64_t> t;
    for (const auto& r : records)
        if (r.channel == ch) t.push_back(static_cast<std::int64_t>(r.time_ps));
    std::sort(t.begin(), t.end());
    return t;
}

std::int64_t bin_index(std::int64_t d, std::int64_t bw) {
    const std::int64_t mag = (2 * (d < 0 ? -d : d) + bw) / (2 * bw);
    return d < 0 ? -mag : mag;
}

void append_poisson(PhotonStream& out, CounterStream& rng, double rate_cps, double duration_s,
                    std::uint32_t channel) {
    if (!(rate_cps > 0.0)) return;
    double t = rng.exponential(1.0 / rate_cps);
    while (t < duration_s) {
        out.push_back({channel, static_cast<std::uint64_t>(std::llround(t * units::kPsPerSecond))});
        t += rng.exponential(1.0 / rate_cps);
    }
}

}  // namespace

std::vector<double> CorrelationHistogram::g2() const {
    std::vector<double> g(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) g[i] = static_cast<double>(counts[i]) / normalization;
    return g;
}

void CorrelationHistogram::validate() const {
    if (counts.empty() || tau_edges.size() != counts.size() + 1)
        throw DataError("correlation histogram: need counts.size() + 1 edges and at least one bin");
    for (std::size_t i = 1; i < tau_edges.size(); ++i)
        if (!(tau_edges[i] > tau_edges[i - 1])) throw DataError("correlation histogram: edges must increase");
    if (!(normalization > 0.0) || !std::isfinite(normalization))
        throw DataError("correlation histogram: normalization must be positive");
}

void CorrelationHistogram::merge(const CorrelationHistogram& other) {
    if (other.tau_edges != tau_edges) throw DataError("correlation histogram: cannot merge different binnings");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    normalization += other.normalization;
    warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
}

CorrelationHistogram correlate(const PhotonStream& records, std::uint32_t ch_a, std::uint32_t ch_b,
                               std::int64_t window, std::int64_t bin_width, const CorrelateOptions& options) {
    if (!(bin_width > 0) || !(window > bin_width))
        throw DomainError("correlate: need window > bin_width > 0");
    const auto ta = channel_times(records, ch_a);
    const auto tb = ch_a == ch_b ? ta : channel_times(records, ch_b);
    if (ta.empty()) throw DataError("correlate: channel " + std::to_string(ch_a) + " is empty");
    if (tb.empty()) throw DataError("correlate: channel " + std::to_string(ch_b) + " is empty");

    double duration;
    if (options.duration_ps) {
        duration = *options.duration_ps;
    } else {
        const auto lo = std::min(ta.front(), tb.front());
        const auto hi = std::max(ta.back(), tb.back());
        duration = static_cast<double>(hi - lo);
    }
    if (!(duration > 0.0)) throw DataError("correlate: records span zero time");

    const std::int64_t k_max = (2 * window - bin_width) / (2 * bin_width);
    const std::int64_t reach2 = (2 * k_max + 1) * bin_width;  // twice the outer edge
    CorrelationHistogram h;
    h.bin_width = bin_width;
    const auto nb = static_cast<std::size_t>(2 * k_max + 1);
    h.counts.assign(nb, 0);
    h.tau_edges.resize(nb + 1);
    for (std::size_t i = 0; i <= nb; ++i)
        h.tau_edges[i] = (static_cast<double>(i) - static_cast<double>(k_max) - 0.5) * static_cast<double>(bin_width);

    const bool same = ch_a == ch_b;
    std::size_t first = 0;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        while (first < tb.size() && 2 * (ta[i] - tb[first]) >= reach2) ++first;
        for (std::size_t j = first; j < tb.size() && 2 * (tb[j] - ta[i]) < reach2; ++j) {
            if (same && i == j) continue;
            const std::int64_t k = bin_index(tb[j] - ta[i], bin_width);
            ++h.counts[static_cast<std::size_t>(k + k_max)];
        }
    }

    h.normalization = static_cast<double>(ta.size()) * static_cast<double>(tb.size()) *
                      static_cast<double>(bin_width) / duration;

    double wing = 0.0;
    std::size_t n_wing = 0;
    for (std::size_t i = 0; i < nb; ++i) {
        if (std::abs(h.center(i)) > 0.8 * static_cast<double>(window)) {
            wing += static_cast<double>(h.counts[i]);
            ++n_wing;
        }
    }
    if (n_wing > 0) {
        const double expected = h.normalization * static_cast<double>(n_wing);
        const double dev = std::abs(wing / expected - 1.0);
        if (dev > options.wing_tolerance && dev > 3.0 / std::sqrt(expected))
            h.warnings.push_back("far-wing g2 deviates from 1 by " + fmt(dev) +
                                 "; rate-product normalization may be off");
    }
    return h;
}

FitReport fit_g2(const CorrelationHistogram& hist, const G2FitOptions& options) {
    hist.validate();
    const std::size_t n = hist.bins();
    if (n < 3) throw DataError("fit_g2: need at least 3 bins");
    const auto g = hist.g2();
    std::vector<double> sigma(n), tau(n);
    for (std::size_t i = 0; i < n; ++i) {
        sigma[i] = std::sqrt(std::max(static_cast<double>(hist.counts[i]), 1.0)) / hist.normalization;
        tau[i] = std::abs(hist.center(i));
    }
    const double span = std::min(-hist.tau_edges.front(), hist.tau_edges.back());

    const std::size_t zero = static_cast<std::size_t>(
        std::min_element(tau.begin(), tau.end()) - tau.begin());
    const double g0_init = std::clamp(g[zero], 0.0, 1.0);
    double tau0_init;
    if (options.tau0_guess) {
        tau0_init = *options.tau0_guess;
    } else {
        // Distance at which the dip has recovered half way, as 1/e width.
        tau0_init = span / 10.0;
        const double half = 0.5 * (1.0 + g0_init);
        for (std::size_t i = zero; i < n; ++i) {
            if (g[i] >= half && tau[i] > 0.0) {
                tau0_init = tau[i] / std::log(2.0);
                break;
            }
        }
    }
    if (!(tau0_init > 0.0)) throw DomainError("fit_g2: tau0 guess must be positive");
    if (span < 5.0 * tau0_init) throw DataError("fit_g2: histogram spans less than 5 tau0");

    Eigen::VectorXd p0(2);
    p0 << g0_init, std::log(tau0_init);
    auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        const double t0 = std::exp(p[1]);
        for (std::size_t i = 0; i < n; ++i)
            r[static_cast<Eigen::Index>(i)] = (1.0 - (1.0 - p[0]) * std::exp(-tau[i] / t0) - g[i]) / sigma[i];
    };
    fit::LmOptions lm = options.lm;
    lm.absolute_sigma = true;
    const auto res = fit::levenberg_marquardt(residuals, p0, static_cast<Eigen::Index>(n), lm);

    const double t0 = std::exp(res.params[1]);
    FitReport rep;
    rep.model_name = "g2_antibunching";
    rep.add("g2_0", res.params[0], res.stderr_[0], "");
    rep.add("tau0", t0, t0 * res.stderr_[1], "ps");
    rep.residual_norm = res.residual_norm();
    rep.n_points = n;
    rep.converged = res.converged;
    rep.warnings = hist.warnings;
    rep.annotate("single_emitter", res.params[0] < 0.5 ? "true" : "false");
    rep.annotate("convergence", res.reason);
    std::vector<double> raw(hist.counts.begin(), hist.counts.end());
    rep.input_digest = content_digest(std::span<const double>(raw));
    return rep;
}

PulsedG2 pulsed_g2(const CorrelationHistogram& hist, double rep_period_ps, double half_width_ps) {
    hist.validate();
    if (!(rep_period_ps > 0.0) || !(half_width_ps > 0.0) || 2.0 * half_width_ps >= rep_period_ps)
        throw DomainError("pulsed_g2: need 0 < 2 half_width < rep_period");
    const double lo = hist.tau_edges.front(), hi = hist.tau_edges.back();
    const auto k_lo = static_cast<long>(std::ceil((lo + half_width_ps) / rep_period_ps));
    const auto k_hi = static_cast<long>(std::floor((hi - half_width_ps) / rep_period_ps));

    double center = 0.0, sides = 0.0;
    int n_sides = 0;
    for (long k = k_lo; k <= k_hi; ++k) {
        double area = 0.0;
        const double mid = static_cast<double>(k) * rep_period_ps;
        for (std::size_t i = 0; i < hist.bins(); ++i)
            if (std::abs(hist.center(i) - mid) <= half_width_ps) area += static_cast<double>(hist.counts[i]);
        if (k == 0) {
            center = area;
        } else {
            sides += area;
            ++n_sides;
        }
    }
    if (n_sides == 0) throw DataError("pulsed_g2: histogram holds no side peak");
    if (!(sides > 0.0)) throw DataError("pulsed_g2: side peaks are empty");
    PulsedG2 out;
    out.side_peaks = n_sides;
    const double mean_side = sides / n_sides;
    out.ratio = center / mean_side;
    out.stderr_ = std::sqrt(std::max(center, 1.0)) / mean_side * std::sqrt(1.0 + center / sides);
    return out;
}

void DecayHistogram::validate() const {
    if (time_ps.size() != counts.size()) throw DataError("decay histogram: time/count length mismatch");
    if (time_ps.size() < 2) throw DataError("decay histogram needs at least 2 bins");
    for (std::size_t i = 1; i < time_ps.size(); ++i)
        if (!(time_ps[i] > time_ps[i - 1])) throw DataError("decay histogram: times must increase");
    for (double c : counts)
        if (!(c >= 0.0)) throw DataError("decay histogram: counts must be non-negative");
}

FitReport fit_lifetime(const DecayHistogram& decay, const LifetimeFitOptions& options) {
    decay.validate();
    const auto peak = static_cast<std::size_t>(std::max_element(decay.counts.begin(), decay.counts.end()) -
                                               decay.counts.begin());
    if (decay.size() - peak - 1 < 10) throw DataError("fit_lifetime: need at least 10 bins after the peak");
    const std::size_t start = peak + static_cast<std::size_t>(std::max(options.start_offset, 0));
    if (start + 4 > decay.size()) throw DataError("fit_lifetime: tail too short after the start offset");

    const std::size_t n = decay.size() - start;
    std::vector<double> t(n), y(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = decay.time_ps[start + i] - decay.time_ps[start];
        y[i] = decay.counts[start + i];
        w[i] = 1.0 / std::sqrt(std::max(y[i], 1.0));
    }
    if (std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; }))
        throw DataError("no decay detected: tail is empty");

    double sw = 0.0, swy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += w[i] * w[i];
        swy += w[i] * w[i] * y[i];
    }
    const double mean = swy / sw;
    double ssr_const = 0.0;
    for (std::size_t i = 0; i < n; ++i) ssr_const += std::pow(w[i] * (y[i] - mean), 2);
    const double ymax = *std::max_element(y.begin(), y.end());
    if (ssr_const <= 1e-24 * ymax * ymax * sw) throw DataError("no decay detected: tail is flat");

    const std::size_t n_end = std::max<std::size_t>(n / 10, 1);
    const double b0 = std::accumulate(y.end() - static_cast<long>(n_end), y.end(), 0.0) / static_cast<double>(n_end);
    const double a0 = std::max(y[0] - b0, 1e-3 * ymax);
    double tau0 = t.back() / 3.0;
    for (std::size_t i = 1; i < n; ++i) {
        if (y[i] - b0 < a0 / std::exp(1.0)) {
            tau0 = std::max(t[i], t[1]);
            break;
        }
    }

    Eigen::VectorXd p0(3);
    p0 << std::log(tau0), a0, b0;
    auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        const double tau = std::exp(p[0]);
        for (std::size_t i = 0; i < n; ++i)
            r[static_cast<Eigen::Index>(i)] = w[i] * (p[1] * std::exp(-t[i] / tau) + p[2] - y[i]);
    };
    fit::LmOptions lm = options.lm;
    lm.absolute_sigma = true;
    const auto res = fit::levenberg_marquardt(residuals, p0, static_cast<Eigen::Index>(n), lm);

    const double dof = static_cast<double>(n) - 3.0;
    const double f_stat = res.ssr > 0.0 ? ((ssr_const - res.ssr) / 2.0) / (res.ssr / dof)
                                        : std::numeric_limits<double>::infinity();
    if (!(res.params[1] > 0.0) || !(f_stat >= options.min_f_statistic))
        throw DataError("no decay detected: exponential does not improve on a constant (F = " +
                        fmt(f_stat) + ")");

    const double tau = std::exp(res.params[0]);
    FitReport rep;
    rep.model_name = "exponential_tail";
    rep.add("tau", tau, tau * res.stderr_[0], "ps");
    rep.add("amplitude", res.params[1], res.stderr_[1], "counts");
    rep.add("background", res.params[2], res.stderr_[2], "counts");
    rep.residual_norm = res.residual_norm();
    rep.n_points = n;
    rep.converged = res.converged;
    rep.annotate("fit_start_ps", fmt(decay.time_ps[start]));
    rep.annotate("f_statistic", fmt(f_stat));
    rep.annotate("convergence", res.reason);
    rep.input_digest = content_digest(std::span<const double>(decay.counts));
    return rep;
}

PhotonStream poisson_stream(double rate_cps, double duration_s, std::uint32_t channel, std::uint64_t seed) {
    if (!(rate_cps >= 0.0) || !(duration_s >= 0.0)) throw DomainError("poisson_stream: negative rate or duration");
    const Philox4x32 gen(seed);
    CounterStream rng(gen, channel);
    PhotonStream out;
    append_poisson(out, rng, rate_cps, duration_s, channel);
    return out;
}

PhotonStream antibunched_stream(const AntibunchedSource& s, std::uint64_t seed) {
    if (!(s.pump_rate > 0.0) || !(s.lifetime > 0.0)) throw DomainError("antibunched_stream: rates must be positive");
    if (!(s.efficiency > 0.0 && s.efficiency <= 1.0)) throw DomainError("antibunched_stream: efficiency in (0, 1]");
    if (!(s.duration_s >= 0.0) || !(s.background_cps >= 0.0))
        throw DomainError("antibunched_stream: negative duration or background");
    const Philox4x32 gen(seed);
    CounterStream rng(gen, 0);
    PhotonStream signal;
    const double pump_mean = 1.0 / s.pump_rate;
    double t = 0.0;
    while (true) {
        t += rng.exponential(pump_mean) + rng.exponential(s.lifetime);
        if (t >= s.duration_s) break;
        if (rng.uniform() >= s.efficiency) continue;
        const std::uint32_t ch = rng.uniform() < 0.5 ? 0 : 1;
        signal.push_back({ch, static_cast<std::uint64_t>(std::llround(t * units::kPsPerSecond))});
    }
    PhotonStream bg0, bg1;
    CounterStream r0(gen, 1), r1(gen, 2);
    append_poisson(bg0, r0, s.background_cps, s.duration_s, 0);
    append_poisson(bg1, r1, s.background_cps, s.duration_s, 1);
    return merge_streams({std::move(signal), std::move(bg0), std::move(bg1)});
}

PhotonStream merge_streams(std::vector<PhotonStream> streams) {
    PhotonStream out;
    for (auto& s : streams) out.insert(out.end(), s.begin(), s.end());
    std::stable_sort(out.begin(), out.end(),
                     [](const PhotonRecord& a, const PhotonRecord& b) { return a.time_ps < b.time_ps; });
    return out;
}

}  // namespace sawspe::photonstats
