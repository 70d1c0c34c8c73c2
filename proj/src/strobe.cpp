#include "sawspe/strobe.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <complex>
#include <limits>
#include <numeric>
#include <thread>

#include "sawspe/error.hpp"
#include "sawspe/levmar.hpp"
#include "sawspe/rng.hpp"
#include "sawspe/units.hpp"

namespace sawspe::strobe {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

using emitter::ModulatedEmitter;

// 8-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 8> kGlNodes = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                            -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                            0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGlWeights = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                              0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                              0.2223810344533745, 0.1012285362903763};

double lorentz_integral(double gamma, double center, double lo, double hi) {
    return gamma * (std::atan((hi - center) / gamma) - std::atan((lo - center) / gamma));
}

// Integral of ramp(omega) * lorentzian over [lo, hi], composite Gauss-Legendre.
template <class Ramp>
double ramp_integral(double gamma, double center, double lo, double hi, Ramp ramp) {
    constexpr int kPanels = 32;
    const double width = (hi - lo) / kPanels;
    double acc = 0.0;
    for (int p = 0; p < kPanels; ++p) {
        const double mid = lo + (p + 0.5) * width;
        for (std::size_t k = 0; k < kGlNodes.size(); ++k) {
            const double w = mid + 0.5 * width * kGlNodes[k];
            const double x = w - center;
            acc += kGlWeights[k] * ramp(w) * gamma * gamma / (gamma * gamma + x * x);
        }
    }
    return acc * 0.5 * width;
}

// Line integral of a unit-peak Lorentzian at `center` through the filter.
double passband_integral(double gamma, double center, const BandpassFilter& f) {
    const double w = f.edge_width;
    if (w <= 0.0) return lorentz_integral(gamma, center, f.omega_low, f.omega_high);
    const double lo0 = f.omega_low - 0.5 * w, lo1 = f.omega_low + 0.5 * w;
    const double hi0 = f.omega_high - 0.5 * w, hi1 = f.omega_high + 0.5 * w;
    double acc = lorentz_integral(gamma, center, lo1, hi0);
    acc += ramp_integral(gamma, center, lo0, lo1, [&](double x) { return f.transmission(x); });
    acc += ramp_integral(gamma, center, hi0, hi1, [&](double x) { return f.transmission(x); });
    return acc;
}

double fold_fraction(double t, double f_rf) {
    const double x = t * f_rf;
    return x - std::floor(x);
}

std::size_t fold_bin(double t, double f_rf, std::size_t bins) {
    const auto j = static_cast<std::size_t>(fold_fraction(t, f_rf) * static_cast<double>(bins));
    return std::min(j, bins - 1);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

void validate_config(const StrobeConfig& c) {
    if (!(c.pulse_period > 0.0)) throw DomainError("strobe: pulse_period must be positive");
    if (!(c.lifetime > 0.0)) throw DomainError("strobe: lifetime must be positive");
    if (c.bins < 1) throw DomainError("strobe: need at least one bin");
    if (!(c.jitter_sigma >= 0.0)) throw DomainError("strobe: jitter sigma must be non-negative");
}

struct Partial {
    std::vector<PhotonRecord> records;
    StrobeHistogram histogram;
};

void simulate_range(const ModulatedEmitter& e, const BandpassFilter& filter, const StrobeConfig& c,
                    const Philox4x32& gen, std::uint64_t first, std::uint64_t last, Partial& out) {
    const bool soft = filter.edge_width > 0.0;
    const std::size_t bins = out.histogram.counts.size();
    for (std::uint64_t k = first; k < last; ++k) {
        CounterStream rng(gen, k);
        const double t_emit = static_cast<double>(k) * c.pulse_period + rng.exponential(c.lifetime);
        const double energy = e.center_at(t_emit) + rng.cauchy(e.gamma);
        bool pass;
        if (soft) {
            pass = rng.uniform() < filter.transmission(energy);
        } else {
            pass = energy >= filter.omega_low && energy <= filter.omega_high;
        }
        if (!pass) continue;
        double t_det = t_emit;
        if (c.jitter_sigma > 0.0) t_det += c.jitter_sigma * rng.normal();
        ++out.histogram.counts[fold_bin(t_det, e.f_rf, bins)];
        ++out.histogram.total_detected;
        const double ps = std::max(0.0, std::round(t_det * units::kPsPerSecond));
        out.records.push_back({c.channel, static_cast<std::uint64_t>(ps)});
    }
    out.histogram.total_emitted = last - first;
}

}  // namespace

void BandpassFilter::validate() const {
    if (!std::isfinite(omega_low) || !std::isfinite(omega_high) || !(omega_low < omega_high))
        throw DomainError("bandpass filter: omega_low must be below omega_high");
    if (!(edge_width >= 0.0) || edge_width > omega_high - omega_low)
        throw DomainError("bandpass filter: edge width must lie in [0, omega_high - omega_low]");
}

double BandpassFilter::transmission(double omega) const {
    if (edge_width <= 0.0) return (omega >= omega_low && omega <= omega_high) ? 1.0 : 0.0;
    const double h = 0.5 * edge_width;
    auto rise = [&](double x) { return 0.5 * (1.0 - std::cos(units::kPi * x / edge_width)); };
    if (omega <= omega_low - h || omega >= omega_high + h) return 0.0;
    if (omega < omega_low + h) return rise(omega - (omega_low - h));
    if (omega > omega_high - h) return rise((omega_high + h) - omega);
    return 1.0;
}

double analytic_count_rate(const ModulatedEmitter& e, const BandpassFilter& filter, double t) {
    e.validate();
    filter.validate();
    return e.amplitude * passband_integral(e.gamma, e.center_at(t), filter);
}

double acceptance_probability(const ModulatedEmitter& e, const BandpassFilter& filter, double t) {
    e.validate();
    filter.validate();
    const double p = passband_integral(e.gamma, e.center_at(t), filter) / (units::kPi * e.gamma);
    return std::clamp(p, 0.0, 1.0);
}

void StrobeHistogram::validate() const {
    if (bin_edges.size() != counts.size() + 1 || counts.empty())
        throw DataError("strobe histogram: need counts.size() + 1 edges and at least one bin");
    for (std::size_t i = 1; i < bin_edges.size(); ++i)
        if (!(bin_edges[i] > bin_edges[i - 1])) throw DataError("strobe histogram: edges must increase");
    const std::uint64_t sum = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    if (sum != total_detected) throw DataError("strobe histogram: total_detected differs from the bin sum");
    if (total_detected > total_emitted) throw DataError("strobe histogram: more photons detected than emitted");
}

void StrobeHistogram::merge(const StrobeHistogram& other) {
    if (other.bin_edges != bin_edges) throw DataError("strobe histogram: cannot merge different binnings");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    total_emitted += other.total_emitted;
    total_detected += other.total_detected;
}

StrobeHistogram make_histogram(double f_rf, int bins) {
    if (!(f_rf > 0.0)) throw DomainError("strobe histogram: f_rf must be positive");
    if (bins < 1) throw DomainError("strobe histogram: need at least one bin");
    StrobeHistogram h;
    const double period = 1.0 / f_rf;
    h.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int j = 0; j <= bins; ++j) h.bin_edges[static_cast<std::size_t>(j)] = period * j / bins;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    return h;
}

void fold_into(StrobeHistogram& h, double f_rf, const std::vector<double>& times_s) {
    for (double t : times_s) {
        ++h.counts[fold_bin(t, f_rf, h.counts.size())];
        ++h.total_detected;
    }
    h.total_emitted = std::max(h.total_emitted, h.total_detected);
}

StrobeRun simulate_photon_stream(const ModulatedEmitter& e, const BandpassFilter& filter,
                                 const StrobeConfig& config) {
    e.validate();
    filter.validate();
    validate_config(config);

    const Philox4x32 gen(config.seed);
    const StrobeHistogram empty = make_histogram(e.f_rf, config.bins);
    unsigned threads = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                          : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, std::max<std::uint64_t>(config.n_pulses, 1)));

    std::vector<Partial> parts(threads, Partial{{}, empty});
    auto bound = [&](unsigned i) { return config.n_pulses * i / threads; };
    if (threads == 1) {
        simulate_range(e, filter, config, gen, 0, config.n_pulses, parts[0]);
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i)
            pool.emplace_back([&, i] { simulate_range(e, filter, config, gen, bound(i), bound(i + 1), parts[i]); });
        for (auto& t : pool) t.join();
    }

    StrobeRun run{{}, empty};
    for (auto& p : parts) {
        run.histogram.merge(p.histogram);
        run.records.insert(run.records.end(), p.records.begin(), p.records.end());
    }
    // Long delays can cross into later pulses; sort once on the whole stream.
    std::stable_sort(run.records.begin(), run.records.end(),
                     [](const PhotonRecord& a, const PhotonRecord& b) { return a.time_ps < b.time_ps; });
    return run;
}

std::vector<double> expected_histogram(const ModulatedEmitter& e, const BandpassFilter& filter,
                                       const StrobeConfig& config) {
    e.validate();
    filter.validate();
    validate_config(config);
    const auto bins = static_cast<std::size_t>(config.bins);
    std::vector<double> out(bins, 0.0);
    if (config.n_pulses == 0) return out;

    const std::size_t per_bin = std::max<std::size_t>(16, (8192 + bins - 1) / bins);
    const std::size_t m = bins * per_bin;
    const double period = 1.0 / e.f_rf;
    const double h = period / static_cast<double>(m);

    // Pulse phases, linearly split onto the cell nodes.
    std::vector<double> pulses(m, 0.0);
    for (std::uint64_t k = 0; k < config.n_pulses; ++k) {
        const double x = fold_fraction(static_cast<double>(k) * config.pulse_period, e.f_rf) * static_cast<double>(m);
        const auto i = std::min(static_cast<std::size_t>(x), m - 1);
        const double frac = x - static_cast<double>(i);
        pulses[i] += 1.0 - frac;
        pulses[(i + 1) % m] += frac;
    }

    // Circular convolution with the folded exponential delay: a node mass at
    // phase 0 puts r^j (1 - r) / (1 - r^m) into cell j. The running sum is
    // started from its stationary value so the wrap-around is exact.
    const double r = std::exp(-h / config.lifetime);
    const double rm = std::exp(-period / config.lifetime);
    double state = 0.0;
    for (std::size_t i = 0; i < m; ++i) state = pulses[i] + r * state;
    state /= (1.0 - rm);
    std::vector<double> cells(m);
    for (std::size_t i = 0; i < m; ++i) {
        state = pulses[i] + r * state;
        cells[i] = (1.0 - r) * state;
    }

    for (std::size_t i = 0; i < m; ++i) {
        const double t = (static_cast<double>(i) + 0.5) * h;
        cells[i] *= acceptance_probability(e, filter, t);
    }

    if (config.jitter_sigma > 0.0) {
        const double s = config.jitter_sigma;
        const auto reach = static_cast<long long>(std::min(std::ceil(8.0 * s / h), 64.0 * static_cast<double>(m)));
        std::vector<double> kernel(m, 0.0);
        for (long long d = -reach; d <= reach; ++d) {
            const double w = normal_cdf((static_cast<double>(d) + 0.5) * h / s) -
                             normal_cdf((static_cast<double>(d) - 0.5) * h / s);
            const auto mm = static_cast<long long>(m);
            kernel[static_cast<std::size_t>(((d % mm) + mm) % mm)] += w;
        }
        std::vector<std::size_t> support;
        for (std::size_t d = 0; d < m; ++d)
            if (kernel[d] > 1e-18) support.push_back(d);
        std::vector<double> blurred(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            if (cells[i] == 0.0) continue;
            for (std::size_t d : support) blurred[(i + d) % m] += cells[i] * kernel[d];
        }
        cells.swap(blurred);
    }

    for (std::size_t i = 0; i < m; ++i) out[i / per_bin] += cells[i];
    return out;
}

double chi2_per_dof(const StrobeHistogram& h, const std::vector<double>& expected, double min_expected) {
    if (expected.size() != h.counts.size()) throw DataError("chi2: expected/observed length mismatch");
    double chi2 = 0.0;
    std::size_t dof = 0;
    for (std::size_t j = 0; j < expected.size(); ++j) {
        if (expected[j] < min_expected) continue;
        const double d = static_cast<double>(h.counts[j]) - expected[j];
        chi2 += d * d / expected[j];
        ++dof;
    }
    if (dof == 0) throw DataError("chi2: no bin has enough expected counts");
    return chi2 / static_cast<double>(dof);
}

HarmonicReport harmonic_analysis(const StrobeHistogram& h, double f_rf) {
    h.validate();
    if (h.bins() < 8) throw DataError("harmonic analysis needs at least 8 bins");
    if (h.total_detected == 0) throw DataError("harmonic analysis: no detected photons");
    if (!(f_rf > 0.0)) throw DomainError("harmonic analysis: f_rf must be positive");
    const double period = 1.0 / f_rf;

    std::array<std::complex<double>, 3> hk{};
    for (std::size_t j = 0; j < h.bins(); ++j) {
        const double tc = 0.5 * (h.bin_edges[j] + h.bin_edges[j + 1]);
        const double c = static_cast<double>(h.counts[j]);
        for (int k = 0; k < 3; ++k) hk[static_cast<std::size_t>(k)] += c * std::polar(1.0, -units::kTwoPi * k * tc / period);
    }
    const double h0 = hk[0].real();
    HarmonicReport rep;
    rep.magnitude1 = std::abs(hk[1]) / h0;
    rep.phase1 = std::arg(hk[1]);
    rep.magnitude2 = std::abs(hk[2]) / h0;
    rep.phase2 = std::arg(hk[2]);
    rep.dominant = rep.magnitude2 > rep.magnitude1 ? 2 : 1;
    return rep;
}

FitReport fit_strobe(const StrobeHistogram& h, const ModulatedEmitter& guess, const BandpassFilter& filter,
                     const StrobeFitOptions& options) {
    h.validate();
    guess.validate();
    filter.validate();
    if (h.total_detected == 0) throw DataError("fit_strobe: histogram is empty");

    const std::size_t n = h.bins();
    const std::size_t sub = std::max<std::size_t>(8, 4096 / n);
    // Phase sample points per bin, as (sin, cos) of 2 pi f t.
    std::vector<double> sn(n * sub), cs(n * sub);
    for (std::size_t j = 0; j < n; ++j) {
        const double w = h.bin_edges[j + 1] - h.bin_edges[j];
        for (std::size_t s = 0; s < sub; ++s) {
            const double t = h.bin_edges[j] + (static_cast<double>(s) + 0.5) * w / static_cast<double>(sub);
            const double ph = units::kTwoPi * guess.f_rf * t;
            sn[j * sub + s] = std::sin(ph);
            cs[j * sub + s] = std::cos(ph);
        }
    }
    auto bin_acceptance = [&](double a, double b, std::vector<double>& acc) {
        acc.assign(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::size_t s = 0; s < sub; ++s) {
                const double c = guess.omega0 + a * sn[j * sub + s] + b * cs[j * sub + s];
                sum += passband_integral(guess.gamma, c, filter);
            }
            acc[j] = sum / (static_cast<double>(sub) * units::kPi * guess.gamma);
        }
    };

    std::vector<double> sigma(n);
    std::vector<double> counts(n);
    for (std::size_t j = 0; j < n; ++j) {
        counts[j] = static_cast<double>(h.counts[j]);
        sigma[j] = std::sqrt(std::max(counts[j], 1.0));
    }

    const double de0 = std::max(guess.delta_e, 0.1 * guess.gamma);
    std::vector<double> acc;
    bin_acceptance(de0 * std::cos(guess.phase0), de0 * std::sin(guess.phase0), acc);
    const double acc_sum = std::accumulate(acc.begin(), acc.end(), 0.0);
    if (!(acc_sum > 0.0)) throw DataError("fit_strobe: filter passes no light at the initial guess");
    const double scale0 = std::accumulate(counts.begin(), counts.end(), 0.0) / acc_sum;

    Eigen::VectorXd p0(3);
    p0 << de0 * std::cos(guess.phase0), de0 * std::sin(guess.phase0), scale0;
    std::vector<double> work;
    auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        bin_acceptance(p[0], p[1], work);
        for (std::size_t j = 0; j < n; ++j)
            r[static_cast<Eigen::Index>(j)] = (p[2] * work[j] - counts[j]) / sigma[j];
    };
    fit::LmOptions lm = options.lm;
    lm.absolute_sigma = true;
    const fit::LmResult res = fit::levenberg_marquardt(residuals, p0, static_cast<Eigen::Index>(n), lm);

    const double a = res.params[0], b = res.params[1];
    const double de = std::hypot(a, b);
    const Eigen::Matrix2d cov = res.covariance.topLeftCorner<2, 2>();
    double de_err, ph_err;
    if (de > 1e-12 * guess.gamma) {
        de_err = std::sqrt(std::max(0.0, (a * a * cov(0, 0) + b * b * cov(1, 1) + 2 * a * b * cov(0, 1)) / (de * de)));
        ph_err = std::sqrt(
            std::max(0.0, (b * b * cov(0, 0) + a * a * cov(1, 1) - 2 * a * b * cov(0, 1)) / (de * de * de * de)));
    } else {
        de_err = std::sqrt(std::max(cov(0, 0), cov(1, 1)));
        ph_err = units::kPi;
    }
    if (!std::isfinite(de_err)) de_err = std::numeric_limits<double>::infinity();

    FitReport rep;
    rep.model_name = "strobe_acceptance";
    rep.add("delta_e", de, de_err, "meV");
    rep.add("phase0", std::atan2(b, a), ph_err, "rad");
    rep.add("scale", res.params[2], res.stderr_[2], "counts");
    rep.residual_norm = res.residual_norm();
    rep.n_points = n;
    rep.converged = res.converged;
    const double dof = static_cast<double>(n) - 3.0;
    rep.annotate("chi2_per_dof", dof > 0 ? fmt(res.ssr / dof) : "nan");
    rep.annotate("convergence", res.reason);
    rep.input_digest = content_digest(std::span<const double>(counts));
    return rep;
}

}  // namespace sawspe::strobe
