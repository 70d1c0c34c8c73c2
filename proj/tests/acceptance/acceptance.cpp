// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion; with
// arguments, runs only the listed criterion numbers.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sawspe/cli.hpp"
#include "sawspe/emitter.hpp"
#include "sawspe/grid.hpp"
#include "sawspe/io.hpp"
#include "sawspe/photonstats.hpp"
#include "sawspe/resonator.hpp"
#include "sawspe/rng.hpp"
#include "sawspe/strobe.hpp"
#include "sawspe/sweep.hpp"
#include "sawspe/units.hpp"
#include "support/generators.hpp"

using namespace sawspe;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    // Records one sub-check; failing ones are listed first in the detail.
    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail = "FAILED[" + what + "] " + detail;
        } else {
            detail += what + "; ";
        }
    }
};

std::string f9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

const std::vector<resonator::ResonatorMode> kTableModes = {
    {298.425e6, 1300, 5900}, {299.425e6, 3000, 800}, {300.975e6, 1600, 2300}, {303.561e6, 1700, 6000}};

// ---------------------------------------------------------------- 1

constexpr double kS11NoiselessTol = 1e-3;
constexpr double kS11NoisyQiTol = 0.05;
constexpr double kS11Budget = 5.0;

Outcome criterion1() {
    Outcome o;
    const auto grid = resonator::linear_grid(297.5e6, 304.5e6, 7001);
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> sign(0, 1);
    auto perturbed = [&] {
        std::vector<resonator::ResonatorMode> g;
        for (const auto& m : kTableModes) {
            const double s1 = sign(rng) ? 1.0 : -1.0, s2 = sign(rng) ? 1.0 : -1.0, s3 = sign(rng) ? 1.0 : -1.0;
            g.push_back({m.f_n + s1 * 100e3, m.q_i * (1.0 + 0.3 * s2), m.q_e * (1.0 + 0.3 * s3)});
        }
        return g;
    };

    const auto clean = resonator::synthesize_s11(kTableModes, grid);
    double worst = 0.0;
    for (int trial = 0; trial < 16; ++trial) {
        const auto fit = resonator::fit_s11(clean, perturbed());
        for (std::size_t k = 0; k < kTableModes.size(); ++k) {
            worst = std::max({worst, rel(fit.modes[k].f_n, kTableModes[k].f_n), rel(fit.modes[k].q_i, kTableModes[k].q_i),
                              rel(fit.modes[k].q_e, kTableModes[k].q_e)});
        }
    }
    o.check(worst < kS11NoiselessTol, "noiseless worst rel err " + f9(worst) + " < 1e-3 (16 perturbed starts)");

    double worst_qi = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto noisy = resonator::synthesize_s11(kTableModes, grid, 0.01, seed);
        const auto fit = resonator::fit_s11(noisy, perturbed());
        for (std::size_t k = 0; k < kTableModes.size(); ++k)
            worst_qi = std::max(worst_qi, rel(fit.modes[k].q_i, kTableModes[k].q_i));
    }
    o.check(worst_qi < kS11NoisyQiTol, "1% noise worst Qi rel err " + f9(worst_qi) + " < 0.05 (3 seeds)");
    return o;
}

// ---------------------------------------------------------------- 2

Outcome criterion2() {
    Outcome o;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> f(1e6, 1e10), q(10.0, 1e6);
    double worst_null = 0.0, worst_refl = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double fn = f(rng), qi = q(rng), qe = q(rng);
        worst_null = std::max(worst_null, std::abs(resonator::s11_model(fn, {fn, qi, qi})));
        const auto s = resonator::s11_model(fn, {fn, qi, qe});
        worst_refl = std::max(worst_refl, std::abs(s - std::complex<double>((qe - qi) / (qe + qi), 0.0)));
    }
    o.check(worst_null < 1e-12, "critical null max |S11| " + f9(worst_null) + " < 1e-12");
    o.check(worst_refl < 1e-12, "on-resonance reflection max err " + f9(worst_refl) + " < 1e-12 (1000 draws)");
    return o;
}

// ---------------------------------------------------------------- 3

Outcome criterion3() {
    Outcome o;
    const auto c = resonator::classify_coupling({300e6, 1900, 3700});
    o.check(c == resonator::Coupling::undercoupled,
            std::string("(Qi, Qe) = (1900, 3700) -> ") + resonator::to_string(c));
    return o;
}

// ---------------------------------------------------------------- 4

constexpr double kPeakTarget = 0.92;
constexpr double kGridStep = 0.01;
constexpr double kLineshapeBudget = 10.0;

Outcome criterion4() {
    Outcome o;
    const emitter::ModulatedEmitter truth{1600.0, 0.05, 0.46, 303.5e6, 0.0, 1.0};
    const auto fine = linspace(1598.5, 1601.5, 301);  // 0.01 meV step
    const auto spec = emitter::time_averaged_spectrum(truth, fine);
    const double sep = emitter::peak_separation(spec);
    o.check(std::abs(sep - kPeakTarget) <= kGridStep,
            "maxima separation " + f9(sep) + " meV vs 0.92 +/- 0.01");

    auto data = emitter::time_averaged_spectrum({1600.0, 0.05, 0.46, 303.5e6, 0.0, 1000.0}, fine);
    for (double& c : data.counts) c += 20.0;
    const auto clean_fit = emitter::fit_modulated_lineshape(data, emitter::guess_emitter(data, truth.f_rf));
    const double de_clean = clean_fit.emitter.delta_e;
    o.check(clean_fit.modulated && rel(de_clean, 0.46) < 0.01, "noiseless fit dE " + f9(de_clean) + " within 1%");

    auto scaled = truth;
    scaled.amplitude = 1.0;
    const auto shape = emitter::time_averaged_spectrum(scaled, fine);
    scaled.amplitude = 1e4 / *std::max_element(shape.counts.begin(), shape.counts.end());
    const auto mean_counts = emitter::time_averaged_spectrum(scaled, fine);
    const Philox4x32 gen(4);
    double worst = 0.0;
    bool all_modulated = true;
    for (std::uint64_t r = 0; r < 10; ++r) {
        CounterStream rs(gen, r);
        auto noisy = mean_counts;
        for (double& c : noisy.counts) c = static_cast<double>(poisson(rs, c));
        const auto fit = emitter::fit_modulated_lineshape(noisy, emitter::guess_emitter(noisy, truth.f_rf));
        all_modulated = all_modulated && fit.modulated;
        worst = std::max(worst, rel(fit.emitter.delta_e, 0.46));
    }
    o.check(all_modulated && worst < 0.05, "Poisson 1e4 peak counts worst dE rel err " + f9(worst) + " < 0.05 (10 draws)");
    return o;
}

// ---------------------------------------------------------------- 5

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double acc = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return acc;
}

Outcome criterion5() {
    Outcome o;
    emitter::ModulatedEmitter e{1600.0, 0.05, 0.0, 303.5e6, 0.4, 1.0};
    const auto grid = linspace(1500.0, 1700.0, 40001);
    const double a0 = trapezoid(grid, emitter::time_averaged_spectrum(e, grid, 512).counts);
    double worst_area = 0.0, worst_sym = 0.0, worst_double = 0.0;
    for (double de : {0.1, 0.46, 1.0, 3.0}) {
        e.delta_e = de;
        const auto s = emitter::time_averaged_spectrum(e, grid, 512);
        worst_area = std::max(worst_area, rel(trapezoid(grid, s.counts), a0));
        const double peak = *std::max_element(s.counts.begin(), s.counts.end());
        for (std::size_t i = 0; i < grid.size() / 2; ++i)
            worst_sym = std::max(worst_sym, std::abs(s.counts[i] - s.counts[grid.size() - 1 - i]) / peak);
        const auto local = linspace(1600.0 - de - 1.0, 1600.0 + de + 1.0, 2001);
        const auto a = emitter::time_averaged_spectrum(e, local, 512);
        const auto b = emitter::time_averaged_spectrum(e, local, 1024);
        for (std::size_t i = 0; i < local.size(); ++i)
            worst_double = std::max(worst_double, std::abs(a.counts[i] - b.counts[i]) / b.counts[i]);
    }
    o.check(worst_area < 1e-6, "area rel change " + f9(worst_area) + " < 1e-6");
    o.check(worst_sym < 1e-6, "asymmetry " + f9(worst_sym) + " < 1e-6");
    o.check(worst_double < 1e-8, "512 -> 1024 samples rel change " + f9(worst_double) + " < 1e-8");
    return o;
}

// ---------------------------------------------------------------- 6

constexpr double kStrobeBudget = 60.0;

Outcome criterion6() {
    Outcome o;
    const emitter::ModulatedEmitter e{1600.0, 1.0, 1.97, 303.5e6, 0.0, 1.0};
    const strobe::BandpassFilter wing{1601.0, 1604.0};
    strobe::StrobeConfig cfg;
    cfg.n_pulses = 1'000'000;
    cfg.lifetime = 2e-9;
    cfg.bins = 512;
    cfg.seed = 6;
    cfg.threads = 0;
    const auto run = strobe::simulate_photon_stream(e, wing, cfg);
    const double chi2 = strobe::chi2_per_dof(run.histogram, strobe::expected_histogram(e, wing, cfg));
    o.check(chi2 >= 0.8 && chi2 <= 1.2, "chi2/dof " + f9(chi2) + " in [0.8, 1.2] (" +
                                            std::to_string(run.histogram.total_detected) + " photons, 512 bins)");

    // Shot-noise floor of a normalized harmonic is ~sqrt(2 / N).
    const auto h = strobe::harmonic_analysis(run.histogram, e.f_rf);
    const double floor = 5.0 * std::sqrt(2.0 / static_cast<double>(run.histogram.total_detected));
    o.check(h.magnitude1 > floor && h.magnitude2 > floor,
            "|H1| " + f9(h.magnitude1) + ", |H2| " + f9(h.magnitude2) + " above 5x noise " + f9(floor));

    const strobe::BandpassFilter sym{1598.5, 1601.5};
    cfg.bins = 128;
    const auto srun = strobe::simulate_photon_stream(e, sym, cfg);
    const auto sh = strobe::harmonic_analysis(srun.histogram, e.f_rf);
    o.check(sh.magnitude1 / sh.magnitude2 < 0.05, "symmetric filter |H1|/|H2| " + f9(sh.magnitude1 / sh.magnitude2) + " < 0.05");
    return o;
}

// ---------------------------------------------------------------- 7

Outcome criterion7() {
    Outcome o;
    const auto root = testgen::sqrtp_points(0.9865, -10.0, 8.0, 19);
    const auto rep = sweep::fit_sqrtp(root);
    o.check(rel(rep.value("slope"), 0.9865) < 1e-3, "slope " + f9(rep.value("slope")) + " within 0.1%");
    const double ex = sweep::loglog_exponent(root).value;
    o.check(std::abs(ex - 0.5) <= 0.005, "sqrt(P) log-log exponent " + f9(ex));

    const auto lin = testgen::linear_points(0.3, -10.0, 8.0, 19);
    const double exl = sweep::loglog_exponent(lin).value;
    o.check(std::abs(exl - 1.0) <= 0.005, "linear log-log exponent " + f9(exl));
    const auto lrep = sweep::fit_sqrtp(lin);
    o.check(lrep.annotation("preferred_model") == std::optional<std::string>("linear_p") && !lrep.warnings.empty(),
            "linear data flagged non-sqrt(P)");

    const auto bp = sweep::detect_saturation(testgen::sqrtp_points(0.9865, -10.0, 10.0, 21, 4.0));
    o.check(bp && std::abs(*bp - 4.0) <= 1.0, "saturation breakpoint " + (bp ? f9(*bp) : std::string("none")) + " dBm vs 4 +/- 1");
    return o;
}

// ---------------------------------------------------------------- 8

Outcome criterion8() {
    Outcome o;
    sweep::StrainModel m{30.0, 0.0119, 0.0};
    const double shift = sweep::strain_to_shift(m, 0.1);
    o.check(shift == 3.0, "D = 30 meV/%, 0.1% -> " + f9(shift) + " meV");
    o.check(sweep::strain_at_power(m, 0.0) == 0.0119, "0 dBm reference strain " + f9(sweep::strain_at_power(m, 0.0)) + " %");
    double worst = 0.0;
    for (double p = -20.0; p <= 20.0; p += 0.5)
        worst = std::max(worst, rel(sweep::strain_at_power(m, p), 0.0119 * std::sqrt(units::dbm_to_mw(p))));
    o.check(worst < 1e-12, "sqrt(P) scaling max rel err " + f9(worst));
    return o;
}

// ---------------------------------------------------------------- 9

constexpr double kPhotonBudget = 30.0;

Outcome criterion9() {
    Outcome o;
    const auto tags = photonstats::merge_streams(
        {photonstats::poisson_stream(1e4, 1.0, 0, 91), photonstats::poisson_stream(1e4, 1.0, 1, 92)});
    photonstats::CorrelateOptions copt;
    copt.duration_ps = 1e12;
    const auto hist = photonstats::correlate(tags, 0, 1, 50'000'000, 10'000'000, copt);
    double worst_sigma = 0.0;
    for (std::size_t i = 0; i < hist.bins(); ++i) {
        // Expected coincidences scale with the bin width actually covered.
        const double expected = hist.normalization * (hist.tau_edges[i + 1] - hist.tau_edges[i]) /
                                static_cast<double>(hist.bin_width);
        worst_sigma = std::max(worst_sigma, std::abs(static_cast<double>(hist.counts[i]) - expected) / std::sqrt(expected));
    }
    o.check(worst_sigma <= 3.0, "Poisson g2 worst deviation " + f9(worst_sigma) + " sigma over " +
                                    std::to_string(hist.bins()) + " bins");

    std::mt19937_64 rng(9);
    const auto g2 = photonstats::fit_g2(testgen::g2_histogram(0.22, 1818.0, 250, 80, 1000.0, &rng));
    o.check(std::abs(g2.value("g2_0") - 0.22) <= 0.02, "antibunching g2(0) " + f9(g2.value("g2_0")) + " vs 0.22 +/- 0.02");

    const auto lt = photonstats::fit_lifetime(testgen::decay_histogram(2000.0, 1e4, 10.0, 16.0, 800, 20));
    o.check(rel(lt.value("tau"), 2000.0) < 0.005, "noiseless lifetime " + f9(lt.value("tau")) + " ps within 0.5%");
    return o;
}

// ---------------------------------------------------------------- 10

bool close9(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); }

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"sawspe"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome criterion10() {
    Outcome o;
    const emitter::ModulatedEmitter e{1600.0, 1.0, 1.97, 303.5e6, 0.0, 1.0};
    const strobe::BandpassFilter wing{1601.0, 1604.0, 0.5};
    strobe::StrobeConfig cfg;
    cfg.n_pulses = 200'000;
    cfg.seed = 10;
    cfg.jitter_sigma = 100e-12;
    std::string ref_tags, ref_hist;
    bool same = true;
    for (int threads : {1, 2, 3, 8}) {
        cfg.threads = threads;
        const auto run = strobe::simulate_photon_stream(e, wing, cfg);
        const auto tags = io::format_timetags_binary(run.records), hist = io::format_strobe_histogram(run.histogram);
        if (threads == 1) {
            ref_tags = tags;
            ref_hist = hist;
        }
        same = same && tags == ref_tags && hist == ref_hist;
    }
    photonstats::AntibunchedSource short_source;
    short_source.duration_s = 0.02;
    same = same && io::format_timetags_binary(photonstats::antibunched_stream(short_source, 3)) ==
                       io::format_timetags_binary(photonstats::antibunched_stream(short_source, 3));
    same = same && io::format_touchstone(resonator::synthesize_s11(kTableModes, resonator::linear_grid(298e6, 304e6, 501), 0.01, 5)) ==
                       io::format_touchstone(resonator::synthesize_s11(kTableModes, resonator::linear_grid(298e6, 304e6, 501), 0.01, 5));
    o.check(same, "library simulations byte-identical for 1/2/3/8 threads and repeated seeds");

    const auto dir = std::filesystem::temp_directory_path() / "sawspe_acceptance_10";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    bool cli_same = true;
    for (const char* t : {"1", "4"}) {
        const std::string s(t);
        cli_same = cli_same && run_cli({"sim-strobe", "--seed", "77", "--threads", t, "--set", "strobe.n_pulses=100000",
                                        "--output", (dir / ("h" + s + ".csv")).string(), "--tags",
                                        (dir / ("t" + s + ".bin")).string(), "--report",
                                        (dir / ("r" + s + ".txt")).string()}) == 0;
    }
    cli_same = cli_same && io::read_file(dir / "h1.csv") == io::read_file(dir / "h4.csv") &&
               io::read_file(dir / "t1.bin") == io::read_file(dir / "t4.bin");
    std::filesystem::remove_all(dir);
    o.check(cli_same, "sim-strobe outputs byte-identical for --threads 1 and 4");

    // Round trips through every file format.
    bool rt = true;
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 1e5);
    const auto s11 = resonator::synthesize_s11(kTableModes, resonator::linear_grid(298e6, 304e6, 301), 0.01, 1);
    const auto s11b = io::parse_touchstone_text(io::format_touchstone(s11));
    for (std::size_t i = 0; i < s11.size(); ++i)
        rt = rt && close9(s11b.frequencies[i], s11.frequencies[i]) && close9(s11b.values[i].real(), s11.values[i].real()) &&
             close9(s11b.values[i].imag(), s11.values[i].imag());
    auto pl = emitter::time_averaged_spectrum({1600.0, 0.05, 0.46, 303.5e6, 0.0, 1e4}, linspace(1599.0, 1601.0, 201));
    for (auto unit : {io::SpectrumUnit::mev, io::SpectrumUnit::nm}) {
        const auto b = io::parse_spectrum_csv_text(io::format_spectrum_csv(pl, unit));
        for (std::size_t i = 0; i < pl.size(); ++i)
            rt = rt && close9(b.energies[i], pl.energies[i]) && close9(b.counts[i], pl.counts[i]);
    }
    const auto tags = photonstats::poisson_stream(1e5, 0.01, 2, 4);
    rt = rt && io::parse_timetags_bytes(io::format_timetags_binary(tags)) == tags &&
         io::parse_timetags_bytes(io::format_timetags_csv(tags)) == tags;
    std::vector<sweep::PowerSweepPoint> sw;
    for (int i = 0; i < 15; ++i) sw.push_back({-10.0 + 1.3 * i, pos(rng), 1e-3 * pos(rng), 303.5e6});
    const auto swb = io::parse_sweep_csv_text(io::format_sweep_csv(sw));
    for (std::size_t i = 0; i < sw.size(); ++i)
        rt = rt && close9(swb[i].p_dbm, sw[i].p_dbm) && close9(swb[i].delta_e, sw[i].delta_e) &&
             close9(swb[i].delta_e_err, sw[i].delta_e_err) && close9(swb[i].f_drive, sw[i].f_drive);
    const auto decay = testgen::decay_histogram(2000.0, 1e4, 10.0, 16.0, 300, 20);
    const auto decayb = io::parse_decay_csv_text(io::format_decay_csv(decay));
    for (std::size_t i = 0; i < decay.size(); ++i)
        rt = rt && close9(decayb.time_ps[i], decay.time_ps[i]) && close9(decayb.counts[i], decay.counts[i]);
    cfg.threads = 1;
    const auto h = strobe::simulate_photon_stream(e, wing, cfg).histogram;
    const auto hb = io::parse_strobe_histogram_text(io::format_strobe_histogram(h));
    rt = rt && hb.counts == h.counts && hb.total_emitted == h.total_emitted;
    for (std::size_t j = 0; j < h.bin_edges.size(); ++j) rt = rt && close9(hb.bin_edges[j], h.bin_edges[j]);
    io::Curve c{{"x", "y"}, {{}, {}}};
    for (int i = 0; i < 512; ++i) {
        c.columns[0].push_back(u(rng) * 1e-9);
        c.columns[1].push_back(u(rng) * 1e9);
    }
    const auto cb = io::parse_curve_text(io::format_curve(c));
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t i = 0; i < c.rows(); ++i) rt = rt && close9(cb.columns[k][i], c.columns[k][i]);
    o.check(rt, "touchstone, spectrum (meV, nm), time tags (csv, binary), sweep, decay, strobe histogram, curve round-trip to 1e-9");
    return o;
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {1, "S11 round-trip", kS11Budget, criterion1},
        {2, "critical-coupling null", 1.0, criterion2},
        {3, "coupling classification", 1.0, criterion3},
        {4, "modulated lineshape", kLineshapeBudget, criterion4},
        {5, "area and symmetry invariants", 10.0, criterion5},
        {6, "stroboscope equivalence", kStrobeBudget, criterion6},
        {7, "power-law discrimination", 5.0, criterion7},
        {8, "strain conversion", 1.0, criterion8},
        {9, "photon statistics", kPhotonBudget, criterion9},
        {10, "determinism and round-trips", 60.0, criterion10},
    };
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

    bool all_pass = true;
    for (const auto& c : all) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& ex) {
            o.pass = false;
            o.detail = std::string("exception: ") + ex.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.check(secs < c.budget_s, "runtime " + f9(secs) + " s < " + f9(c.budget_s) + " s");
        all_pass = all_pass && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << c.id << " " << c.name << ": " << o.detail << "\n";
    }
    return all_pass ? 0 : 1;
}
