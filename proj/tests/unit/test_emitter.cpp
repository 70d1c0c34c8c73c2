#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numeric>
#include <random>

#include "sawspe/emitter.hpp"
#include "sawspe/error.hpp"
#include "sawspe/grid.hpp"
#include "sawspe/rng.hpp"

using namespace sawspe;
using namespace sawspe::emitter;
using Catch::Approx;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Closed-form period average of gamma^2 / (gamma^2 + (x - A sin phi)^2):
//   gamma * Im[1 / sqrt((x - i gamma)^2 - A^2)], root taken in the lower half plane.
double closed_form_average(double gamma, double amp, double x) {
    const std::complex<double> c{x, -gamma};
    std::complex<double> w = std::sqrt(c * c - amp * amp);
    if (w.imag() > 0.0) w = -w;
    return gamma * (1.0 / w).imag();
}

ModulatedEmitter fig2_emitter() { return {1600.0, 0.05, 0.46, 303.5e6, 0.0, 1.0}; }

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double acc = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return acc;
}

}  // namespace

TEST_CASE("instantaneous_lineshape", "[emitter]") {
    ModulatedEmitter e{1600.0, 0.05, 0.0, 300e6, 0.0, 7.5};
    CHECK(instantaneous_lineshape(e, 1600.0, 0.0) == Approx(7.5));
    CHECK(instantaneous_lineshape(e, 1600.0, 1.234e-9) == Approx(7.5));

    e.delta_e = 0.46;
    const double quarter = 1.0 / (4.0 * e.f_rf);
    CHECK(e.center_at(quarter) == Approx(1600.46).epsilon(1e-14));
    CHECK(instantaneous_lineshape(e, 1600.46, quarter) == Approx(7.5).epsilon(1e-12));
    CHECK(instantaneous_lineshape(e, 1600.0, 0.0) == Approx(7.5));
    CHECK(instantaneous_lineshape(e, 1600.05, 0.0) == Approx(3.75));

    e.gamma = 0.0;
    CHECK_THROWS_AS(instantaneous_lineshape(e, 1600.0, 0.0), DomainError);
}

TEST_CASE("time-averaged spectrum without modulation is a Lorentzian", "[emitter][average]") {
    ModulatedEmitter e = fig2_emitter();
    e.delta_e = 0.0;
    const auto grid = linspace(1599.0, 1601.0, 401);
    const auto s = time_averaged_spectrum(e, grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        CHECK(s.counts[i] == Approx(e.gamma * e.gamma / (e.gamma * e.gamma + std::pow(grid[i] - 1600.0, 2))));
    const auto peaks = find_peaks(s);
    REQUIRE(peaks.size() == 1);
    CHECK(peaks[0] == Approx(1600.0));
}

TEST_CASE("quadrature agrees with the closed-form average", "[emitter][average][oracle]") {
    for (double amp : {0.0, 0.02, 0.46, 2.0}) {
        ModulatedEmitter e = fig2_emitter();
        e.delta_e = amp;
        const auto grid = linspace(1598.0, 1602.0, 801);
        const auto s = time_averaged_spectrum(e, grid);
        for (std::size_t i = 0; i < grid.size(); i += 13)
            CHECK(std::abs(s.counts[i] - closed_form_average(e.gamma, amp, grid[i] - e.omega0)) < 1e-10);
    }
}

TEST_CASE("quadrature agrees with a Monte Carlo phase average", "[emitter][average][oracle]") {
    const ModulatedEmitter e = fig2_emitter();
    const std::vector<double> probe = {1599.5, 1599.6, 1599.8, 1600.0, 1600.2, 1600.43, 1600.5};
    const auto s = time_averaged_spectrum(e, probe);

    const int n = 1'000'000;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    std::vector<double> sum(probe.size(), 0.0), sum2(probe.size(), 0.0);
    for (int k = 0; k < n; ++k) {
        const double c = e.omega0 + e.delta_e * std::sin(phase(rng));
        for (std::size_t i = 0; i < probe.size(); ++i) {
            const double v = e.gamma * e.gamma / (e.gamma * e.gamma + std::pow(probe[i] - c, 2));
            sum[i] += v;
            sum2[i] += v * v;
        }
    }
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double mean = sum[i] / n;
        const double se = std::sqrt((sum2[i] / n - mean * mean) / n);
        CHECK(std::abs(s.counts[i] - mean) < 3.0 * se);
    }
}

TEST_CASE("time-averaged spectrum invariants", "[emitter][average][property]") {
    const auto grid = linspace(1500.0, 1700.0, 40001);
    ModulatedEmitter e = fig2_emitter();

    SECTION("area does not depend on the modulation depth") {
        e.delta_e = 0.0;
        const double a0 = trapezoid(grid, time_averaged_spectrum(e, grid).counts);
        for (double amp : {0.1, 0.46, 1.0, 3.0}) {
            e.delta_e = amp;
            const double a = trapezoid(grid, time_averaged_spectrum(e, grid).counts);
            CHECK(std::abs(a - a0) / a0 < 1e-6);
        }
    }
    SECTION("symmetric about omega0") {
        const auto s = time_averaged_spectrum(e, grid);
        const double peak = *std::max_element(s.counts.begin(), s.counts.end());
        for (std::size_t i = 0; i < grid.size() / 2; i += 7)
            CHECK(std::abs(s.counts[i] - s.counts[grid.size() - 1 - i]) <= 1e-6 * peak);
    }
    SECTION("independent of the modulation phase") {
        const auto local = linspace(1599.0, 1601.0, 2001);
        const auto ref = time_averaged_spectrum(e, local);
        for (double ph : {0.3, 1.7, -2.9}) {
            e.phase0 = ph;
            const auto s = time_averaged_spectrum(e, local);
            for (std::size_t i = 0; i < local.size(); ++i) CHECK(std::abs(s.counts[i] - ref.counts[i]) < 1e-12);
        }
    }
    SECTION("doubling the quadrature changes results below 1e-8") {
        const auto local = linspace(1599.0, 1601.0, 2001);
        const auto a = time_averaged_spectrum(e, local, 512);
        const auto b = time_averaged_spectrum(e, local, 1024);
        for (std::size_t i = 0; i < local.size(); ++i)
            CHECK(std::abs(a.counts[i] - b.counts[i]) <= 1e-8 * std::max(b.counts[i], 1e-300));
    }
}

TEST_CASE("turning-point maxima", "[emitter][peaks]") {
    // Maxima sit slightly inside +/- delta_e; locate them from the closed form
    // on a fine grid and compare with the quadrature on the working grid.
    const double step = 0.001;
    for (double ratio : {10.0, 20.0, 40.0}) {
        ModulatedEmitter e = fig2_emitter();
        e.delta_e = ratio * e.gamma;
        e.omega0 = 1600.0;
        const auto s = time_averaged_spectrum(e, linspace(1598.0, 1602.0, 4001));
        const auto peaks = find_peaks(s, 0.5);
        REQUIRE(peaks.size() == 2);

        double best_x = 0.0, best_v = -1.0;
        for (double x = 0.0; x < e.delta_e + 5 * e.gamma; x += 1e-6) {
            const double v = closed_form_average(e.gamma, e.delta_e, x);
            if (v > best_v) {
                best_v = v;
                best_x = x;
            }
        }
        CHECK(std::abs(peaks.back() - (1600.0 + best_x)) <= step);
        CHECK(std::abs(peaks.front() - (1600.0 - best_x)) <= step);
        // Within one linewidth of omega0 +/- delta_e.
        CHECK(std::abs(peaks.back() - (1600.0 + e.delta_e)) < e.gamma);
    }
}

TEST_CASE("peak separation grows with the modulation depth", "[emitter][peaks][property]") {
    ModulatedEmitter e = fig2_emitter();
    const auto grid = linspace(1597.0, 1603.0, 6001);
    double last = 0.0;
    for (double amp = 0.06; amp <= 2.0; amp += 0.02) {
        e.delta_e = amp;
        const double sep = peak_separation(time_averaged_spectrum(e, grid));
        CHECK(sep >= last);
        last = sep;
    }
}

TEST_CASE("truncated grids are flagged", "[emitter][average]") {
    const ModulatedEmitter e = fig2_emitter();
    std::vector<std::string> warnings;
    const auto s = time_averaged_spectrum(e, linspace(1599.8, 1600.2, 101), 512, &warnings);
    CHECK(s.truncated);
    CHECK(warnings.size() == 1);
    const auto ok = time_averaged_spectrum(e, linspace(1598.0, 1602.0, 101));
    CHECK_FALSE(ok.truncated);
}

TEST_CASE("fit_modulated_lineshape noiseless recovery", "[emitter][fit]") {
    ModulatedEmitter truth = fig2_emitter();
    truth.amplitude = 1000.0;
    const auto grid = linspace(1598.5, 1601.5, 301);
    auto s = time_averaged_spectrum(truth, grid);
    for (double& c : s.counts) c += 20.0;

    ModulatedEmitter guess = truth;
    guess.omega0 += 0.03;
    guess.gamma = 0.07;
    guess.delta_e = 0.40;
    guess.amplitude = 700.0;
    const auto out = fit_modulated_lineshape(s, guess);
    CHECK(out.modulated);
    CHECK(out.emitter.delta_e == Approx(0.46).epsilon(0.01));
    CHECK(out.emitter.delta_e == Approx(0.46).epsilon(1e-6));
    CHECK(out.emitter.gamma == Approx(0.05).epsilon(1e-6));
    CHECK(out.emitter.omega0 == Approx(1600.0).margin(1e-6));
    CHECK(out.background == Approx(20.0).epsilon(1e-6));
    CHECK(out.report.model_name == "modulated_lorentzian");
}

TEST_CASE("fit_modulated_lineshape selects the plain Lorentzian for unmodulated data", "[emitter][fit]") {
    ModulatedEmitter truth = fig2_emitter();
    truth.delta_e = 0.0;
    truth.amplitude = 500.0;
    const auto grid = linspace(1599.0, 1601.0, 201);
    const auto s = time_averaged_spectrum(truth, grid);
    ModulatedEmitter guess = truth;
    guess.delta_e = 0.1;
    const auto out = fit_modulated_lineshape(s, guess);
    CHECK_FALSE(out.modulated);
    CHECK(out.report.value("delta_e") == 0.0);
    CHECK(out.emitter.gamma == Approx(0.05).epsilon(1e-6));
    CHECK(out.report.annotation("model_selection") == std::optional<std::string>("unmodulated"));
}

TEST_CASE("fit_modulated_lineshape under Poisson noise", "[emitter][fit][noise]") {
    // Peak counts 1e4; the spread over realizations defines the 5% contract.
    ModulatedEmitter truth = fig2_emitter();
    const auto grid = linspace(1599.0, 1601.0, 201);
    auto clean = time_averaged_spectrum(truth, grid);
    const double peak = *std::max_element(clean.counts.begin(), clean.counts.end());
    truth.amplitude = 1e4 / peak;
    clean = time_averaged_spectrum(truth, grid);

    const Philox4x32 gen(99);
    std::vector<double> fitted;
    for (int r = 0; r < 30; ++r) {
        CounterStream rng(gen, static_cast<std::uint64_t>(r));
        PLSpectrum noisy = clean;
        for (double& c : noisy.counts) c = static_cast<double>(poisson(rng, c));
        const auto out = fit_modulated_lineshape(noisy, guess_emitter(noisy, truth.f_rf));
        REQUIRE(out.modulated);
        CHECK(out.emitter.delta_e == Approx(0.46).epsilon(0.05));
        fitted.push_back(out.emitter.delta_e);
    }
    const double mean = std::accumulate(fitted.begin(), fitted.end(), 0.0) / fitted.size();
    double var = 0.0;
    for (double v : fitted) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / (fitted.size() - 1));
    // 5% is several standard deviations wide at this count level.
    CHECK(3.0 * sd < 0.05 * 0.46);
    CHECK(std::abs(mean - 0.46) < 3.0 * sd / std::sqrt(fitted.size()) + 1e-3);
}

TEST_CASE("fit_modulated_lineshape rejects flat data", "[emitter][fit]") {
    PLSpectrum s;
    s.energies = linspace(1599.0, 1601.0, 50);
    s.counts.assign(50, 12.0);
    CHECK_THROWS_WITH(fit_modulated_lineshape(s, fig2_emitter()), Catch::Matchers::ContainsSubstring("no peak"));
}

TEST_CASE("doublet spectra", "[emitter][doublet]") {
    FineStructureDoublet d{1600.0, 0.7, 1.0, 0.0, 299.425e6, 0.0, 0.02, 0.02, 1.0};
    const auto grid = linspace(1598.0, 1602.0, 4001);

    SECTION("unmodulated doublet shows two lines 0.7 meV apart") {
        const auto s = doublet_spectrum(d, grid);
        const auto peaks = find_peaks(s, 0.5);
        REQUIRE(peaks.size() == 2);
        CHECK(peaks[1] - peaks[0] == Approx(0.7).margin(1e-3));
    }
    SECTION("delta_e = delta_fss / 2 merges the inner peaks") {
        d.delta_e = 0.35;
        const auto s = doublet_spectrum(d, grid);
        const auto peaks = find_peaks(s, 0.2);
        REQUIRE(peaks.size() == 3);
        CHECK(peaks[1] == Approx(1600.0).margin(1e-3));
        CHECK(peaks[0] == Approx(1600.0 - 0.7).margin(d.gamma_h));
        CHECK(peaks[2] == Approx(1600.0 + 0.7).margin(d.gamma_h));
    }
    SECTION("equal intensities give a symmetric spectrum") {
        d.delta_e = 0.2;
        const auto s = doublet_spectrum(d, grid);
        for (std::size_t i = 0; i < grid.size() / 2; i += 11)
            CHECK(s.counts[i] == Approx(s.counts[grid.size() - 1 - i]).epsilon(1e-9));
    }
}

TEST_CASE("classify_mixing", "[emitter][mixing]") {
    FineStructureDoublet d{1600.0, 0.7, 1.0, 0.35, 299.425e6, 0.0, 0.05, 0.05, 1.0};
    auto r = classify_mixing(d);
    CHECK(r.state == Mixing::fully_mixed);
    CHECK(r.inner_gap == Approx(0.0).margin(1e-15));
    CHECK(r.overlap == Approx(1.0));

    d.delta_e = 0.0;
    r = classify_mixing(d);
    CHECK(r.state == Mixing::separated);
    CHECK(r.overlap < 0.05);

    d.delta_e = 0.28;  // gap 0.14 = 2.8 gamma
    CHECK(classify_mixing(d).state == Mixing::partially_mixed);

    d.delta_fss = 0.0;
    for (double amp : {0.0, 0.3, 5.0}) {
        d.delta_e = amp;
        CHECK(classify_mixing(d).state == Mixing::fully_mixed);
    }
}

TEST_CASE("fit_pl_map with slow spectral jitter", "[emitter][map]") {
    PLMap map;
    map.energies = linspace(1598.5, 1601.5, 301);
    const std::vector<double> amps = {0.0, 0.2, 0.46, 0.3};
    const std::vector<double> jitter = {0.0, 0.04, -0.03, 0.02};
    for (std::size_t j = 0; j < amps.size(); ++j) {
        map.frequencies.push_back(300e6 + 1e6 * j);
        ModulatedEmitter e{1600.0 + jitter[j], 0.05, amps[j], map.frequencies.back(), 0.0, 800.0};
        map.columns.push_back(time_averaged_spectrum(e, map.energies).counts);
    }
    const auto fits = fit_pl_map(map, {1600.0, 0.06, 0.25, 300e6, 0.0, 500.0}, true);
    REQUIRE(fits.size() == amps.size());
    for (std::size_t j = 0; j < amps.size(); ++j) {
        CHECK(fits[j].emitter.delta_e == Approx(amps[j]).margin(1e-5));
        CHECK(fits[j].emitter.omega0 == Approx(1600.0 + jitter[j]).margin(1e-5));
    }
}
