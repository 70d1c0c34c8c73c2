#include "sawspe/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sawspe/config.hpp"
#include "sawspe/emitter.hpp"
#include "sawspe/error.hpp"
#include "sawspe/io.hpp"
#include "sawspe/photonstats.hpp"
#include "sawspe/resonator.hpp"
#include "sawspe/rng.hpp"
#include "sawspe/strobe.hpp"
#include "sawspe/sweep.hpp"
#include "sawspe/units.hpp"

namespace sawspe::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string report = "-";
    std::string curve;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "key = value configuration file");
    sub->add_option("--set", c.sets, "override a configuration key (key=value), repeatable");
    sub->add_option("--seed", c.seed, "RNG seed (overrides config and SAWSPE_SEED)");
    sub->add_option("--threads", c.threads, "worker threads (overrides config and SAWSPE_THREADS)");
    sub->add_option("--report", c.report, "report destination, - for stdout")->capture_default_str();
    sub->add_option("--curve", c.curve, "optional CSV curve destination");
}

RunConfig build_config(const Common& c) {
    RunConfig cfg;
    if (!c.config_path.empty()) cfg.load_file(c.config_path);
    cfg.apply_environment();
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) cfg.set("seed", std::to_string(*c.seed));
    if (c.threads) cfg.set("threads", std::to_string(*c.threads));
    // Validate every typed key up front so a bad value is a usage error.
    for (const auto& k : config_keys()) {
        const std::string name(k.name);
        const auto& v = cfg.get(name);
        if (name == "spectrum.unit" || name == "filter.unit") {
            if (v != "mev" && v != "nm") throw ConfigError("'" + name + "' must be mev or nm");
        } else if (name == "sweep.cut_dbm") {
            if (v != "none" && v != "auto") cfg.get_double(name);
        } else if (name == "s11.background" || name == "spectrum.background_slope") {
            cfg.get_bool(name);
        } else {
            cfg.get_double(name);
        }
    }
    return cfg;
}

fit::LmOptions lm_options(const RunConfig& cfg) {
    fit::LmOptions lm;
    lm.max_iterations = static_cast<int>(cfg.get_int("lm.max_iterations"));
    lm.xtol = cfg.get_double("lm.xtol");
    lm.ftol = cfg.get_double("lm.ftol");
    lm.gtol = cfg.get_double("lm.gtol");
    return lm;
}

int config_int(const RunConfig& cfg, const std::string& key, std::int64_t lo) {
    const auto v = cfg.get_int(key);
    if (v < lo || v > 1'000'000'000) throw ConfigError("'" + key + "' out of range");
    return static_cast<int>(v);
}

strobe::BandpassFilter filter_from(const RunConfig& cfg) {
    double lo = cfg.get_double("filter.low"), hi = cfg.get_double("filter.high");
    if (cfg.get("filter.unit") == "nm") {
        if (!(lo > 0.0) || !(hi > 0.0)) throw ConfigError("filter edges in nm must be positive");
        const double a = units::nm_to_mev(lo), b = units::nm_to_mev(hi);
        lo = std::min(a, b);
        hi = std::max(a, b);
    }
    strobe::BandpassFilter f{lo, hi, cfg.get_double("filter.edge_width_mev")};
    f.validate();
    return f;
}

// Stages every output, then moves files into place only once all of them
// are written. Anything bound for "-" is printed after the files succeed.
class Outputs {
public:
    explicit Outputs(std::ostream& out) : out_(out) {}

    void add(const std::string& path, std::string contents) {
        if (path.empty()) return;
        items_.emplace_back(path, std::move(contents));
    }

    void commit() {
        std::vector<fs::path> staged;
        auto cleanup = [&] {
            std::error_code ec;
            for (const auto& p : staged) fs::remove(p, ec);
        };
        for (const auto& [path, text] : items_) {
            if (path == "-") continue;
            fs::path tmp = path;
            tmp += ".part";
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            if (!f) {
                cleanup();
                throw IoError("cannot write " + path);
            }
            staged.push_back(tmp);
            f.write(text.data(), static_cast<std::streamsize>(text.size()));
            f.close();
            if (!f) {
                cleanup();
                throw IoError("failed writing " + path);
            }
        }
        std::size_t k = 0;
        for (const auto& [path, text] : items_) {
            if (path == "-") continue;
            std::error_code ec;
            fs::rename(staged[k], path, ec);
            if (ec) {
                cleanup();
                throw IoError("cannot move output into place at " + path);
            }
            ++k;
        }
        for (const auto& [path, text] : items_)
            if (path == "-") out_ << text;
        out_.flush();
    }

private:
    std::ostream& out_;
    std::vector<std::pair<std::string, std::string>> items_;
};

void finish(FitReport& rep, const RunConfig& cfg, const Common& c, Outputs& outputs,
            const std::optional<io::Curve>& curve = std::nullopt) {
    rep.config_snapshot = cfg.snapshot();
    if (curve && !c.curve.empty()) outputs.add(c.curve, io::format_curve(*curve));
    outputs.add(c.report, io::format_report(rep));
    outputs.commit();
}

std::string fmt(double v) { return io::format_9g(v); }

// ---------------------------------------------------------------- S11

struct FitS11Args {
    std::string input;
    std::vector<double> guess;
};

int cmd_fit_s11(const Common& c, const FitS11Args& a, std::ostream& out) {
    const auto cfg = build_config(c);
    const auto bytes = io::read_file(a.input);
    const auto spec = io::parse_touchstone_text(bytes, a.input);

    const double prominence = cfg.get_double("s11.dip_prominence");
    const double q_guess = cfg.get_double("s11.q_guess");
    if (!(q_guess > 0.0)) throw ConfigError("'s11.q_guess' must be positive");
    std::vector<resonator::ResonatorMode> initial;
    if (a.guess.empty()) {
        initial = resonator::detect_dips(spec, prominence);
        if (initial.empty()) throw DataError("no resonance found: no dips above the prominence threshold");
    } else {
        // Q seeds come from the nearest detected dip within one of its linewidths.
        const auto dips = resonator::detect_dips(spec, prominence);
        for (double f : a.guess) {
            if (!(f > 0.0)) throw UsageError("--guess frequencies must be positive");
            resonator::ResonatorMode m{f, q_guess, q_guess};
            const resonator::ResonatorMode* nearest = nullptr;
            for (const auto& d : dips)
                if (!nearest || std::abs(d.f_n - f) < std::abs(nearest->f_n - f)) nearest = &d;
            if (nearest && std::abs(nearest->f_n - f) <= nearest->f_n * (1.0 / nearest->q_i + 1.0 / nearest->q_e)) {
                m.q_i = nearest->q_i;
                m.q_e = nearest->q_e;
            }
            initial.push_back(m);
        }
    }

    resonator::FitS11Options opt;
    opt.window_linewidths = cfg.get_double("s11.window_linewidths");
    opt.background = cfg.get_bool("s11.background");
    opt.local_passes = config_int(cfg, "s11.local_passes", 0);
    opt.min_improvement = cfg.get_double("s11.min_improvement");
    opt.lm = lm_options(cfg);
    auto result = resonator::fit_s11(spec, initial, opt);
    auto& rep = result.report;
    rep.input_digest = content_digest(bytes);

    io::Curve curve{{"frequency_hz", "re_data", "im_data", "re_fit", "im_fit", "abs_data", "abs_fit"},
                    std::vector<std::vector<double>>(7)};
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const double f = spec.frequencies[i];
        std::complex<double> m = 1.0;
        for (const auto& mode : result.modes) m *= resonator::s11_model(f, mode);
        if (result.background_offset) {
            auto bg = *result.background_offset;
            if (result.background_slope)
                bg += *result.background_slope * ((f - result.background_reference_hz) / 1e6);
            m *= bg;
        }
        const double row[] = {f, spec.values[i].real(), spec.values[i].imag(), m.real(), m.imag(),
                              std::abs(spec.values[i]), std::abs(m)};
        for (std::size_t k = 0; k < 7; ++k) curve.columns[k].push_back(row[k]);
    }
    Outputs outputs(out);
    finish(rep, cfg, c, outputs, curve);
    return 0;
}

struct SimS11Args {
    std::string modes;
    double start = 297.5e6;
    double stop = 304.5e6;
    std::size_t points = 7001;
    double noise = 0.0;
    std::string output;
};

std::vector<resonator::ResonatorMode> parse_modes(const std::string& text) {
    std::vector<resonator::ResonatorMode> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        resonator::ResonatorMode m;
        char c1 = 0, c2 = 0;
        std::istringstream is(item);
        if (!(is >> m.f_n >> c1 >> m.q_i >> c2 >> m.q_e) || c1 != ':' || c2 != ':' || !(is >> std::ws).eof())
            throw UsageError("--modes expects f:qi:qe[,f:qi:qe...], got '" + item + "'");
        out.push_back(m);
    }
    if (out.empty()) throw UsageError("--modes is empty");
    return out;
}

int cmd_sim_s11(const Common& c, const SimS11Args& a, std::ostream& out) {
    const auto cfg = build_config(c);
    const auto modes = a.modes.empty() ? std::vector<resonator::ResonatorMode>{{298.425e6, 1300, 5900},
                                                                               {299.425e6, 3000, 800},
                                                                               {300.975e6, 1600, 2300},
                                                                               {303.561e6, 1700, 6000}}
                                       : parse_modes(a.modes);
    if (a.points < 2) throw UsageError("--points must be at least 2");
    if (!(a.noise >= 0.0)) throw UsageError("--noise must be non-negative");
    std::vector<std::string> warnings;
    const auto spec = resonator::synthesize_s11(modes, resonator::linear_grid(a.start, a.stop, a.points), a.noise,
                                                cfg.get_u64("seed"), &warnings);

    FitReport rep;
    rep.model_name = "s11_synthesis";
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const auto pre = "mode" + std::to_string(k) + ".";
        rep.add(pre + "f_n", modes[k].f_n, 0.0, "Hz");
        rep.add(pre + "q_i", modes[k].q_i, 0.0, "");
        rep.add(pre + "q_e", modes[k].q_e, 0.0, "");
        rep.annotate(pre + "coupling", resonator::to_string(resonator::classify_coupling(modes[k])));
    }
    rep.n_points = spec.size();
    rep.converged = true;
    rep.warnings = warnings;
    rep.annotate("noise_sigma", fmt(a.noise));

    const auto text = io::format_touchstone(spec);
    rep.annotate("output_digest", content_digest(text));
    Outputs outputs(out);
    outputs.add(a.output, text);
    finish(rep, cfg, c, outputs);
    return 0;
}

// ---------------------------------------------------------------- spectra

struct EmitterArgs {
    double omega0 = 1600.0;
    double gamma = 0.05;
    double delta_e = 0.46;
    double f_rf = 303.5e6;
    double phase0 = 0.0;
};

void add_emitter(CLI::App* sub, EmitterArgs& e, bool guess) {
    const std::string suffix = guess ? " (starting guess)" : "";
    sub->add_option("--omega0", e.omega0, "line center, meV" + suffix)->capture_default_str();
    sub->add_option("--gamma", e.gamma, "Lorentzian HWHM, meV" + suffix)->capture_default_str();
    sub->add_option("--delta-e", e.delta_e, "modulation amplitude, meV" + suffix)->capture_default_str();
    sub->add_option("--f-rf", e.f_rf, "drive frequency, Hz")->capture_default_str();
    sub->add_option("--phase0", e.phase0, "modulation phase, rad" + suffix)->capture_default_str();
}

struct SimSpectrumArgs {
    EmitterArgs emitter;
    double amplitude = 1.0;
    double background = 0.0;
    std::optional<double> start, stop;
    std::size_t points = 1001;
    bool poisson = false;
    std::string output;
};

int cmd_sim_spectrum(const Common& c, const SimSpectrumArgs& a, std::ostream& out) {
    const auto cfg = build_config(c);
    emitter::ModulatedEmitter e{a.emitter.omega0, a.emitter.gamma, a.emitter.delta_e,
                                a.emitter.f_rf,   a.emitter.phase0, a.amplitude};
    const double half = a.emitter.delta_e + 20.0 * a.emitter.gamma;
    const double lo = a.start.value_or(a.emitter.omega0 - half), hi = a.stop.value_or(a.emitter.omega0 + half);
    if (a.points < 2 || !(hi > lo)) throw UsageError("need --points >= 2 and --stop > --start");
    if (!(a.background >= 0.0)) throw UsageError("--background must be non-negative");
    std::vector<double> grid(a.points);
    for (std::size_t i = 0; i < a.points; ++i)
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(a.points - 1);

    std::vector<std::string> warnings;
    const int samples = config_int(cfg, "spectrum.quadrature_samples", 4);
    auto spec = emitter::time_averaged_spectrum(e, grid, samples, &warnings);
    for (auto& v : spec.counts) v += a.background;
    if (a.poisson) {
        const Philox4x32 gen(cfg.get_u64("seed"));
        for (std::size_t i = 0; i < spec.size(); ++i) {
            CounterStream rs(gen, i);
            spec.counts[i] = static_cast<double>(poisson(rs, spec.counts[i]));
        }
    }

    FitReport rep;
    rep.model_name = e.delta_e > 0.0 ? "modulated_lorentzian" : "lorentzian";
    rep.add("omega0", e.omega0, 0.0, "meV");
    rep.add("gamma", e.gamma, 0.0, "meV");
    rep.add("delta_e", e.delta_e, 0.0, "meV");
    rep.add("amplitude", e.amplitude, 0.0, "counts");
    rep.add("background", a.background, 0.0, "counts");
    rep.n_points = spec.size();
    rep.converged = true;
    rep.warnings = warnings;
    rep.annotate("quadrature_samples", std::to_string(emitter::required_quadrature_samples(e.gamma, e.delta_e, samples)));
    rep.annotate("poisson_noise", a.poisson ? "true" : "false");
    const auto peaks = emitter::find_peaks(spec);
    rep.annotate("peak_count", std::to_string(peaks.size()));
    rep.annotate("peak_separation_mev", fmt(emitter::peak_separation(spec)));

    const auto unit = cfg.get("spectrum.unit") == "nm" ? io::SpectrumUnit::nm : io::SpectrumUnit::mev;
    const auto text = io::format_spectrum_csv(spec, unit);
    rep.annotate("output_digest", content_digest(text));
    Outputs outputs(out);
    outputs.add(a.output, text);
    finish(rep, cfg, c, outputs);
    return 0;
}

struct FitSpectrumArgs {
    std::string input;
    double f_rf = 303.5e6;
    std::optional<double> omega0, gamma, delta_e;
};

int cmd_fit_spectrum(const Common& c, const FitSpectrumArgs& a, std::ostream& out) {
    const auto cfg = build_config(c);
    const auto bytes = io::read_file(a.input);
    const auto spec = io::parse_spectrum_csv_text(bytes, a.input);
    auto guess = emitter::guess_emitter(spec, a.f_rf);
    if (a.omega0) guess.omega0 = *a.omega0;
    if (a.gamma) guess.gamma = *a.gamma;
    if (a.delta_e) guess.delta_e = *a.delta_e;

    emitter::LineshapeFitOptions opt;
    opt.quadrature_samples = config_int(cfg, "spectrum.quadrature_samples", 4);
    opt.f_threshold = cfg.get_double("spectrum.f_threshold");
    opt.background_slope = cfg.get_bool("spectrum.background_slope");
    opt.lm = lm_options(cfg);
    auto fit = emitter::fit_modulated_lineshape(spec, guess, opt);
    fit.report.input_digest = content_digest(bytes);

    auto model_emitter = fit.emitter;
    if (!fit.modulated) model_emitter.delta_e = 0.0;
    const auto model = emitter::time_averaged_spectrum(model_emitter, spec.energies, opt.quadrature_samples);
    const double mid = 0.5 * (spec.energies.front() + spec.energies.back());
    io::Curve curve{{"energy_mev", "counts", "fit"}, {spec.energies, spec.counts, {}}};
    for (std::size_t i = 0; i < spec.size(); ++i)
        curve.columns[2].push_back(model.counts[i] + fit.background + fit.background_slope * (spec.energies[i] - mid));
    Outputs outputs(out);
    finish(fit.report, cfg, c, outputs, curve);
    return 0;
}

// ---------------------------------------------------------------- strobe

struct SimStrobeArgs {
    EmitterArgs emitter{1600.0, 1.0, 1.97, 303.5e6, 0.0};
    std::string output;
    std::string tags;
};

strobe::StrobeConfig strobe_config(const RunConfig& cfg) {
    strobe::StrobeConfig sc;
    sc.n_pulses = cfg.get_u64("strobe.n_pulses");
    sc.pulse_period = cfg.get_double("strobe.pulse_period_ps") / units::kPsPerSecond;
    sc.lifetime = cfg.get_double("strobe.lifetime_ps") / units::kPsPerSecond;
    sc.jitter_sigma = cfg.get_double("strobe.jitter_ps") / units::kPsPerSecond;
    sc.bins = config_int(cfg, "strobe.bins", 1);
    sc.seed = cfg.get_u64("seed");
    sc.threads = config_int(cfg, "threads", 0);
    return sc;
}

int cmd_sim_strobe(const Common& c, const SimStrobeArgs& a, std::ostream& out) {
    const auto cfg = build_config(c);
    const emitter::ModulatedEmitter e{a.emitter.omega0, a.emitter.gamma, a.emitter.delta_e,
                                      a.emitter.f_rf,   a.emitter.phase0, 1.0};
    const auto filter = filter_from(cfg);
    const auto sc = strobe_config(cfg);
    const auto run = strobe::simulate_photon_stream(e, filter, sc);
    const auto expected = strobe::expected_histogram(e, filter, sc);
    const auto& h = run.histogram;

    FitReport rep;
    rep.model_name = "strobe_simulation";
    rep.add("detected", static_cast<double>(h.total_detected), 0.0, "photons");
    rep.add("emitted", static_cast<double>(h.total_emitted), 0.0, "photons");
    rep.n_points = h.bins();
    rep.converged = true;
    if (h.total_detected > 0) {
        rep.annotate("chi2_per_dof", fmt(strobe::chi2_per_dof(h, expected)));
        const auto harm = strobe::harmonic_analysis(h, e.f_rf);
        rep.add("harmonic1", harm.magnitude1, 0.0, "");
        rep.add("harmonic1_phase", harm.phase1, 0.0, "rad");
        rep.add("harmonic2", harm.magnitude2, 0.0, "");
        rep.add("harmonic2_phase", harm.phase2, 0.0, "rad");
        rep.annotate("dominant_harmonic", std::to_string(harm.dominant));
    } else {
        rep.warnings.push_back("no photons passed the filter");
    }

    io::Curve curve{{"phase_time_s", "count", "expected"}, std::vector<std::vector<double>>(3)};
    for (std::size_t j = 0; j < h.bins(); ++j) {
        curve.columns[0].push_back(0.5 * (h.bin_edges[j] + h.bin_edges[j + 1]));
        curve.columns[1].push_back(static_cast<double>(h.counts[j]));
        curve.columns[2].push_back(expected[j]);
    }
    const auto text = io::format_strobe_histogram(h);
    rep.annotate("output_digest", content_digest(text));
    Outputs outputs(out);
    outputs.add(a.output, text);
    if (!a.tags.empty()) {
        const bool binary = fs::path(a.tags).extension() == ".bin";
        outputs.add(a.tags, binary ? io::format_timetags_binary(run.records) : io::format_timetags_csv(run.records));
    }
    finish(rep, cfg, c, outputs, curve);
    return 0;
}

struct FitStrobeArgs {
    std::string input;
    EmitterArgs emitter{1600.0, 1.0, 1.0, 303.5e6, 0.0};
};

int cmd_fit_strobe(const Common& c, const FitStrobeArgs& a, std::ostream& out) {
    const auto cfg = build_config(c);
    const auto bytes = io::read_file(a.input);
    const auto h = io::parse_strobe_histogram_text(bytes, a.input);
    emitter::ModulatedEmitter guess{a.emitter.omega0, a.emitter.gamma, a.emitter.delta_e,
                                    1.0 / h.period(), a.emitter.phase0, 1.0};
    const auto filter = filter_from(cfg);
    strobe::StrobeFitOptions opt;
    opt.lm = lm_options(cfg);
    auto rep = strobe::fit_strobe(h, guess, filter, opt);
    rep.input_digest = content_digest(bytes);

    auto fitted = guess;
    fitted.delta_e = rep.value("delta_e");
    fitted.phase0 = rep.value("phase0");
    const double scale = rep.value("scale");
    io::Curve curve{{"phase_time_s", "count", "fit"}, std::vector<std::vector<double>>(3)};
    for (std::size_t j = 0; j < h.bins(); ++j) {
        const double t = 0.5 * (h.bin_edges[j] + h.bin_edges[j + 1]);
        curve.columns[0].push_back(t);
        curve.columns[1].push_back(static_cast<double>(h.counts[j]));
        curve.columns[2].push_back(scale * strobe::acceptance_probability(fitted, filter, t));
    }
    Outputs outputs(out);
    finish(rep, cfg, c, outputs, curve);
    return 0;
}

// ---------------------------------------------------------------- photon statistics

struct InputArgs {
    std::string input;
};

int cmd_g2(const Common& c, const InputArgs& a, std::ostream& out) {
    const auto cfg = build_config(c);
    const auto bytes = io::read_file(a.input);
    const auto records = io::parse_timetags_bytes(bytes, a.input);
    const auto window = cfg.get_int("g2.window_ps");
    const auto bw = cfg.get_int("g2.bin_width_ps");
    const auto ch_a = cfg.get_u64("g2.channel_a"), ch_b = cfg.get_u64("g2.channel_b");
    if (ch_a > 0xFFFFFFFFu || ch_b > 0xFFFFFFFFu) throw ConfigError("g2 channel out of range");
    photonstats::CorrelateOptions copt;
    if (const double d = cfg.get_double("g2.duration_ps"); d > 0.0) copt.duration_ps = d;
    const auto hist = photonstats::correlate(records, static_cast<std::uint32_t>(ch_a),
                                             static_cast<std::uint32_t>(ch_b), window, bw, copt);
    const auto g = hist.g2();

    FitReport rep;
    std::vector<double> model(hist.bins(), std::nan(""));
    const double period = cfg.get_double("g2.pulsed_period_ps");
    if (period > 0.0) {
        double half = cfg.get_double("g2.pulsed_half_width_ps");
        if (!(half > 0.0)) half = 0.25 * period;
        const auto p = photonstats::pulsed_g2(hist, period, half);
        rep.model_name = "pulsed_g2";
        rep.add("g2_0", p.ratio, p.stderr_, "");
        rep.n_points = hist.bins();
        rep.converged = true;
        rep.annotate("side_peaks", std::to_string(p.side_peaks));
        rep.annotate("single_emitter", p.ratio < 0.5 ? "true" : "false");
    } else {
        photonstats::G2FitOptions gopt;
        gopt.lm = lm_options(cfg);
        rep = photonstats::fit_g2(hist, gopt);
        const double g0 = rep.value("g2_0"), tau0 = rep.value("tau0");
        for (std::size_t i = 0; i < hist.bins(); ++i)
            model[i] = 1.0 - (1.0 - g0) * std::exp(-std::abs(hist.center(i)) / tau0);
    }
    for (const auto& w : hist.warnings) rep.warnings.push_back(w);
    rep.annotate("normalization", fmt(hist.normalization));
    rep.input_digest = content_digest(bytes);

    io::Curve curve{{"tau_ps", "count", "g2", "fit"}, std::vector<std::vector<double>>(4)};
    for (std::size_t i = 0; i < hist.bins(); ++i) {
        curve.columns[0].push_back(hist.center(i));
        curve.columns[1].push_back(static_cast<double>(hist.counts[i]));
        curve.columns[2].push_back(g[i]);
        curve.columns[3].push_back(model[i]);
    }
    Outputs outputs(out);
    finish(rep, cfg, c, outputs, curve);
    return 0;
}

int cmd_lifetime(const Common& c, const InputArgs& a, std::ostream& out) {
    const auto cfg = build_config(c);
    const auto bytes = io::read_file(a.input);
    const auto decay = io::parse_decay_csv_text(bytes, a.input);
    photonstats::LifetimeFitOptions opt;
    opt.start_offset = config_int(cfg, "lifetime.start_offset", 0);
    opt.min_f_statistic = cfg.get_double("lifetime.min_f");
    opt.lm = lm_options(cfg);
    auto rep = photonstats::fit_lifetime(decay, opt);
    rep.input_digest = content_digest(bytes);

    const auto peak = static_cast<std::size_t>(std::max_element(decay.counts.begin(), decay.counts.end()) -
                                               decay.counts.begin());
    const std::size_t start = peak + static_cast<std::size_t>(opt.start_offset);
    const double tau = rep.value("tau"), amp = rep.value("amplitude"), bg = rep.value("background");
    io::Curve curve{{"time_ps", "counts", "fit"}, {decay.time_ps, decay.counts, {}}};
    for (std::size_t i = 0; i < decay.size(); ++i)
        curve.columns[2].push_back(i < start ? std::nan("")
                                             : amp * std::exp(-(decay.time_ps[i] - decay.time_ps[start]) / tau) + bg);
    Outputs outputs(out);
    finish(rep, cfg, c, outputs, curve);
    return 0;
}

// ---------------------------------------------------------------- sweep and strain

int cmd_power_sweep(const Common& c, const InputArgs& a, std::ostream& out) {
    const auto cfg = build_config(c);
    const auto bytes = io::read_file(a.input);
    const auto pts = io::parse_sweep_csv_text(bytes, a.input);
    sweep::SqrtPOptions opt;
    opt.saturation_margin = cfg.get_double("sweep.saturation_margin");
    const auto& cut = cfg.get("sweep.cut_dbm");
    if (cut == "auto") opt.auto_cut = true;
    else if (cut != "none") opt.saturation_cut_dbm = cfg.get_double("sweep.cut_dbm");
    auto rep = sweep::fit_sqrtp(pts, opt);
    rep.input_digest = content_digest(bytes);

    if (pts.size() >= 2 && std::all_of(pts.begin(), pts.end(), [](const auto& p) { return p.delta_e > 0.0; })) {
        const auto ex = sweep::loglog_exponent(pts);
        rep.annotate("loglog_exponent", fmt(ex.value));
        rep.annotate("loglog_exponent_stderr", fmt(ex.stderr_));
    } else {
        rep.warnings.push_back("log-log exponent skipped: some delta_e are zero");
    }
    const auto sat = sweep::saturation_analysis(pts, opt.saturation_margin);
    rep.annotate("saturation_breakpoint_dbm", sat.breakpoint_dbm ? fmt(*sat.breakpoint_dbm) : "none");

    const double s = rep.value("slope"), k = rep.value("linear_coeff");
    io::Curve curve{{"p_dbm", "delta_e_mev", "sqrt_fit", "linear_fit"}, std::vector<std::vector<double>>(4)};
    for (const auto& p : pts) {
        curve.columns[0].push_back(p.p_dbm);
        curve.columns[1].push_back(p.delta_e);
        curve.columns[2].push_back(s * std::sqrt(p.p_mw()));
        curve.columns[3].push_back(k * p.p_mw());
    }
    Outputs outputs(out);
    finish(rep, cfg, c, outputs, curve);
    return 0;
}

struct StrainArgs {
    std::optional<double> strain;
    std::optional<double> shift;
    std::optional<double> power;
};

int cmd_strain(const Common& c, const StrainArgs& a, std::ostream& out) {
    const auto cfg = build_config(c);
    const int given = (a.strain ? 1 : 0) + (a.shift ? 1 : 0) + (a.power ? 1 : 0);
    if (given != 1) throw UsageError("strain: give exactly one of --strain, --shift, --power");
    sweep::StrainModel m{cfg.get_double("strain.d_coupling"), cfg.get_double("strain.ref_percent"),
                         cfg.get_double("strain.ref_dbm")};
    double strain = 0.0, shift = 0.0;
    FitReport rep;
    rep.model_name = "strain_conversion";
    if (a.strain) {
        strain = *a.strain;
        shift = sweep::strain_to_shift(m, strain);
    } else if (a.shift) {
        shift = *a.shift;
        strain = sweep::shift_to_strain(m, shift);
    } else {
        strain = sweep::strain_at_power(m, *a.power);
        shift = sweep::strain_to_shift(m, strain);
        rep.annotate("power_dbm", fmt(*a.power));
    }
    rep.add("strain", strain, 0.0, "%");
    rep.add("shift", shift, 0.0, "meV");
    rep.n_points = rep.parameters.size();
    rep.converged = true;
    rep.annotate("d_coupling", fmt(m.d_coupling));
    Outputs outputs(out);
    finish(rep, cfg, c, outputs);
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Analysis and simulation toolkit for acoustically modulated single-photon emitters", "sawspe"};
    app.require_subcommand(1);
    app.fallthrough(false);

    std::map<std::string, Common> common;
    auto sub = [&](const std::string& name, const std::string& desc) {
        auto* s = app.add_subcommand(name, desc);
        add_common(s, common[name]);
        return s;
    };

    FitS11Args fit_s11;
    auto* s_fit_s11 = sub("fit-s11", "fit resonator modes to a one-port Touchstone file");
    s_fit_s11->add_option("--input", fit_s11.input, "Touchstone .s1p file")->required();
    s_fit_s11->add_option("--guess", fit_s11.guess, "comma-separated starting mode frequencies (Hz)")->delimiter(',');

    SimS11Args sim_s11;
    auto* s_sim_s11 = sub("sim-s11", "synthesize a multi-mode reflection spectrum");
    s_sim_s11->add_option("--modes", sim_s11.modes, "f:qi:qe[,f:qi:qe...] (default: four-mode reference device)");
    s_sim_s11->add_option("--start", sim_s11.start, "first frequency (Hz)")->capture_default_str();
    s_sim_s11->add_option("--stop", sim_s11.stop, "last frequency (Hz)")->capture_default_str();
    s_sim_s11->add_option("--points", sim_s11.points, "grid points")->capture_default_str();
    s_sim_s11->add_option("--noise", sim_s11.noise, "Gaussian noise per quadrature")->capture_default_str();
    s_sim_s11->add_option("--output", sim_s11.output, "Touchstone destination")->required();

    SimSpectrumArgs sim_spec;
    auto* s_sim_spec = sub("sim-spectrum", "time-averaged PL spectrum of a modulated emitter");
    add_emitter(s_sim_spec, sim_spec.emitter, false);
    s_sim_spec->add_option("--amplitude", sim_spec.amplitude, "peak counts of the unmodulated line")->capture_default_str();
    s_sim_spec->add_option("--background", sim_spec.background, "constant background counts")->capture_default_str();
    s_sim_spec->add_option("--start", sim_spec.start, "first energy (meV)");
    s_sim_spec->add_option("--stop", sim_spec.stop, "last energy (meV)");
    s_sim_spec->add_option("--points", sim_spec.points, "grid points")->capture_default_str();
    s_sim_spec->add_flag("--poisson", sim_spec.poisson, "replace counts by Poisson draws");
    s_sim_spec->add_option("--output", sim_spec.output, "spectrum CSV destination")->required();

    FitSpectrumArgs fit_spec;
    auto* s_fit_spec = sub("fit-spectrum", "fit the modulated lineshape to a PL spectrum");
    s_fit_spec->add_option("--input", fit_spec.input, "spectrum CSV")->required();
    s_fit_spec->add_option("--f-rf", fit_spec.f_rf, "drive frequency (Hz)")->capture_default_str();
    s_fit_spec->add_option("--omega0", fit_spec.omega0, "starting line center (meV)");
    s_fit_spec->add_option("--gamma", fit_spec.gamma, "starting HWHM (meV)");
    s_fit_spec->add_option("--delta-e", fit_spec.delta_e, "starting modulation amplitude (meV)");

    SimStrobeArgs sim_strobe;
    auto* s_sim_strobe = sub("sim-strobe", "Monte Carlo stroboscopic photon stream");
    add_emitter(s_sim_strobe, sim_strobe.emitter, false);
    s_sim_strobe->add_option("--output", sim_strobe.output, "phase histogram destination")->required();
    s_sim_strobe->add_option("--tags", sim_strobe.tags, "optional time-tag destination (.bin for binary)");

    FitStrobeArgs fit_strobe;
    auto* s_fit_strobe = sub("fit-strobe", "fit the modulation to a stroboscopic histogram");
    s_fit_strobe->add_option("--input", fit_strobe.input, "phase histogram CSV")->required();
    s_fit_strobe->add_option("--omega0", fit_strobe.emitter.omega0, "line center, meV (held fixed)")->capture_default_str();
    s_fit_strobe->add_option("--gamma", fit_strobe.emitter.gamma, "Lorentzian HWHM, meV (held fixed)")->capture_default_str();
    s_fit_strobe->add_option("--delta-e", fit_strobe.emitter.delta_e, "starting modulation amplitude, meV")->capture_default_str();
    s_fit_strobe->add_option("--phase0", fit_strobe.emitter.phase0, "starting phase, rad")->capture_default_str();

    InputArgs g2_args, lifetime_args, sweep_args;
    auto* s_g2 = sub("g2", "second-order correlation of a time-tag file");
    s_g2->add_option("--input", g2_args.input, "time tags (CSV or 9-byte binary records)")->required();
    auto* s_lifetime = sub("lifetime", "exponential tail fit of a decay histogram");
    s_lifetime->add_option("--input", lifetime_args.input, "decay CSV")->required();
    auto* s_sweep = sub("power-sweep", "sqrt(P) analysis of modulation amplitude vs drive power");
    s_sweep->add_option("--input", sweep_args.input, "sweep CSV")->required();

    StrainArgs strain_args;
    auto* s_strain = sub("strain", "convert between strain, energy shift and drive power");
    s_strain->add_option("--strain", strain_args.strain, "strain amplitude (%)");
    s_strain->add_option("--shift", strain_args.shift, "energy shift (meV)");
    s_strain->add_option("--power", strain_args.power, "drive power (dBm), uses the reference strain");

    if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1])) {
        err << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
        return 1;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return 0;
        }
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*s_fit_s11) return cmd_fit_s11(common["fit-s11"], fit_s11, out);
        if (*s_sim_s11) return cmd_sim_s11(common["sim-s11"], sim_s11, out);
        if (*s_sim_spec) return cmd_sim_spectrum(common["sim-spectrum"], sim_spec, out);
        if (*s_fit_spec) return cmd_fit_spectrum(common["fit-spectrum"], fit_spec, out);
        if (*s_sim_strobe) return cmd_sim_strobe(common["sim-strobe"], sim_strobe, out);
        if (*s_fit_strobe) return cmd_fit_strobe(common["fit-strobe"], fit_strobe, out);
        if (*s_g2) return cmd_g2(common["g2"], g2_args, out);
        if (*s_lifetime) return cmd_lifetime(common["lifetime"], lifetime_args, out);
        if (*s_sweep) return cmd_power_sweep(common["power-sweep"], sweep_args, out);
        if (*s_strain) return cmd_strain(common["strain"], strain_args, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConvergenceError& e) {
        err << "error: fit did not converge after " << e.iterations() << " iterations: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    err << app.help();
    return 1;
}

}  // namespace sawspe::cli
