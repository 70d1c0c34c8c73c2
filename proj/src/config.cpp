#include "sawspe/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sawspe {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"seed", "0", "64-bit RNG seed for all simulations"},
        {"threads", "1", "worker threads for simulations (0 = all cores); output does not depend on it"},
        {"lm.max_iterations", "200", "Levenberg-Marquardt iteration cap"},
        {"lm.xtol", "1e-8", "relative step convergence tolerance"},
        {"lm.ftol", "1e-15", "relative cost-reduction tolerance"},
        {"lm.gtol", "1e-13", "scaled gradient tolerance"},
        {"s11.window_linewidths", "5", "half-width of each mode's fit window in linewidths"},
        {"s11.background", "false", "fit a complex affine background"},
        {"s11.local_passes", "2", "per-mode refinement passes before the joint fit"},
        {"s11.min_improvement", "0.5", "required fractional SSR drop for a resonance to count"},
        {"s11.dip_prominence", "0.05", "|S11|^2 prominence for automatic dip seeding"},
        {"s11.q_guess", "1000", "starting Qi and Qe when no dip estimate is available"},
        {"spectrum.quadrature_samples", "512", "phase samples per period (floor)"},
        {"spectrum.f_threshold", "10", "F statistic needed to keep the modulated model"},
        {"spectrum.background_slope", "false", "add a linear background slope"},
        {"spectrum.unit", "mev", "unit of written spectra: mev or nm"},
        {"strobe.bins", "128", "phase bins per drive period"},
        {"strobe.n_pulses", "1000000", "excitation pulses"},
        {"strobe.pulse_period_ps", "12500", "excitation pulse spacing (ps)"},
        {"strobe.lifetime_ps", "2000", "radiative lifetime (ps)"},
        {"strobe.jitter_ps", "0", "Gaussian detector jitter sigma (ps), 0 = off"},
        {"filter.low", "1601", "lower passband edge (filter.unit)"},
        {"filter.high", "1604", "upper passband edge (filter.unit)"},
        {"filter.unit", "mev", "passband edge unit: mev or nm"},
        {"filter.edge_width_mev", "0", "raised-cosine edge width (meV), 0 = ideal"},
        {"g2.window_ps", "50000", "maximum |delay| (ps)"},
        {"g2.bin_width_ps", "250", "delay bin width (ps)"},
        {"g2.channel_a", "0", "start channel"},
        {"g2.channel_b", "1", "stop channel"},
        {"g2.duration_ps", "0", "acquisition time for the rate estimate (ps), 0 = record span"},
        {"g2.pulsed_period_ps", "0", "repetition period for pulsed g2 (ps), 0 = CW fit"},
        {"g2.pulsed_half_width_ps", "0", "peak integration half width (ps), 0 = quarter period"},
        {"lifetime.start_offset", "2", "first fitted bin after the maximum"},
        {"lifetime.min_f", "10", "F statistic needed to accept a decay"},
        {"sweep.cut_dbm", "none", "saturation cut: none, auto, or a power in dBm"},
        {"sweep.saturation_margin", "0.2", "fractional RSS drop needed to accept a plateau"},
        {"strain.d_coupling", "30", "deformation potential (meV per % strain)"},
        {"strain.ref_percent", "0.0119", "reference strain amplitude (%)"},
        {"strain.ref_dbm", "0", "power of the reference strain (dBm)"},
    };
    return keys;
}

RunConfig::RunConfig() {
    for (const auto& k : config_keys()) values_.emplace(std::string(k.name), std::string(k.default_value));
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    load_text(ss.str(), path.string());
}

void RunConfig::load_text(std::string_view text, const std::string& source) {
    std::size_t number = 0;
    while (!text.empty()) {
        ++number;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        try {
            set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

void RunConfig::apply_environment() {
    if (const char* s = std::getenv("SAWSPE_SEED")) set("seed", s);
    if (const char* s = std::getenv("SAWSPE_THREADS")) set("threads", s);
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    if (value.empty()) throw ConfigError("empty value for '" + key + "'");
    it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    return it->second;
}

double RunConfig::get_double(const std::string& key) const {
    const auto& s = get(key);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ConfigError("'" + key + "' expects a number, got '" + s + "'");
    return v;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
    const auto& s = get(key);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError("'" + key + "' expects an integer, got '" + s + "'");
    return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const auto& s = get(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + s + "'");
    return v;
}

bool RunConfig::get_bool(const std::string& key) const {
    const auto& s = get(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + s + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::snapshot() const {
    return {values_.begin(), values_.end()};
}

}  // namespace sawspe
