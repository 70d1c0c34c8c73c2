#include "sawspe/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sawspe/error.hpp"
#include "sawspe/units.hpp"

namespace sawspe::io {

namespace {

struct Line {
    std::size_t number;
    std::string_view text;
};

struct Field {
    std::string_view text;
    std::size_t column;  // 1-based
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<Line> split_lines(std::string_view text) {
    std::vector<Line> out;
    std::size_t number = 1;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back({number++, line});
        if (nl == std::string_view::npos) break;
        text.remove_prefix(nl + 1);
    }
    return out;
}

// Splits on commas (csv) or runs of whitespace, keeping 1-based columns.
std::vector<Field> split_fields(std::string_view line, bool csv) {
    std::vector<Field> out;
    if (csv) {
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            const std::string_view raw = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
            std::size_t lead = 0;
            while (lead < raw.size() && std::isspace(static_cast<unsigned char>(raw[lead]))) ++lead;
            out.push_back({trim(raw), start + lead + 1});
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
    } else {
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            if (i >= line.size()) break;
            const std::size_t b = i;
            while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            out.push_back({line.substr(b, i - b), b + 1});
        }
    }
    return out;
}

double to_double(const Field& f, const std::string& source, std::size_t line) {
    std::string_view s = f.text;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ParseError(source, line, f.column, "expected a finite number, got '" + std::string(f.text) + "'");
    return v;
}

std::uint64_t to_u64(const Field& f, const std::string& source, std::size_t line) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(f.text.data(), f.text.data() + f.text.size(), v);
    if (f.text.empty() || ec != std::errc{} || ptr != f.text.data() + f.text.size())
        throw ParseError(source, line, f.column, "expected a non-negative integer, got '" + std::string(f.text) + "'");
    return v;
}

bool is_blank_or_comment(std::string_view line) {
    const auto t = trim(line);
    return t.empty() || t.front() == '#';
}

// Expects the first non-comment line to be exactly `header` (case and
// spacing insensitive per field). Returns the index of the next line.
std::size_t expect_header(const std::vector<Line>& lines, std::size_t from, const std::vector<std::string>& header,
                          std::size_t optional_tail, const std::string& source, std::size_t* n_columns = nullptr) {
    for (std::size_t i = from; i < lines.size(); ++i) {
        if (is_blank_or_comment(lines[i].text)) continue;
        const auto fields = split_fields(lines[i].text, true);
        const std::size_t min = header.size() - optional_tail;
        bool ok = fields.size() >= min && fields.size() <= header.size();
        for (std::size_t k = 0; ok && k < fields.size(); ++k) ok = lower(fields[k].text) == header[k];
        if (!ok) {
            std::string want;
            for (std::size_t k = 0; k < header.size(); ++k) want += (k ? "," : "") + header[k];
            throw ParseError(source, lines[i].number, 0, "expected header '" + want + "'");
        }
        if (n_columns) *n_columns = fields.size();
        return i + 1;
    }
    throw ParseError(source, lines.empty() ? 1 : lines.back().number, 0, "empty input: no header");
}

std::vector<Field> row_fields(const Line& line, std::size_t expected, const std::string& source) {
    auto fields = split_fields(line.text, true);
    if (fields.size() != expected)
        throw ParseError(source, line.number, 0,
                         "expected " + std::to_string(expected) + " fields, found " + std::to_string(fields.size()));
    return fields;
}

void require_rows(std::size_t rows, const std::vector<Line>& lines, const std::string& source) {
    if (rows == 0) throw ParseError(source, lines.empty() ? 1 : lines.back().number, 0, "empty input: no data rows");
}

void put_u64_le(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("cannot read " + path.string());
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    if (path == "-") {
        std::cout.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        std::cout.flush();
        return;
    }
    std::filesystem::path tmp = path;
    tmp += ".part";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.close();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("failed writing " + path.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move output into place at " + path.string());
    }
}

std::string format_exact(double v) {
    char buf[40];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string format_9g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

resonator::S11Spectrum parse_touchstone_text(std::string_view text, const std::string& source) {
    if (trim(text).empty()) throw ParseError(source, 1, 0, "empty input");
    resonator::S11Spectrum s;
    double f_scale = 0.0;
    enum class Fmt { ri, ma, db } fmt = Fmt::ma;
    const auto lines = split_lines(text);
    for (const auto& line : lines) {
        std::string_view body = line.text.substr(0, line.text.find('!'));
        if (trim(body).empty()) continue;
        auto fields = split_fields(body, false);
        if (fields[0].text.front() == '#') {
            if (f_scale != 0.0) throw ParseError(source, line.number, fields[0].column, "second option line");
            // "#" may be glued to the first token.
            if (fields[0].text.size() > 1) {
                fields[0].text.remove_prefix(1);
                ++fields[0].column;
            } else {
                fields.erase(fields.begin());
            }
            f_scale = 1e9;
            for (std::size_t k = 0; k < fields.size(); ++k) {
                const std::string tok = lower(fields[k].text);
                if (tok == "hz") f_scale = 1.0;
                else if (tok == "khz") f_scale = 1e3;
                else if (tok == "mhz") f_scale = 1e6;
                else if (tok == "ghz") f_scale = 1e9;
                else if (tok == "s") continue;
                else if (tok == "y" || tok == "z" || tok == "h" || tok == "g")
                    throw ParseError(source, line.number, fields[k].column, "only S parameters are supported");
                else if (tok == "ri") fmt = Fmt::ri;
                else if (tok == "ma") fmt = Fmt::ma;
                else if (tok == "db") fmt = Fmt::db;
                else if (tok == "r") {
                    if (k + 1 >= fields.size()) throw ParseError(source, line.number, fields[k].column, "missing reference impedance");
                    to_double(fields[++k], source, line.number);
                } else {
                    throw ParseError(source, line.number, fields[k].column, "unknown option '" + std::string(fields[k].text) + "'");
                }
            }
            continue;
        }
        if (f_scale == 0.0) throw ParseError(source, line.number, 0, "data before the '#' option line");
        if (fields.size() != 3)
            throw ParseError(source, line.number, fields.size() > 3 ? fields[3].column : 0,
                             "one-port row needs 3 values, found " + std::to_string(fields.size()));
        const double f = to_double(fields[0], source, line.number) * f_scale;
        const double a = to_double(fields[1], source, line.number);
        const double b = to_double(fields[2], source, line.number);
        std::complex<double> v;
        switch (fmt) {
            case Fmt::ri: v = {a, b}; break;
            case Fmt::ma: v = std::polar(a, b * units::kPi / 180.0); break;
            case Fmt::db: v = std::polar(std::pow(10.0, a / 20.0), b * units::kPi / 180.0); break;
        }
        if (!s.frequencies.empty() && !(f > s.frequencies.back()))
            throw ParseError(source, line.number, fields[0].column, "frequencies must increase");
        s.frequencies.push_back(f);
        s.values.push_back(v);
    }
    if (f_scale == 0.0) throw ParseError(source, 1, 0, "missing '#' option line");
    require_rows(s.size(), lines, source);
    return s;
}

resonator::S11Spectrum parse_touchstone(const std::filesystem::path& path) {
    return parse_touchstone_text(read_file(path), path.string());
}

std::string format_touchstone(const resonator::S11Spectrum& s) {
    std::string out = "! one-port reflection\n# HZ S RI R 50\n";
    for (std::size_t i = 0; i < s.size(); ++i)
        out += format_exact(s.frequencies[i]) + " " + format_exact(s.values[i].real()) + " " +
               format_exact(s.values[i].imag()) + "\n";
    return out;
}

emitter::PLSpectrum parse_spectrum_csv_text(std::string_view text, const std::string& source) {
    if (trim(text).empty()) throw ParseError(source, 1, 0, "empty input");
    const auto lines = split_lines(text);
    std::optional<SpectrumUnit> unit;
    std::size_t i = 0;
    for (; i < lines.size(); ++i) {
        const auto t = trim(lines[i].text);
        if (t.empty()) continue;
        if (t.front() != '#') break;
        std::string body = lower(trim(t.substr(1)));
        body.erase(std::remove(body.begin(), body.end(), ' '), body.end());
        if (body.rfind("unit=", 0) == 0) {
            const auto u = body.substr(5);
            if (u == "nm") unit = SpectrumUnit::nm;
            else if (u == "mev") unit = SpectrumUnit::mev;
            else throw ParseError(source, lines[i].number, 0, "unit must be nm or mev");
        }
    }
    if (!unit) throw ParseError(source, 1, 0, "missing '# unit=nm|mev' header");
    const std::vector<std::string> header = *unit == SpectrumUnit::nm ? std::vector<std::string>{"wavelength_nm", "counts"}
                                                                      : std::vector<std::string>{"energy_mev", "counts"};
    i = expect_header(lines, i, header, 0, source);

    struct Row {
        double energy, counts;
        std::size_t line, column;
    };
    std::vector<Row> rows;
    for (; i < lines.size(); ++i) {
        if (is_blank_or_comment(lines[i].text)) continue;
        const auto f = row_fields(lines[i], 2, source);
        double x = to_double(f[0], source, lines[i].number);
        const double c = to_double(f[1], source, lines[i].number);
        if (c < 0.0) throw ParseError(source, lines[i].number, f[1].column, "counts must be non-negative");
        if (*unit == SpectrumUnit::nm) {
            if (!(x > 0.0)) throw ParseError(source, lines[i].number, f[0].column, "wavelength must be positive");
            x = units::nm_to_mev(x);
        }
        rows.push_back({x, c, lines[i].number, f[0].column});
    }
    require_rows(rows.size(), lines, source);
    if (*unit == SpectrumUnit::nm) std::reverse(rows.begin(), rows.end());
    emitter::PLSpectrum s;
    for (const auto& r : rows) {
        if (!s.energies.empty() && !(r.energy > s.energies.back()))
            throw ParseError(source, r.line, r.column, "energies must be strictly monotonic");
        s.energies.push_back(r.energy);
        s.counts.push_back(r.counts);
    }
    return s;
}

emitter::PLSpectrum parse_spectrum_csv(const std::filesystem::path& path) {
    return parse_spectrum_csv_text(read_file(path), path.string());
}

std::string format_spectrum_csv(const emitter::PLSpectrum& s, SpectrumUnit unit) {
    std::string out;
    if (unit == SpectrumUnit::mev) {
        out = "# unit=mev\nenergy_mev,counts\n";
        for (std::size_t i = 0; i < s.size(); ++i)
            out += format_exact(s.energies[i]) + "," + format_exact(s.counts[i]) + "\n";
    } else {
        out = "# unit=nm\nwavelength_nm,counts\n";
        for (std::size_t k = s.size(); k-- > 0;)
            out += format_exact(units::mev_to_nm(s.energies[k])) + "," + format_exact(s.counts[k]) + "\n";
    }
    return out;
}

PhotonStream parse_timetags_bytes(std::string_view bytes, const std::string& source) {
    if (bytes.empty()) throw ParseError(source, 1, 0, "empty input: no time tags");
    if (trim(bytes).rfind("channel", 0) == 0) {
        const auto lines = split_lines(bytes);
        std::size_t i = expect_header(lines, 0, {"channel", "time_ps"}, 0, source);
        PhotonStream out;
        for (; i < lines.size(); ++i) {
            if (is_blank_or_comment(lines[i].text)) continue;
            const auto f = row_fields(lines[i], 2, source);
            const std::uint64_t ch = to_u64(f[0], source, lines[i].number);
            if (ch > 0xFFFFFFFFu) throw ParseError(source, lines[i].number, f[0].column, "channel out of range");
            out.push_back({static_cast<std::uint32_t>(ch), to_u64(f[1], source, lines[i].number)});
        }
        require_rows(out.size(), lines, source);
        return out;
    }
    if (bytes.size() % 9 != 0)
        throw ParseError(source, bytes.size() / 9 + 1, 0, "binary time tags: size " + std::to_string(bytes.size()) +
                                                              " is not a multiple of 9-byte records");
    PhotonStream out;
    out.reserve(bytes.size() / 9);
    for (std::size_t r = 0; r < bytes.size(); r += 9) {
        std::uint64_t t = 0;
        for (int b = 7; b >= 0; --b) t = (t << 8) | static_cast<unsigned char>(bytes[r + 1 + static_cast<std::size_t>(b)]);
        out.push_back({static_cast<unsigned char>(bytes[r]), t});
    }
    return out;
}

PhotonStream parse_timetags(const std::filesystem::path& path) {
    return parse_timetags_bytes(read_file(path), path.string());
}

std::string format_timetags_csv(const PhotonStream& records) {
    std::string out = "channel,time_ps\n";
    for (const auto& r : records) out += std::to_string(r.channel) + "," + std::to_string(r.time_ps) + "\n";
    return out;
}

std::string format_timetags_binary(const PhotonStream& records) {
    std::string out;
    out.reserve(records.size() * 9);
    for (const auto& r : records) {
        if (r.channel > 0xFF) throw DomainError("binary time tags hold channels 0-255 only");
        out.push_back(static_cast<char>(r.channel));
        put_u64_le(out, r.time_ps);
    }
    return out;
}

std::vector<sweep::PowerSweepPoint> parse_sweep_csv_text(std::string_view text, const std::string& source) {
    const auto lines = split_lines(text);
    std::size_t cols = 0;
    std::size_t i = expect_header(lines, 0, {"p_dbm", "delta_e_mev", "delta_e_err_mev", "f_drive_hz"}, 2, source, &cols);
    std::vector<sweep::PowerSweepPoint> out;
    for (; i < lines.size(); ++i) {
        if (is_blank_or_comment(lines[i].text)) continue;
        const auto f = row_fields(lines[i], cols, source);
        sweep::PowerSweepPoint p;
        p.p_dbm = to_double(f[0], source, lines[i].number);
        p.delta_e = to_double(f[1], source, lines[i].number);
        if (cols > 2) p.delta_e_err = to_double(f[2], source, lines[i].number);
        if (cols > 3) p.f_drive = to_double(f[3], source, lines[i].number);
        if (p.delta_e < 0.0) throw ParseError(source, lines[i].number, f[1].column, "delta_e must be non-negative");
        if (p.delta_e_err < 0.0) throw ParseError(source, lines[i].number, f[2].column, "delta_e_err must be non-negative");
        out.push_back(p);
    }
    require_rows(out.size(), lines, source);
    return out;
}

std::vector<sweep::PowerSweepPoint> parse_sweep_csv(const std::filesystem::path& path) {
    return parse_sweep_csv_text(read_file(path), path.string());
}

std::string format_sweep_csv(const std::vector<sweep::PowerSweepPoint>& points) {
    std::string out = "p_dbm,delta_e_mev,delta_e_err_mev,f_drive_hz\n";
    for (const auto& p : points)
        out += format_exact(p.p_dbm) + "," + format_exact(p.delta_e) + "," + format_exact(p.delta_e_err) + "," +
               format_exact(p.f_drive) + "\n";
    return out;
}

photonstats::DecayHistogram parse_decay_csv_text(std::string_view text, const std::string& source) {
    const auto lines = split_lines(text);
    std::size_t i = expect_header(lines, 0, {"time_ps", "counts"}, 0, source);
    photonstats::DecayHistogram d;
    for (; i < lines.size(); ++i) {
        if (is_blank_or_comment(lines[i].text)) continue;
        const auto f = row_fields(lines[i], 2, source);
        const double t = to_double(f[0], source, lines[i].number);
        const double c = to_double(f[1], source, lines[i].number);
        if (c < 0.0) throw ParseError(source, lines[i].number, f[1].column, "counts must be non-negative");
        if (!d.time_ps.empty() && !(t > d.time_ps.back()))
            throw ParseError(source, lines[i].number, f[0].column, "times must increase");
        d.time_ps.push_back(t);
        d.counts.push_back(c);
    }
    require_rows(d.size(), lines, source);
    return d;
}

photonstats::DecayHistogram parse_decay_csv(const std::filesystem::path& path) {
    return parse_decay_csv_text(read_file(path), path.string());
}

std::string format_decay_csv(const photonstats::DecayHistogram& d) {
    std::string out = "time_ps,counts\n";
    for (std::size_t i = 0; i < d.size(); ++i) out += format_exact(d.time_ps[i]) + "," + format_exact(d.counts[i]) + "\n";
    return out;
}

strobe::StrobeHistogram parse_strobe_histogram_text(std::string_view text, const std::string& source) {
    const auto lines = split_lines(text);
    std::optional<std::uint64_t> emitted;
    for (const auto& line : lines) {
        const auto t = trim(line.text);
        if (t.empty()) continue;
        if (t.front() != '#') break;
        std::string body = lower(trim(t.substr(1)));
        body.erase(std::remove(body.begin(), body.end(), ' '), body.end());
        if (body.rfind("total_emitted=", 0) == 0)
            emitted = to_u64({std::string_view(body).substr(14), 1}, source, line.number);
    }
    std::size_t i = expect_header(lines, 0, {"bin_start_ps", "bin_end_ps", "count"}, 0, source);
    strobe::StrobeHistogram h;
    for (; i < lines.size(); ++i) {
        if (is_blank_or_comment(lines[i].text)) continue;
        const auto f = row_fields(lines[i], 3, source);
        const double a = to_double(f[0], source, lines[i].number);
        const double b = to_double(f[1], source, lines[i].number);
        if (!(b > a)) throw ParseError(source, lines[i].number, f[1].column, "bin end must exceed bin start");
        if (h.bin_edges.empty()) {
            h.bin_edges.push_back(a / units::kPsPerSecond);
        } else if (a / units::kPsPerSecond != h.bin_edges.back()) {
            throw ParseError(source, lines[i].number, f[0].column, "bins must be contiguous");
        }
        h.bin_edges.push_back(b / units::kPsPerSecond);
        h.counts.push_back(to_u64(f[2], source, lines[i].number));
        h.total_detected += h.counts.back();
    }
    require_rows(h.counts.size(), lines, source);
    h.total_emitted = emitted.value_or(h.total_detected);
    if (h.total_emitted < h.total_detected) throw ParseError(source, 1, 0, "total_emitted below the histogram sum");
    return h;
}

strobe::StrobeHistogram parse_strobe_histogram(const std::filesystem::path& path) {
    return parse_strobe_histogram_text(read_file(path), path.string());
}

std::string format_strobe_histogram(const strobe::StrobeHistogram& h) {
    std::string out = "# total_emitted=" + std::to_string(h.total_emitted) + "\nbin_start_ps,bin_end_ps,count\n";
    for (std::size_t j = 0; j < h.counts.size(); ++j)
        out += format_exact(h.bin_edges[j] * units::kPsPerSecond) + "," +
               format_exact(h.bin_edges[j + 1] * units::kPsPerSecond) + "," + std::to_string(h.counts[j]) + "\n";
    return out;
}

std::string format_correlation_csv(const photonstats::CorrelationHistogram& h) {
    std::string out = "tau_start_ps,tau_end_ps,count,g2\n";
    const auto g = h.g2();
    for (std::size_t i = 0; i < h.bins(); ++i)
        out += format_exact(h.tau_edges[i]) + "," + format_exact(h.tau_edges[i + 1]) + "," +
               std::to_string(h.counts[i]) + "," + format_exact(g[i]) + "\n";
    return out;
}

std::string format_report(const FitReport& r) {
    std::string out;
    out += "model: " + r.model_name + "\n";
    out += std::string("converged: ") + (r.converged ? "true" : "false") + "\n";
    out += "n_points: " + std::to_string(r.n_points) + "\n";
    out += "residual_norm: " + format_9g(r.residual_norm) + "\n";
    out += "input_digest: " + (r.input_digest.empty() ? std::string("none") : r.input_digest) + "\n";
    out += "parameters:\n";
    for (const auto& p : r.parameters) {
        out += "  " + p.name + ": " + format_9g(p.value) + " +/- " + format_9g(p.stderr_);
        if (!p.unit.empty()) out += " " + p.unit;
        out += "\n";
    }
    out += "annotations:\n";
    for (const auto& [k, v] : r.annotations) out += "  " + k + ": " + v + "\n";
    out += "warnings:\n";
    for (const auto& w : r.warnings) out += "  - " + w + "\n";
    out += "config:\n";
    for (const auto& [k, v] : r.config_snapshot) out += "  " + k + ": " + v + "\n";
    return out;
}

void emit_report(const FitReport& report, const std::filesystem::path& path) {
    write_file_atomic(path, format_report(report));
}

std::string format_curve(const Curve& c) {
    if (c.header.size() != c.columns.size()) throw DomainError("curve: header and column counts differ");
    for (const auto& col : c.columns)
        if (col.size() != c.rows()) throw DomainError("curve: columns have different lengths");
    std::string out;
    for (std::size_t k = 0; k < c.header.size(); ++k) out += (k ? "," : "") + c.header[k];
    out += "\n";
    for (std::size_t i = 0; i < c.rows(); ++i) {
        for (std::size_t k = 0; k < c.columns.size(); ++k) out += (k ? "," : "") + format_exact(c.columns[k][i]);
        out += "\n";
    }
    return out;
}

void emit_curve(const Curve& curve, const std::filesystem::path& path) { write_file_atomic(path, format_curve(curve)); }

Curve parse_curve_text(std::string_view text, const std::string& source) {
    const auto lines = split_lines(text);
    Curve c;
    std::size_t i = 0;
    while (i < lines.size() && is_blank_or_comment(lines[i].text)) ++i;
    if (i == lines.size()) throw ParseError(source, 1, 0, "empty input: no header");
    for (const auto& f : split_fields(lines[i].text, true)) c.header.emplace_back(f.text);
    c.columns.resize(c.header.size());
    for (++i; i < lines.size(); ++i) {
        if (is_blank_or_comment(lines[i].text)) continue;
        const auto f = row_fields(lines[i], c.header.size(), source);
        for (std::size_t k = 0; k < f.size(); ++k) c.columns[k].push_back(to_double(f[k], source, lines[i].number));
    }
    return c;
}

}  // namespace sawspe::io
