#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sawspe/emitter.hpp"
#include "sawspe/fit_report.hpp"
#include "sawspe/photon.hpp"
#include "sawspe/photonstats.hpp"
#include "sawspe/resonator.hpp"
#include "sawspe/strobe.hpp"
#include "sawspe/sweep.hpp"

// File formats. Parsers are strict and report 1-based line/column
// positions; values are converted to Hz, meV, ps and mW on the way in.
namespace sawspe::io {

/// Whole file as bytes; DataError if it cannot be read.
std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary file in the same directory and renames it
/// into place, so a failure never leaves a partial file. "-" writes to
/// stdout.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Shortest decimal that parses back to the same double.
std::string format_exact(double v);
/// "%.9g".
std::string format_9g(double v);

/// Touchstone v1 one-port: "# <HZ|KHZ|MHZ|GHZ> S <RI|MA|DB> R <z0>",
/// "!" comments, one "f a b" row per point.
resonator::S11Spectrum parse_touchstone_text(std::string_view text, const std::string& source = "<touchstone>");
resonator::S11Spectrum parse_touchstone(const std::filesystem::path& path);
/// Writes "# HZ S RI R 50".
std::string format_touchstone(const resonator::S11Spectrum& s);

/// PL spectrum CSV: a "# unit=nm" or "# unit=mev" line, then an
/// "energy,counts" or "wavelength,counts" header, then rows. Wavelengths
/// are converted with hc / lambda and the rows reordered by energy.
emitter::PLSpectrum parse_spectrum_csv_text(std::string_view text, const std::string& source = "<spectrum>");
emitter::PLSpectrum parse_spectrum_csv(const std::filesystem::path& path);
enum class SpectrumUnit { mev, nm };
std::string format_spectrum_csv(const emitter::PLSpectrum& s, SpectrumUnit unit = SpectrumUnit::mev);

/// Time tags: CSV with header "channel,time_ps", or raw little-endian
/// records of u8 channel + u64 time_ps (9 bytes each). CSV is recognised
/// by its header.
PhotonStream parse_timetags_bytes(std::string_view bytes, const std::string& source = "<timetags>");
PhotonStream parse_timetags(const std::filesystem::path& path);
std::string format_timetags_csv(const PhotonStream& records);
/// Throws DomainError for channels above 255.
std::string format_timetags_binary(const PhotonStream& records);

/// "p_dbm,delta_e_mev,delta_e_err_mev" with an optional 4th column
/// "f_drive_hz".
std::vector<sweep::PowerSweepPoint> parse_sweep_csv_text(std::string_view text, const std::string& source = "<sweep>");
std::vector<sweep::PowerSweepPoint> parse_sweep_csv(const std::filesystem::path& path);
std::string format_sweep_csv(const std::vector<sweep::PowerSweepPoint>& points);

/// "time_ps,counts".
photonstats::DecayHistogram parse_decay_csv_text(std::string_view text, const std::string& source = "<decay>");
photonstats::DecayHistogram parse_decay_csv(const std::filesystem::path& path);
std::string format_decay_csv(const photonstats::DecayHistogram& d);

/// "bin_start_ps,bin_end_ps,count", optionally preceded by
/// "# total_emitted=<n>". Bins must be contiguous.
strobe::StrobeHistogram parse_strobe_histogram_text(std::string_view text, const std::string& source = "<histogram>");
strobe::StrobeHistogram parse_strobe_histogram(const std::filesystem::path& path);
std::string format_strobe_histogram(const strobe::StrobeHistogram& h);

/// "tau_start_ps,tau_end_ps,count,g2".
std::string format_correlation_csv(const photonstats::CorrelationHistogram& h);

/// Structured text report, stable field order, numbers at 9 significant
/// digits.
std::string format_report(const FitReport& report);
void emit_report(const FitReport& report, const std::filesystem::path& path);

/// Column table for plotting.
struct Curve {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;  ///< equal lengths

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
};

/// Header line plus one CSV row per point, values in exact round-trip form.
std::string format_curve(const Curve& curve);
void emit_curve(const Curve& curve, const std::filesystem::path& path);
/// Reads back a curve written by format_curve.
Curve parse_curve_text(std::string_view text, const std::string& source = "<curve>");

}  // namespace sawspe::io
