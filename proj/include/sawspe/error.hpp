#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sawspe {

/// Argument outside the mathematical domain of an operation (non-positive
/// frequency, zero reflectivity, negative strain, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Input data unusable for the requested analysis: empty channels, flat
/// spectra, too few points, no resonance found.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative fit hit its iteration cap. Carries the last iterate so callers
/// can inspect or restart from it.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<double> last_iterate, int iterations)
        : std::runtime_error(what), last_iterate_(std::move(last_iterate)), iterations_(iterations) {}

    const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }
    int iterations() const noexcept { return iterations_; }

private:
    std::vector<double> last_iterate_;
    int iterations_;
};

/// File could not be read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Line and column are 1-based; column 0 means the
/// whole line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& source, std::size_t line, std::size_t column, const std::string& message)
        : std::runtime_error(source + ":" + std::to_string(line) +
                             (column > 0 ? ":" + std::to_string(column) : std::string{}) + ": " + message),
          line_(line),
          column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

}  // namespace sawspe
