#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sawspe {

struct FitParameter {
    std::string name;
    double value = 0.0;
    double stderr_ = 0.0;
    std::string unit;
};

/// Result of any fit in the toolkit. Field order is the serialization order.
struct FitReport {
    std::string model_name;
    std::vector<FitParameter> parameters;
    double residual_norm = 0.0;
    std::size_t n_points = 0;
    bool converged = false;
    std::vector<std::string> warnings;
    /// Free-form key/value outcomes (model selection, classification flags).
    std::vector<std::pair<std::string, std::string>> annotations;
    std::string input_digest;
    std::vector<std::pair<std::string, std::string>> config_snapshot;

    void add(std::string name, double value, double err, std::string unit) {
        parameters.push_back({std::move(name), value, err, std::move(unit)});
    }
    void annotate(std::string key, std::string value) { annotations.emplace_back(std::move(key), std::move(value)); }

    const FitParameter* find(std::string_view name) const;
    /// Value of a named parameter; throws std::out_of_range if absent.
    double value(std::string_view name) const;
    double error(std::string_view name) const;
    std::optional<std::string> annotation(std::string_view key) const;
};

/// FNV-1a 64-bit, formatted "fnv1a64:<16 hex digits>".
std::string content_digest(std::span<const std::byte> bytes);
std::string content_digest(std::string_view text);
std::string content_digest(std::span<const double> values);

}  // namespace sawspe
