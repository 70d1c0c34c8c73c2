#include "sawspe/fit_report.hpp"

#include <cstdio>
#include <stdexcept>

namespace sawspe {

const FitParameter* FitReport::find(std::string_view name) const {
    for (const auto& p : parameters)
        if (p.name == name) return &p;
    return nullptr;
}

double FitReport::value(std::string_view name) const {
    const auto* p = find(name);
    if (!p) throw std::out_of_range("no parameter named " + std::string(name));
    return p->value;
}

double FitReport::error(std::string_view name) const {
    const auto* p = find(name);
    if (!p) throw std::out_of_range("no parameter named " + std::string(name));
    return p->stderr_;
}

std::optional<std::string> FitReport::annotation(std::string_view key) const {
    for (const auto& [k, v] : annotations)
        if (k == key) return v;
    return std::nullopt;
}

std::string content_digest(std::span<const std::byte> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string content_digest(std::string_view text) {
    return content_digest(std::as_bytes(std::span<const char>(text.data(), text.size())));
}

std::string content_digest(std::span<const double> values) { return content_digest(std::as_bytes(values)); }

}  // namespace sawspe
