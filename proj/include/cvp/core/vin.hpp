#pragma once

#include <compare>
#include <functional>
#include <string>
#include <string_view>

namespace cvp {

/// 17-character vehicle identification number: uppercase letters and digits,
/// never I, O or Q. No check-digit validation (it is region dependent).
class Vin {
public:
    /// Normalizes to uppercase. Throws Error{BadLength} or
    /// Error{ForbiddenCharacter}.
    static Vin parse(std::string_view raw);

    const std::string& str() const { return value_; }

    auto operator<=>(const Vin&) const = default;

private:
    explicit Vin(std::string value) : value_(std::move(value)) {}

    std::string value_;
};

} // namespace cvp

template <>
struct std::hash<cvp::Vin> {
    std::size_t operator()(const cvp::Vin& v) const noexcept { return std::hash<std::string>{}(v.str()); }
};
