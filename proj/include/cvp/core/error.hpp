#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cvp {

// Every domain failure carries one of these codes. The CLI maps any
// cvp::Error to exit status 1.
enum class Errc {
    // domain-core
    BadLength,
    ForbiddenCharacter,
    UnknownBrand,
    InvalidProfile,
    InvalidSample,
    UnknownTimeZone,
    ParseError,
    InvalidConfig,
    // eligibility
    NoRuleForBrand,
    RequirementNotChecked,
    UnknownVinAtOem,
    PendingChecksRemain,
    // consent
    NotEligible,
    ConsentAlreadyActive,
    NoConsent,
    WrongState,
    WrongVariant,
    MechanismMismatch,
    CarNotDriven,
    StillProcessing,
    OdometerRegression,
    AlreadyRevoked,
    InvalidLink,
    // oem simulator
    InvalidGrant,
    ConsentRevoked,
    Unauthorized,
    QuotaExceeded,
    UnsupportedKind,
    UpstreamError,
    UnknownVehicle,
    // ingestion
    BadSignature,
    UnknownVin,
    ConsentInactive,
    QuotaDeferred,
    MissingSlot,
    // storage
    DuplicatePoint,
    ReferentialIntegrity,
    StorageIo,
    // analytics
    UnorderedPoints,
    ZeroTimeDelta,
    EmptyMap,
    MissingData,
    NoDataInPeriod,
    NonPositivePremium,
    NoDataForVin,
};

std::string_view to_string(Errc code);

/// Inverse of to_string; nullopt for unknown names.
std::optional<Errc> parse_errc(std::string_view name);

/// HTTP status used when the error crosses an HTTP surface.
int http_status(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code)
    {
    }

    explicit Error(Errc code)
        : std::runtime_error(std::string(to_string(code))), code_(code)
    {
    }

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace cvp
