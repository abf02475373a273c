#include "cvp/core/error.hpp"

namespace cvp {

std::string_view to_string(Errc code)
{
    switch (code) {
    case Errc::BadLength: return "BadLength";
    case Errc::ForbiddenCharacter: return "ForbiddenCharacter";
    case Errc::UnknownBrand: return "UnknownBrand";
    case Errc::InvalidProfile: return "InvalidProfile";
    case Errc::InvalidSample: return "InvalidSample";
    case Errc::UnknownTimeZone: return "UnknownTimeZone";
    case Errc::ParseError: return "ParseError";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NoRuleForBrand: return "NoRuleForBrand";
    case Errc::RequirementNotChecked: return "RequirementNotChecked";
    case Errc::UnknownVinAtOem: return "UnknownVinAtOem";
    case Errc::PendingChecksRemain: return "PendingChecksRemain";
    case Errc::NotEligible: return "NotEligible";
    case Errc::ConsentAlreadyActive: return "ConsentAlreadyActive";
    case Errc::NoConsent: return "NoConsent";
    case Errc::WrongState: return "WrongState";
    case Errc::WrongVariant: return "WrongVariant";
    case Errc::MechanismMismatch: return "MechanismMismatch";
    case Errc::CarNotDriven: return "CarNotDriven";
    case Errc::StillProcessing: return "StillProcessing";
    case Errc::OdometerRegression: return "OdometerRegression";
    case Errc::AlreadyRevoked: return "AlreadyRevoked";
    case Errc::InvalidLink: return "InvalidLink";
    case Errc::InvalidGrant: return "InvalidGrant";
    case Errc::ConsentRevoked: return "ConsentRevoked";
    case Errc::Unauthorized: return "Unauthorized";
    case Errc::QuotaExceeded: return "QuotaExceeded";
    case Errc::UnsupportedKind: return "UnsupportedKind";
    case Errc::UpstreamError: return "UpstreamError";
    case Errc::UnknownVehicle: return "UnknownVehicle";
    case Errc::BadSignature: return "BadSignature";
    case Errc::UnknownVin: return "UnknownVin";
    case Errc::ConsentInactive: return "ConsentInactive";
    case Errc::QuotaDeferred: return "QuotaDeferred";
    case Errc::MissingSlot: return "MissingSlot";
    case Errc::DuplicatePoint: return "DuplicatePoint";
    case Errc::ReferentialIntegrity: return "ReferentialIntegrity";
    case Errc::StorageIo: return "StorageIo";
    case Errc::UnorderedPoints: return "UnorderedPoints";
    case Errc::ZeroTimeDelta: return "ZeroTimeDelta";
    case Errc::EmptyMap: return "EmptyMap";
    case Errc::MissingData: return "MissingData";
    case Errc::NoDataInPeriod: return "NoDataInPeriod";
    case Errc::NonPositivePremium: return "NonPositivePremium";
    case Errc::NoDataForVin: return "NoDataForVin";
    }
    return "Unknown";
}

int http_status(Errc code)
{
    switch (code) {
    case Errc::Unauthorized:
    case Errc::BadSignature:
        return 401;
    case Errc::NotEligible:
    case Errc::ConsentRevoked:
    case Errc::ConsentInactive:
    case Errc::InvalidLink:
        return 403;
    case Errc::UnknownBrand:
    case Errc::UnknownVehicle:
    case Errc::UnknownVin:
    case Errc::UnknownVinAtOem:
    case Errc::NoConsent:
    case Errc::NoDataForVin:
    case Errc::NoRuleForBrand:
    case Errc::MissingData:
    case Errc::NoDataInPeriod:
    case Errc::MissingSlot:
        return 404;
    case Errc::WrongState:
    case Errc::WrongVariant:
    case Errc::ConsentAlreadyActive:
    case Errc::AlreadyRevoked:
    case Errc::CarNotDriven:
    case Errc::StillProcessing:
    case Errc::DuplicatePoint:
    case Errc::RequirementNotChecked:
    case Errc::PendingChecksRemain:
    case Errc::ReferentialIntegrity:
        return 409;
    case Errc::QuotaExceeded:
    case Errc::QuotaDeferred:
        return 429;
    case Errc::UpstreamError:
        return 503;
    case Errc::StorageIo:
        return 500;
    default:
        return 400;
    }
}

std::optional<Errc> parse_errc(std::string_view name)
{
    for (int i = 0; i <= static_cast<int>(Errc::NoDataForVin); ++i)
        if (to_string(static_cast<Errc>(i)) == name)
            return static_cast<Errc>(i);
    return std::nullopt;
}

} // namespace cvp
