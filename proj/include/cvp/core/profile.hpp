#pragma once

#include "cvp/core/kinds.hpp"
#include "cvp/core/time.hpp"
#include "cvp/core/types.hpp"

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cvp {

enum class ConsentVariant { SimplePortal, StellantisComplex };

std::string_view to_string(ConsentVariant v);
ConsentVariant parse_consent_variant(std::string_view s);

// sliding: at most `max_requests` in any window of `window` length.
// calendar_day: at most `max_requests` per vehicle-local calendar day.
enum class QuotaMode { sliding, calendar_day };

struct QuotaSpec {
    int max_requests = 1;
    Millis window = kMinute;
    QuotaMode mode = QuotaMode::sliding;

    bool operator==(const QuotaSpec&) const = default;
};

struct OemProfile {
    BrandId brand;
    std::string display_name;
    NotificationKinds notification_kinds;
    DataPointKinds request_kinds;
    QuotaSpec quota;
    ConsentVariant consent_variant = ConsentVariant::SimplePortal;
    double monthly_data_cost_eur = 0.0;

    bool operator==(const OemProfile&) const = default;
};

/// Throws Error{InvalidProfile} when an invariant is broken.
void validate(const OemProfile& profile);

OemProfile bmw_like_profile();
OemProfile mercedes_like_profile();
OemProfile stellantis_like_profile();

/// Brand id -> capability profile. Read-only once built.
class ProfileRegistry {
public:
    ProfileRegistry() = default;

    /// Archetypes (bmw-like, mercedes-like, stellantis-like) plus the concrete
    /// brands of the shipped fleets: bmw, mercedes, peugeot, citroen, fiat,
    /// alfa-romeo.
    static ProfileRegistry builtin();

    void add(OemProfile profile);

    /// Throws Error{UnknownBrand}.
    const OemProfile& profile_for(const BrandId& brand) const;
    const OemProfile& profile_for(std::string_view brand) const { return profile_for(BrandId{std::string(brand)}); }

    bool contains(const BrandId& brand) const { return profiles_.count(brand) != 0; }
    std::vector<BrandId> brands() const;

private:
    std::map<BrandId, OemProfile> profiles_;
};

} // namespace cvp
