#include "cvp/core/profile.hpp"

#include "cvp/core/error.hpp"

namespace cvp {

std::string_view to_string(ConsentVariant v)
{
    return v == ConsentVariant::SimplePortal ? "simple_portal" : "stellantis_complex";
}

ConsentVariant parse_consent_variant(std::string_view s)
{
    if (s == "simple_portal")
        return ConsentVariant::SimplePortal;
    if (s == "stellantis_complex")
        return ConsentVariant::StellantisComplex;
    throw Error(Errc::ParseError, "unknown consent variant '" + std::string(s) + "'");
}

void validate(const OemProfile& p)
{
    auto fail = [&](const std::string& why) { throw Error(Errc::InvalidProfile, p.brand.value + ": " + why); };
    if (p.brand.value.empty())
        fail("empty brand id");
    if (!p.notification_kinds.count(NotificationKind::revoke_of_consent))
        fail("notification kinds must include revoke_of_consent");
    if (p.quota.max_requests < 1)
        fail("quota max must be at least 1");
    if (p.quota.window <= Millis{0})
        fail("quota window must be positive");
    if (p.quota.mode == QuotaMode::calendar_day && p.quota.window != kDay)
        fail("calendar_day quota needs a one-day window");
    if (p.monthly_data_cost_eur < 0.0)
        fail("negative monthly cost");
}

OemProfile bmw_like_profile()
{
    OemProfile p;
    p.brand = BrandId{"bmw-like"};
    p.display_name = "BMW";
    p.notification_kinds = {
        NotificationKind::accident_reported, NotificationKind::battery_warning,
        NotificationKind::breakdown_reported, NotificationKind::emergency_reported,
        NotificationKind::engine_changed, NotificationKind::maintenance_changed,
        NotificationKind::revoke_of_consent, NotificationKind::location_change,
    };
    p.request_kinds = {kAllDataPointKinds.begin(), kAllDataPointKinds.end()};
    p.quota = QuotaSpec{50, kMinute, QuotaMode::sliding};
    p.consent_variant = ConsentVariant::SimplePortal;
    p.monthly_data_cost_eur = 6.5;
    return p;
}

OemProfile mercedes_like_profile()
{
    OemProfile p;
    p.brand = BrandId{"mercedes-like"};
    p.display_name = "Mercedes";
    p.notification_kinds = {NotificationKind::revoke_of_consent};
    p.request_kinds = {DataPointKind::odometer};
    p.quota = QuotaSpec{2, kDay, QuotaMode::calendar_day};
    p.consent_variant = ConsentVariant::SimplePortal;
    p.monthly_data_cost_eur = 2.1;
    return p;
}

OemProfile stellantis_like_profile()
{
    OemProfile p;
    p.brand = BrandId{"stellantis-like"};
    p.display_name = "Stellantis";
    p.notification_kinds = {
        NotificationKind::accident_reported, NotificationKind::breakdown_reported,
        NotificationKind::emergency_reported, NotificationKind::revoke_of_consent,
        NotificationKind::location_change,
    };
    p.request_kinds = {
        DataPointKind::odometer, DataPointKind::gps_coordinates, DataPointKind::heading,
        DataPointKind::fuel_volume, DataPointKind::distance_to_next_maintenance,
        DataPointKind::doors_lock_state,
    };
    p.quota = QuotaSpec{50, kMinute, QuotaMode::sliding};
    p.consent_variant = ConsentVariant::StellantisComplex;
    p.monthly_data_cost_eur = 6.5;
    return p;
}

namespace {

OemProfile rebrand(OemProfile p, std::string brand, std::string display)
{
    p.brand = BrandId{std::move(brand)};
    p.display_name = std::move(display);
    return p;
}

} // namespace

ProfileRegistry ProfileRegistry::builtin()
{
    ProfileRegistry r;
    r.add(bmw_like_profile());
    r.add(mercedes_like_profile());
    r.add(stellantis_like_profile());
    r.add(rebrand(bmw_like_profile(), "bmw", "BMW"));
    r.add(rebrand(mercedes_like_profile(), "mercedes", "Mercedes"));
    r.add(rebrand(stellantis_like_profile(), "peugeot", "Peugeot"));
    r.add(rebrand(stellantis_like_profile(), "citroen", "Citroen"));
    r.add(rebrand(stellantis_like_profile(), "fiat", "Fiat"));
    r.add(rebrand(stellantis_like_profile(), "alfa-romeo", "Alfa Romeo"));
    return r;
}

void ProfileRegistry::add(OemProfile profile)
{
    validate(profile);
    auto key = profile.brand;
    profiles_.insert_or_assign(std::move(key), std::move(profile));
}

const OemProfile& ProfileRegistry::profile_for(const BrandId& brand) const
{
    auto it = profiles_.find(brand);
    if (it == profiles_.end())
        throw Error(Errc::UnknownBrand, brand.value);
    return it->second;
}

std::vector<BrandId> ProfileRegistry::brands() const
{
    std::vector<BrandId> out;
    for (const auto& [b, _] : profiles_)
        out.push_back(b);
    return out;
}

} // namespace cvp
