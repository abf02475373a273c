#pragma once

#include "cvp/core/codec.hpp"
#include "cvp/core/profile.hpp"

#include <map>
#include <vector>

namespace cvp::ingest {

enum class CollectionMode { scheduled_polls, notification_triggered };

std::string_view to_string(CollectionMode m);
CollectionMode parse_collection_mode(std::string_view s);

struct CollectionPolicy {
    BrandId brand;
    CollectionMode mode = CollectionMode::notification_triggered;
    std::vector<Millis> poll_times; // vehicle-local times of day
    DataPointKinds poll_kinds;
    std::map<NotificationKind, DataPointKinds> on_notification;

    bool operator==(const CollectionPolicy&) const = default;
};

/// Brands whose OEM pushes location_change get a request with every
/// requestable kind per notification; the others are polled for the
/// odometer at 05:00 and 22:00.
CollectionPolicy default_policy(const OemProfile& profile);

/// Throws InvalidConfig (unsorted or out-of-day poll times, kinds outside
/// the profile).
void validate(const CollectionPolicy& policy, const OemProfile& profile);

Json encode_policy(const CollectionPolicy& p);
CollectionPolicy decode_policy(const Json& j);

/// Explicit per-brand policies over the profile defaults.
class PolicySet {
public:
    explicit PolicySet(const ProfileRegistry& profiles) : profiles_(profiles) {}

    void set(CollectionPolicy policy);
    /// Throws UnknownBrand.
    CollectionPolicy for_brand(const BrandId& brand) const;
    const ProfileRegistry& profiles() const { return profiles_; }

private:
    const ProfileRegistry& profiles_;
    std::map<BrandId, CollectionPolicy> explicit_;
};

/// {"policies": [...]}
void load_policies(PolicySet& set, const Json& j);
Json dump_policies(const PolicySet& set);

} // namespace cvp::ingest
