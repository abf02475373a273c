#include "cvp/ingest/policy.hpp"

#include <algorithm>
#include <cstdio>

namespace cvp::ingest {

namespace {

std::string format_time_of_day(Millis t)
{
    auto minutes = std::chrono::duration_cast<std::chrono::minutes>(t).count();
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d:%02d", static_cast<int>(minutes / 60), static_cast<int>(minutes % 60));
    return buf;
}

Millis parse_time_of_day(std::string_view s)
{
    int h = -1, m = -1;
    char tail = 0;
    std::string text(s);
    if (std::sscanf(text.c_str(), "%d:%d%c", &h, &m, &tail) != 2 || h < 0 || h > 23 || m < 0 || m > 59)
        throw Error(Errc::ParseError, "bad time of day: " + text);
    return std::chrono::hours{h} + std::chrono::minutes{m};
}

} // namespace

std::string_view to_string(CollectionMode m)
{
    return m == CollectionMode::scheduled_polls ? "scheduled_polls" : "notification_triggered";
}

CollectionMode parse_collection_mode(std::string_view s)
{
    if (s == "scheduled_polls")
        return CollectionMode::scheduled_polls;
    if (s == "notification_triggered")
        return CollectionMode::notification_triggered;
    throw Error(Errc::ParseError, "unknown collection mode: " + std::string(s));
}

CollectionPolicy default_policy(const OemProfile& profile)
{
    CollectionPolicy p;
    p.brand = profile.brand;
    if (profile.notification_kinds.count(NotificationKind::location_change)) {
        p.mode = CollectionMode::notification_triggered;
        p.on_notification[NotificationKind::location_change] = profile.request_kinds;
    } else {
        p.mode = CollectionMode::scheduled_polls;
        p.poll_times = {std::chrono::hours{5}, std::chrono::hours{22}};
        p.poll_kinds = {DataPointKind::odometer};
    }
    return p;
}

void validate(const CollectionPolicy& p, const OemProfile& profile)
{
    auto fail = [&](const std::string& why) { throw Error(Errc::InvalidConfig, p.brand.value + ": " + why); };
    if (p.brand != profile.brand)
        fail("policy for another brand");
    if (!std::is_sorted(p.poll_times.begin(), p.poll_times.end()) ||
        std::adjacent_find(p.poll_times.begin(), p.poll_times.end()) != p.poll_times.end())
        fail("poll times must be strictly increasing");
    for (auto t : p.poll_times)
        if (t < Millis{0} || t >= kDay)
            fail("poll time outside the day");
    auto supported = [&](const DataPointKinds& kinds) {
        return std::all_of(kinds.begin(), kinds.end(), [&](auto k) { return profile.request_kinds.count(k) != 0; });
    };
    if (p.mode == CollectionMode::scheduled_polls && (p.poll_times.empty() || p.poll_kinds.empty()))
        fail("scheduled_polls needs poll times and kinds");
    if (!supported(p.poll_kinds))
        fail("poll kinds not requestable");
    for (const auto& [kind, kinds] : p.on_notification) {
        if (!profile.notification_kinds.count(kind))
            fail("brand never sends " + std::string(to_string(kind)));
        if (!supported(kinds))
            fail("requested kinds not requestable");
    }
}

Json encode_policy(const CollectionPolicy& p)
{
    Json j{{"brand", p.brand}, {"mode", to_string(p.mode)}};
    if (!p.poll_times.empty()) {
        Json times = Json::array();
        for (auto t : p.poll_times)
            times.push_back(format_time_of_day(t));
        j["poll_times"] = times;
    }
    if (!p.poll_kinds.empty())
        j["poll_kinds"] = p.poll_kinds;
    if (!p.on_notification.empty()) {
        Json on = Json::object();
        for (const auto& [kind, kinds] : p.on_notification)
            on[std::string(to_string(kind))] = kinds;
        j["on_notification"] = on;
    }
    return j;
}

CollectionPolicy decode_policy(const Json& j)
{
    try {
        CollectionPolicy p;
        p.brand = j.at("brand").get<BrandId>();
        p.mode = parse_collection_mode(j.at("mode").get<std::string>());
        if (j.contains("poll_times"))
            for (const auto& t : j.at("poll_times"))
                p.poll_times.push_back(parse_time_of_day(t.get<std::string>()));
        if (j.contains("poll_kinds"))
            p.poll_kinds = j.at("poll_kinds").get<DataPointKinds>();
        if (j.contains("on_notification")) {
            const Json& on = j.at("on_notification");
            for (auto it = on.begin(); it != on.end(); ++it)
                p.on_notification[parse_notification_kind(it.key())] = it.value().get<DataPointKinds>();
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

void PolicySet::set(CollectionPolicy policy)
{
    validate(policy, profiles_.profile_for(policy.brand));
    explicit_.insert_or_assign(policy.brand, std::move(policy));
}

CollectionPolicy PolicySet::for_brand(const BrandId& brand) const
{
    auto it = explicit_.find(brand);
    if (it != explicit_.end())
        return it->second;
    return default_policy(profiles_.profile_for(brand));
}

void load_policies(PolicySet& set, const Json& j)
{
    if (!j.contains("policies") || !j.at("policies").is_array())
        throw Error(Errc::ParseError, "expected {\"policies\": [...]}");
    for (const auto& p : j.at("policies"))
        set.set(decode_policy(p));
}

Json dump_policies(const PolicySet& set)
{
    Json arr = Json::array();
    for (const auto& brand : set.profiles().brands())
        arr.push_back(encode_policy(set.for_brand(brand)));
    return {{"policies", arr}};
}

} // namespace cvp::ingest
