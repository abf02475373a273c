#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>

namespace cvp::ingest {

/// Named monotonic counters. Rendered as "name value" lines, sorted by name.
class Metrics {
public:
    Metrics();

    void add(std::string_view name, std::uint64_t n = 1);
    std::uint64_t get(std::string_view name) const;
    std::map<std::string, std::uint64_t> snapshot() const;
    std::string render_text() const;
    void restore(const std::map<std::string, std::uint64_t>& counters);

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::uint64_t, std::less<>> counters_;
};

namespace metric {
inline constexpr std::string_view samples_stored = "samples_stored";
inline constexpr std::string_view requests_executed = "requests_executed";
inline constexpr std::string_view quota_deferred = "quota_deferred";
inline constexpr std::string_view consent_inactive = "consent_inactive_skips";
inline constexpr std::string_view upstream_retries = "upstream_retries";
inline constexpr std::string_view upstream_failures = "upstream_failures";
inline constexpr std::string_view upstream_429 = "upstream_quota_exceeded";
inline constexpr std::string_view credential_failures = "credential_failures";
inline constexpr std::string_view token_refreshes = "token_refreshes";
inline constexpr std::string_view requests_expired = "requests_expired";
inline constexpr std::string_view slots_fired = "slots_fired";
inline constexpr std::string_view slots_succeeded = "slots_succeeded";
inline constexpr std::string_view slots_failed = "slots_failed";
inline constexpr std::string_view slots_missed = "slots_missed";
inline constexpr std::string_view webhooks_received = "webhooks_received";
inline constexpr std::string_view webhooks_rejected = "webhooks_rejected";
inline constexpr std::string_view webhooks_duplicate = "webhooks_duplicate";
inline constexpr std::string_view webhooks_quarantined = "webhooks_quarantined";
inline constexpr std::string_view events_stored = "events_stored";
} // namespace metric

} // namespace cvp::ingest
