#pragma once

#include "cvp/core/codec.hpp"

#include <map>
#include <string>

namespace cvp::sim {

/// Wire form of one notification: the JSON body plus the two headers.
struct WebhookDelivery {
    std::string delivery_id;
    BrandId brand;
    std::string body;
    std::string signature; // hex HMAC-SHA256 of body under the brand secret
};

inline constexpr const char* kDeliveryIdHeader = "delivery_id";
inline constexpr const char* kSignatureHeader = "signature";

/// Per-brand shared secrets; brands without an entry use "whsec-<brand>".
class WebhookSecrets {
public:
    WebhookSecrets() = default;
    explicit WebhookSecrets(std::map<BrandId, std::string> secrets) : secrets_(std::move(secrets)) {}

    std::string secret_for(const BrandId& brand) const;
    void set(const BrandId& brand, std::string secret) { secrets_[brand] = std::move(secret); }

private:
    std::map<BrandId, std::string> secrets_;
};

WebhookDelivery make_delivery(const NotificationEvent& event, const BrandId& brand, const WebhookSecrets& secrets);

/// Receiving side: parse a body back into the event (Error{ParseError}).
NotificationEvent parse_delivery_body(std::string_view body);

/// Where the emitter sends deliveries. True means the platform accepted it
/// (any 2xx); false or an exception schedules a retry.
class WebhookSink {
public:
    virtual ~WebhookSink() = default;
    virtual bool deliver(const WebhookDelivery& delivery) = 0;
};

/// Attempt n+1 follows attempt n after base * 2^(n-1): 2, 4, 8, 16 s.
struct RetryPolicy {
    int max_attempts = 5;
    Millis base_delay{2000};

    Millis delay_after(int attempt) const { return base_delay * (1 << (attempt - 1)); }
};

} // namespace cvp::sim
