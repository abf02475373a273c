#include "cvp/sim/webhook.hpp"

#include "cvp/core/crypto.hpp"

namespace cvp::sim {

std::string WebhookSecrets::secret_for(const BrandId& brand) const
{
    auto it = secrets_.find(brand);
    return it != secrets_.end() ? it->second : "whsec-" + brand.value;
}

WebhookDelivery make_delivery(const NotificationEvent& event, const BrandId& brand, const WebhookSecrets& secrets)
{
    Json body{{"delivery_id", event.delivery_id},
              {"brand", brand},
              {"vin", event.vin},
              {"kind", event.kind},
              {"emitted_at", event.emitted_at}};
    std::string text = body.dump();
    return WebhookDelivery{event.delivery_id, brand, text, hmac_sha256_hex(secrets.secret_for(brand), text)};
}

NotificationEvent parse_delivery_body(std::string_view body)
{
    Json j = parse_json(body);
    try {
        return NotificationEvent{j.at("vin").get<Vin>(), j.at("kind").get<NotificationKind>(),
                                 j.at("emitted_at").get<Timestamp>(), j.at("delivery_id").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

} // namespace cvp::sim
