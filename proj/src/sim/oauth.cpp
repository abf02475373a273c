#include "cvp/sim/oauth.hpp"

#include "cvp/core/crypto.hpp"

namespace cvp::sim {

using namespace std::chrono;

namespace {

constexpr Millis kCodeLifetime = 10min;

Json kinds_json(const DataPointKinds& kinds)
{
    Json a = Json::array();
    for (auto k : kinds)
        a.push_back(k);
    return a;
}

DataPointKinds kinds_from(const Json& j)
{
    DataPointKinds out;
    for (const auto& k : j)
        out.insert(k.get<DataPointKind>());
    return out;
}

} // namespace

Json encode(const AccessTokenGrant& g)
{
    return Json{{"access_token", g.access_token},
                {"refresh_token", g.refresh_token},
                {"expires_in", g.expires_in.count()},
                {"token_type", "Bearer"},
                {"scope", kinds_json(g.scope)}};
}

AccessTokenGrant decode_grant(const Json& j)
{
    try {
        return AccessTokenGrant{j.at("access_token").get<std::string>(), j.at("refresh_token").get<std::string>(),
                                Seconds{j.at("expires_in").get<std::int64_t>()}, kinds_from(j.at("scope"))};
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

OAuthServer::OAuthServer(std::string secret, Seconds token_lifetime)
    : secret_(std::move(secret)), lifetime_(token_lifetime)
{
}

std::string OAuthServer::mint(std::string_view kind, const Vin& vin)
{
    ++counter_;
    std::string msg = std::string(kind) + "|" + vin.str() + "|" + std::to_string(counter_);
    return std::string(kind) + "_" + hmac_sha256_hex(secret_, msg).substr(0, 32);
}

std::string OAuthServer::issue_code(const Vin& vin, const DataPointKinds& scope, Timestamp now)
{
    auto& c = consents_[vin];
    c.scope = scope;
    c.revoked = false;
    ++c.generation;
    std::string code = mint("code", vin);
    codes_.insert_or_assign(code, Code{vin, now + kCodeLifetime, c.generation});
    return code;
}

const OAuthServer::Consent& OAuthServer::live_consent(const Vin& vin, int generation) const
{
    auto it = consents_.find(vin);
    if (it == consents_.end() || it->second.generation != generation)
        throw Error(Errc::InvalidGrant, "grant superseded");
    if (it->second.revoked)
        throw Error(Errc::ConsentRevoked, vin.str());
    return it->second;
}

AccessTokenGrant OAuthServer::issue(const Vin& vin, int generation, Timestamp now)
{
    const Consent& c = live_consent(vin, generation);
    AccessTokenGrant g{mint("at", vin), mint("rt", vin), lifetime_, c.scope};
    access_.insert_or_assign(g.access_token, std::pair{TokenInfo{vin, c.scope, now + lifetime_}, generation});
    refresh_.insert_or_assign(g.refresh_token, Refresh{vin, g.access_token, generation});
    return g;
}

AccessTokenGrant OAuthServer::exchange_code(std::string_view code, Timestamp now)
{
    auto it = codes_.find(std::string(code));
    if (it == codes_.end())
        throw Error(Errc::InvalidGrant, "unknown or used code");
    Code c = it->second;
    codes_.erase(it);
    if (now > c.expires_at)
        throw Error(Errc::InvalidGrant, "code expired");
    return issue(c.vin, c.generation, now);
}

AccessTokenGrant OAuthServer::refresh(std::string_view refresh_token, Timestamp now)
{
    auto it = refresh_.find(std::string(refresh_token));
    if (it == refresh_.end())
        throw Error(Errc::InvalidGrant, "unknown or consumed refresh token");
    Refresh r = it->second;
    live_consent(r.vin, r.generation);
    refresh_.erase(it);
    access_.erase(r.access_token);
    return issue(r.vin, r.generation, now);
}

const OAuthServer::TokenInfo& OAuthServer::authorize(std::string_view access_token, Timestamp now) const
{
    auto it = access_.find(std::string(access_token));
    if (it == access_.end())
        throw Error(Errc::Unauthorized, "unknown access token");
    const auto& [info, generation] = it->second;
    if (now >= info.expires_at)
        throw Error(Errc::Unauthorized, "access token expired");
    auto c = consents_.find(info.vin);
    if (c == consents_.end() || c->second.revoked || c->second.generation != generation)
        throw Error(Errc::Unauthorized, "consent revoked");
    return info;
}

void OAuthServer::revoke(const Vin& vin)
{
    auto it = consents_.find(vin);
    if (it != consents_.end())
        it->second.revoked = true;
}

bool OAuthServer::consented(const Vin& vin) const
{
    auto it = consents_.find(vin);
    return it != consents_.end() && !it->second.revoked;
}

bool OAuthServer::revoked(const Vin& vin) const
{
    auto it = consents_.find(vin);
    return it != consents_.end() && it->second.revoked;
}

Json OAuthServer::state() const
{
    Json consents = Json::object();
    for (const auto& [vin, c] : consents_)
        consents[vin.str()] = {{"scope", kinds_json(c.scope)}, {"revoked", c.revoked}, {"generation", c.generation}};
    Json codes = Json::object();
    for (const auto& [code, c] : codes_)
        codes[code] = {{"vin", c.vin}, {"expires_at", c.expires_at}, {"generation", c.generation}};
    Json refresh = Json::object();
    for (const auto& [tok, r] : refresh_)
        refresh[tok] = {{"vin", r.vin}, {"access_token", r.access_token}, {"generation", r.generation}};
    Json access = Json::object();
    for (const auto& [tok, a] : access_)
        access[tok] = {{"vin", a.first.vin},
                       {"scope", kinds_json(a.first.scope)},
                       {"expires_at", a.first.expires_at},
                       {"generation", a.second}};
    return Json{{"counter", counter_}, {"consents", consents}, {"codes", codes}, {"refresh", refresh}, {"access", access}};
}

void OAuthServer::restore(const Json& s)
{
    consents_.clear();
    codes_.clear();
    refresh_.clear();
    access_.clear();
    try {
        counter_ = s.at("counter").get<std::uint64_t>();
        Json consents = s.at("consents");
        for (const auto& [vin, c] : consents.items())
            consents_[Vin::parse(vin)] = Consent{kinds_from(c.at("scope")), c.at("revoked").get<bool>(),
                                                 c.at("generation").get<int>()};
        Json codes = s.at("codes");
        for (const auto& [code, c] : codes.items())
            codes_.insert_or_assign(code, Code{c.at("vin").get<Vin>(), c.at("expires_at").get<Timestamp>(),
                                               c.at("generation").get<int>()});
        Json refresh = s.at("refresh");
        for (const auto& [tok, r] : refresh.items())
            refresh_.insert_or_assign(tok, Refresh{r.at("vin").get<Vin>(), r.at("access_token").get<std::string>(),
                                                   r.at("generation").get<int>()});
        Json access = s.at("access");
        for (const auto& [tok, a] : access.items())
            access_.insert_or_assign(tok, std::pair{TokenInfo{a.at("vin").get<Vin>(), kinds_from(a.at("scope")),
                                                              a.at("expires_at").get<Timestamp>()},
                                                    a.at("generation").get<int>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

} // namespace cvp::sim
