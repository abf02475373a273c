#include "cvp/eligibility/eligibility.hpp"

#include "cvp/core/error.hpp"

namespace cvp::eligibility {

using namespace std::chrono;

std::string_view to_string(VinCheckMethod m)
{
    return m == VinCheckMethod::automatic_api ? "automatic_api" : "manual_review";
}

std::string_view to_string(VinCheck c)
{
    switch (c) {
    case VinCheck::Pending: return "Pending";
    case VinCheck::Eligible: return "Eligible";
    case VinCheck::NotEligible: return "NotEligible";
    }
    return "?";
}

VinCheckMethod parse_vin_check_method(std::string_view s)
{
    if (s == "automatic_api")
        return VinCheckMethod::automatic_api;
    if (s == "manual_review")
        return VinCheckMethod::manual_review;
    throw Error(Errc::ParseError, "unknown vin check method '" + std::string(s) + "'");
}

VinCheck parse_vin_check(std::string_view s)
{
    for (auto c : {VinCheck::Pending, VinCheck::Eligible, VinCheck::NotEligible})
        if (to_string(c) == s)
            return c;
    throw Error(Errc::ParseError, "unknown vin check state '" + std::string(s) + "'");
}

RuleSet::RuleSet(std::vector<RequirementRule> rules)
{
    for (auto& r : rules)
        add(std::move(r));
}

void RuleSet::add(RequirementRule rule)
{
    if (rule.brand.value.empty())
        throw Error(Errc::ParseError, "rule without brand");
    rules_.push_back(std::move(rule));
}

std::vector<const RequirementRule*> RuleSet::rules_for(const BrandId& brand) const
{
    std::vector<const RequirementRule*> out;
    for (const auto& r : rules_)
        if (r.brand == brand)
            out.push_back(&r);
    return out;
}

VinCheckMethod RuleSet::vin_check_method(const BrandId& brand) const
{
    auto rules = rules_for(brand);
    if (rules.empty())
        throw Error(Errc::NoRuleForBrand, brand.value);
    return rules.front()->vin_check_method;
}

namespace {

bool matches(const Vehicle& v, const RequirementRule& r)
{
    if (!r.allowed_models.count("*") && !r.allowed_models.count(v.model))
        return false;
    if (v.production_year < r.min_production_year)
        return false;
    if (!r.allowed_countries.empty() && !r.allowed_countries.count(v.purchase_country))
        return false;
    if (r.requires_fidelity_program && !v.fidelity_program_member)
        return false;
    return true;
}

} // namespace

bool requirement_check(const Vehicle& vehicle, const RuleSet& rules)
{
    auto candidates = rules.rules_for(vehicle.brand);
    if (candidates.empty())
        throw Error(Errc::NoRuleForBrand, vehicle.brand.value);
    for (const auto* r : candidates)
        if (matches(vehicle, *r))
            return true;
    return false;
}

bool VinTable::vin_eligible(const Vin& vin) const
{
    auto it = entries_.find(vin);
    if (it == entries_.end())
        throw Error(Errc::UnknownVinAtOem, vin.str());
    return it->second;
}

Timestamp review_due(Timestamp start, const ReviewDelay& delay)
{
    if (delay.fixed)
        return start + *delay.fixed;
    auto t = start;
    int left = delay.business_days;
    while (left > 0) {
        t += kDay;
        weekday wd{floor<days>(t)};
        if (wd != Saturday && wd != Sunday)
            --left;
    }
    return t;
}

EligibilityService::EligibilityService(RuleSet rules, const VinCheckPort& oem, const Clock& clock, ReviewDelay delay)
    : rules_(std::move(rules)), oem_(oem), clock_(clock), delay_(delay)
{
}

EligibilityOutcome EligibilityService::check(const Vehicle& vehicle)
{
    bool ok = requirement_check(vehicle, rules_);
    std::lock_guard lock(mutex_);
    EligibilityOutcome out{vehicle.vin, ok, VinCheck::Pending, clock_.now(), {}, {}};
    outcomes_.insert_or_assign(vehicle.vin, out);
    if (!ok)
        return out;
    return vin_check_locked(vehicle.vin, rules_.vin_check_method(vehicle.brand));
}

EligibilityOutcome EligibilityService::vin_check(const Vin& vin, VinCheckMethod method)
{
    std::lock_guard lock(mutex_);
    return vin_check_locked(vin, method);
}

EligibilityOutcome EligibilityService::vin_check_locked(const Vin& vin, VinCheckMethod method)
{
    auto it = outcomes_.find(vin);
    if (it == outcomes_.end() || !it->second.requirement_ok)
        throw Error(Errc::RequirementNotChecked, vin.str());
    auto out = it->second;
    out.method = method;
    out.checked_at = clock_.now();
    out.resolves_at.reset();
    if (method == VinCheckMethod::automatic_api) {
        out.vin_check = oem_.vin_eligible(vin) ? VinCheck::Eligible : VinCheck::NotEligible;
    } else {
        out.vin_check = VinCheck::Pending;
        out.resolves_at = review_due(out.checked_at, delay_);
    }
    it->second = out;
    return out;
}

std::vector<EligibilityOutcome> EligibilityService::resolve_due()
{
    std::lock_guard lock(mutex_);
    std::vector<EligibilityOutcome> resolved;
    auto now = clock_.now();
    for (auto& [vin, o] : outcomes_) {
        if (o.vin_check != VinCheck::Pending || !o.resolves_at || *o.resolves_at > now)
            continue;
        o.vin_check = oem_.vin_eligible(vin) ? VinCheck::Eligible : VinCheck::NotEligible;
        resolved.push_back(o);
    }
    return resolved;
}

std::optional<EligibilityOutcome> EligibilityService::outcome(const Vin& vin) const
{
    std::lock_guard lock(mutex_);
    auto it = outcomes_.find(vin);
    if (it == outcomes_.end())
        return std::nullopt;
    return it->second;
}

std::vector<EligibilityOutcome> EligibilityService::outcomes() const
{
    std::lock_guard lock(mutex_);
    std::vector<EligibilityOutcome> out;
    for (const auto& [_, o] : outcomes_)
        out.push_back(o);
    return out;
}

void EligibilityService::restore(const EligibilityOutcome& outcome)
{
    std::lock_guard lock(mutex_);
    outcomes_.insert_or_assign(outcome.vin, outcome);
}

EligibilityReport eligibility_report(const std::vector<Vehicle>& fleet, const std::vector<EligibilityOutcome>& outcomes,
                                     const ProfileRegistry& profiles)
{
    std::map<Vin, const EligibilityOutcome*> by_vin;
    for (const auto& o : outcomes)
        by_vin[o.vin] = &o;
    EligibilityReport report;
    for (const auto& v : fleet) {
        auto it = by_vin.find(v.vin);
        if (it == by_vin.end())
            throw Error(Errc::PendingChecksRemain, "no outcome for " + v.vin.str());
        const auto& o = *it->second;
        if (o.requirement_ok && o.vin_check == VinCheck::Pending)
            throw Error(Errc::PendingChecksRemain, v.vin.str());
        auto& row = report[profiles.profile_for(v.brand).display_name];
        ++row.vehicles;
        row.requirements_passed += o.requirement_ok;
        row.vin_check_passed += o.vin_check == VinCheck::Eligible;
    }
    return report;
}

RuleSet load_rules(const Json& j)
{
    RuleSet set;
    try {
        for (const auto& r : j.at("rules")) {
            RequirementRule rule;
            rule.brand = BrandId{r.at("brand").get<std::string>()};
            if (r.contains("allowed_models"))
                rule.allowed_models = r.at("allowed_models").get<std::set<std::string>>();
            rule.min_production_year = r.value("min_production_year", 2018);
            rule.allowed_countries = r.value("allowed_countries", std::set<std::string>{});
            rule.requires_fidelity_program = r.value("requires_fidelity_program", false);
            rule.vin_check_method = parse_vin_check_method(r.value("vin_check_method", "automatic_api"));
            set.add(std::move(rule));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
    return set;
}

Json dump_rules(const RuleSet& rules)
{
    Json arr = Json::array();
    for (const auto& r : rules.all())
        arr.push_back({{"brand", r.brand.value},
                       {"allowed_models", r.allowed_models},
                       {"min_production_year", r.min_production_year},
                       {"allowed_countries", r.allowed_countries},
                       {"requires_fidelity_program", r.requires_fidelity_program},
                       {"vin_check_method", to_string(r.vin_check_method)}});
    return Json{{"rules", arr}};
}

FleetFixture load_fleet(const Json& j)
{
    FleetFixture f;
    try {
        f.name = j.value("name", "");
        for (const auto& v : j.at("vehicles")) {
            auto vehicle = decode<Vehicle>(v);
            if (v.contains("vin_check"))
                f.vin_table.set(vehicle.vin, v.at("vin_check").get<bool>());
            f.vehicles.push_back(std::move(vehicle));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
    return f;
}

Json encode_outcome(const EligibilityOutcome& o)
{
    Json j{{"vin", o.vin},
           {"requirement_ok", o.requirement_ok},
           {"vin_check", to_string(o.vin_check)},
           {"checked_at", o.checked_at}};
    if (o.method)
        j["method"] = to_string(*o.method);
    if (o.resolves_at)
        j["resolves_at"] = *o.resolves_at;
    return j;
}

EligibilityOutcome decode_outcome(const Json& j)
{
    try {
        EligibilityOutcome o{j.at("vin").get<Vin>(), false, VinCheck::Pending, {}, {}, {}};
        o.requirement_ok = j.at("requirement_ok").get<bool>();
        o.vin_check = parse_vin_check(j.at("vin_check").get<std::string>());
        o.checked_at = j.at("checked_at").get<Timestamp>();
        if (j.contains("method"))
            o.method = parse_vin_check_method(j.at("method").get<std::string>());
        if (j.contains("resolves_at"))
            o.resolves_at = j.at("resolves_at").get<Timestamp>();
        if (o.vin_check != VinCheck::Pending && !o.requirement_ok)
            throw Error(Errc::ParseError, "vin check resolved without a passed requirement check");
        return o;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

Json encode_report(const EligibilityReport& r)
{
    Json rows = Json::array();
    for (const auto& [brand, c] : r)
        rows.push_back({{"brand", brand},
                        {"vehicles", c.vehicles},
                        {"requirements_passed", c.requirements_passed},
                        {"vin_check_passed", c.vin_check_passed}});
    return Json{{"schema_version", 1}, {"rows", rows}};
}

} // namespace cvp::eligibility
