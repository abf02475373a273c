#pragma once

#include "cvp/core/codec.hpp"
#include "cvp/core/profile.hpp"
#include "cvp/core/time.hpp"
#include "cvp/core/types.hpp"

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace cvp::eligibility {

enum class VinCheckMethod { automatic_api, manual_review };
enum class VinCheck { Pending, Eligible, NotEligible };

std::string_view to_string(VinCheckMethod m);
std::string_view to_string(VinCheck c);
VinCheckMethod parse_vin_check_method(std::string_view s);
VinCheck parse_vin_check(std::string_view s);

/// One OEM requirement list. A model set containing "*" accepts any model;
/// an empty country set accepts any country.
struct RequirementRule {
    BrandId brand;
    std::set<std::string> allowed_models{"*"};
    int min_production_year = 2018;
    std::set<std::string> allowed_countries;
    bool requires_fidelity_program = false;
    VinCheckMethod vin_check_method = VinCheckMethod::automatic_api;

    bool operator==(const RequirementRule&) const = default;
};

class RuleSet {
public:
    RuleSet() = default;
    explicit RuleSet(std::vector<RequirementRule> rules);

    void add(RequirementRule rule);
    std::vector<const RequirementRule*> rules_for(const BrandId& brand) const;
    const std::vector<RequirementRule>& all() const { return rules_; }

    /// Method of the first rule for the brand. Throws Error{NoRuleForBrand}.
    VinCheckMethod vin_check_method(const BrandId& brand) const;

private:
    std::vector<RequirementRule> rules_;
};

/// True iff some rule for the vehicle's brand matches on every clause.
/// Throws Error{NoRuleForBrand}.
bool requirement_check(const Vehicle& vehicle, const RuleSet& rules);

struct EligibilityOutcome {
    Vin vin;
    bool requirement_ok = false;
    VinCheck vin_check = VinCheck::Pending;
    Timestamp checked_at{};
    std::optional<VinCheckMethod> method;  // absent when the VIN check was never attempted
    std::optional<Timestamp> resolves_at;  // manual review only

    bool operator==(const EligibilityOutcome&) const = default;
};

/// OEM side of the VIN check. Throws Error{UnknownVinAtOem}.
class VinCheckPort {
public:
    virtual ~VinCheckPort() = default;
    virtual bool vin_eligible(const Vin& vin) const = 0;
};

/// Fixture-backed answer table keyed by VIN.
class VinTable final : public VinCheckPort {
public:
    VinTable() = default;
    explicit VinTable(std::map<Vin, bool> entries) : entries_(std::move(entries)) {}

    bool vin_eligible(const Vin& vin) const override;
    void set(const Vin& vin, bool eligible) { entries_[vin] = eligible; }
    const std::map<Vin, bool>& entries() const { return entries_; }

private:
    std::map<Vin, bool> entries_;
};

/// Manual-review latency: `business_days` weekdays (UTC calendar), unless
/// `fixed` overrides it (test clocks).
struct ReviewDelay {
    int business_days = 2;
    std::optional<Millis> fixed;
};

Timestamp review_due(Timestamp start, const ReviewDelay& delay);

/// Sequential two-step pipeline. Outcomes are kept per VIN; a pending
/// manual review resolves once, on the first resolve_due() past its due time.
class EligibilityService {
public:
    EligibilityService(RuleSet rules, const VinCheckPort& oem, const Clock& clock, ReviewDelay delay = {});

    /// Requirement check, then the brand's VIN check when it passed.
    EligibilityOutcome check(const Vehicle& vehicle);

    /// Throws Error{RequirementNotChecked} unless a passed requirement check
    /// is on record, Error{UnknownVinAtOem} for automatic checks on unknown VINs.
    EligibilityOutcome vin_check(const Vin& vin, VinCheckMethod method);

    /// Resolves every due manual review and returns the resolved outcomes.
    std::vector<EligibilityOutcome> resolve_due();

    std::optional<EligibilityOutcome> outcome(const Vin& vin) const;
    std::vector<EligibilityOutcome> outcomes() const;

    /// Reload a persisted outcome.
    void restore(const EligibilityOutcome& outcome);

    const RuleSet& rules() const { return rules_; }

private:
    EligibilityOutcome vin_check_locked(const Vin& vin, VinCheckMethod method);

    RuleSet rules_;
    const VinCheckPort& oem_;
    const Clock& clock_;
    ReviewDelay delay_;
    mutable std::mutex mutex_;
    std::map<Vin, EligibilityOutcome> outcomes_;
};

struct BrandCounts {
    int vehicles = 0;
    int requirements_passed = 0;
    int vin_check_passed = 0;

    bool operator==(const BrandCounts&) const = default;
};

/// Keyed by the profile display name.
using EligibilityReport = std::map<std::string, BrandCounts>;

/// Throws Error{PendingChecksRemain} when a vehicle has no outcome or a
/// passed requirement check still waits on its VIN check.
EligibilityReport eligibility_report(const std::vector<Vehicle>& fleet, const std::vector<EligibilityOutcome>& outcomes,
                                     const ProfileRegistry& profiles);

/// Fleet fixture: vehicles plus the OEM's VIN answers.
struct FleetFixture {
    std::string name;
    std::vector<Vehicle> vehicles;
    VinTable vin_table;
};

RuleSet load_rules(const Json& j);
Json dump_rules(const RuleSet& rules);
FleetFixture load_fleet(const Json& j);
Json encode_outcome(const EligibilityOutcome& o);
EligibilityOutcome decode_outcome(const Json& j);
Json encode_report(const EligibilityReport& r);

} // namespace cvp::eligibility
