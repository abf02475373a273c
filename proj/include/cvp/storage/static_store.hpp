#pragma once

#include "cvp/core/codec.hpp"
#include "cvp/core/profile.hpp"
#include "cvp/core/types.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace cvp::storage {

// Workflow documents owned by other modules, stored as canonical JSON.
enum class Collection { consents, eligibility };

std::string_view to_string(Collection c);

/// Drivers, vehicles, consents and eligibility outcomes. Enforces
/// referential integrity: a vehicle's brand must have a profile, and every
/// consent or eligibility document must reference a stored vehicle.
class StaticStore {
public:
    explicit StaticStore(const ProfileRegistry& profiles) : profiles_(profiles) {}
    virtual ~StaticStore() = default;

    void put_driver(const Driver& driver);
    std::optional<Driver> driver(const std::string& email) const;

    void put_vehicle(const Vehicle& vehicle);
    std::optional<Vehicle> vehicle(const Vin& vin) const;
    std::vector<Vehicle> vehicles() const;

    void put_document(Collection c, const Vin& vin, const Json& doc);
    std::optional<Json> document(Collection c, const Vin& vin) const;
    std::vector<std::pair<Vin, Json>> documents(Collection c) const;

    /// Whole content as one canonical JSON object.
    Json snapshot() const;

protected:
    virtual void persist_locked() {}
    void load_snapshot_locked(const Json& j);
    Json snapshot_locked() const;

    mutable std::mutex mutex_;

private:
    const ProfileRegistry& profiles_;
    std::map<std::string, Driver> drivers_;
    std::map<Vin, Vehicle> vehicles_;
    std::map<Collection, std::map<Vin, Json>> documents_;
};

using MemoryStaticStore = StaticStore;

/// Persists the snapshot to `<dir>/static.json` after every mutation via
/// write-to-temp and rename, so a reader never sees a partial file.
class FileStaticStore final : public StaticStore {
public:
    FileStaticStore(const ProfileRegistry& profiles, std::filesystem::path dir);

private:
    void persist_locked() override;

    std::filesystem::path dir_;
};

} // namespace cvp::storage
