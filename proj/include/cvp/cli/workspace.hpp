#pragma once

#include "cvp/platform/platform.hpp"

#include <filesystem>
#include <memory>
#include <vector>

namespace cvp::cli {

/// A platform persisted in one directory: `workspace.json` (config and
/// runner state) next to the file-backed stores.
class Workspace {
public:
    static bool exists(const std::filesystem::path& dir);

    /// Enrolls `fleet` on a fresh platform. Throws InvalidConfig when a
    /// workspace is already there, unless `force` (which wipes it).
    static Workspace create(const std::filesystem::path& dir, platform::PlatformConfig config,
                            const std::vector<platform::FleetVehicle>& fleet, bool force = false);
    /// Throws StorageIo when there is none.
    static Workspace open(const std::filesystem::path& dir);

    platform::Platform& platform() { return *platform_; }
    const std::filesystem::path& dir() const { return dir_; }

    /// Writes workspace.json atomically.
    void save() const;

private:
    Workspace(std::filesystem::path dir, std::unique_ptr<platform::Platform> p)
        : dir_(std::move(dir)), platform_(std::move(p))
    {
    }

    std::filesystem::path dir_;
    std::unique_ptr<platform::Platform> platform_;
};

/// Any registered brand, plus "stellantis" for stellantis-like.
BrandId resolve_brand(const ProfileRegistry& profiles, std::string_view name);

/// Deterministic VIN for the n-th generated car of a brand.
Vin generated_vin(const BrandId& brand, int n);

/// One car per brand, commuter trip model unless `model` is given.
std::vector<platform::FleetVehicle> default_fleet(const ProfileRegistry& profiles,
                                                  const std::vector<std::string>& brands,
                                                  const std::string& model = "");

} // namespace cvp::cli
