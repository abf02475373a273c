#include "cvp/cli/workspace.hpp"

#include <cstdio>
#include <fstream>
#include <map>

namespace cvp::cli {

namespace fs = std::filesystem;
using platform::FleetVehicle;
using platform::Platform;
using platform::PlatformConfig;

namespace {

constexpr int kWorkspaceVersion = 1;

fs::path manifest(const fs::path& dir) { return dir / "workspace.json"; }

std::unique_ptr<Platform> make_platform(PlatformConfig config, const fs::path& dir)
{
    config.data_dir = dir;
    return std::make_unique<Platform>(std::move(config));
}

} // namespace

bool Workspace::exists(const fs::path& dir) { return fs::exists(manifest(dir)); }

Workspace Workspace::create(const fs::path& dir, PlatformConfig config, const std::vector<FleetVehicle>& fleet,
                            bool force)
{
    if (exists(dir)) {
        if (!force)
            throw Error(Errc::InvalidConfig, "a workspace already exists in " + dir.string() + " (use --force)");
        fs::remove(manifest(dir));
        fs::remove_all(dir / "static");
        fs::remove_all(dir / "series");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error(Errc::StorageIo, dir.string() + ": " + ec.message());
    Workspace w(dir, make_platform(std::move(config), dir));
    for (const auto& v : fleet)
        w.platform().enroll(v);
    w.save();
    return w;
}

Workspace Workspace::open(const fs::path& dir)
{
    std::ifstream in(manifest(dir));
    if (!in)
        throw Error(Errc::StorageIo, "no workspace in " + dir.string() + " (run `sim start` or `collect run`)");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, manifest(dir).string() + ": " + e.what());
    }
    if (j.value("version", 0) != kWorkspaceVersion)
        throw Error(Errc::ParseError, "unsupported workspace version");
    Workspace w(dir, make_platform(platform::decode_platform_config(j.at("config")), dir));
    w.platform().restore(j.at("state"));
    return w;
}

void Workspace::save() const
{
    auto config = platform_->config();
    config.data_dir.reset(); // the directory is wherever the workspace lives
    Json j{{"version", kWorkspaceVersion}, {"config", platform::encode(config)}, {"state", platform_->state()}};
    auto tmp = manifest(dir_);
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << j.dump(1) << '\n';
        if (!out)
            throw Error(Errc::StorageIo, "cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, manifest(dir_), ec);
    if (ec)
        throw Error(Errc::StorageIo, manifest(dir_).string() + ": " + ec.message());
}

BrandId resolve_brand(const ProfileRegistry& profiles, std::string_view name)
{
    BrandId id{std::string(name)};
    if (profiles.contains(id))
        return id;
    if (name == "stellantis")
        return BrandId{"stellantis-like"};
    throw Error(Errc::UnknownBrand, std::string(name));
}

Vin generated_vin(const BrandId& brand, int n)
{
    static const std::map<std::string, std::string> wmi{
        {"bmw", "WBA"},    {"bmw-like", "WBA"},    {"mercedes", "WDD"}, {"mercedes-like", "WDD"},
        {"peugeot", "VF3"}, {"stellantis-like", "VF3"}, {"citroen", "VF7"}, {"fiat", "ZFA"},
        {"alfa-romeo", "ZAR"},
    };
    auto it = wmi.find(brand.value);
    char serial[12];
    std::snprintf(serial, sizeof serial, "%011d", n);
    return Vin::parse((it == wmi.end() ? std::string("XXX") : it->second) + "CVP" + serial);
}

std::vector<FleetVehicle> default_fleet(const ProfileRegistry& profiles, const std::vector<std::string>& brands,
                                        const std::string& model)
{
    std::vector<FleetVehicle> fleet;
    std::map<BrandId, int> seen;
    for (const auto& name : brands) {
        auto brand = resolve_brand(profiles, name);
        sim::SimVehicleConfig c(generated_vin(brand, ++seen[brand]), brand);
        c.trip_model = sim::named_trip_model(model.empty() ? "commuter" : model);
        FleetVehicle v(c);
        v.model = model.empty() ? "commuter" : model;
        fleet.push_back(v);
    }
    return fleet;
}

} // namespace cvp::cli
