#include "cvp/storage/static_store.hpp"

#include "cvp/core/error.hpp"

#include <fstream>

namespace cvp::storage {

namespace fs = std::filesystem;

std::string_view to_string(Collection c)
{
    return c == Collection::consents ? "consents" : "eligibility";
}

void StaticStore::put_driver(const Driver& driver)
{
    std::lock_guard lock(mutex_);
    drivers_[driver.email] = driver;
    persist_locked();
}

std::optional<Driver> StaticStore::driver(const std::string& email) const
{
    std::lock_guard lock(mutex_);
    auto it = drivers_.find(email);
    if (it == drivers_.end())
        return std::nullopt;
    return it->second;
}

void StaticStore::put_vehicle(const Vehicle& vehicle)
{
    if (!profiles_.contains(vehicle.brand))
        throw Error(Errc::ReferentialIntegrity, "no profile for brand '" + vehicle.brand.value + "'");
    std::lock_guard lock(mutex_);
    vehicles_.insert_or_assign(vehicle.vin, vehicle);
    persist_locked();
}

std::optional<Vehicle> StaticStore::vehicle(const Vin& vin) const
{
    std::lock_guard lock(mutex_);
    auto it = vehicles_.find(vin);
    if (it == vehicles_.end())
        return std::nullopt;
    return it->second;
}

std::vector<Vehicle> StaticStore::vehicles() const
{
    std::lock_guard lock(mutex_);
    std::vector<Vehicle> out;
    for (const auto& [_, v] : vehicles_)
        out.push_back(v);
    return out;
}

void StaticStore::put_document(Collection c, const Vin& vin, const Json& doc)
{
    std::lock_guard lock(mutex_);
    if (!vehicles_.count(vin))
        throw Error(Errc::ReferentialIntegrity,
                    std::string(to_string(c)) + " document for unknown vehicle " + vin.str());
    documents_[c].insert_or_assign(vin, doc);
    persist_locked();
}

std::optional<Json> StaticStore::document(Collection c, const Vin& vin) const
{
    std::lock_guard lock(mutex_);
    auto cit = documents_.find(c);
    if (cit == documents_.end())
        return std::nullopt;
    auto it = cit->second.find(vin);
    if (it == cit->second.end())
        return std::nullopt;
    return std::optional<Json>{std::in_place, it->second};
}

std::vector<std::pair<Vin, Json>> StaticStore::documents(Collection c) const
{
    std::lock_guard lock(mutex_);
    std::vector<std::pair<Vin, Json>> out;
    auto cit = documents_.find(c);
    if (cit != documents_.end())
        for (const auto& [vin, doc] : cit->second)
            out.emplace_back(vin, doc);
    return out;
}

Json StaticStore::snapshot() const
{
    std::lock_guard lock(mutex_);
    return snapshot_locked();
}

Json StaticStore::snapshot_locked() const
{
    Json j = Json::object();
    j["drivers"] = Json::array();
    for (const auto& [_, d] : drivers_)
        j["drivers"].push_back(d);
    j["vehicles"] = Json::array();
    for (const auto& [_, v] : vehicles_)
        j["vehicles"].push_back(v);
    for (auto c : {Collection::consents, Collection::eligibility}) {
        Json docs = Json::object();
        if (auto cit = documents_.find(c); cit != documents_.end())
            for (const auto& [vin, doc] : cit->second)
                docs[vin.str()] = doc;
        j[std::string(to_string(c))] = docs;
    }
    return j;
}

void StaticStore::load_snapshot_locked(const Json& j)
{
    for (const auto& d : j.value("drivers", Json::array())) {
        auto driver = decode<Driver>(d);
        drivers_[driver.email] = driver;
    }
    for (const auto& v : j.value("vehicles", Json::array())) {
        auto vehicle = decode<Vehicle>(v);
        if (!profiles_.contains(vehicle.brand))
            throw Error(Errc::ReferentialIntegrity, "no profile for brand '" + vehicle.brand.value + "'");
        vehicles_.insert_or_assign(vehicle.vin, vehicle);
    }
    for (auto c : {Collection::consents, Collection::eligibility}) {
        Json docs = j.value(std::string(to_string(c)), Json::object());
        for (const auto& [vin, doc] : docs.items()) {
            auto v = Vin::parse(vin);
            if (!vehicles_.count(v))
                throw Error(Errc::ReferentialIntegrity, "dangling document for " + vin);
            documents_[c].insert_or_assign(v, doc);
        }
    }
}

FileStaticStore::FileStaticStore(const ProfileRegistry& profiles, fs::path dir)
    : StaticStore(profiles), dir_(std::move(dir))
{
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec)
        throw Error(Errc::StorageIo, "cannot create " + dir_.string());
    auto file = dir_ / "static.json";
    if (fs::exists(file)) {
        std::ifstream in(file);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::lock_guard lock(mutex_);
        load_snapshot_locked(parse_json(text));
    }
}

void FileStaticStore::persist_locked()
{
    Json j = snapshot_locked();
    auto tmp = dir_ / "static.json.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << j.dump(2) << '\n';
        out.flush();
        if (!out)
            throw Error(Errc::StorageIo, "cannot write " + tmp.string());
    }
    fs::rename(tmp, dir_ / "static.json");
}

} // namespace cvp::storage
