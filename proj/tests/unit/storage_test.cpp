#include <catch2/catch_amalgamated.hpp>

#include "cvp/storage/series_store.hpp"
#include "cvp/storage/static_store.hpp"

#include <filesystem>
#include <random>
#include <sstream>

using namespace cvp;
using namespace cvp::storage;
using namespace std::chrono;
namespace fs = std::filesystem;

namespace {

const Vin kVin = Vin::parse("WBA11111111111111");
const Timestamp kT0 = sys_days{2022y / February / 15} + 0ms;

TelemetrySample odo(double km, Timestamp at)
{
    return TelemetrySample{kVin, DataPointKind::odometer, Kilometers{km}, at, SampleSource::request};
}

TelemetrySample fuel(double l, Timestamp at)
{
    return TelemetrySample{kVin, DataPointKind::fuel_volume, Liters{l}, at, SampleSource::request};
}

struct TempDir {
    fs::path path;
    TempDir()
    {
        static int counter = 0;
        path = fs::temp_directory_path() / ("cvp-storage-" + std::to_string(::getpid()) + "-" + std::to_string(++counter));
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEMPLATE_TEST_CASE("append_samples writes fresh samples and is idempotent", "[storage]", MemorySeriesStore)
{
    TestType store;
    std::vector<TelemetrySample> batch{odo(40000, kT0), fuel(40, kT0),
                                       TelemetrySample{kVin, DataPointKind::gps_coordinates, GeoPoint{49.6, 6.12},
                                                       kT0, SampleSource::request}};
    CHECK(store.append_samples(batch).written == 3);
    auto again = store.append_samples(batch);
    CHECK(again.written == 0);
    CHECK(again.errors.size() == 3);
    CHECK(again.errors[0].code == Errc::DuplicatePoint);
    CHECK(store.sample_count() == 3);
}

TEST_CASE("odometer regressions are rejected per sample", "[storage]")
{
    MemorySeriesStore store;
    REQUIRE(store.append_samples(std::vector{odo(40000, kT0)}).written == 1);

    std::vector<TelemetrySample> batch{fuel(39, kT0 + 1h), odo(39990, kT0 + 1h), odo(40010, kT0 + 2h)};
    auto report = store.append_samples(batch);
    CHECK(report.written == 2);
    REQUIRE(report.errors.size() == 1);
    CHECK(report.errors[0].index == 1);
    CHECK(report.errors[0].code == Errc::OdometerRegression);

    // Out-of-order insert must also fit between its neighbours.
    CHECK(store.append_samples(std::vector{odo(40020, kT0 + 90min)}).errors.at(0).code == Errc::OdometerRegression);
    CHECK(store.append_samples(std::vector{odo(40005, kT0 + 90min)}).written == 1);
}

TEST_CASE("odometer series stays non-decreasing under random inserts", "[storage][property]")
{
    // Oracle: brute-force monotonicity check on whatever the store accepted.
    std::mt19937_64 rng(7);
    for (int round = 0; round < 50; ++round) {
        MemorySeriesStore store;
        for (int i = 0; i < 200; ++i) {
            auto at = kT0 + minutes{std::uniform_int_distribution<int>(0, 5000)(rng)};
            auto km = std::uniform_real_distribution<double>(0, 1000)(rng);
            store.append_samples(std::vector{odo(km, at)});
        }
        auto series = store.query_series(kVin, DataPointKind::odometer, TimeRange::all());
        for (std::size_t i = 1; i < series.size(); ++i) {
            REQUIRE(series[i - 1].observed_at <= series[i].observed_at);
            REQUIRE(std::get<Kilometers>(series[i - 1].value).value <= std::get<Kilometers>(series[i].value).value);
        }
    }
}

TEST_CASE("query_series filters by range and downsamples to the last value per bucket", "[storage]")
{
    MemorySeriesStore store;
    std::vector<TelemetrySample> batch;
    // 1 Hz fuel series over 10 minutes, decreasing.
    for (int s = 0; s < 600; ++s)
        batch.push_back(fuel(50.0 - s * 0.001, kT0 + seconds{s}));
    REQUIRE(store.append_samples(batch).written == 600);

    CHECK(store.query_series(kVin, DataPointKind::fuel_volume, {kT0 + 1h, kT0 + 2h}).empty());
    CHECK(store.query_series(kVin, DataPointKind::fuel_volume, {kT0, kT0}).empty());
    CHECK(store.query_series(kVin, DataPointKind::fuel_volume, {kT0 + 10s, kT0 + 20s}).size() == 10);

    auto down = store.query_series(kVin, DataPointKind::fuel_volume, {kT0, kT0 + 10min}, kMinute);
    // Oracle: last point of each minute is at second 59 of that minute.
    REQUIRE(down.size() == 10);
    for (int m = 0; m < 10; ++m) {
        CHECK(down[m].observed_at == kT0 + minutes{m} + 59s);
        CHECK(std::get<Liters>(down[m].value).value == 50.0 - (m * 60 + 59) * 0.001);
    }
}

TEST_CASE("last_known returns the latest value per kind", "[storage]")
{
    MemorySeriesStore store;
    store.append_samples(std::vector{
        TelemetrySample{kVin, DataPointKind::doors_lock_state, LockState{false}, kT0, SampleSource::request},
        TelemetrySample{kVin, DataPointKind::doors_lock_state, LockState{true}, kT0 + 5min, SampleSource::request},
    });
    auto last = store.last_known(kVin, {DataPointKind::doors_lock_state, DataPointKind::odometer});
    REQUIRE(last.count(DataPointKind::doors_lock_state) == 1);
    CHECK(std::get<LockState>(last.at(DataPointKind::doors_lock_state).value).locked);
    CHECK(last.count(DataPointKind::odometer) == 0);
    CHECK(store.last_seen(kVin) == kT0 + 5min);
}

TEST_CASE("events deduplicate by delivery id", "[storage]")
{
    MemorySeriesStore store;
    NotificationEvent e{kVin, NotificationKind::accident_reported, kT0, "dlv-1"};
    CHECK(store.append_event(e));
    CHECK_FALSE(store.append_event(e));
    CHECK(store.query_events(kVin, TimeRange::all()).size() == 1);
    CHECK(store.data_point_count(kVin) == 1);
}

TEST_CASE("file store survives reopen, torn tails and compaction", "[storage][file]")
{
    TempDir dir;
    std::string before;
    {
        FileSeriesStore store(dir.path, 512);
        std::vector<TelemetrySample> batch;
        for (int i = 0; i < 30; ++i)
            batch.push_back(odo(1000 + i, kT0 + minutes{i}));
        REQUIRE(store.append_samples(batch).written == 30);
        REQUIRE(store.append_event(NotificationEvent{kVin, NotificationKind::battery_warning, kT0, "d1"}));
        CHECK(store.segment_count() > 1);
        before = export_all_jsonl(store);
    }
    {
        FileSeriesStore reopened(dir.path, 512);
        CHECK(export_all_jsonl(reopened) == before);
        reopened.compact();
        CHECK(reopened.segment_count() == 1);
        CHECK(export_all_jsonl(reopened) == before);
    }
    {
        // Simulate a crash in the middle of a batch: half a line at the tail.
        FileSeriesStore store(dir.path);
        auto segs = store.segment_count();
        REQUIRE(segs == 1);
    }
    fs::path segment;
    for (const auto& e : fs::directory_iterator(dir.path))
        segment = e.path();
    {
        std::ofstream out(segment, std::ios::app);
        out << R"({"kind":"odometer","observed_at":"2022-02-16T00:00:00.000Z","record":"sample","source":"request","value":2000.0,"vin":"WBA11111111111111"})"
            << '\n'
            << R"({"kind":"odometer","observed_at":"2022-02-16T00:01:0)";
    }
    FileSeriesStore recovered(dir.path);
    CHECK(recovered.recovered_torn_lines() == 1);
    CHECK(recovered.sample_count() == 31); // the complete line of the batch is kept
    // Appending after recovery starts on a clean line.
    REQUIRE(recovered.append_samples(std::vector{odo(2001, kT0 + 48h)}).written == 1);
    FileSeriesStore again(dir.path);
    CHECK(again.recovered_torn_lines() == 0);
    CHECK(again.sample_count() == 32);
}

TEST_CASE("export and import round-trip byte-identically", "[storage]")
{
    MemorySeriesStore a;
    a.append_samples(std::vector{odo(1, kT0), fuel(30, kT0), odo(2, kT0 + 1min)});
    a.append_event(NotificationEvent{kVin, NotificationKind::breakdown_reported, kT0, "d9"});
    auto dump = export_jsonl(a, kVin);

    MemorySeriesStore b;
    std::istringstream in(dump);
    auto report = import_jsonl(b, in);
    CHECK(report.samples_written == 3);
    CHECK(report.events_written == 1);
    CHECK(export_jsonl(b, kVin) == dump);

    std::istringstream again(dump);
    CHECK(import_jsonl(b, again).samples_written == 0);
}

TEST_CASE("static store enforces referential integrity and persists", "[storage][static]")
{
    auto profiles = ProfileRegistry::builtin();
    TempDir dir;
    Vehicle car{kVin, BrandId{"bmw"}, "116d", 2019, "LU", false};
    {
        FileStaticStore store(profiles, dir.path);
        CHECK_THROWS_AS(store.put_vehicle(Vehicle{kVin, BrandId{"acme"}, "x", 2020, "LU", false}), Error);
        CHECK_THROWS_AS(store.put_document(Collection::consents, kVin, Json{{"state", "EmailSent"}}), Error);
        store.put_vehicle(car);
        store.put_driver(Driver{"driver@example.com", "Test Driver"});
        store.put_document(Collection::consents, kVin, Json{{"state", "EmailSent"}});
    }
    FileStaticStore reopened(profiles, dir.path);
    CHECK(reopened.vehicle(kVin) == car);
    CHECK(reopened.driver("driver@example.com")->name == "Test Driver");
    CHECK(reopened.document(Collection::consents, kVin)->at("state") == "EmailSent");
    // Telemetry never lands in the static snapshot.
    CHECK_FALSE(reopened.snapshot().dump().find("observed_at") != std::string::npos);
}
