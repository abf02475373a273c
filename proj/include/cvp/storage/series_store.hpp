#pragma once

#include "cvp/core/error.hpp"
#include "cvp/core/types.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

namespace cvp::storage {

/// Half-open [from, to).
struct TimeRange {
    Timestamp from = Timestamp::min();
    Timestamp to = Timestamp::max();

    static TimeRange all() { return {}; }
    bool contains(Timestamp t) const { return t >= from && t < to; }
};

struct SampleError {
    std::size_t index = 0;
    Errc code = Errc::DuplicatePoint;
    std::string detail;
};

struct AppendReport {
    std::size_t written = 0;
    std::vector<SampleError> errors;
};

/// Append-only time-series port. Points are keyed by
/// (vin, kind, timestamp, source); queries return them in timestamp order.
class SeriesStore {
public:
    virtual ~SeriesStore() = default;

    /// Each sample is validated then checked for duplicates and, for
    /// odometer, monotonicity against its neighbours in time. Rejected
    /// samples are reported per index; the rest are written in order.
    virtual AppendReport append_samples(std::span<const TelemetrySample> samples) = 0;

    /// False when an event with the same delivery id is already stored.
    virtual bool append_event(const NotificationEvent& event) = 0;

    /// With `bucket`, returns the last point of each non-empty bucket
    /// (buckets aligned to the Unix epoch).
    virtual std::vector<TelemetrySample> query_series(const Vin& vin, DataPointKind kind, TimeRange range,
                                                      std::optional<Millis> bucket = std::nullopt) const = 0;

    virtual std::map<DataPointKind, TelemetrySample> last_known(const Vin& vin, const DataPointKinds& kinds) const = 0;

    virtual std::vector<NotificationEvent> query_events(const Vin& vin, TimeRange range) const = 0;

    virtual std::vector<Vin> vins() const = 0;

    /// Latest sample or event timestamp for the VIN.
    virtual std::optional<Timestamp> last_seen(const Vin& vin) const = 0;

    virtual std::size_t sample_count() const = 0;
    virtual std::size_t event_count() const = 0;

    /// Distinct observation instants (timestamp, source) plus stored events:
    /// what an operator would call "data points" collected for the VIN.
    virtual std::size_t data_point_count(const Vin& vin) const = 0;
};

/// Canonical JSON-lines dump of one VIN: samples and events interleaved in
/// (timestamp, record, kind, source) order. Byte-stable for equal content.
std::string export_jsonl(const SeriesStore& store, const Vin& vin);

/// Full dump of every VIN in VIN order.
std::string export_all_jsonl(const SeriesStore& store);

struct ImportReport {
    std::size_t samples_written = 0;
    std::size_t events_written = 0;
    std::size_t rejected = 0;
};

/// Reads the export format back. Duplicates are skipped.
ImportReport import_jsonl(SeriesStore& store, std::istream& in);

class MemorySeriesStore : public SeriesStore {
public:
    AppendReport append_samples(std::span<const TelemetrySample> samples) override;
    bool append_event(const NotificationEvent& event) override;
    std::vector<TelemetrySample> query_series(const Vin& vin, DataPointKind kind, TimeRange range,
                                              std::optional<Millis> bucket = std::nullopt) const override;
    std::map<DataPointKind, TelemetrySample> last_known(const Vin& vin, const DataPointKinds& kinds) const override;
    std::vector<NotificationEvent> query_events(const Vin& vin, TimeRange range) const override;
    std::vector<Vin> vins() const override;
    std::optional<Timestamp> last_seen(const Vin& vin) const override;
    std::size_t sample_count() const override;
    std::size_t event_count() const override;
    std::size_t data_point_count(const Vin& vin) const override;

protected:
    struct PointKey {
        Timestamp at;
        SampleSource source;
        auto operator<=>(const PointKey&) const = default;
    };
    using Series = std::map<PointKey, SampleValue>;

    struct VinData {
        std::map<DataPointKind, Series> series;
        std::vector<NotificationEvent> events; // sorted by (emitted_at, delivery_id)
    };

    /// Checks `s` against the index. Returns the rejection, if any.
    std::optional<SampleError> check_locked(const TelemetrySample& s) const;
    void insert_locked(const TelemetrySample& s);
    void erase_locked(const TelemetrySample& s);
    bool has_event_locked(const std::string& delivery_id) const { return delivery_ids_.count(delivery_id) != 0; }
    void insert_event_locked(const NotificationEvent& e);
    std::string dump_locked() const;

    mutable std::shared_mutex mutex_;
    std::map<Vin, VinData> data_;
    std::set<std::string> delivery_ids_;
    std::size_t samples_ = 0;
    std::size_t events_ = 0;
};

/// File-backed engine: every accepted record is first appended to a
/// JSON-lines write-ahead segment, then indexed in memory. Reopening
/// replays the segments; a torn trailing line is discarded, so an
/// interrupted batch leaves a prefix of itself. compact() rewrites all
/// segments into one sorted file.
class FileSeriesStore final : public MemorySeriesStore {
public:
    explicit FileSeriesStore(std::filesystem::path dir, std::size_t segment_bytes = 4u << 20);

    AppendReport append_samples(std::span<const TelemetrySample> samples) override;
    bool append_event(const NotificationEvent& event) override;

    void compact();
    std::size_t segment_count() const;

    /// Lines dropped during recovery (torn or unparsable tails).
    std::size_t recovered_torn_lines() const { return torn_lines_; }

    const std::filesystem::path& dir() const { return dir_; }

private:
    void recover();
    void open_segment_locked(std::size_t index);
    void write_lines_locked(const std::vector<std::string>& lines);

    std::filesystem::path dir_;
    std::size_t segment_bytes_;
    std::size_t current_index_ = 0;
    std::ofstream out_;
    std::size_t torn_lines_ = 0;
};

} // namespace cvp::storage
