#include "cvp/storage/series_store.hpp"

#include "cvp/core/codec.hpp"

#include <algorithm>
#include <istream>
#include <mutex>
#include <sstream>

namespace cvp::storage {

namespace fs = std::filesystem;

namespace {

constexpr SampleSource kFirstSource = SampleSource::request;
constexpr SampleSource kLastSource = SampleSource::notification;

double odometer_km(const SampleValue& v)
{
    return std::get<Kilometers>(v).value;
}

Json sample_record(const TelemetrySample& s)
{
    Json j = s;
    j["record"] = "sample";
    return j;
}

Json event_record(const NotificationEvent& e)
{
    Json j = e;
    j["record"] = "event";
    return j;
}

} // namespace

std::optional<SampleError> MemorySeriesStore::check_locked(const TelemetrySample& s) const
{
    try {
        validate(s);
    } catch (const Error& e) {
        return SampleError{0, e.code(), e.what()};
    }
    auto vit = data_.find(s.vin);
    if (vit == data_.end())
        return std::nullopt;
    auto sit = vit->second.series.find(s.kind);
    if (sit == vit->second.series.end())
        return std::nullopt;
    const Series& series = sit->second;

    if (series.count(PointKey{s.observed_at, s.source}))
        return SampleError{0, Errc::DuplicatePoint,
                           "point already stored at " + format_rfc3339(s.observed_at) + " for " +
                               std::string(to_string(s.kind))};

    if (s.kind == DataPointKind::odometer) {
        const double km = odometer_km(s.value);
        auto first_at_or_after = series.lower_bound(PointKey{s.observed_at, kFirstSource});
        if (first_at_or_after != series.begin()) {
            auto before = std::prev(first_at_or_after);
            if (odometer_km(before->second) > km)
                return SampleError{0, Errc::OdometerRegression,
                                   std::to_string(km) + " km after " + std::to_string(odometer_km(before->second)) +
                                       " km"};
        }
        auto last = series.upper_bound(PointKey{s.observed_at, kLastSource});
        for (auto it = first_at_or_after; it != last; ++it)
            if (odometer_km(it->second) != km)
                return SampleError{0, Errc::OdometerRegression, "conflicting odometer at the same instant"};
        if (last != series.end() && odometer_km(last->second) < km)
            return SampleError{0, Errc::OdometerRegression,
                               std::to_string(km) + " km before later " + std::to_string(odometer_km(last->second)) +
                                   " km"};
    }
    return std::nullopt;
}

void MemorySeriesStore::insert_locked(const TelemetrySample& s)
{
    data_[s.vin].series[s.kind].emplace(PointKey{s.observed_at, s.source}, s.value);
    ++samples_;
}

void MemorySeriesStore::erase_locked(const TelemetrySample& s)
{
    auto& series = data_[s.vin].series[s.kind];
    if (series.erase(PointKey{s.observed_at, s.source}))
        --samples_;
}

void MemorySeriesStore::insert_event_locked(const NotificationEvent& e)
{
    auto& events = data_[e.vin].events;
    auto pos = std::upper_bound(events.begin(), events.end(), e, [](const auto& a, const auto& b) {
        return std::tie(a.emitted_at, a.delivery_id) < std::tie(b.emitted_at, b.delivery_id);
    });
    events.insert(pos, e);
    delivery_ids_.insert(e.delivery_id);
    ++events_;
}

AppendReport MemorySeriesStore::append_samples(std::span<const TelemetrySample> samples)
{
    std::unique_lock lock(mutex_);
    AppendReport report;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (auto err = check_locked(samples[i])) {
            err->index = i;
            report.errors.push_back(std::move(*err));
            continue;
        }
        insert_locked(samples[i]);
        ++report.written;
    }
    return report;
}

bool MemorySeriesStore::append_event(const NotificationEvent& event)
{
    std::unique_lock lock(mutex_);
    if (has_event_locked(event.delivery_id))
        return false;
    insert_event_locked(event);
    return true;
}

std::vector<TelemetrySample> MemorySeriesStore::query_series(const Vin& vin, DataPointKind kind, TimeRange range,
                                                             std::optional<Millis> bucket) const
{
    std::shared_lock lock(mutex_);
    std::vector<TelemetrySample> out;
    auto vit = data_.find(vin);
    if (vit == data_.end())
        return out;
    auto sit = vit->second.series.find(kind);
    if (sit == vit->second.series.end() || range.from >= range.to)
        return out;
    const Series& series = sit->second;
    auto it = series.lower_bound(PointKey{range.from, kFirstSource});
    auto end = series.lower_bound(PointKey{range.to, kFirstSource});
    for (; it != end; ++it) {
        TelemetrySample s{vin, kind, it->second, it->first.at, it->first.source};
        if (bucket && !out.empty()) {
            auto b = bucket->count();
            auto key = [b](Timestamp t) {
                auto ms = to_unix_ms(t);
                return ms >= 0 ? ms / b : (ms - b + 1) / b;
            };
            if (key(out.back().observed_at) == key(s.observed_at)) {
                out.back() = std::move(s);
                continue;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::map<DataPointKind, TelemetrySample> MemorySeriesStore::last_known(const Vin& vin,
                                                                       const DataPointKinds& kinds) const
{
    std::shared_lock lock(mutex_);
    std::map<DataPointKind, TelemetrySample> out;
    auto vit = data_.find(vin);
    if (vit == data_.end())
        return out;
    for (auto kind : kinds) {
        auto sit = vit->second.series.find(kind);
        if (sit == vit->second.series.end() || sit->second.empty())
            continue;
        const auto& [key, value] = *sit->second.rbegin();
        out.emplace(kind, TelemetrySample{vin, kind, value, key.at, key.source});
    }
    return out;
}

std::vector<NotificationEvent> MemorySeriesStore::query_events(const Vin& vin, TimeRange range) const
{
    std::shared_lock lock(mutex_);
    std::vector<NotificationEvent> out;
    auto vit = data_.find(vin);
    if (vit == data_.end())
        return out;
    for (const auto& e : vit->second.events)
        if (range.contains(e.emitted_at))
            out.push_back(e);
    return out;
}

std::vector<Vin> MemorySeriesStore::vins() const
{
    std::shared_lock lock(mutex_);
    std::vector<Vin> out;
    for (const auto& [vin, _] : data_)
        out.push_back(vin);
    return out;
}

std::optional<Timestamp> MemorySeriesStore::last_seen(const Vin& vin) const
{
    std::shared_lock lock(mutex_);
    auto vit = data_.find(vin);
    if (vit == data_.end())
        return std::nullopt;
    std::optional<Timestamp> latest;
    for (const auto& [_, series] : vit->second.series)
        if (!series.empty() && (!latest || series.rbegin()->first.at > *latest))
            latest = series.rbegin()->first.at;
    if (!vit->second.events.empty() && (!latest || vit->second.events.back().emitted_at > *latest))
        latest = vit->second.events.back().emitted_at;
    return latest;
}

std::size_t MemorySeriesStore::sample_count() const
{
    std::shared_lock lock(mutex_);
    return samples_;
}

std::size_t MemorySeriesStore::event_count() const
{
    std::shared_lock lock(mutex_);
    return events_;
}

std::size_t MemorySeriesStore::data_point_count(const Vin& vin) const
{
    std::shared_lock lock(mutex_);
    auto vit = data_.find(vin);
    if (vit == data_.end())
        return 0;
    std::set<PointKey> instants;
    for (const auto& [_, series] : vit->second.series)
        for (const auto& [key, _v] : series)
            instants.insert(key);
    return instants.size() + vit->second.events.size();
}

// ---------------------------------------------------------------------------

namespace {

struct Row {
    Timestamp at;
    int record;
    std::string kind;
    std::string tail;
    std::string line;
};

Row sample_row(const TelemetrySample& s)
{
    return Row{s.observed_at, 0, std::string(to_string(s.kind)), std::string(to_string(s.source)),
               sample_record(s).dump()};
}

Row event_row(const NotificationEvent& e)
{
    return Row{e.emitted_at, 1, std::string(to_string(e.kind)), e.delivery_id, event_record(e).dump()};
}

std::string render(std::vector<Row> rows)
{
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return std::tie(a.at, a.record, a.kind, a.tail) < std::tie(b.at, b.record, b.kind, b.tail);
    });
    std::string out;
    for (const auto& r : rows) {
        out += r.line;
        out += '\n';
    }
    return out;
}

} // namespace

std::string export_jsonl(const SeriesStore& store, const Vin& vin)
{
    std::vector<Row> rows;
    for (auto kind : kAllDataPointKinds)
        for (const auto& s : store.query_series(vin, kind, TimeRange::all()))
            rows.push_back(sample_row(s));
    for (const auto& e : store.query_events(vin, TimeRange::all()))
        rows.push_back(event_row(e));
    return render(std::move(rows));
}

std::string MemorySeriesStore::dump_locked() const
{
    std::string out;
    for (const auto& [vin, vd] : data_) {
        std::vector<Row> rows;
        for (const auto& [kind, series] : vd.series)
            for (const auto& [key, value] : series)
                rows.push_back(sample_row(TelemetrySample{vin, kind, value, key.at, key.source}));
        for (const auto& e : vd.events)
            rows.push_back(event_row(e));
        out += render(std::move(rows));
    }
    return out;
}

std::string export_all_jsonl(const SeriesStore& store)
{
    std::string out;
    for (const auto& vin : store.vins())
        out += export_jsonl(store, vin);
    return out;
}

ImportReport import_jsonl(SeriesStore& store, std::istream& in)
{
    ImportReport report;
    std::string line;
    std::vector<TelemetrySample> batch;
    auto flush = [&] {
        auto r = store.append_samples(batch);
        report.samples_written += r.written;
        for (const auto& e : r.errors)
            if (e.code != Errc::DuplicatePoint)
                ++report.rejected;
        batch.clear();
    };
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto j = parse_json(line);
        auto record = j.value("record", std::string("sample"));
        if (record == "sample") {
            batch.push_back(decode<TelemetrySample>(j));
        } else if (record == "event") {
            flush();
            if (store.append_event(decode<NotificationEvent>(j)))
                ++report.events_written;
        } else {
            throw Error(Errc::ParseError, "unknown record type '" + record + "'");
        }
    }
    flush();
    return report;
}

// ---------------------------------------------------------------------------

namespace {

std::string segment_name(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "series-%06zu.jsonl", index);
    return buf;
}

std::vector<std::pair<std::size_t, fs::path>> list_segments(const fs::path& dir)
{
    std::vector<std::pair<std::size_t, fs::path>> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        auto name = entry.path().filename().string();
        if (name.size() == 19 && name.rfind("series-", 0) == 0 && name.substr(13) == ".jsonl")
            out.emplace_back(std::stoul(name.substr(7, 6)), entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

FileSeriesStore::FileSeriesStore(fs::path dir, std::size_t segment_bytes)
    : dir_(std::move(dir)), segment_bytes_(segment_bytes)
{
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec)
        throw Error(Errc::StorageIo, "cannot create " + dir_.string() + ": " + ec.message());
    recover();
}

void FileSeriesStore::recover()
{
    std::unique_lock lock(mutex_);
    auto segments = list_segments(dir_);
    for (const auto& [index, path] : segments) {
        std::ifstream in(path, std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::size_t pos = 0;
        std::size_t good_end = 0;
        while (pos < content.size()) {
            auto nl = content.find('\n', pos);
            if (nl == std::string::npos) {
                ++torn_lines_; // no terminator: the write was interrupted
                break;
            }
            std::string_view line(content.data() + pos, nl - pos);
            try {
                auto j = Json::parse(line);
                if (j.at("record") == "sample") {
                    auto s = decode<TelemetrySample>(j);
                    if (!check_locked(s))
                        insert_locked(s);
                } else {
                    auto e = decode<NotificationEvent>(j);
                    if (!has_event_locked(e.delivery_id))
                        insert_event_locked(e);
                }
            } catch (const std::exception&) {
                ++torn_lines_;
                break;
            }
            pos = nl + 1;
            good_end = pos;
        }
        if (good_end < content.size()) {
            // Drop the torn tail so later appends start on a clean line.
            fs::resize_file(path, good_end);
        }
    }
    open_segment_locked(segments.empty() ? 1 : segments.back().first);
}

void FileSeriesStore::open_segment_locked(std::size_t index)
{
    if (out_.is_open())
        out_.close();
    current_index_ = index;
    out_.open(dir_ / segment_name(index), std::ios::binary | std::ios::app);
    if (!out_)
        throw Error(Errc::StorageIo, "cannot open segment " + segment_name(index));
}

void FileSeriesStore::write_lines_locked(const std::vector<std::string>& lines)
{
    for (const auto& l : lines) {
        out_ << l << '\n';
    }
    out_.flush();
    if (!out_)
        throw Error(Errc::StorageIo, "write to " + segment_name(current_index_) + " failed");
    if (static_cast<std::size_t>(out_.tellp()) >= segment_bytes_)
        open_segment_locked(current_index_ + 1);
}

AppendReport FileSeriesStore::append_samples(std::span<const TelemetrySample> samples)
{
    std::unique_lock lock(mutex_);
    AppendReport report;
    std::vector<std::string> lines;
    std::vector<std::size_t> accepted;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (auto err = check_locked(samples[i])) {
            err->index = i;
            report.errors.push_back(std::move(*err));
            continue;
        }
        insert_locked(samples[i]);
        accepted.push_back(i);
        lines.push_back(sample_record(samples[i]).dump());
    }
    try {
        write_lines_locked(lines);
    } catch (...) {
        for (auto i : accepted)
            erase_locked(samples[i]);
        throw;
    }
    report.written = accepted.size();
    return report;
}

bool FileSeriesStore::append_event(const NotificationEvent& event)
{
    std::unique_lock lock(mutex_);
    if (has_event_locked(event.delivery_id))
        return false;
    write_lines_locked({event_record(event).dump()});
    insert_event_locked(event);
    return true;
}

void FileSeriesStore::compact()
{
    std::unique_lock lock(mutex_);
    auto old_segments = list_segments(dir_);
    out_.close();

    auto tmp = dir_ / "compact.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << dump_locked();
        out.flush();
        if (!out)
            throw Error(Errc::StorageIo, "compaction write failed");
    }
    std::size_t next = old_segments.empty() ? 1 : old_segments.back().first + 1;
    fs::rename(tmp, dir_ / segment_name(next));
    for (const auto& [_, path] : old_segments)
        fs::remove(path);
    open_segment_locked(next);
}

std::size_t FileSeriesStore::segment_count() const
{
    std::shared_lock lock(mutex_);
    return list_segments(dir_).size();
}

} // namespace cvp::storage
