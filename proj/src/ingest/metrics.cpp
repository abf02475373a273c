#include "cvp/ingest/metrics.hpp"

namespace cvp::ingest {

Metrics::Metrics()
{
    // Always exported, even before the first increment.
    for (auto name : {metric::samples_stored, metric::slots_missed, metric::quota_deferred, metric::webhooks_rejected})
        counters_.emplace(std::string(name), 0);
}

void Metrics::add(std::string_view name, std::uint64_t n)
{
    std::lock_guard lock(mutex_);
    auto it = counters_.find(name);
    if (it == counters_.end())
        it = counters_.emplace(std::string(name), 0).first;
    it->second += n;
}

std::uint64_t Metrics::get(std::string_view name) const
{
    std::lock_guard lock(mutex_);
    auto it = counters_.find(name);
    return it == counters_.end() ? 0 : it->second;
}

std::map<std::string, std::uint64_t> Metrics::snapshot() const
{
    std::lock_guard lock(mutex_);
    return {counters_.begin(), counters_.end()};
}

std::string Metrics::render_text() const
{
    std::string out;
    for (const auto& [name, value] : snapshot())
        out += name + " " + std::to_string(value) + "\n";
    return out;
}

void Metrics::restore(const std::map<std::string, std::uint64_t>& counters)
{
    std::lock_guard lock(mutex_);
    for (const auto& [name, value] : counters)
        counters_[name] = value;
}

} // namespace cvp::ingest
