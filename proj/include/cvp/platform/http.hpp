#pragma once

#include "cvp/analytics/speed_map.hpp"
#include "cvp/ingest/aggregator.hpp"
#include "cvp/platform/platform.hpp"
#include "cvp/sim/simulator.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace cvp::platform {

/// An HTTP listener on its own thread.
class HttpService {
public:
    virtual ~HttpService();

    /// Binds (port 0 picks a free one) and serves in the background.
    /// Returns the bound port. Throws StorageIo when the bind fails.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();
    int port() const;
    std::string base_url() const;

protected:
    HttpService();
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct ReportDefaults {
    double premium_eur_month = 81.25;
    double viability_threshold = 0.05;
};

/// The platform's public surface: signed webhooks, metrics, the consent
/// workflow, vehicles and their series, and analytics reports. Static
/// console assets are served under /console when a directory is given.
class PlatformServer final : public HttpService {
public:
    PlatformServer(Platform& platform, const analytics::SpeedLimitMap* map = nullptr,
                   std::optional<std::filesystem::path> console_dir = std::nullopt, ReportDefaults report = {});
};

/// The simulated OEM clouds over HTTP: OAuth, the data API, consent-step
/// hooks and simulation control. `advance` moves simulated time (the
/// platform runner in an in-process deployment, the bare emitter otherwise).
class SimulatorServer final : public HttpService {
public:
    using Advance = std::function<Timestamp(Millis)>;
    SimulatorServer(sim::OemSimulator& sim, Clock& clock, Advance advance);
};

/// AggregatorPort over the simulator's HTTP API. Transport failures and
/// 5xx answers surface as UpstreamError; error bodies carrying a known
/// code are rethrown with that code.
class HttpAggregator final : public ingest::AggregatorPort {
public:
    explicit HttpAggregator(std::string base_url, Millis timeout = std::chrono::seconds{5});
    ~HttpAggregator() override;

    std::string approve(const Vin& vin) override;
    sim::AccessTokenGrant exchange_code(std::string_view code) override;
    sim::AccessTokenGrant refresh(std::string_view refresh_token) override;
    void revoke(const Vin& vin) override;
    std::vector<TelemetrySample> fetch_data(const Vin& vin, const DataPointKinds& kinds,
                                            std::string_view token) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Posts deliveries to `<platform>/webhooks/<brand>`; any 2xx is accepted.
class HttpWebhookSink final : public sim::WebhookSink {
public:
    explicit HttpWebhookSink(std::string platform_url, Millis timeout = std::chrono::seconds{5});
    ~HttpWebhookSink() override;

    bool deliver(const sim::WebhookDelivery& delivery) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Error body used by both servers.
Json error_body(const Error& e);

} // namespace cvp::platform
