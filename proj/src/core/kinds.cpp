#include "cvp/core/kinds.hpp"

#include "cvp/core/error.hpp"

#include <string>

namespace cvp {

std::string_view to_string(DataPointKind kind)
{
    switch (kind) {
    case DataPointKind::odometer: return "odometer";
    case DataPointKind::gps_coordinates: return "gps_coordinates";
    case DataPointKind::heading: return "heading";
    case DataPointKind::fuel_volume: return "fuel_volume";
    case DataPointKind::distance_to_next_maintenance: return "distance_to_next_maintenance";
    case DataPointKind::doors_lock_state: return "doors_lock_state";
    case DataPointKind::hood_position: return "hood_position";
    case DataPointKind::outside_temperature: return "outside_temperature";
    case DataPointKind::brake_fluid_change_date: return "brake_fluid_change_date";
    case DataPointKind::acceleration_evaluation: return "acceleration_evaluation";
    case DataPointKind::driving_style: return "driving_style";
    }
    return "?";
}

std::string_view to_string(NotificationKind kind)
{
    switch (kind) {
    case NotificationKind::accident_reported: return "accident_reported";
    case NotificationKind::battery_warning: return "battery_warning";
    case NotificationKind::breakdown_reported: return "breakdown_reported";
    case NotificationKind::emergency_reported: return "emergency_reported";
    case NotificationKind::engine_changed: return "engine_changed";
    case NotificationKind::maintenance_changed: return "maintenance_changed";
    case NotificationKind::revoke_of_consent: return "revoke_of_consent";
    case NotificationKind::location_change: return "location_change";
    }
    return "?";
}

DataPointKind parse_data_point_kind(std::string_view name)
{
    for (auto k : kAllDataPointKinds)
        if (to_string(k) == name)
            return k;
    throw Error(Errc::ParseError, "unknown data point kind '" + std::string(name) + "'");
}

NotificationKind parse_notification_kind(std::string_view name)
{
    for (auto k : kAllNotificationKinds)
        if (to_string(k) == name)
            return k;
    throw Error(Errc::ParseError, "unknown notification kind '" + std::string(name) + "'");
}

} // namespace cvp
