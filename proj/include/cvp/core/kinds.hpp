#pragma once

#include <array>
#include <set>
#include <string_view>

namespace cvp {

enum class DataPointKind {
    odometer,
    gps_coordinates,
    heading,
    fuel_volume,
    distance_to_next_maintenance,
    doors_lock_state,
    hood_position,
    outside_temperature,
    brake_fluid_change_date,
    acceleration_evaluation,
    driving_style,
};

enum class NotificationKind {
    accident_reported,
    battery_warning,
    breakdown_reported,
    emergency_reported,
    engine_changed,
    maintenance_changed,
    revoke_of_consent,
    location_change,
};

inline constexpr std::array kAllDataPointKinds{
    DataPointKind::odometer,
    DataPointKind::gps_coordinates,
    DataPointKind::heading,
    DataPointKind::fuel_volume,
    DataPointKind::distance_to_next_maintenance,
    DataPointKind::doors_lock_state,
    DataPointKind::hood_position,
    DataPointKind::outside_temperature,
    DataPointKind::brake_fluid_change_date,
    DataPointKind::acceleration_evaluation,
    DataPointKind::driving_style,
};

inline constexpr std::array kAllNotificationKinds{
    NotificationKind::accident_reported,
    NotificationKind::battery_warning,
    NotificationKind::breakdown_reported,
    NotificationKind::emergency_reported,
    NotificationKind::engine_changed,
    NotificationKind::maintenance_changed,
    NotificationKind::revoke_of_consent,
    NotificationKind::location_change,
};

using DataPointKinds = std::set<DataPointKind>;
using NotificationKinds = std::set<NotificationKind>;

std::string_view to_string(DataPointKind kind);
std::string_view to_string(NotificationKind kind);

/// Throw Error{ParseError} on unknown names.
DataPointKind parse_data_point_kind(std::string_view name);
NotificationKind parse_notification_kind(std::string_view name);

/// Only location_change asks for a data request out of the box.
constexpr bool triggers_request_by_default(NotificationKind kind)
{
    return kind == NotificationKind::location_change;
}

} // namespace cvp
