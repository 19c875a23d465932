#pragma once

#include <cmath>

#include "sagin/orbital.hpp"

namespace sagin::detail {

/// Initial great-circle bearing from p to q, clockwise from north.
inline double initial_bearing(const orbital::GeodeticPosition& p, const orbital::GeodeticPosition& q) {
    const double dlon = q.longitude - p.longitude;
    const double y = std::sin(dlon) * std::cos(q.latitude);
    const double x = std::cos(p.latitude) * std::sin(q.latitude) - std::sin(p.latitude) * std::cos(q.latitude) * std::cos(dlon);
    return std::atan2(y, x);
}

/// Point reached after travelling `distance` along `bearing` on a sphere of radius `radius`. Altitude is kept.
inline orbital::GeodeticPosition destination(const orbital::GeodeticPosition& p, double bearing, double distance, double radius) {
    const double d = distance / radius;
    const double lat = std::asin(std::sin(p.latitude) * std::cos(d) + std::cos(p.latitude) * std::sin(d) * std::cos(bearing));
    const double lon = p.longitude + std::atan2(std::sin(bearing) * std::sin(d) * std::cos(p.latitude),
                                                std::cos(d) - std::sin(p.latitude) * std::sin(lat));
    return {lat, orbital::wrap_pi(lon), p.altitude};
}

}  // namespace sagin::detail
