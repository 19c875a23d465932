#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sagin::orbital {

/// Raised when TLE text does not follow the fixed-column layout.
class TleParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a TLE line fails its modulo-10 checksum.
class TleChecksumError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EarthConstants {
    double gravitational_constant = 6.673e-20;  // as tabulated (km^3 kg^-1 s^-2)
    double earth_mass = 5.974e24;               // kg
    double earth_radius = 6.378e6;              // m
    double mu = 3.986e14;                       // m^3 s^-2
    double rotation_rate = 7.2921159e-5;        // rad/s, sidereal
};

/// Raw two-line element fields. Angles stay in degrees as printed.
struct TleRecord {
    std::string name;
    int catalog_number = 0;
    char classification = 'U';
    std::string international_designator;
    int epoch_year = 0;       // four-digit
    double epoch_day = 0.0;   // fractional day of year, 1-based
    double epoch = 0.0;       // seconds since 1970-01-01T00:00:00Z
    double mean_motion_dot = 0.0;
    double mean_motion_ddot = 0.0;
    double bstar = 0.0;
    int element_set_number = 0;
    double inclination_deg = 0.0;
    double raan_deg = 0.0;
    double eccentricity = 0.0;
    double arg_perigee_deg = 0.0;
    double mean_anomaly_deg = 0.0;
    double mean_motion_rev_per_day = 0.0;
    int revolution_number = 0;
    int line1_checksum = 0;
    int line2_checksum = 0;
};

struct OrbitalElements {
    double eccentricity = 0.0;
    double inclination = 0.0;            // rad
    double raan = 0.0;                   // rad
    double arg_perigee = 0.0;            // rad
    double mean_anomaly_at_epoch = 0.0;  // rad
    double semi_major_axis = 0.0;        // m
    double angular_momentum = 0.0;       // m^2/s
    double mean_motion = 0.0;            // rad/s
};

struct GeodeticPosition {
    double latitude = 0.0;   // rad, [-pi/2, pi/2]
    double longitude = 0.0;  // rad, (-pi, pi]
    double altitude = 0.0;   // m
};

enum class AnomalyMode {
    FirstOrder,  // E = M + e sin M
    Newton,      // solve E - e sin E = M
};

using Vec3 = std::array<double, 3>;

/// Full propagation output for one instant.
struct OrbitState {
    GeodeticPosition subpoint;
    Vec3 inertial{};      // m, equator/equinox frame
    Vec3 earth_fixed{};   // m, after Earth rotation
    double radius = 0.0;  // m
    double speed = 0.0;   // m/s, vis-viva
    bool degenerate_pole = false;
};

/// Sum of digits (minus signs count as one) over the first 68 columns, mod 10.
int tle_checksum(std::string_view line);

/// Parses an optional name line plus two data lines.
TleRecord parse_tle(std::string_view text);
TleRecord parse_tle(std::string_view line1, std::string_view line2, std::string name = {});

/// Reads every object from a TLE file body (name lines optional).
std::vector<TleRecord> parse_tle_set(std::string_view text);
std::vector<TleRecord> load_tle_file(const std::string& path);

/// Formats a record back to two 69-column lines with fresh checksums.
std::array<std::string, 2> format_tle(const TleRecord& rec);

OrbitalElements elements_from_tle(const TleRecord& rec, const EarthConstants& constants = {});

double eccentric_anomaly(double mean_anomaly, double e, AnomalyMode mode = AnomalyMode::FirstOrder);
double true_anomaly(double eccentric_anomaly, double e);
double conic_radius(const OrbitalElements& elements, double nu, const EarthConstants& constants = {});

OrbitState propagate(const OrbitalElements& elements, double t, const EarthConstants& constants = {},
                     AnomalyMode mode = AnomalyMode::FirstOrder);

inline GeodeticPosition subpoint(const OrbitalElements& elements, double t, const EarthConstants& constants = {},
                                 AnomalyMode mode = AnomalyMode::FirstOrder) {
    return propagate(elements, t, constants, mode).subpoint;
}

/// Surface arc between two positions (altitudes ignored).
double great_circle_distance(const GeodeticPosition& p, const GeodeticPosition& q,
                             const EarthConstants& constants = {});

/// sqrt(H^2 + V^2) with V the altitude difference.
double slant_distance(const GeodeticPosition& gs, const GeodeticPosition& device,
                      const EarthConstants& constants = {});

/// Maps any angle to (-pi, pi].
double wrap_pi(double angle);

double deg2rad(double deg);
double rad2deg(double rad);

}  // namespace sagin::orbital
