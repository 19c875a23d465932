#pragma once

#include <array>
#include <string>
#include <vector>

#include "sagin/aero.hpp"
#include "sagin/orbital.hpp"

namespace sagin::env {

struct GroundStation {
    std::string name;
    orbital::GeodeticPosition position;
    double own_capacity = 2.0e5;        // bit/s already committed at the station
    double capacity_peak = 4.0e6;       // bit/s, logistic ceiling
    double capacity_steepness = 0.01;   // 1/s
    double capacity_midpoint = 60.0;    // s after episode start
    int max_served = 2;                 // devices per step
};

struct CubeSatConfig {
    orbital::TleRecord tle;
    double capacity = 1.0e6;            // bit/s
    double energy_cap = 4.0e4;          // J
    double initial_energy_fraction = 1.0;
};

struct UavConfig {
    std::string name;
    aero::UavSpec airframe;
    /// Closed loiter track, visited in order.
    std::vector<orbital::GeodeticPosition> waypoints;
    double speed = 100.0;               // m/s commanded ground speed
    double capacity = 2.0e6;            // bit/s
    double energy_cap = 4.0e8;          // J
    double initial_energy_fraction = 1.0;
};

/// Link budget. Rates are in the bandwidth's unit; `xi2` must use the same unit.
struct LinkModel {
    double bandwidth = 128.0;
    double gamma0 = 12500.0;            // SNR at the reference distance
    double reference_distance = 1.0e5;  // m
    double path_exponent = 2.0;
    double xi1 = 0.01;
    double xi2 = 1024.0;
    double link_power = 0.5;            // W at the reference distance
};

struct ScenarioConfig {
    std::string name = "custom";
    std::vector<GroundStation> ground_stations;
    std::vector<CubeSatConfig> cubesats;
    std::vector<UavConfig> uavs;
    LinkModel link;
    orbital::EarthConstants earth;
    orbital::AnomalyMode anomaly_mode = orbital::AnomalyMode::FirstOrder;

    double elevation_mask = 10.0 * 3.14159265358979323846 / 180.0;  // rad
    double time_step = 5.0;             // s
    int episode_length = 64;            // steps
    double start_window = 120.0;        // s, episode start drawn uniformly from [0, start_window]
    double charging_rate = 10.0;        // W while sunlit
    double cubesat_idle_drain = 2.0;    // W
    bool uav_propulsion = true;
    double gust_sigma = 0.02;           // rad
    std::array<double, 3> sun_direction{0.766044443118978, 0.642787609686539, 0.0};  // inertial
    double capacity_scale = 1.0e6;      // bit/s per utility unit

    int gs_count() const { return static_cast<int>(ground_stations.size()); }
    int cubesat_count() const { return static_cast<int>(cubesats.size()); }
    int uav_count() const { return static_cast<int>(uavs.size()); }
    int device_count() const { return cubesat_count() + uav_count(); }
    /// Seconds since the simulation epoch (earliest TLE epoch).
    double reference_epoch() const;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

ScenarioConfig load_scenario(const std::string& path);
ScenarioConfig parse_scenario(const std::string& yaml_text);
std::string dump_scenario(const ScenarioConfig& cfg);
void save_scenario(const ScenarioConfig& cfg, const std::string& path);

/// Built-in scenarios: tiny, small, extended, paper.
ScenarioConfig make_preset(const std::string& name);
std::vector<std::string> preset_names();

/// Keeps the first ceil(bits/2) CubeSats and floor(bits/2) UAVs so every station has `bits` device slots.
ScenarioConfig with_action_bits(const ScenarioConfig& cfg, int bits);

/// "2^k" -> k. "custom" -> the scenario's own device count. Throws on anything else.
int parse_action_preset(const std::string& preset, const ScenarioConfig& cfg);

/// Circular orbit whose ground track crosses `target` at `pass_time` seconds after `epoch_unix`.
orbital::TleRecord synthesize_pass_tle(const std::string& name, int catalog_number, const orbital::GeodeticPosition& target,
                                       double pass_time, double altitude, double inclination_deg, bool ascending,
                                       double epoch_unix, const orbital::EarthConstants& earth = {});

/// Evenly spaced waypoints on a circle of `radius` metres around `center`.
std::vector<orbital::GeodeticPosition> loiter_track(const orbital::GeodeticPosition& center, double radius, double altitude,
                                                    int points, const orbital::EarthConstants& earth = {});

}  // namespace sagin::env
