#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "sagin/aero.hpp"
#include "sagin/orbital.hpp"
#include "sagin/scenario.hpp"

namespace sagin::env {

class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class DeviceKind { CubeSat, Uav };

/// Devices are indexed CubeSats first, then UAVs. Action bit b of every station refers to device b.
struct DeviceState {
    DeviceKind kind = DeviceKind::CubeSat;
    orbital::GeodeticPosition position;
    orbital::Vec3 inertial{};        // CubeSats only
    double speed = 0.0;              // m/s
    double energy = 0.0;             // J
    double energy_cap = 1.0;         // J
    double capacity = 0.0;           // bit/s
    bool sunlit = false;             // CubeSats only
    aero::Attitude attitude;         // UAVs only
    int next_waypoint = 0;           // UAVs only

    double energy_fraction() const { return energy / energy_cap; }
};

struct SaginState {
    int t = 0;                       // step index
    double clock = 0.0;              // s since the simulation epoch
    std::vector<DeviceState> devices;
    std::vector<double> capacity_limits;  // per station, bit/s
    bool done = false;
};

struct Coverage {
    std::vector<int> cubesats;       // device indices
    std::vector<int> uavs;
    bool contains(int device) const;
};

/// Scheduling bits of one station, bit b = device b.
struct ScheduleAction {
    std::uint64_t bits = 0;

    bool selected(int device) const { return (bits >> device) & 1U; }
    void set(int device, bool on);
    int count() const;
};

struct LinkTerm {
    int device = 0;
    double distance = 0.0;           // m
    double snr = 0.0;
    double rate = 0.0;
    double quality = 0.0;
    double energy = 0.0;             // J spent this step on behalf of the station
    double energy_norm = 0.0;        // energy / cap
    bool selected = false;
};

struct RewardBreakdown {
    double utility = 0.0;
    double cost = 0.0;
    double reward = 0.0;
    double sigma_cubesat = 0.0;
    double sigma_uav = 0.0;
    double delivered = 0.0;          // bit/s of selected devices
    double capacity_limit = 0.0;     // bit/s
    double reference_utility = 0.0;  // best feasible utility this step
    std::vector<LinkTerm> links;     // in-coverage devices
};

struct FeatureBounds {
    double min = 0.0;
    double max = 1.0;
};

// Link model.
double elevation_angle(const orbital::GeodeticPosition& gs, const orbital::GeodeticPosition& device,
                       const orbital::EarthConstants& earth = {});
double snr(double distance, const ScenarioConfig& cfg);
double data_rate(double distance, const ScenarioConfig& cfg);
double quality_from_rate(double rate, const ScenarioConfig& cfg);
double quality(double distance, const ScenarioConfig& cfg);
/// Logistic station ceiling at `elapsed` seconds after episode start.
double capacity_limit(int gs, double elapsed, const ScenarioConfig& cfg);

Coverage coverage(const SaginState& state, int gs, const ScenarioConfig& cfg);

/// Propulsion (UAVs) or idle drain (CubeSats), plus transmit energy when selected. Joules over one step.
double device_step_energy(const SaginState& state, int device, bool selected, double link_distance,
                          const ScenarioConfig& cfg);
/// Energy spent regardless of selection.
double device_base_energy(const SaginState& state, int device, const ScenarioConfig& cfg);
double link_energy(double link_distance, const ScenarioConfig& cfg);

/// Population standard deviation; 0 for an empty set.
double population_stddev(std::span<const double> values);

/// Clears out-of-coverage and energy-infeasible bits, then the lowest quality*capacity bit (lowest index on ties)
/// until the count and capacity ceilings hold. `committed` is energy already claimed this step per device.
ScheduleAction project_feasible(const ScheduleAction& action, const SaginState& state, int gs, const ScenarioConfig& cfg,
                                std::span<const double> committed = {});

/// Projects every station in order, charging each station's link energy before projecting the next.
std::vector<ScheduleAction> project_all(const std::vector<ScheduleAction>& actions, const SaginState& state,
                                        const ScenarioConfig& cfg);

/// Utility, cost and link terms per station for already projected actions, on pre-step energies.
std::vector<RewardBreakdown> reward(const SaginState& state, const std::vector<ScheduleAction>& actions,
                                    const ScenarioConfig& cfg);

/// Adds charging_rate * dt to sunlit CubeSats, clamped at the cap.
void solar_charge(SaginState& state, const ScenarioConfig& cfg);
bool is_sunlit(const orbital::Vec3& inertial, const std::array<double, 3>& sun_direction);

struct StepResult {
    std::vector<ScheduleAction> actions;   // after projection
    std::vector<RewardBreakdown> rewards;
    bool done = false;
};

struct StepMetrics {
    double qos = 0.0;                      // mean quality over active links, 0 when none
    double capacity = 0.0;                 // delivered / limit
    double mean_residual_cubesat = 0.0;
    double mean_residual_uav = 0.0;
};

StepMetrics station_metrics(const SaginState& after, const RewardBreakdown& r);

class Environment {
public:
    explicit Environment(ScenarioConfig cfg);

    const ScenarioConfig& config() const { return cfg_; }
    const SaginState& state() const { return state_; }

    void reset(std::uint64_t seed);
    /// Places the episode at a fixed start offset without drawing one.
    void reset_at(std::uint64_t seed, double start_offset);

    StepResult step(const std::vector<ScheduleAction>& actions);

    int gs_count() const { return cfg_.gs_count(); }
    int action_bits() const { return cfg_.device_count(); }

    /// Station view: 4 station features, then 7 per device slot (present, lat, lon, alt, speed, energy, capacity).
    std::vector<double> observation(int gs) const;
    std::size_t observation_size() const { return 4 + 7 * static_cast<std::size_t>(cfg_.device_count()); }
    /// Device described by observation feature f, or -1 for the station features.
    int observation_device(std::size_t f) const { return f < 4 ? -1 : static_cast<int>((f - 4) / 7); }
    /// Ranges are symmetric about zero so a zero-masked feature maps to a zero angle.
    std::vector<FeatureBounds> observation_bounds() const;

    /// Ground truth for the critic: per station (lat, lon, alt, headroom), per device
    /// (lat, lon, alt, speed, energy, capacity, sunlit), then elapsed fraction.
    std::vector<double> state_features() const;
    std::size_t state_size() const { return 4 * cfg_.ground_stations.size() + 7 * cfg_.device_count() + 1; }
    std::vector<FeatureBounds> state_bounds() const;

private:
    void place_devices(double clock);
    void advance_uav(DeviceState& d, const UavConfig& u);
    double elapsed() const { return state_.t * cfg_.time_step; }

    ScenarioConfig cfg_;
    std::vector<orbital::OrbitalElements> elements_;
    std::vector<double> epoch_offsets_;
    SaginState state_;
    std::mt19937_64 rng_;
};

/// Free-function form of Environment::step.
StepResult env_step(Environment& env, const std::vector<ScheduleAction>& actions);

/// Per-step metrics CSV: episode,step,gs,reward,utility,cost,qos,capacity,mean_residual_cubesat,mean_residual_uav
void write_step_header(std::ostream& os);
void write_step_rows(std::ostream& os, int episode, int step, const SaginState& after, const StepResult& result);

}  // namespace sagin::env
