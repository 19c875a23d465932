#pragma once

#include <random>

namespace sagin::aero {

/// HALE-UAV airframe. Defaults reproduce the reference aircraft; `weight` is the
/// tabulated value and is what the power model consumes (mass and gravity are metadata).
struct UavSpec {
    double mass = 1815.0;        // kg
    double gravity = 9.81;       // m/s^2
    double weight = 17799.0;     // N
    double wing_area = 6.61;     // m^2
    double air_density = 0.089;  // kg/m^3
    double cd0 = 0.045;          // parasite drag coefficient at zero lift
    double k_induced = 0.052;    // induced drag coefficient

    /// Throws std::invalid_argument unless every field is strictly positive.
    void validate() const;
};

/// Yaw (psi), pitch (theta), roll (phi), each kept in (-pi, pi].
struct Attitude {
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;
};

struct GroundVelocity {
    double u = 0.0;
    double v = 0.0;
    double w = 0.0;
};

struct BodyVelocity {
    double u = 0.0;
    double v = 0.0;
    double w = 0.0;
};

struct RequiredPower {
    double parasite = 0.0;  // W
    double induced = 0.0;   // W
    double total = 0.0;     // W
};

/// Rotates a ground-frame velocity into the body frame: yaw about z, then pitch about y, then roll about x.
BodyVelocity ground_to_body(const GroundVelocity& vel, const Attitude& att);

double airspeed(const BodyVelocity& vel);

/// Parasite q*S*Cd0*V plus induced W^2*k*V/(q*S), q = rho*V^2/2. Throws std::domain_error for V <= 0.
RequiredPower required_power(const UavSpec& spec, double speed);

/// Speed at which the parasite and induced terms are equal.
double balanced_speed(const UavSpec& spec);

Attitude wrap(const Attitude& att);

/// Adds i.i.d. N(0, sigma^2) noise to each angle and re-wraps. sigma == 0 leaves the stream untouched.
Attitude gust_perturb(const Attitude& att, double sigma, std::mt19937_64& rng);

}  // namespace sagin::aero
