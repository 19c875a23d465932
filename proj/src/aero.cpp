#include "sagin/aero.hpp"

#include <cmath>
#include <stdexcept>

#include "sagin/orbital.hpp"

namespace sagin::aero {

void UavSpec::validate() const {
    if (!(mass > 0 && gravity > 0 && weight > 0 && wing_area > 0 && air_density > 0 && cd0 > 0 && k_induced > 0)) {
        throw std::invalid_argument("UAV specification fields must all be strictly positive");
    }
}

BodyVelocity ground_to_body(const GroundVelocity& vel, const Attitude& att) {
    const double cy = std::cos(att.yaw), sy = std::sin(att.yaw);
    const double cp = std::cos(att.pitch), sp = std::sin(att.pitch);
    const double cr = std::cos(att.roll), sr = std::sin(att.roll);

    // yaw (z-axis)
    const double u2 = cy * vel.u + sy * vel.v;
    const double v2 = -sy * vel.u + cy * vel.v;
    const double w2 = vel.w;
    // pitch (y-axis)
    const double u3 = cp * u2 - sp * w2;
    const double v3 = v2;
    const double w3 = sp * u2 + cp * w2;
    // roll (x-axis)
    return BodyVelocity{u3, cr * v3 + sr * w3, -sr * v3 + cr * w3};
}

double airspeed(const BodyVelocity& vel) { return std::sqrt(vel.u * vel.u + vel.v * vel.v + vel.w * vel.w); }

RequiredPower required_power(const UavSpec& spec, double speed) {
    if (!(speed > 0.0)) throw std::domain_error("required_power: airspeed must be positive");
    const double q = 0.5 * spec.air_density * speed * speed;
    RequiredPower p;
    p.parasite = q * spec.wing_area * spec.cd0 * speed;
    p.induced = spec.weight * spec.weight * spec.k_induced * speed / (q * spec.wing_area);
    p.total = p.parasite + p.induced;
    return p;
}

double balanced_speed(const UavSpec& spec) {
    return std::sqrt(2.0 * spec.weight / (spec.air_density * spec.wing_area)) * std::pow(spec.k_induced / spec.cd0, 0.25);
}

Attitude wrap(const Attitude& att) {
    return Attitude{orbital::wrap_pi(att.yaw), orbital::wrap_pi(att.pitch), orbital::wrap_pi(att.roll)};
}

Attitude gust_perturb(const Attitude& att, double sigma, std::mt19937_64& rng) {
    if (sigma < 0.0) throw std::invalid_argument("gust sigma must be non-negative");
    if (sigma == 0.0) return wrap(att);
    std::normal_distribution<double> noise(0.0, sigma);
    Attitude out = att;
    out.yaw += noise(rng);
    out.pitch += noise(rng);
    out.roll += noise(rng);
    return wrap(out);
}

}  // namespace sagin::aero
