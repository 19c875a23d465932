#include "sagin/env.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "geodesy.hpp"

namespace sagin::env {

namespace {

using orbital::GeodeticPosition;

std::string num(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double slant(const GroundStation& g, const DeviceState& d, const ScenarioConfig& cfg) {
    return orbital::slant_distance(g.position, d.position, cfg.earth);
}

bool fits(const GroundStation& g, double load, int count, double limit) {
    return count <= g.max_served && g.own_capacity + load <= limit;
}

}  // namespace

bool Coverage::contains(int device) const {
    return std::find(cubesats.begin(), cubesats.end(), device) != cubesats.end() ||
           std::find(uavs.begin(), uavs.end(), device) != uavs.end();
}

void ScheduleAction::set(int device, bool on) {
    const std::uint64_t m = std::uint64_t{1} << device;
    bits = on ? (bits | m) : (bits & ~m);
}

int ScheduleAction::count() const { return std::popcount(bits); }

double elevation_angle(const GeodeticPosition& gs, const GeodeticPosition& device, const orbital::EarthConstants& earth) {
    const double central = orbital::great_circle_distance(gs, device, earth) / earth.earth_radius;
    const double rg = earth.earth_radius + gs.altitude;
    const double rd = earth.earth_radius + device.altitude;
    return std::atan2(rd * std::cos(central) - rg, rd * std::sin(central));
}

double snr(double distance, const ScenarioConfig& cfg) {
    if (!(distance > 0.0)) throw std::domain_error("snr: distance must be positive");
    return cfg.link.gamma0 * std::pow(cfg.link.reference_distance / distance, cfg.link.path_exponent);
}

double data_rate(double distance, const ScenarioConfig& cfg) {
    return cfg.link.bandwidth * std::log2(1.0 + snr(distance, cfg));
}

double quality_from_rate(double rate, const ScenarioConfig& cfg) {
    return 1.0 / (1.0 + std::exp(-cfg.link.xi1 * (rate - cfg.link.xi2)));
}

double quality(double distance, const ScenarioConfig& cfg) { return quality_from_rate(data_rate(distance, cfg), cfg); }

double capacity_limit(int gs, double elapsed, const ScenarioConfig& cfg) {
    const auto& g = cfg.ground_stations.at(static_cast<std::size_t>(gs));
    return g.capacity_peak / (1.0 + std::exp(-g.capacity_steepness * (elapsed - g.capacity_midpoint)));
}

Coverage coverage(const SaginState& state, int gs, const ScenarioConfig& cfg) {
    const auto& g = cfg.ground_stations.at(static_cast<std::size_t>(gs));
    Coverage c;
    for (int d = 0; d < static_cast<int>(state.devices.size()); ++d) {
        const auto& dev = state.devices[d];
        if (elevation_angle(g.position, dev.position, cfg.earth) > cfg.elevation_mask) {
            (dev.kind == DeviceKind::CubeSat ? c.cubesats : c.uavs).push_back(d);
        }
    }
    return c;
}

double link_energy(double link_distance, const ScenarioConfig& cfg) {
    return cfg.link.link_power * std::pow(link_distance / cfg.link.reference_distance, cfg.link.path_exponent) *
           cfg.time_step;
}

double device_base_energy(const SaginState& state, int device, const ScenarioConfig& cfg) {
    const auto& d = state.devices.at(static_cast<std::size_t>(device));
    if (d.kind == DeviceKind::CubeSat) return cfg.cubesat_idle_drain * cfg.time_step;
    if (!cfg.uav_propulsion) return 0.0;
    const auto& spec = cfg.uavs.at(static_cast<std::size_t>(device - cfg.cubesat_count())).airframe;
    const aero::GroundVelocity v{d.speed * std::cos(d.attitude.yaw), d.speed * std::sin(d.attitude.yaw), 0.0};
    return aero::required_power(spec, aero::airspeed(aero::ground_to_body(v, d.attitude))).total * cfg.time_step;
}

double device_step_energy(const SaginState& state, int device, bool selected, double link_distance,
                          const ScenarioConfig& cfg) {
    return device_base_energy(state, device, cfg) + (selected ? link_energy(link_distance, cfg) : 0.0);
}

double population_stddev(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(values.size()));
}

ScheduleAction project_feasible(const ScheduleAction& action, const SaginState& state, int gs, const ScenarioConfig& cfg,
                                std::span<const double> committed) {
    const auto& g = cfg.ground_stations.at(static_cast<std::size_t>(gs));
    const int n = static_cast<int>(state.devices.size());
    const auto cov = coverage(state, gs, cfg);
    ScheduleAction out;
    std::vector<double> value(static_cast<std::size_t>(n), 0.0);

    for (int b = 0; b < n; ++b) {
        if (!action.selected(b) || !cov.contains(b)) continue;
        const auto& dev = state.devices[b];
        const double d = slant(g, dev, cfg);
        const double prior = committed.empty() ? 0.0 : committed[b];
        if (prior + device_step_energy(state, b, true, d, cfg) > dev.energy) continue;
        value[b] = quality(d, cfg) * dev.capacity;
        out.set(b, true);
    }

    const double limit = state.capacity_limits.at(static_cast<std::size_t>(gs));
    auto load = [&] {
        double s = 0.0;
        for (int b = 0; b < n; ++b) {
            if (out.selected(b)) s += state.devices[b].capacity;
        }
        return s;
    };
    while (out.count() > 0 && !fits(g, load(), out.count(), limit)) {
        int worst = -1;
        for (int b = 0; b < n; ++b) {
            if (out.selected(b) && (worst < 0 || value[b] < value[worst])) worst = b;
        }
        out.set(worst, false);
    }
    return out;
}

std::vector<ScheduleAction> project_all(const std::vector<ScheduleAction>& actions, const SaginState& state,
                                        const ScenarioConfig& cfg) {
    if (actions.size() != cfg.ground_stations.size()) {
        throw std::invalid_argument("expected one action per ground station");
    }
    std::vector<double> committed(state.devices.size(), 0.0);
    std::vector<ScheduleAction> out;
    for (int i = 0; i < cfg.gs_count(); ++i) {
        out.push_back(project_feasible(actions[i], state, i, cfg, committed));
        for (int b = 0; b < static_cast<int>(state.devices.size()); ++b) {
            if (out.back().selected(b)) committed[b] += link_energy(slant(cfg.ground_stations[i], state.devices[b], cfg), cfg);
        }
    }
    return out;
}

namespace {

// Best utility over feasible subsets of the covered devices. Exhaustive up to 12 candidates, greedy beyond.
double reference_utility(const SaginState& state, int gs, const std::vector<LinkTerm>& links, const ScenarioConfig& cfg) {
    const auto& g = cfg.ground_stations[gs];
    const double limit = state.capacity_limits[gs];
    struct Cand {
        double value, load;
    };
    std::vector<Cand> c;
    for (const auto& l : links) {
        const auto& dev = state.devices[l.device];
        if (device_step_energy(state, l.device, true, l.distance, cfg) > dev.energy) continue;
        c.push_back({l.quality * dev.capacity / cfg.capacity_scale, dev.capacity});
    }
    double best = 0.0;
    if (c.size() <= 12) {
        const std::uint32_t subsets = 1U << c.size();
        for (std::uint32_t m = 1; m < subsets; ++m) {
            double v = 0.0, load = 0.0;
            for (std::size_t k = 0; k < c.size(); ++k) {
                if ((m >> k) & 1U) v += c[k].value, load += c[k].load;
            }
            if (fits(g, load, std::popcount(m), limit)) best = std::max(best, v);
        }
        return best;
    }
    std::sort(c.begin(), c.end(), [](const Cand& a, const Cand& b) { return a.value > b.value; });
    double load = 0.0;
    int count = 0;
    for (const auto& k : c) {
        if (fits(g, load + k.load, count + 1, limit)) {
            best += k.value;
            load += k.load;
            ++count;
        }
    }
    return best;
}

}  // namespace

std::vector<RewardBreakdown> reward(const SaginState& state, const std::vector<ScheduleAction>& actions,
                                    const ScenarioConfig& cfg) {
    std::vector<RewardBreakdown> out;
    for (int i = 0; i < cfg.gs_count(); ++i) {
        const auto& g = cfg.ground_stations[i];
        const auto cov = coverage(state, i, cfg);
        RewardBreakdown r;
        r.capacity_limit = state.capacity_limits[i];

        std::vector<double> frac_s, frac_a;
        auto add = [&](int b) {
            const auto& dev = state.devices[b];
            LinkTerm l;
            l.device = b;
            l.distance = slant(g, dev, cfg);
            l.snr = snr(l.distance, cfg);
            l.rate = cfg.link.bandwidth * std::log2(1.0 + l.snr);
            l.quality = quality_from_rate(l.rate, cfg);
            l.selected = actions[i].selected(b);
            l.energy = device_step_energy(state, b, l.selected, l.distance, cfg);
            l.energy_norm = l.energy / dev.energy_cap;
            if (l.selected) {
                r.utility += l.quality * dev.capacity / cfg.capacity_scale;
                r.delivered += dev.capacity;
            }
            (dev.kind == DeviceKind::CubeSat ? frac_s : frac_a).push_back(dev.energy_fraction());
            r.links.push_back(l);
        };
        for (int b : cov.cubesats) add(b);
        for (int b : cov.uavs) add(b);

        r.sigma_cubesat = population_stddev(frac_s);
        r.sigma_uav = population_stddev(frac_a);
        for (const auto& l : r.links) {
            const bool cube = state.devices[l.device].kind == DeviceKind::CubeSat;
            r.cost += l.energy_norm * (cube ? r.sigma_cubesat : r.sigma_uav);
        }
        r.reward = r.utility - r.cost;
        r.reference_utility = reference_utility(state, i, r.links, cfg);
        out.push_back(std::move(r));
    }
    return out;
}

bool is_sunlit(const orbital::Vec3& inertial, const std::array<double, 3>& sun) {
    return inertial[0] * sun[0] + inertial[1] * sun[1] + inertial[2] * sun[2] > 0.0;
}

void solar_charge(SaginState& state, const ScenarioConfig& cfg) {
    for (auto& d : state.devices) {
        if (d.kind != DeviceKind::CubeSat) continue;
        d.sunlit = is_sunlit(d.inertial, cfg.sun_direction);
        if (d.sunlit) d.energy = std::min(d.energy_cap, d.energy + cfg.charging_rate * cfg.time_step);
    }
}

StepMetrics station_metrics(const SaginState& after, const RewardBreakdown& r) {
    StepMetrics m;
    int active = 0;
    for (const auto& l : r.links) {
        if (l.selected) m.qos += l.quality, ++active;
    }
    if (active > 0) m.qos /= active;
    m.capacity = r.capacity_limit > 0.0 ? std::min(1.0, r.delivered / r.capacity_limit) : 0.0;
    int nc = 0, nu = 0;
    for (const auto& d : after.devices) {
        if (d.kind == DeviceKind::CubeSat) m.mean_residual_cubesat += d.energy_fraction(), ++nc;
        else m.mean_residual_uav += d.energy_fraction(), ++nu;
    }
    if (nc > 0) m.mean_residual_cubesat /= nc;
    if (nu > 0) m.mean_residual_uav /= nu;
    return m;
}

Environment::Environment(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const double ref = cfg_.reference_epoch();
    for (const auto& c : cfg_.cubesats) {
        elements_.push_back(orbital::elements_from_tle(c.tle, cfg_.earth));
        epoch_offsets_.push_back(ref - c.tle.epoch);
    }
    reset_at(0, 0.0);
}

void Environment::reset(std::uint64_t seed) {
    std::mt19937_64 draw(seed);
    const double start = std::uniform_real_distribution<double>(0.0, cfg_.start_window)(draw);
    reset_at(draw(), start);
}

void Environment::reset_at(std::uint64_t seed, double start_offset) {
    rng_.seed(seed);
    state_ = SaginState{};
    state_.clock = start_offset;
    for (const auto& c : cfg_.cubesats) {
        DeviceState d;
        d.kind = DeviceKind::CubeSat;
        d.energy_cap = c.energy_cap;
        d.energy = c.initial_energy_fraction * c.energy_cap;
        d.capacity = c.capacity;
        state_.devices.push_back(d);
    }
    for (const auto& u : cfg_.uavs) {
        DeviceState d;
        d.kind = DeviceKind::Uav;
        d.energy_cap = u.energy_cap;
        d.energy = u.initial_energy_fraction * u.energy_cap;
        d.capacity = u.capacity;
        d.speed = u.speed;
        const int n = static_cast<int>(u.waypoints.size());
        const int start = std::uniform_int_distribution<int>(0, n - 1)(rng_);
        d.position = u.waypoints[start];
        d.next_waypoint = (start + 1) % n;
        d.attitude.yaw = detail::initial_bearing(d.position, u.waypoints[d.next_waypoint]);
        state_.devices.push_back(d);
    }
    place_devices(state_.clock);
    state_.capacity_limits.resize(cfg_.ground_stations.size());
    for (int i = 0; i < cfg_.gs_count(); ++i) state_.capacity_limits[i] = capacity_limit(i, 0.0, cfg_);
}

void Environment::place_devices(double clock) {
    for (int j = 0; j < cfg_.cubesat_count(); ++j) {
        const auto st = orbital::propagate(elements_[j], clock + epoch_offsets_[j], cfg_.earth, cfg_.anomaly_mode);
        auto& d = state_.devices[j];
        d.position = st.subpoint;
        d.inertial = st.inertial;
        d.speed = st.speed;
        d.sunlit = is_sunlit(d.inertial, cfg_.sun_direction);
    }
}

void Environment::advance_uav(DeviceState& d, const UavConfig& u) {
    const auto& target = u.waypoints[d.next_waypoint];
    const double heading = detail::initial_bearing(d.position, target);
    d.attitude = aero::gust_perturb(aero::Attitude{heading, 0.0, 0.0}, cfg_.gust_sigma, rng_);
    const double step = d.speed * cfg_.time_step;
    if (orbital::great_circle_distance(d.position, target, cfg_.earth) <= step) {
        d.position = target;
        d.next_waypoint = (d.next_waypoint + 1) % static_cast<int>(u.waypoints.size());
    } else {
        d.position = detail::destination(d.position, d.attitude.yaw, step, cfg_.earth.earth_radius);
        d.position.altitude = target.altitude;
    }
}

StepResult Environment::step(const std::vector<ScheduleAction>& actions) {
    if (state_.done) throw StateError("episode is finished; call reset()");
    StepResult res;
    res.actions = project_all(actions, state_, cfg_);
    res.rewards = reward(state_, res.actions, cfg_);

    const int n = cfg_.device_count();
    for (int b = 0; b < n; ++b) {
        double spend = device_base_energy(state_, b, cfg_);
        for (int i = 0; i < cfg_.gs_count(); ++i) {
            if (res.actions[i].selected(b)) spend += link_energy(slant(cfg_.ground_stations[i], state_.devices[b], cfg_), cfg_);
        }
        auto& d = state_.devices[b];
        d.energy = std::max(0.0, d.energy - spend);
    }
    solar_charge(state_, cfg_);

    ++state_.t;
    state_.clock += cfg_.time_step;
    place_devices(state_.clock);
    for (int l = 0; l < cfg_.uav_count(); ++l) advance_uav(state_.devices[cfg_.cubesat_count() + l], cfg_.uavs[l]);
    for (int i = 0; i < cfg_.gs_count(); ++i) state_.capacity_limits[i] = capacity_limit(i, elapsed(), cfg_);
    state_.done = state_.t >= cfg_.episode_length;
    res.done = state_.done;
    return res;
}

StepResult env_step(Environment& env, const std::vector<ScheduleAction>& actions) { return env.step(actions); }

std::vector<double> Environment::observation(int gs) const {
    const auto& g = cfg_.ground_stations.at(static_cast<std::size_t>(gs));
    std::vector<double> o;
    o.reserve(observation_size());
    o.push_back(g.position.latitude);
    o.push_back(g.position.longitude);
    o.push_back(g.position.altitude);
    o.push_back((state_.capacity_limits[gs] - g.own_capacity) / cfg_.capacity_scale);
    const auto cov = coverage(state_, gs, cfg_);
    for (int b = 0; b < cfg_.device_count(); ++b) {
        if (!cov.contains(b)) {
            o.insert(o.end(), 7, 0.0);
            continue;
        }
        const auto& d = state_.devices[b];
        o.insert(o.end(), {1.0, d.position.latitude, d.position.longitude, d.position.altitude, d.speed,
                           d.energy_fraction(), d.capacity / cfg_.capacity_scale});
    }
    return o;
}

namespace {

struct Extents {
    double gs_alt = 1.0, headroom = 1.0, capacity = 1.0;
};

Extents extents(const ScenarioConfig& cfg) {
    Extents e;
    for (const auto& g : cfg.ground_stations) {
        e.gs_alt = std::max(e.gs_alt, std::abs(g.position.altitude));
        e.headroom = std::max(e.headroom, (g.capacity_peak + g.own_capacity) / cfg.capacity_scale);
    }
    for (const auto& c : cfg.cubesats) e.capacity = std::max(e.capacity, c.capacity / cfg.capacity_scale);
    for (const auto& u : cfg.uavs) e.capacity = std::max(e.capacity, u.capacity / cfg.capacity_scale);
    return e;
}

constexpr double kHalfPi = std::numbers::pi / 2;
constexpr double kPi = std::numbers::pi;
constexpr double kMaxAltitude = 1.0e6;
constexpr double kMaxSpeed = 8.0e3;

}  // namespace

std::vector<FeatureBounds> Environment::observation_bounds() const {
    const auto e = extents(cfg_);
    std::vector<FeatureBounds> b{{-kHalfPi, kHalfPi}, {-kPi, kPi}, {-e.gs_alt, e.gs_alt}, {-e.headroom, e.headroom}};
    for (int d = 0; d < cfg_.device_count(); ++d) {
        b.insert(b.end(), {{-1.0, 1.0},
                           {-kHalfPi, kHalfPi},
                           {-kPi, kPi},
                           {-kMaxAltitude, kMaxAltitude},
                           {-kMaxSpeed, kMaxSpeed},
                           {-1.0, 1.0},
                           {-e.capacity, e.capacity}});
    }
    return b;
}

std::vector<double> Environment::state_features() const {
    std::vector<double> s;
    s.reserve(state_size());
    for (int i = 0; i < cfg_.gs_count(); ++i) {
        const auto& g = cfg_.ground_stations[i];
        s.insert(s.end(), {g.position.latitude, g.position.longitude, g.position.altitude,
                           (state_.capacity_limits[i] - g.own_capacity) / cfg_.capacity_scale});
    }
    for (const auto& d : state_.devices) {
        s.insert(s.end(), {d.position.latitude, d.position.longitude, d.position.altitude, d.speed, d.energy_fraction(),
                           d.capacity / cfg_.capacity_scale, d.sunlit ? 1.0 : 0.0});
    }
    s.push_back(static_cast<double>(state_.t) / cfg_.episode_length);
    return s;
}

std::vector<FeatureBounds> Environment::state_bounds() const {
    const auto e = extents(cfg_);
    std::vector<FeatureBounds> b;
    for (int i = 0; i < cfg_.gs_count(); ++i) {
        b.insert(b.end(), {{-kHalfPi, kHalfPi}, {-kPi, kPi}, {-e.gs_alt, e.gs_alt}, {-e.headroom, e.headroom}});
    }
    for (int d = 0; d < cfg_.device_count(); ++d) {
        b.insert(b.end(), {{-kHalfPi, kHalfPi},
                           {-kPi, kPi},
                           {-kMaxAltitude, kMaxAltitude},
                           {-kMaxSpeed, kMaxSpeed},
                           {-1.0, 1.0},
                           {-e.capacity, e.capacity},
                           {-1.0, 1.0}});
    }
    b.push_back({-1.0, 1.0});
    return b;
}

void write_step_header(std::ostream& os) {
    os << "episode,step,gs,reward,utility,cost,qos,capacity,mean_residual_cubesat,mean_residual_uav\n";
}

void write_step_rows(std::ostream& os, int episode, int step, const SaginState& after, const StepResult& result) {
    for (std::size_t i = 0; i < result.rewards.size(); ++i) {
        const auto& r = result.rewards[i];
        const auto m = station_metrics(after, r);
        os << episode << ',' << step << ',' << i << ',' << num(r.reward) << ',' << num(r.utility) << ',' << num(r.cost) << ','
           << num(m.qos) << ',' << num(m.capacity) << ',' << num(m.mean_residual_cubesat) << ','
           << num(m.mean_residual_uav) << '\n';
    }
}

}  // namespace sagin::env
