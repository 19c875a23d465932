#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sagin/env.hpp"
#include "sagin/scenario.hpp"

using namespace sagin;
using namespace sagin::env;

namespace {

constexpr double kPi = std::numbers::pi;

// One station at sea level with two CubeSat slots and no UAVs.
ScenarioConfig two_cubesats() {
    auto cfg = make_preset("tiny");
    cfg.ground_stations[0].position.altitude = 0.0;
    cfg.cubesats.push_back(cfg.cubesats[0]);
    cfg.uavs.clear();
    cfg.cubesat_idle_drain = 0.0;
    return cfg;
}

DeviceState overhead(const ScenarioConfig& cfg, double altitude, double capacity, double energy, double cap) {
    DeviceState d;
    d.kind = DeviceKind::CubeSat;
    d.position = cfg.ground_stations[0].position;
    d.position.altitude = altitude;
    d.capacity = capacity;
    d.energy = energy;
    d.energy_cap = cap;
    return d;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("elevation and coverage") {
    auto cfg = two_cubesats();
    const auto gs = cfg.ground_stations[0].position;
    SaginState s;
    s.devices = {overhead(cfg, 5e5, 1e6, 1.0, 1.0), overhead(cfg, 5e5, 1e6, 1.0, 1.0)};
    s.capacity_limits = {1e9};

    CHECK(elevation_angle(gs, s.devices[0].position) == doctest::Approx(kPi / 2));

    SUBCASE("overhead is covered for any mask below 90 degrees") {
        for (double mask : {0.0, 0.3, 1.5}) {
            cfg.elevation_mask = mask;
            const auto c = coverage(s, 0, cfg);
            CHECK(c.cubesats.size() == 2);
            CHECK(c.contains(0));
        }
    }
    SUBCASE("horizon geometry") {
        const double re = cfg.earth.earth_radius, h = 5e5;
        const double horizon = re * std::acos(re / (re + h));  // surface arc to the tangent point
        cfg.elevation_mask = 0.0;
        s.devices[0].position.latitude = gs.latitude + 1.01 * horizon / re;
        s.devices[1].position.latitude = gs.latitude + 0.99 * horizon / re;
        const auto c = coverage(s, 0, cfg);
        CHECK_FALSE(c.contains(0));
        CHECK(c.contains(1));
        CHECK(elevation_angle(gs, s.devices[1].position) > 0.0);
        CHECK(elevation_angle(gs, s.devices[0].position) < 0.0);
    }
}

TEST_CASE("link model") {
    const auto cfg = make_preset("tiny");
    const double g0 = cfg.link.gamma0, dref = cfg.link.reference_distance, w = cfg.link.bandwidth;

    CHECK(snr(dref, cfg) == doctest::Approx(g0).epsilon(1e-15));
    CHECK(snr(2 * dref, cfg) == doctest::Approx(g0 / 4).epsilon(1e-15));
    CHECK_THROWS_AS(snr(0.0, cfg), std::domain_error);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(1e3, 3e6);
    for (int k = 0; k < 100; ++k) {
        double a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        if (a == b) continue;
        CHECK(snr(a, cfg) > snr(b, cfg));
    }

    // Gamma = 1, 0, 3 by choosing the distance: Gamma = g0 (dref/d)^2.
    CHECK(data_rate(dref * std::sqrt(g0), cfg) == doctest::Approx(w).epsilon(1e-12));
    CHECK(data_rate(dref * std::sqrt(g0 / 3.0), cfg) == doctest::Approx(2 * w).epsilon(1e-12));
    CHECK(w * std::log2(1.0 + 0.0) == 0.0);
    CHECK(data_rate(1e300, cfg) == doctest::Approx(0.0).epsilon(1e-12));

    CHECK(quality_from_rate(1024.0, cfg) == 0.5);
    CHECK(quality_from_rate(1024.0 + 100.0 * std::log(3.0), cfg) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(quality_from_rate(1e6, cfg) == doctest::Approx(1.0));
    CHECK(quality(5e5, cfg) == doctest::Approx(sigmoid(0.01 * (128 * std::log2(1 + 12500.0 / 25) - 1024))).epsilon(1e-12));
}

TEST_CASE("capacity ceiling") {
    auto cfg = make_preset("tiny");
    auto& g = cfg.ground_stations[0];
    CHECK(capacity_limit(0, g.capacity_midpoint, cfg) == doctest::Approx(g.capacity_peak / 2));
    CHECK(capacity_limit(0, 1e6, cfg) == doctest::Approx(g.capacity_peak));
    g.capacity_steepness = 0.0;
    for (double t : {0.0, 10.0, 1e4}) CHECK(capacity_limit(0, t, cfg) == g.capacity_peak / 2);
}

TEST_CASE("projection") {
    auto cfg = two_cubesats();
    SaginState s;
    s.devices = {overhead(cfg, 5e5, 1e6, 1e9, 1e9), overhead(cfg, 5e5, 2e6, 1e9, 1e9)};
    s.capacity_limits = {1e9};

    SUBCASE("all-zero action") { CHECK(project_feasible({0}, s, 0, cfg).bits == 0); }
    SUBCASE("one slot keeps the larger quality times capacity") {
        cfg.ground_stations[0].max_served = 1;
        // q is equal (same distance), so xi decides: device 1 has 2e6 > 1e6.
        CHECK(project_feasible({0b11}, s, 0, cfg).bits == 0b10);
        // Farther device 1 loses once q1*xi1 < q0*xi0.
        s.devices[1].position.altitude = 3e6;
        CHECK(quality(3e6, cfg) * 2e6 < quality(5e5, cfg) * 1e6);
        CHECK(project_feasible({0b11}, s, 0, cfg).bits == 0b01);
    }
    SUBCASE("capacity ceiling drops bits") {
        cfg.ground_stations[0].max_served = 2;
        s.capacity_limits = {cfg.ground_stations[0].own_capacity + 2.5e6};
        CHECK(project_feasible({0b11}, s, 0, cfg).bits == 0b10);
        s.capacity_limits = {cfg.ground_stations[0].own_capacity + 0.5e6};
        CHECK(project_feasible({0b11}, s, 0, cfg).bits == 0);
    }
    SUBCASE("energy-infeasible and uncovered bits are cleared") {
        s.devices[0].energy = 1.0;  // below one step of link energy
        CHECK(project_feasible({0b11}, s, 0, cfg).bits == 0b10);
        s.devices[1].position.latitude += 0.5;
        CHECK(project_feasible({0b11}, s, 0, cfg).bits == 0);
    }
    SUBCASE("idempotent") {
        cfg.ground_stations[0].max_served = 1;
        const auto once = project_feasible({0b11}, s, 0, cfg);
        CHECK(project_feasible(once, s, 0, cfg).bits == once.bits);
    }
}

TEST_CASE("step energy") {
    SUBCASE("unselected CubeSat with no idle drain") {
        auto cfg = two_cubesats();
        SaginState s;
        s.devices = {overhead(cfg, 5e5, 1e6, 1.0, 1.0), overhead(cfg, 5e5, 1e6, 1.0, 1.0)};
        CHECK(device_step_energy(s, 0, false, 5e5, cfg) == 0.0);
        CHECK(device_step_energy(s, 0, true, cfg.link.reference_distance, cfg) ==
              doctest::Approx(cfg.link.link_power * cfg.time_step).epsilon(1e-15));
    }
    SUBCASE("UAV at 100 m/s for one second") {
        auto cfg = make_preset("tiny");
        cfg.time_step = 1.0;
        Environment env(cfg);
        SaginState s = env.state();
        auto& d = s.devices[1];
        REQUIRE(d.kind == DeviceKind::Uav);
        d.speed = 100.0;
        d.attitude = {0.3, 0.0, 0.0};
        const double q = 0.5 * 0.089 * 100.0 * 100.0;
        const double oracle = q * 6.61 * 0.045 * 100.0 + 17799.0 * 17799.0 * 0.052 * 100.0 / (q * 6.61);
        CHECK(device_step_energy(s, 1, false, 1e5, cfg) == doctest::Approx(oracle).epsilon(1e-9));
        CHECK(oracle == doctest::Approx(5.7330e5).epsilon(1e-4));
    }
}

TEST_CASE("solar charging") {
    auto cfg = two_cubesats();
    cfg.charging_rate = 10.0;
    SaginState s;
    s.devices = {overhead(cfg, 5e5, 1e6, 100.0, 1e4), overhead(cfg, 5e5, 1e6, 1e4, 1e4)};
    const auto& sun = cfg.sun_direction;
    s.devices[0].inertial = {7e6 * sun[0], 7e6 * sun[1], 7e6 * sun[2]};
    s.devices[1].inertial = s.devices[0].inertial;
    solar_charge(s, cfg);
    CHECK(s.devices[0].energy == doctest::Approx(100.0 + 10.0 * cfg.time_step));
    CHECK(s.devices[0].sunlit);
    CHECK(s.devices[1].energy == 1e4);

    s.devices[0].inertial = {-7e6 * sun[0], -7e6 * sun[1], -7e6 * sun[2]};
    const double before = s.devices[0].energy;
    solar_charge(s, cfg);
    CHECK(s.devices[0].energy == before);
    CHECK_FALSE(s.devices[0].sunlit);
}

TEST_CASE("reward") {
    auto cfg = two_cubesats();
    const double e = cfg.link.link_power * 25.0 * cfg.time_step;  // link energy at 5e5 m
    SaginState s;
    s.capacity_limits = {1e9};

    SUBCASE("nothing selected and no drains") {
        s.devices = {overhead(cfg, 5e5, 1e6, 1.0, 1.0), overhead(cfg, 5e5, 1e6, 0.3, 1.0)};
        const auto r = reward(s, {ScheduleAction{0}}, cfg)[0];
        CHECK(r.utility == 0.0);
        CHECK(r.cost == 0.0);
        CHECK(r.reward == 0.0);
    }
    SUBCASE("equal energies zero the cost") {
        s.devices = {overhead(cfg, 5e5, 1e6, 0.7 * e, e), overhead(cfg, 5e5, 1e6, 0.7 * e, e)};
        const auto r = reward(s, {ScheduleAction{0b11}}, cfg)[0];
        CHECK(r.sigma_cubesat == 0.0);
        CHECK(r.cost == 0.0);
        CHECK(r.utility > 0.0);
    }
    SUBCASE("std-dev weighted cost") {
        // Normalized link energy 0.2, energy fractions {1.0, 0.5}: sigma = 0.25.
        s.devices = {overhead(cfg, 5e5, 1e6, 5 * e, 5 * e), overhead(cfg, 5e5, 1e6, 2.5 * e, 5 * e)};
        const auto r = reward(s, {ScheduleAction{0b01}}, cfg)[0];
        CHECK(r.sigma_cubesat == doctest::Approx(0.25).epsilon(1e-15));
        CHECK(r.cost == doctest::Approx(0.05).epsilon(1e-12));
        const double q = sigmoid(0.01 * (128 * std::log2(1 + 500.0) - 1024));
        CHECK(r.utility == doctest::Approx(q).epsilon(1e-12));
        CHECK(r.reward == r.utility - r.cost);
        CHECK(r.reference_utility == doctest::Approx(2 * q).epsilon(1e-12));
    }
}

TEST_CASE("population stddev") {
    const std::vector<double> v{1.0, 0.5};
    CHECK(population_stddev(v) == 0.25);
    CHECK(population_stddev(std::vector<double>{}) == 0.0);
    CHECK(population_stddev(std::vector<double>{3.0, 3.0, 3.0}) == 0.0);
}

TEST_CASE("episode mechanics") {
    SUBCASE("T = 1") {
        auto cfg = make_preset("tiny");
        cfg.episode_length = 1;
        Environment env(cfg);
        env.reset(3);
        const auto r = env_step(env, {ScheduleAction{0}});
        CHECK(r.done);
        CHECK(env.state().done);
        CHECK_THROWS_AS(env.step({ScheduleAction{0}}), StateError);
    }
    SUBCASE("zero actions with no drains conserve energy") {
        auto cfg = make_preset("small");
        cfg.cubesat_idle_drain = 0.0;
        cfg.uav_propulsion = false;
        cfg.charging_rate = 0.0;
        Environment env(cfg);
        env.reset(11);
        std::vector<double> e0;
        for (const auto& d : env.state().devices) e0.push_back(d.energy);
        while (!env.state().done) env.step({ScheduleAction{0}, ScheduleAction{0}});
        for (std::size_t k = 0; k < e0.size(); ++k) CHECK(env.state().devices[k].energy == e0[k]);
    }
    SUBCASE("wrong action count") {
        Environment env(make_preset("small"));
        CHECK_THROWS(env.step({ScheduleAction{0}}));
    }
    SUBCASE("same seed, same trajectory") {
        Environment a(make_preset("small")), b(make_preset("small"));
        a.reset(99);
        b.reset(99);
        for (int t = 0; t < 10; ++t) {
            const auto ra = a.step({ScheduleAction{0b1111}, ScheduleAction{0b0101}});
            const auto rb = b.step({ScheduleAction{0b1111}, ScheduleAction{0b0101}});
            CHECK(ra.rewards[0].reward == rb.rewards[0].reward);
            CHECK(a.observation(1) == b.observation(1));
        }
    }
}

TEST_CASE("fuzzed steps respect every constraint") {
    for (double start_fraction : {1.0, 0.002}) {
        auto cfg = make_preset("small");
        cfg.episode_length = 1000;
        for (auto& c : cfg.cubesats) c.initial_energy_fraction = start_fraction;
        for (auto& u : cfg.uavs) u.initial_energy_fraction = start_fraction;
        Environment env(cfg);
        env.reset(2024);
        std::mt19937_64 rng(5);
        std::uniform_int_distribution<std::uint64_t> bits(0, (1u << cfg.device_count()) - 1);
        int violations = 0, selected = 0;
        while (!env.state().done) {
            const SaginState before = env.state();
            std::vector<ScheduleAction> req{{bits(rng)}, {bits(rng)}};
            const auto r = env.step(req);
            for (int i = 0; i < cfg.gs_count(); ++i) {
                const auto& g = cfg.ground_stations[i];
                const auto a = r.actions[i];
                double load = 0.0;
                for (int b = 0; b < cfg.device_count(); ++b) {
                    if (a.selected(b)) load += before.devices[b].capacity, ++selected;
                }
                if ((a.bits & ~req[i].bits) != 0) ++violations;
                if (a.count() > g.max_served) ++violations;
                if (a.count() > 0 && g.own_capacity + load > before.capacity_limits[i]) ++violations;
                const auto cov = coverage(before, i, cfg);
                for (int b = 0; b < cfg.device_count(); ++b) {
                    if (a.selected(b) && !cov.contains(b)) ++violations;
                }
                if (r.rewards[i].reward != r.rewards[i].utility - r.rewards[i].cost) ++violations;
            }
            for (const auto& d : env.state().devices) {
                if (!(d.energy >= 0.0) || d.energy > d.energy_cap) ++violations;
            }
        }
        CHECK(violations == 0);
        CHECK(env.state().t == 1000);
        if (start_fraction == 1.0) CHECK(selected > 0);
    }
}

TEST_CASE("observations") {
    Environment env(make_preset("small"));
    env.reset(1);
    const auto bounds = env.observation_bounds();
    REQUIRE(bounds.size() == env.observation_size());
    for (int step = 0; step < 30; ++step) {
        for (int i = 0; i < env.gs_count(); ++i) {
            const auto o = env.observation(i);
            REQUIRE(o.size() == env.observation_size());
            for (std::size_t k = 0; k < o.size(); ++k) {
                CHECK(o[k] >= bounds[k].min);
                CHECK(o[k] <= bounds[k].max);
            }
            const auto cov = coverage(env.state(), i, env.config());
            for (int b = 0; b < env.action_bits(); ++b) {
                const std::size_t base = 4 + 7 * static_cast<std::size_t>(b);
                CHECK((o[base] == 1.0) == cov.contains(b));
                if (!cov.contains(b)) {
                    for (int f = 0; f < 7; ++f) CHECK(o[base + f] == 0.0);
                }
            }
        }
        const auto s = env.state_features();
        CHECK(s.size() == env.state_size());
        CHECK(env.state_bounds().size() == env.state_size());
        env.step({ScheduleAction{0b1111}, ScheduleAction{0b1111}});
    }
}

TEST_CASE("scenario files and presets") {
    SUBCASE("yaml round trip") {
        for (const auto& name : preset_names()) {
            const auto cfg = make_preset(name);
            const auto text = dump_scenario(cfg);
            const auto back = parse_scenario(text);
            // Degree/radian conversion may move a coordinate by an ulp.
            REQUIRE(back.uavs.size() == cfg.uavs.size());
            for (std::size_t u = 0; u < cfg.uavs.size(); ++u) {
                REQUIRE(back.uavs[u].waypoints.size() == cfg.uavs[u].waypoints.size());
                for (std::size_t w = 0; w < cfg.uavs[u].waypoints.size(); ++w) {
                    CHECK(std::abs(back.uavs[u].waypoints[w].latitude - cfg.uavs[u].waypoints[w].latitude) < 1e-14);
                    CHECK(std::abs(back.uavs[u].waypoints[w].longitude - cfg.uavs[u].waypoints[w].longitude) < 1e-14);
                }
            }
            CHECK(back.ground_stations[0].capacity_peak == cfg.ground_stations[0].capacity_peak);
            CHECK(back.time_step == cfg.time_step);
            CHECK(back.episode_length == cfg.episode_length);
            CHECK(back.device_count() == cfg.device_count());
            CHECK(back.cubesats[0].tle.epoch == cfg.cubesats[0].tle.epoch);
            CHECK(back.cubesats[0].tle.inclination_deg == cfg.cubesats[0].tle.inclination_deg);
        }
    }
    SUBCASE("bad files") {
        CHECK_THROWS_AS(parse_scenario("name: x\n"), std::invalid_argument);
        CHECK_THROWS_AS(parse_scenario("[1, 2"), std::invalid_argument);
        CHECK_THROWS(load_scenario("/nonexistent/scenario.yaml"));
    }
    SUBCASE("preset shapes") {
        struct Shape {
            const char* name;
            int gs, cube, uav, served;
        };
        for (const auto& s : {Shape{"tiny", 1, 1, 1, 2}, Shape{"small", 2, 2, 2, 3}, Shape{"extended", 2, 4, 4, 4},
                              Shape{"paper", 4, 8, 8, 6}}) {
            const auto cfg = make_preset(s.name);
            CHECK(cfg.gs_count() == s.gs);
            CHECK(cfg.cubesat_count() == s.cube);
            CHECK(cfg.uav_count() == s.uav);
            CHECK(cfg.ground_stations[0].max_served == s.served);
        }
        CHECK_THROWS_AS(make_preset("huge"), std::invalid_argument);
    }
    SUBCASE("action presets") {
        const auto paper = make_preset("paper");
        CHECK(parse_action_preset("2^16", paper) == 16);
        CHECK(parse_action_preset("2^4", paper) == 4);
        CHECK(parse_action_preset("custom", paper) == paper.device_count());
        CHECK_THROWS(parse_action_preset("2^x", paper));
        CHECK_THROWS(parse_action_preset("17", paper));
        const auto four = with_action_bits(paper, 4);
        CHECK(four.device_count() == 4);
        CHECK(four.cubesat_count() == 2);
        CHECK(four.uav_count() == 2);
        const auto one = with_action_bits(paper, 1);
        CHECK(one.cubesat_count() == 1);
        CHECK(one.uav_count() == 0);
    }
}
