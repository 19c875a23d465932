#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sagin/aero.hpp"

using namespace sagin::aero;

namespace {
double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }
}  // namespace

TEST_CASE("default airframe") {
    UavSpec s;
    CHECK(s.mass == 1815.0);
    CHECK(s.gravity == 9.81);
    CHECK(s.weight == 17799.0);
    CHECK(s.wing_area == 6.61);
    CHECK(s.air_density == 0.089);
    CHECK(s.cd0 == 0.045);
    CHECK(s.k_induced == 0.052);
    CHECK_NOTHROW(s.validate());
    s.wing_area = 0.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("ground_to_body") {
    SUBCASE("level attitude is the identity") {
        const auto b = ground_to_body({1.5, -2.0, 0.25}, {});
        CHECK(b.u == 1.5);
        CHECK(b.v == -2.0);
        CHECK(b.w == 0.25);
    }
    SUBCASE("quarter yaw") {
        const auto b = ground_to_body({1.0, 0.0, 0.0}, {std::numbers::pi / 2, 0.0, 0.0});
        CHECK(b.u == doctest::Approx(0.0));
        CHECK(b.v == doctest::Approx(-1.0));
        CHECK(b.w == doctest::Approx(0.0));
    }
    SUBCASE("norm preserved") {
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> uv(-200.0, 200.0), ua(-std::numbers::pi, std::numbers::pi);
        for (int k = 0; k < 1000; ++k) {
            GroundVelocity g{uv(rng), uv(rng), uv(rng)};
            const double n = std::sqrt(g.u * g.u + g.v * g.v + g.w * g.w);
            const auto b = ground_to_body(g, {ua(rng), ua(rng), ua(rng)});
            CHECK(rel(airspeed(b), n) < 1e-9);
        }
    }
}

TEST_CASE("airspeed") {
    CHECK(airspeed({3.0, 4.0, 0.0}) == 5.0);
    CHECK(airspeed({0.0, 0.0, 0.0}) == 0.0);
}

TEST_CASE("required power") {
    const UavSpec s;
    SUBCASE("scalar oracle at 100 m/s") {
        const double q = 0.5 * 0.089 * 100.0 * 100.0;
        const double pp = q * 6.61 * 0.045 * 100.0;
        const double pi = 17799.0 * 17799.0 * 0.052 * 100.0 / (q * 6.61);
        const auto p = required_power(s, 100.0);
        CHECK(rel(p.parasite, pp) < 1e-9);
        CHECK(rel(p.induced, pi) < 1e-9);
        CHECK(p.total == p.parasite + p.induced);
        CHECK(p.parasite == doctest::Approx(1.3237e4).epsilon(1e-4));
        CHECK(p.induced == doctest::Approx(5.6006e5).epsilon(1e-4));
    }
    SUBCASE("doubling speed") {
        const auto a = required_power(s, 80.0), b = required_power(s, 160.0);
        CHECK(rel(b.parasite, 8.0 * a.parasite) < 1e-12);
        CHECK(rel(b.induced, a.induced / 2.0) < 1e-12);
    }
    SUBCASE("exact power laws") {
        for (double v : {10.0, 55.5, 120.0, 300.0}) {
            for (double f : {0.5, 1.7, 3.0}) {
                const auto a = required_power(s, v), b = required_power(s, f * v);
                CHECK(rel(b.parasite, f * f * f * a.parasite) < 1e-12);
                CHECK(rel(b.induced, a.induced / f) < 1e-12);
            }
        }
    }
    SUBCASE("balanced speed") {
        const double v = std::sqrt(2.0 * 17799.0 / (0.089 * 6.61)) * std::pow(0.052 / 0.045, 0.25);
        CHECK(rel(balanced_speed(s), v) < 1e-12);
        const auto p = required_power(s, balanced_speed(s));
        CHECK(rel(p.parasite, p.induced) < 1e-6);
    }
    SUBCASE("strictly convex") {
        for (double a = 5.0; a < 400.0; a += 13.0) {
            for (double b = a + 1.0; b < 500.0; b += 29.0) {
                CHECK(required_power(s, (a + b) / 2).total <
                      0.5 * (required_power(s, a).total + required_power(s, b).total));
            }
        }
    }
    CHECK_THROWS_AS(required_power(s, 0.0), std::domain_error);
    CHECK_THROWS_AS(required_power(s, -3.0), std::domain_error);
}

TEST_CASE("gust perturbation") {
    std::mt19937_64 rng(42);
    const Attitude base{0.3, -0.2, 3.1};
    SUBCASE("zero sigma leaves attitude and stream untouched") {
        std::mt19937_64 copy = rng;
        const auto out = gust_perturb(base, 0.0, rng);
        CHECK(out.yaw == base.yaw);
        CHECK(out.pitch == base.pitch);
        CHECK(out.roll == base.roll);
        CHECK(rng == copy);
    }
    SUBCASE("zero-mean noise, wrapped output") {
        const double sigma = 0.05;
        const int n = 100000;
        double sum = 0.0;
        for (int k = 0; k < n; ++k) {
            const auto out = gust_perturb(Attitude{}, sigma, rng);
            sum += out.pitch;
            CHECK(out.yaw > -std::numbers::pi);
            CHECK(out.yaw <= std::numbers::pi);
        }
        CHECK(std::abs(sum / n) < 3.0 * sigma / std::sqrt(double(n)));
    }
    SUBCASE("large sigma still wraps") {
        for (int k = 0; k < 1000; ++k) {
            const auto out = gust_perturb(base, 10.0, rng);
            CHECK(std::abs(out.roll) <= std::numbers::pi);
        }
    }
    CHECK_THROWS_AS(gust_perturb(base, -1.0, rng), std::invalid_argument);
}
