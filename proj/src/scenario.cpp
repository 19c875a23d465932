#include "sagin/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "geodesy.hpp"

namespace sagin::env {

namespace {

using orbital::deg2rad;
using orbital::GeodeticPosition;
using orbital::rad2deg;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

[[noreturn]] void bad(const std::string& what) { throw std::invalid_argument("scenario: " + what); }

template <typename T>
T get(const YAML::Node& node, const char* key, const T& fallback) {
    const auto v = node[key];
    if (!v) return fallback;
    try {
        return v.as<T>();
    } catch (const YAML::Exception& e) {
        bad(std::string("field '") + key + "': " + e.what());
    }
}

template <typename T>
T require(const YAML::Node& node, const char* key, const std::string& where) {
    const auto v = node[key];
    if (!v) bad(where + " is missing '" + key + "'");
    try {
        return v.as<T>();
    } catch (const YAML::Exception& e) {
        bad(where + " field '" + key + "': " + e.what());
    }
}

aero::UavSpec parse_airframe(const YAML::Node& n) {
    aero::UavSpec s;
    if (!n) return s;
    s.mass = get(n, "mass", s.mass);
    s.gravity = get(n, "gravity", s.gravity);
    s.weight = get(n, "weight", s.weight);
    s.wing_area = get(n, "wing_area", s.wing_area);
    s.air_density = get(n, "air_density", s.air_density);
    s.cd0 = get(n, "cd0", s.cd0);
    s.k_induced = get(n, "k_induced", s.k_induced);
    return s;
}

GeodeticPosition parse_point(const YAML::Node& n, const std::string& where) {
    if (!n.IsSequence() || n.size() != 3) bad(where + ": waypoint must be [latitude_deg, longitude_deg, altitude_m]");
    return {deg2rad(n[0].as<double>()), deg2rad(n[1].as<double>()), n[2].as<double>()};
}

std::string anomaly_name(orbital::AnomalyMode m) { return m == orbital::AnomalyMode::Newton ? "newton" : "first_order"; }

}  // namespace

double ScenarioConfig::reference_epoch() const {
    if (cubesats.empty()) return 0.0;
    double e = std::numeric_limits<double>::infinity();
    for (const auto& c : cubesats) e = std::min(e, c.tle.epoch);
    return e;
}

void ScenarioConfig::validate() const {
    if (ground_stations.empty()) bad("at least one ground station is required");
    if (device_count() < 1) bad("at least one CubeSat or UAV is required");
    if (device_count() > 63) bad("at most 63 devices are supported");
    if (!(link.xi1 > 0.0)) bad("link.xi1 must be positive");
    if (!(link.bandwidth > 0.0) || !(link.gamma0 > 0.0) || !(link.reference_distance > 0.0)) {
        bad("link bandwidth, gamma0 and reference_distance must be positive");
    }
    if (!(time_step > 0.0)) bad("time_step must be positive");
    if (episode_length < 1) bad("episode_length must be at least 1");
    if (start_window < 0.0) bad("start_window must be non-negative");
    if (charging_rate < 0.0 || cubesat_idle_drain < 0.0 || link.link_power < 0.0) bad("power terms must be non-negative");
    if (gust_sigma < 0.0) bad("gust_sigma must be non-negative");
    if (!(capacity_scale > 0.0)) bad("capacity_scale must be positive");
    if (elevation_mask < 0.0 || elevation_mask >= std::numbers::pi / 2) bad("elevation mask must lie in [0, 90) degrees");
    const double sun = std::hypot(sun_direction[0], sun_direction[1], sun_direction[2]);
    if (!(sun > 0.0)) bad("sun_direction must be non-zero");
    for (const auto& g : ground_stations) {
        if (g.max_served < 0) bad("ground station '" + g.name + "' max_served must be non-negative");
        if (!(g.capacity_peak > 0.0)) bad("ground station '" + g.name + "' capacity_peak must be positive");
    }
    for (const auto& c : cubesats) {
        if (!(c.energy_cap > 0.0)) bad("CubeSat '" + c.tle.name + "' energy_cap must be positive");
        if (c.initial_energy_fraction < 0.0 || c.initial_energy_fraction > 1.0) bad("initial energy fraction outside [0, 1]");
        if (c.tle.eccentricity < 0.0 || c.tle.eccentricity >= 1.0) bad("CubeSat '" + c.tle.name + "' eccentricity outside [0, 1)");
    }
    for (const auto& u : uavs) {
        u.airframe.validate();
        if (!(u.energy_cap > 0.0)) bad("UAV '" + u.name + "' energy_cap must be positive");
        if (u.initial_energy_fraction < 0.0 || u.initial_energy_fraction > 1.0) bad("initial energy fraction outside [0, 1]");
        if (!(u.speed > 0.0)) bad("UAV '" + u.name + "' speed must be positive");
        if (u.waypoints.size() < 2) bad("UAV '" + u.name + "' needs at least two waypoints");
    }
}

ScenarioConfig parse_scenario(const std::string& yaml_text) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        bad(std::string("YAML: ") + e.what());
    }
    if (!root.IsMap()) bad("top level must be a mapping");

    ScenarioConfig cfg;
    cfg.name = get<std::string>(root, "name", cfg.name);
    cfg.time_step = get(root, "time_step", cfg.time_step);
    cfg.episode_length = get(root, "episode_length", cfg.episode_length);
    cfg.start_window = get(root, "start_window", cfg.start_window);
    cfg.elevation_mask = deg2rad(get(root, "elevation_mask_deg", rad2deg(cfg.elevation_mask)));
    cfg.charging_rate = get(root, "charging_rate", cfg.charging_rate);
    cfg.cubesat_idle_drain = get(root, "cubesat_idle_drain", cfg.cubesat_idle_drain);
    cfg.uav_propulsion = get(root, "uav_propulsion", cfg.uav_propulsion);
    cfg.gust_sigma = get(root, "gust_sigma", cfg.gust_sigma);
    cfg.capacity_scale = get(root, "capacity_scale", cfg.capacity_scale);
    if (const auto mode = get<std::string>(root, "anomaly_mode", "first_order"); mode == "newton") {
        cfg.anomaly_mode = orbital::AnomalyMode::Newton;
    } else if (mode != "first_order") {
        bad("anomaly_mode must be 'first_order' or 'newton'");
    }
    if (const auto sun = root["sun_direction"]) {
        if (!sun.IsSequence() || sun.size() != 3) bad("sun_direction must be a 3-vector");
        for (int k = 0; k < 3; ++k) cfg.sun_direction[k] = sun[k].as<double>();
    }
    if (const auto link = root["link"]) {
        auto& l = cfg.link;
        l.bandwidth = get(link, "bandwidth", l.bandwidth);
        l.gamma0 = get(link, "gamma0", l.gamma0);
        l.reference_distance = get(link, "reference_distance", l.reference_distance);
        l.path_exponent = get(link, "path_exponent", l.path_exponent);
        l.xi1 = get(link, "xi1", l.xi1);
        l.xi2 = get(link, "xi2", l.xi2);
        l.link_power = get(link, "link_power", l.link_power);
    }

    for (const auto& n : root["ground_stations"]) {
        GroundStation g;
        g.name = get<std::string>(n, "name", "gs" + std::to_string(cfg.ground_stations.size()));
        const std::string where = "ground station '" + g.name + "'";
        g.position.latitude = deg2rad(require<double>(n, "latitude_deg", where));
        g.position.longitude = deg2rad(require<double>(n, "longitude_deg", where));
        g.position.altitude = get(n, "altitude_m", 0.0);
        g.own_capacity = get(n, "own_capacity", g.own_capacity);
        g.capacity_peak = get(n, "capacity_peak", g.capacity_peak);
        g.capacity_steepness = get(n, "capacity_steepness", g.capacity_steepness);
        g.capacity_midpoint = get(n, "capacity_midpoint", g.capacity_midpoint);
        g.max_served = get(n, "max_served", g.max_served);
        cfg.ground_stations.push_back(g);
    }
    for (const auto& n : root["cubesats"]) {
        CubeSatConfig c;
        const std::string where = "CubeSat #" + std::to_string(cfg.cubesats.size());
        try {
            c.tle = orbital::parse_tle(require<std::string>(n, "tle", where));
        } catch (const std::runtime_error& e) {
            bad(where + ": " + e.what());
        }
        c.capacity = get(n, "capacity", c.capacity);
        c.energy_cap = get(n, "energy_cap", c.energy_cap);
        c.initial_energy_fraction = get(n, "initial_energy_fraction", c.initial_energy_fraction);
        cfg.cubesats.push_back(c);
    }
    for (const auto& n : root["uavs"]) {
        UavConfig u;
        u.name = get<std::string>(n, "name", "uav" + std::to_string(cfg.uavs.size()));
        const std::string where = "UAV '" + u.name + "'";
        u.airframe = parse_airframe(n["airframe"]);
        u.speed = get(n, "speed", u.speed);
        u.capacity = get(n, "capacity", u.capacity);
        u.energy_cap = get(n, "energy_cap", u.energy_cap);
        u.initial_energy_fraction = get(n, "initial_energy_fraction", u.initial_energy_fraction);
        for (const auto& w : n["waypoints"]) u.waypoints.push_back(parse_point(w, where));
        cfg.uavs.push_back(u);
    }
    cfg.validate();
    return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

std::string dump_scenario(const ScenarioConfig& cfg) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << cfg.name;
    out << YAML::Key << "time_step" << YAML::Value << cfg.time_step;
    out << YAML::Key << "episode_length" << YAML::Value << cfg.episode_length;
    out << YAML::Key << "start_window" << YAML::Value << cfg.start_window;
    out << YAML::Key << "elevation_mask_deg" << YAML::Value << rad2deg(cfg.elevation_mask);
    out << YAML::Key << "charging_rate" << YAML::Value << cfg.charging_rate;
    out << YAML::Key << "cubesat_idle_drain" << YAML::Value << cfg.cubesat_idle_drain;
    out << YAML::Key << "uav_propulsion" << YAML::Value << cfg.uav_propulsion;
    out << YAML::Key << "gust_sigma" << YAML::Value << cfg.gust_sigma;
    out << YAML::Key << "capacity_scale" << YAML::Value << cfg.capacity_scale;
    out << YAML::Key << "anomaly_mode" << YAML::Value << anomaly_name(cfg.anomaly_mode);
    out << YAML::Key << "sun_direction" << YAML::Value << YAML::Flow << YAML::BeginSeq << cfg.sun_direction[0]
        << cfg.sun_direction[1] << cfg.sun_direction[2] << YAML::EndSeq;

    out << YAML::Key << "link" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "bandwidth" << YAML::Value << cfg.link.bandwidth;
    out << YAML::Key << "gamma0" << YAML::Value << cfg.link.gamma0;
    out << YAML::Key << "reference_distance" << YAML::Value << cfg.link.reference_distance;
    out << YAML::Key << "path_exponent" << YAML::Value << cfg.link.path_exponent;
    out << YAML::Key << "xi1" << YAML::Value << cfg.link.xi1;
    out << YAML::Key << "xi2" << YAML::Value << cfg.link.xi2;
    out << YAML::Key << "link_power" << YAML::Value << cfg.link.link_power;
    out << YAML::EndMap;

    out << YAML::Key << "ground_stations" << YAML::Value << YAML::BeginSeq;
    for (const auto& g : cfg.ground_stations) {
        out << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << g.name;
        out << YAML::Key << "latitude_deg" << YAML::Value << rad2deg(g.position.latitude);
        out << YAML::Key << "longitude_deg" << YAML::Value << rad2deg(g.position.longitude);
        out << YAML::Key << "altitude_m" << YAML::Value << g.position.altitude;
        out << YAML::Key << "own_capacity" << YAML::Value << g.own_capacity;
        out << YAML::Key << "capacity_peak" << YAML::Value << g.capacity_peak;
        out << YAML::Key << "capacity_steepness" << YAML::Value << g.capacity_steepness;
        out << YAML::Key << "capacity_midpoint" << YAML::Value << g.capacity_midpoint;
        out << YAML::Key << "max_served" << YAML::Value << g.max_served;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "cubesats" << YAML::Value << YAML::BeginSeq;
    for (const auto& c : cfg.cubesats) {
        const auto lines = orbital::format_tle(c.tle);
        out << YAML::BeginMap;
        out << YAML::Key << "tle" << YAML::Value << YAML::Literal << (c.tle.name + "\n" + lines[0] + "\n" + lines[1] + "\n");
        out << YAML::Key << "capacity" << YAML::Value << c.capacity;
        out << YAML::Key << "energy_cap" << YAML::Value << c.energy_cap;
        out << YAML::Key << "initial_energy_fraction" << YAML::Value << c.initial_energy_fraction;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "uavs" << YAML::Value << YAML::BeginSeq;
    for (const auto& u : cfg.uavs) {
        out << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << u.name;
        out << YAML::Key << "speed" << YAML::Value << u.speed;
        out << YAML::Key << "capacity" << YAML::Value << u.capacity;
        out << YAML::Key << "energy_cap" << YAML::Value << u.energy_cap;
        out << YAML::Key << "initial_energy_fraction" << YAML::Value << u.initial_energy_fraction;
        out << YAML::Key << "airframe" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "mass" << YAML::Value << u.airframe.mass;
        out << YAML::Key << "gravity" << YAML::Value << u.airframe.gravity;
        out << YAML::Key << "weight" << YAML::Value << u.airframe.weight;
        out << YAML::Key << "wing_area" << YAML::Value << u.airframe.wing_area;
        out << YAML::Key << "air_density" << YAML::Value << u.airframe.air_density;
        out << YAML::Key << "cd0" << YAML::Value << u.airframe.cd0;
        out << YAML::Key << "k_induced" << YAML::Value << u.airframe.k_induced;
        out << YAML::EndMap;
        out << YAML::Key << "waypoints" << YAML::Value << YAML::BeginSeq;
        for (const auto& w : u.waypoints) {
            out << YAML::Flow << YAML::BeginSeq << rad2deg(w.latitude) << rad2deg(w.longitude) << w.altitude << YAML::EndSeq;
        }
        out << YAML::EndSeq;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

void save_scenario(const ScenarioConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write scenario file: " + path);
    out << dump_scenario(cfg);
}

orbital::TleRecord synthesize_pass_tle(const std::string& name, int catalog_number, const GeodeticPosition& target,
                                       double pass_time, double altitude, double inclination_deg, bool ascending,
                                       double epoch_unix, const orbital::EarthConstants& earth) {
    const double inc = deg2rad(inclination_deg);
    const double s = std::sin(target.latitude) / std::sin(inc);
    if (std::abs(s) > 1.0) throw std::invalid_argument("target latitude is not reachable at this inclination");

    const double a = earth.earth_radius + altitude;
    const double n = std::sqrt(earth.mu / (a * a * a));
    // Argument of latitude at the pass, then the node that puts the track over the target.
    const double u = ascending ? std::asin(s) : std::numbers::pi - std::asin(s);
    const double node_offset = std::atan2(std::cos(inc) * std::sin(u), std::cos(u));
    const double raan = target.longitude - node_offset + earth.rotation_rate * pass_time;
    const double m0 = u - n * pass_time;

    auto positive_deg = [](double rad) {
        double d = std::fmod(rad2deg(rad), 360.0);
        return d < 0.0 ? d + 360.0 : d;
    };

    using namespace std::chrono;
    const sys_seconds when{seconds{static_cast<long long>(std::floor(epoch_unix))}};
    const auto day = floor<days>(when);
    const year_month_day ymd{day};
    const sys_days jan1{ymd.year() / January / 1};

    orbital::TleRecord rec;
    rec.name = name;
    rec.catalog_number = catalog_number;
    rec.international_designator = "24001A";
    rec.epoch_year = static_cast<int>(ymd.year());
    rec.epoch_day = 1.0 + (epoch_unix - static_cast<double>(jan1.time_since_epoch().count()) * 86400.0) / 86400.0;
    rec.element_set_number = 999;
    rec.inclination_deg = inclination_deg;
    rec.raan_deg = positive_deg(raan);
    rec.eccentricity = 0.0;
    rec.arg_perigee_deg = 0.0;
    rec.mean_anomaly_deg = positive_deg(m0);
    rec.mean_motion_rev_per_day = n * 86400.0 / kTwoPi;
    rec.revolution_number = 1;
    // Round-trip through text so the record matches what a file would carry.
    const auto lines = orbital::format_tle(rec);
    return orbital::parse_tle(lines[0], lines[1], name);
}

std::vector<GeodeticPosition> loiter_track(const GeodeticPosition& center, double radius, double altitude, int points,
                                           const orbital::EarthConstants& earth) {
    std::vector<GeodeticPosition> out;
    for (int k = 0; k < points; ++k) {
        auto p = detail::destination(center, kTwoPi * k / points, radius, earth.earth_radius);
        p.altitude = altitude;
        out.push_back(p);
    }
    return out;
}

std::vector<std::string> preset_names() { return {"tiny", "small", "extended", "paper"}; }

ScenarioConfig make_preset(const std::string& name) {
    int n_gs = 0, n_cube = 0, n_uav = 0, served = 0;
    if (name == "tiny") {
        n_gs = 1, n_cube = 1, n_uav = 1, served = 2;
    } else if (name == "small") {
        n_gs = 2, n_cube = 2, n_uav = 2, served = 3;
    } else if (name == "extended") {
        n_gs = 2, n_cube = 4, n_uav = 4, served = 4;
    } else if (name == "paper") {
        n_gs = 4, n_cube = 8, n_uav = 8, served = 6;
    } else {
        throw std::invalid_argument("unknown preset '" + name + "'");
    }

    struct Site {
        const char* name;
        double lat, lon, alt, peak, steep, mid;
    };
    static const Site sites[] = {
        {"Seoul", 37.5665, 126.9780, 38.0, 4.0e6, 0.010, 60.0},
        {"Daejeon", 36.3504, 127.3845, 70.0, 3.5e6, 0.015, 120.0},
        {"Busan", 35.1796, 129.0756, 20.0, 4.5e6, 0.008, 30.0},
        {"Gwangju", 35.1595, 126.8526, 40.0, 3.8e6, 0.020, 90.0},
    };

    ScenarioConfig cfg;
    cfg.name = name;
    for (int g = 0; g < n_gs; ++g) {
        const auto& s = sites[g];
        GroundStation gs;
        gs.name = s.name;
        gs.position = {deg2rad(s.lat), deg2rad(s.lon), s.alt};
        gs.capacity_peak = s.peak;
        gs.capacity_steepness = s.steep;
        gs.capacity_midpoint = s.mid;
        gs.max_served = served;
        cfg.ground_stations.push_back(gs);
    }

    const double epoch = 1710892800.0;  // 2024-03-20T00:00:00Z
    const double span = cfg.start_window + cfg.episode_length * cfg.time_step;
    for (int k = 0; k < n_cube; ++k) {
        const auto& home = cfg.ground_stations[k % n_gs].position;
        GeodeticPosition target = home;
        target.latitude += deg2rad(4.0 * ((k % 3) - 1));
        target.longitude += deg2rad(3.0 * (((k / 3) % 3) - 1));
        CubeSatConfig c;
        c.tle = synthesize_pass_tle("CUBESAT-" + std::to_string(k + 1), 90001 + k, target, span * (k + 0.5) / n_cube,
                                    5.0e5 + 2.5e4 * k, k % 2 == 0 ? 97.4 : 51.6, k % 4 < 2, epoch, cfg.earth);
        c.initial_energy_fraction = 0.95 - 0.1 * (k % 4);
        cfg.cubesats.push_back(c);
    }
    for (int l = 0; l < n_uav; ++l) {
        const auto& home = cfg.ground_stations[l % n_gs].position;
        const auto center = detail::destination(home, std::numbers::pi / 4, 1.5e4 * (l / n_gs), cfg.earth.earth_radius);
        UavConfig u;
        u.name = "HALE-" + std::to_string(l + 1);
        u.waypoints = loiter_track(center, 2.0e4, 2.0e4, 8, cfg.earth);
        u.initial_energy_fraction = 1.0 - 0.05 * l;
        cfg.uavs.push_back(u);
    }
    cfg.validate();
    return cfg;
}

ScenarioConfig with_action_bits(const ScenarioConfig& cfg, int bits) {
    if (bits < 1) throw std::invalid_argument("action preset needs at least one bit");
    const int n_cube = (bits + 1) / 2, n_uav = bits / 2;
    if (n_cube > cfg.cubesat_count() || n_uav > cfg.uav_count()) {
        throw std::invalid_argument("scenario '" + cfg.name + "' has " + std::to_string(cfg.cubesat_count()) + " CubeSats and " +
                                    std::to_string(cfg.uav_count()) + " UAVs, too few for 2^" + std::to_string(bits));
    }
    ScenarioConfig out = cfg;
    out.cubesats.resize(static_cast<std::size_t>(n_cube));
    out.uavs.resize(static_cast<std::size_t>(n_uav));
    out.validate();
    return out;
}

int parse_action_preset(const std::string& preset, const ScenarioConfig& cfg) {
    if (preset == "custom") return cfg.device_count();
    if (preset.rfind("2^", 0) == 0) {
        try {
            std::size_t used = 0;
            const int bits = std::stoi(preset.substr(2), &used);
            if (used == preset.size() - 2 && bits >= 1 && bits <= 63) return bits;
        } catch (const std::exception&) {
        }
    }
    throw std::invalid_argument("action preset must be '2^k' or 'custom', got '" + preset + "'");
}

}  // namespace sagin::env
