#include "sagin/orbital.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace sagin::orbital {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSecondsPerDay = 86400.0;

// Days from 1970-01-01 to the given civil date (proleptic Gregorian).
long long days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2 ? 1 : 0;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<long long>(era) * 146097 + static_cast<long long>(doe) - 719468;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string_view strip_line_end(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
    return s;
}

[[noreturn]] void column_error(int line_no, int first, int last, std::string_view what, std::string_view raw) {
    std::ostringstream os;
    os << "TLE line " << line_no << " columns " << first << "-" << last << " (" << what << "): cannot parse '"
       << raw << "'";
    throw TleParseError(os.str());
}

// Columns are 1-based and inclusive, as in the format documentation.
std::string_view field(std::string_view line, int first, int last) {
    return line.substr(static_cast<std::size_t>(first - 1), static_cast<std::size_t>(last - first + 1));
}

double parse_double(std::string_view line, int line_no, int first, int last, std::string_view what) {
    const auto raw = field(line, first, last);
    const auto s = trim(raw);
    if (s.empty()) column_error(line_no, first, last, what, raw);
    std::string buf(s);
    // strtod accepts leading '.', from_chars on older toolchains may not
    if (buf.front() == '.') buf.insert(buf.begin(), '0');
    if (buf.size() > 1 && (buf[0] == '-' || buf[0] == '+') && buf[1] == '.') buf.insert(buf.begin() + 1, '0');
    char* end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size()) column_error(line_no, first, last, what, raw);
    return v;
}

int parse_int(std::string_view line, int line_no, int first, int last, std::string_view what, bool allow_blank = false) {
    const auto raw = field(line, first, last);
    const auto s = trim(raw);
    if (s.empty()) {
        if (allow_blank) return 0;
        column_error(line_no, first, last, what, raw);
    }
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) column_error(line_no, first, last, what, raw);
    return v;
}

// "-11606-4" -> -0.11606e-4 ; " 00000-0" -> 0
double parse_assumed_exponent(std::string_view line, int line_no, int first, int last, std::string_view what) {
    const auto raw = field(line, first, last);
    auto s = trim(raw);
    if (s.empty()) return 0.0;
    double sign = 1.0;
    if (s.front() == '-' || s.front() == '+') {
        sign = s.front() == '-' ? -1.0 : 1.0;
        s.remove_prefix(1);
    }
    const auto exp_pos = s.find_last_of("+-");
    if (exp_pos == std::string_view::npos || exp_pos == 0) column_error(line_no, first, last, what, raw);
    const auto mantissa_digits = s.substr(0, exp_pos);
    const auto exponent_text = s.substr(exp_pos);
    long mantissa = 0;
    for (char c : mantissa_digits) {
        if (!std::isdigit(static_cast<unsigned char>(c))) column_error(line_no, first, last, what, raw);
        mantissa = mantissa * 10 + (c - '0');
    }
    int exponent = 0;
    auto [ptr, ec] = std::from_chars(exponent_text.data() + (exponent_text.front() == '+' ? 1 : 0),
                                     exponent_text.data() + exponent_text.size(), exponent);
    if (ec != std::errc{}) column_error(line_no, first, last, what, raw);
    const double m = static_cast<double>(mantissa) * std::pow(10.0, -static_cast<double>(mantissa_digits.size()));
    return sign * m * std::pow(10.0, exponent);
}

std::string format_assumed_exponent(double v) {
    char buf[48];
    if (v == 0.0) return " 00000-0";
    const char sign = v < 0 ? '-' : ' ';
    double a = std::abs(v);
    int exponent = static_cast<int>(std::floor(std::log10(a))) + 1;
    long mantissa = std::lround(a / std::pow(10.0, exponent) * 1e5);
    if (mantissa >= 100000) {
        mantissa /= 10;
        ++exponent;
    }
    std::snprintf(buf, sizeof buf, "%c%05ld%c%d", sign, mantissa, exponent < 0 ? '-' : '+', std::abs(exponent));
    return buf;
}

void check_line(std::string_view line, int line_no) {
    if (line.size() != 69) {
        std::ostringstream os;
        os << "TLE line " << line_no << " columns 1-69: expected 69 columns, got " << line.size();
        throw TleParseError(os.str());
    }
    if (line[0] != static_cast<char>('0' + line_no)) {
        std::ostringstream os;
        os << "TLE line " << line_no << " columns 1-1 (line number): expected '" << line_no << "', got '" << line[0]
           << "'";
        throw TleParseError(os.str());
    }
    const int expected = parse_int(line, line_no, 69, 69, "checksum");
    const int actual = tle_checksum(line);
    if (expected != actual) {
        std::ostringstream os;
        os << "TLE line " << line_no << " checksum mismatch: stored " << expected << ", computed " << actual;
        throw TleChecksumError(os.str());
    }
}

Mat3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{{c, s, 0.0}, {-s, c, 0.0}, {0.0, 0.0, 1.0}}};
}

Mat3 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{{1.0, 0.0, 0.0}, {0.0, c, s}, {0.0, -s, c}}};
}

Vec3 mul(const Mat3& m, const Vec3& v) {
    Vec3 out{};
    for (int r = 0; r < 3; ++r) out[r] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2];
    return out;
}

Vec3 mul_transposed(const Mat3& m, const Vec3& v) {
    Vec3 out{};
    for (int r = 0; r < 3; ++r) out[r] = m[0][r] * v[0] + m[1][r] * v[1] + m[2][r] * v[2];
    return out;
}

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

}  // namespace

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

double wrap_pi(double angle) {
    double a = std::fmod(angle, kTwoPi);
    if (a <= -std::numbers::pi) a += kTwoPi;
    if (a > std::numbers::pi) a -= kTwoPi;
    return a;
}

int tle_checksum(std::string_view line) {
    int sum = 0;
    const auto n = std::min<std::size_t>(line.size(), 68);
    for (std::size_t k = 0; k < n; ++k) {
        const char c = line[k];
        if (c >= '0' && c <= '9') sum += c - '0';
        else if (c == '-') sum += 1;
    }
    return sum % 10;
}

TleRecord parse_tle(std::string_view line1, std::string_view line2, std::string name) {
    line1 = strip_line_end(line1);
    line2 = strip_line_end(line2);
    check_line(line1, 1);
    check_line(line2, 2);

    TleRecord rec;
    rec.name = std::move(name);
    rec.catalog_number = parse_int(line1, 1, 3, 7, "catalog number");
    rec.classification = line1[7];
    rec.international_designator = std::string(trim(field(line1, 10, 17)));
    const int yy = parse_int(line1, 1, 19, 20, "epoch year");
    rec.epoch_year = yy < 57 ? 2000 + yy : 1900 + yy;
    rec.epoch_day = parse_double(line1, 1, 21, 32, "epoch day");
    rec.epoch = static_cast<double>(days_from_civil(rec.epoch_year, 1, 1)) * kSecondsPerDay +
                (rec.epoch_day - 1.0) * kSecondsPerDay;
    rec.mean_motion_dot = parse_double(line1, 1, 34, 43, "mean motion first derivative");
    rec.mean_motion_ddot = parse_assumed_exponent(line1, 1, 45, 52, "mean motion second derivative");
    rec.bstar = parse_assumed_exponent(line1, 1, 54, 61, "bstar");
    rec.element_set_number = parse_int(line1, 1, 65, 68, "element set number", true);
    rec.line1_checksum = parse_int(line1, 1, 69, 69, "checksum");

    const int catalog2 = parse_int(line2, 2, 3, 7, "catalog number");
    if (catalog2 != rec.catalog_number) {
        throw TleParseError("TLE line 2 columns 3-7 (catalog number): does not match line 1");
    }
    rec.inclination_deg = parse_double(line2, 2, 9, 16, "inclination");
    rec.raan_deg = parse_double(line2, 2, 18, 25, "right ascension of ascending node");
    {
        const auto raw = field(line2, 27, 33);
        for (char c : raw) {
            if (!std::isdigit(static_cast<unsigned char>(c)) && c != ' ') column_error(2, 27, 33, "eccentricity", raw);
        }
        rec.eccentricity = static_cast<double>(parse_int(line2, 2, 27, 33, "eccentricity")) * 1e-7;
    }
    rec.arg_perigee_deg = parse_double(line2, 2, 35, 42, "argument of perigee");
    rec.mean_anomaly_deg = parse_double(line2, 2, 44, 51, "mean anomaly");
    rec.mean_motion_rev_per_day = parse_double(line2, 2, 53, 63, "mean motion");
    rec.revolution_number = parse_int(line2, 2, 64, 68, "revolution number", true);
    rec.line2_checksum = parse_int(line2, 2, 69, 69, "checksum");

    if (rec.inclination_deg < 0.0 || rec.inclination_deg > 180.0) {
        throw TleParseError("TLE line 2 columns 9-16 (inclination): outside [0, 180] degrees");
    }
    if (rec.mean_motion_rev_per_day <= 0.0) {
        throw TleParseError("TLE line 2 columns 53-63 (mean motion): must be positive");
    }
    return rec;
}

TleRecord parse_tle(std::string_view text) {
    auto set = parse_tle_set(text);
    if (set.size() != 1) {
        throw TleParseError("expected exactly one TLE object, found " + std::to_string(set.size()));
    }
    return std::move(set.front());
}

std::vector<TleRecord> parse_tle_set(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto end = nl == std::string_view::npos ? text.size() : nl;
        auto line = strip_line_end(text.substr(pos, end - pos));
        if (!trim(line).empty()) lines.push_back(line);
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }

    std::vector<TleRecord> out;
    std::size_t k = 0;
    while (k < lines.size()) {
        std::string name;
        if (lines[k].front() != '1' || lines[k].size() != 69) {
            name = std::string(trim(lines[k]));
            ++k;
        }
        if (k + 1 >= lines.size()) {
            throw TleParseError("TLE object '" + name + "' is missing its data lines");
        }
        out.push_back(parse_tle(lines[k], lines[k + 1], name));
        k += 2;
    }
    return out;
}

std::vector<TleRecord> load_tle_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open TLE file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_tle_set(ss.str());
}

std::array<std::string, 2> format_tle(const TleRecord& rec) {
    char buf[80];
    const int yy = rec.epoch_year % 100;
    const double ndot = rec.mean_motion_dot;
    char ndot_text[16];
    std::snprintf(ndot_text, sizeof ndot_text, "%.8f", std::abs(ndot));  // "0.00002182"
    std::string ndot_field = std::string(1, ndot < 0 ? '-' : ' ') + (ndot_text + 1);

    std::snprintf(buf, sizeof buf, "1 %05d%c %-8.8s %02d%012.8f %10.10s %8.8s %8.8s 0 %4d", rec.catalog_number,
                  rec.classification, rec.international_designator.c_str(), yy, rec.epoch_day, ndot_field.c_str(),
                  format_assumed_exponent(rec.mean_motion_ddot).c_str(), format_assumed_exponent(rec.bstar).c_str(),
                  rec.element_set_number % 10000);
    std::string line1(buf);
    line1 += static_cast<char>('0' + tle_checksum(line1));

    const long ecc = std::lround(rec.eccentricity * 1e7);
    std::snprintf(buf, sizeof buf, "2 %05d %8.4f %8.4f %07ld %8.4f %8.4f %11.8f%5d", rec.catalog_number,
                  rec.inclination_deg, rec.raan_deg, ecc, rec.arg_perigee_deg, rec.mean_anomaly_deg,
                  rec.mean_motion_rev_per_day, rec.revolution_number % 100000);
    std::string line2(buf);
    line2 += static_cast<char>('0' + tle_checksum(line2));
    return {line1, line2};
}

OrbitalElements elements_from_tle(const TleRecord& rec, const EarthConstants& constants) {
    if (!(rec.mean_motion_rev_per_day > 0.0)) {
        throw std::domain_error("mean motion must be positive");
    }
    if (rec.eccentricity < 0.0 || rec.eccentricity >= 1.0) {
        throw std::domain_error("eccentricity must lie in [0, 1)");
    }
    OrbitalElements el;
    el.eccentricity = rec.eccentricity;
    el.inclination = deg2rad(rec.inclination_deg);
    el.raan = deg2rad(rec.raan_deg);
    el.arg_perigee = deg2rad(rec.arg_perigee_deg);
    el.mean_anomaly_at_epoch = deg2rad(rec.mean_anomaly_deg);
    el.mean_motion = rec.mean_motion_rev_per_day * kTwoPi / kSecondsPerDay;
    el.semi_major_axis = std::cbrt(constants.mu / (el.mean_motion * el.mean_motion));
    el.angular_momentum =
        std::sqrt(constants.mu * el.semi_major_axis * (1.0 - el.eccentricity * el.eccentricity));
    return el;
}

double eccentric_anomaly(double mean_anomaly, double e, AnomalyMode mode) {
    if (mode == AnomalyMode::FirstOrder) return mean_anomaly + e * std::sin(mean_anomaly);

    double E = e < 0.8 ? mean_anomaly : mean_anomaly + (std::sin(mean_anomaly) >= 0 ? 1.0 : -1.0) * e;
    for (int it = 0; it < 50; ++it) {
        const double f = E - e * std::sin(E) - mean_anomaly;
        const double step = f / (1.0 - e * std::cos(E));
        E -= step;
        if (std::abs(step) < 1e-12) break;
    }
    return E;
}

double true_anomaly(double E, double e) {
    // Reduce to [-pi, pi] so the half-angle stays on one branch, then restore the revolution.
    const double k = std::round(E / kTwoPi);
    const double E0 = E - kTwoPi * k;
    const double nu0 = 2.0 * std::atan2(std::sqrt(1.0 + e) * std::sin(E0 / 2.0), std::sqrt(1.0 - e) * std::cos(E0 / 2.0));
    return nu0 + kTwoPi * k;
}

double conic_radius(const OrbitalElements& elements, double nu, const EarthConstants& constants) {
    const double h = elements.angular_momentum;
    return (h * h / constants.mu) / (1.0 + elements.eccentricity * std::cos(nu));
}

OrbitState propagate(const OrbitalElements& elements, double t, const EarthConstants& constants, AnomalyMode mode) {
    const double M = elements.mean_anomaly_at_epoch + elements.mean_motion * t;
    const double E = eccentric_anomaly(M, elements.eccentricity, mode);
    const double nu = true_anomaly(E, elements.eccentricity);
    const double r = conic_radius(elements, nu, constants);

    const Vec3 perifocal{r * std::cos(nu), r * std::sin(nu), 0.0};
    // Perifocal -> inertial through the transposed node/inclination/perigee frames,
    // then the Earth-rotation frame about the polar axis.
    const Vec3 inertial = mul_transposed(
        rot_z(elements.raan), mul_transposed(rot_x(elements.inclination), mul_transposed(rot_z(elements.arg_perigee), perifocal)));
    const double theta = constants.rotation_rate * t;
    const Vec3 fixed = mul(rot_z(theta), inertial);

    OrbitState out;
    out.inertial = inertial;
    out.earth_fixed = fixed;
    out.radius = norm(fixed);
    out.speed = std::sqrt(constants.mu * std::max(0.0, 2.0 / r - 1.0 / elements.semi_major_axis));

    const double lat = std::asin(std::clamp(fixed[2] / out.radius, -1.0, 1.0));
    const double cos_lat = std::cos(lat);
    double lon = 0.0;
    if (std::abs(cos_lat) < 1e-12) {
        out.degenerate_pole = true;
    } else {
        lon = std::acos(std::clamp(fixed[0] / (out.radius * cos_lat), -1.0, 1.0));
        if (fixed[1] < 0.0) lon = -lon;
        lon = wrap_pi(lon);
    }
    out.subpoint = GeodeticPosition{lat, lon, out.radius - constants.earth_radius};
    return out;
}

double great_circle_distance(const GeodeticPosition& p, const GeodeticPosition& q, const EarthConstants& constants) {
    const double dlon = p.longitude - q.longitude;
    const double c = std::cos(p.latitude) * std::cos(q.latitude) * std::cos(dlon) +
                     std::sin(p.latitude) * std::sin(q.latitude);
    if (c > 0.999) {
        // acos loses half its digits near 1; the haversine form is the same angle, well conditioned.
        const double sl = std::sin((p.latitude - q.latitude) / 2.0);
        const double so = std::sin(dlon / 2.0);
        const double h = sl * sl + std::cos(p.latitude) * std::cos(q.latitude) * so * so;
        return constants.earth_radius * 2.0 * std::asin(std::min(1.0, std::sqrt(h)));
    }
    return constants.earth_radius * std::acos(std::clamp(c, -1.0, 1.0));
}

double slant_distance(const GeodeticPosition& gs, const GeodeticPosition& device, const EarthConstants& constants) {
    const double h = great_circle_distance(gs, device, constants);
    const double v = device.altitude - gs.altitude;
    return std::sqrt(h * h + v * v);
}

}  // namespace sagin::orbital
