#include "nearwave/geo.hpp"

#include <cmath>

#include "nearwave/errors.hpp"

namespace nearwave::geo {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

double normalize_lon(double lon_deg) {
    if (lon_deg >= -180.0 && lon_deg <= 180.0) return lon_deg;
    double x = std::fmod(lon_deg + 180.0, 360.0);
    if (x < 0.0) x += 360.0;
    return x - 180.0;
}

} // namespace

GeoPoint::GeoPoint(double lon_deg, double lat_deg) : lon_deg_(normalize_lon(lon_deg)), lat_deg_(lat_deg) {
    if (!std::isfinite(lon_deg) || !std::isfinite(lat_deg))
        throw Error("non-finite coordinate");
    if (lat_deg < -90.0 || lat_deg > 90.0)
        throw Error("latitude out of range [-90, 90]: " + std::to_string(lat_deg));
}

double GeoPoint::lon_rad() const { return lon_deg_ * kDegToRad; }
double GeoPoint::lat_rad() const { return lat_deg_ * kDegToRad; }

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 to_unit_vector(const GeoPoint& p) {
    const double lon = p.lon_rad();
    const double lat = p.lat_rad();
    const double c = std::cos(lat);
    return {c * std::cos(lon), c * std::sin(lon), std::sin(lat)};
}

GeoPoint from_unit_vector(const Vec3& v) {
    const double n = v.norm();
    if (n <= 0.0 || !std::isfinite(n)) throw Error("degenerate centroid: zero-norm vector");
    const double lat = std::asin(v.z / n);
    const double lon = std::atan2(v.y, v.x);
    return {lon / kDegToRad, lat / kDegToRad};
}

double great_circle_distance(const GeoPoint& a, const GeoPoint& b, const EarthModel& earth) {
    const double r = earth.radius_km;
    if (r <= 0.0) throw Error("earth radius must be positive");

    const double dlat = (b.lat() - a.lat()) * kDegToRad;
    const double dlon = (b.lon() - a.lon()) * kDegToRad;
    const double sin_dlat = std::sin(0.5 * dlat);
    const double sin_dlon = std::sin(0.5 * dlon);

    // (s/R)^2; clamp to 1 so s never exceeds R.
    double h = sin_dlat * sin_dlat + std::cos(a.lat_rad()) * std::cos(b.lat_rad()) * sin_dlon * sin_dlon;
    if (h > 1.0) h = 1.0;
    if (h <= 0.0) return 0.0;

    const double denom = 1.0 - h;
    const double theta = denom <= 0.0 ? kPi : 2.0 * std::atan(std::sqrt(h / denom));
    return r * theta;
}

double chord_for_arc(double arc_km, const EarthModel& earth) {
    const double r = earth.radius_km;
    const double theta = std::min(std::max(arc_km / r, 0.0), kPi);
    return 2.0 * r * std::sin(0.5 * theta);
}

double arc_for_unit_chord(double unit_chord, const EarthModel& earth) {
    double half = 0.5 * unit_chord;
    if (half > 1.0) half = 1.0;
    if (half < 0.0) half = 0.0;
    return earth.radius_km * 2.0 * std::asin(half);
}

GeoPoint spherical_centroid(std::span<const GeoPoint> points) {
    if (points.empty()) throw Error("spherical_centroid: empty point list");
    Vec3 sum;
    for (const GeoPoint& p : points) {
        const Vec3 v = to_unit_vector(p);
        sum.x += v.x;
        sum.y += v.y;
        sum.z += v.z;
    }
    const double n = static_cast<double>(points.size());
    return from_unit_vector({sum.x / n, sum.y / n, sum.z / n});
}

double rms_spread(std::span<const GeoPoint> points, const GeoPoint& center, const EarthModel& earth) {
    if (points.empty()) throw Error("rms_spread: empty point list");
    double sum_sq = 0.0;
    for (const GeoPoint& p : points) {
        const double d = great_circle_distance(p, center, earth);
        sum_sq += d * d;
    }
    return std::sqrt(sum_sq / static_cast<double>(points.size()));
}

} // namespace nearwave::geo
