#pragma once

#include <span>
#include <vector>

namespace nearwave::geo {

// Spherical Earth. 6373 km is the radius used throughout the analysis.
struct EarthModel {
    double radius_km = 6373.0;
};

// A geographic point in degrees. Longitude is normalized into [-180, 180]
// at construction; latitude outside [-90, 90] is rejected.
class GeoPoint {
public:
    GeoPoint(double lon_deg, double lat_deg);

    double lon() const { return lon_deg_; }
    double lat() const { return lat_deg_; }
    double lon_rad() const;
    double lat_rad() const;

    friend bool operator==(const GeoPoint& a, const GeoPoint& b) {
        return a.lon_deg_ == b.lon_deg_ && a.lat_deg_ == b.lat_deg_;
    }

private:
    double lon_deg_;
    double lat_deg_;
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const;
};

// Unit vector on the sphere for a point; inverse conversion expects a
// vector of nonzero norm and normalizes it.
Vec3 to_unit_vector(const GeoPoint& p);
GeoPoint from_unit_vector(const Vec3& v);

// Great-circle distance L = R*theta with theta from the half-chord:
//   s     = R * sqrt(sin^2(dlat/2) + cos(lat1) cos(lat2) sin^2(dlon/2))
//   theta = 2 * atan(sqrt(s^2 / (R^2 - s^2)))
// s is clamped to R so rounding near the antipode cannot produce a
// negative radicand. Symmetric, in [0, pi*R].
double great_circle_distance(const GeoPoint& a, const GeoPoint& b, const EarthModel& earth = {});

// Chord length (through the Earth) corresponding to an arc distance.
// Monotone in the arc, so nearest-centroid and radius queries can run on
// 3-D coordinates without trigonometry in the inner loop.
double chord_for_arc(double arc_km, const EarthModel& earth = {});
double arc_for_unit_chord(double unit_chord, const EarthModel& earth = {});

// Mean of the unit vectors, renormalized. Throws on an empty list and on
// a zero-norm mean (antipodally symmetric input).
GeoPoint spherical_centroid(std::span<const GeoPoint> points);

// sqrt(mean squared great-circle distance to center). Throws on empty input.
double rms_spread(std::span<const GeoPoint> points, const GeoPoint& center,
                  const EarthModel& earth = {});

} // namespace nearwave::geo
