#include "nearwave/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <random>

#include "nearwave/errors.hpp"

namespace nearwave::synth {

namespace {

constexpr double pi = 3.14159265358979323846;

// Orthonormal tangent basis (east, north) at a unit vector; near the poles
// the east axis is seeded from the x axis instead of the pole.
void tangent_basis(const geo::Vec3& c, geo::Vec3& east, geo::Vec3& north) {
    geo::Vec3 helper{0.0, 0.0, 1.0};
    if (std::fabs(c.z) > 0.99) helper = {1.0, 0.0, 0.0};
    east = {helper.y * c.z - helper.z * c.y, helper.z * c.x - helper.x * c.z,
            helper.x * c.y - helper.y * c.x};
    const double en = east.norm();
    east = {east.x / en, east.y / en, east.z / en};
    north = {c.y * east.z - c.z * east.y, c.z * east.x - c.x * east.z,
             c.x * east.y - c.y * east.x};
}

// Geodesic step of arc_rad radians from c toward the tangent direction
// (dx east, dy north).
geo::GeoPoint step_from(const geo::GeoPoint& origin, double dx_km, double dy_km,
                        const geo::EarthModel& earth) {
    const double r = std::hypot(dx_km, dy_km);
    if (r == 0.0) return origin;
    const geo::Vec3 c = geo::to_unit_vector(origin);
    geo::Vec3 east, north;
    tangent_basis(c, east, north);
    const double ux = dx_km / r, uy = dy_km / r;
    const double arc = r / earth.radius_km;
    const double ca = std::cos(arc), sa = std::sin(arc);
    const geo::Vec3 out{c.x * ca + (east.x * ux + north.x * uy) * sa,
                        c.y * ca + (east.y * ux + north.y * uy) * sa,
                        c.z * ca + (east.z * ux + north.z * uy) * sa};
    return geo::from_unit_vector(out);
}

geo::GeoPoint sample_cap(const CapRegion& region, std::mt19937_64& rng,
                         const geo::EarthModel& earth) {
    const double theta_max = std::min(region.radius_km / earth.radius_km, pi);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double cos_theta = 1.0 - uni(rng) * (1.0 - std::cos(theta_max));
    const double theta = std::acos(std::clamp(cos_theta, -1.0, 1.0));
    const double phi = 2.0 * pi * uni(rng);

    const geo::Vec3 c = geo::to_unit_vector(region.center);
    geo::Vec3 east, north;
    tangent_basis(c, east, north);
    const double st = std::sin(theta), ct = std::cos(theta);
    const geo::Vec3 out{c.x * ct + (east.x * std::cos(phi) + north.x * std::sin(phi)) * st,
                        c.y * ct + (east.y * std::cos(phi) + north.y * std::sin(phi)) * st,
                        c.z * ct + (east.z * std::cos(phi) + north.z * std::sin(phi)) * st};
    return geo::from_unit_vector(out);
}

struct Draft {
    Day date = 0;
    geo::GeoPoint location{0.0, 0.0};
    std::size_t class_idx = 0;
    std::optional<long> casualties;
};

std::vector<catalog::Event> finalize(std::vector<Draft> drafts,
                                     const std::vector<std::string>& class_labels,
                                     const std::string& id_prefix) {
    std::vector<std::size_t> order(drafts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return drafts[a].date < drafts[b].date;
    });

    std::vector<catalog::Event> events;
    events.reserve(drafts.size());
    char buf[32];
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        Draft& d = drafts[order[rank]];
        std::snprintf(buf, sizeof buf, "-%06zu", rank + 1);
        catalog::Event ev;
        ev.id = id_prefix + buf;
        ev.date = d.date;
        ev.location = d.location;
        ev.perpetrators = {class_labels[d.class_idx]};
        ev.casualties = d.casualties;
        events.push_back(std::move(ev));
    }
    return events;
}

std::optional<long> draw_casualties(const std::optional<double>& mean, std::mt19937_64& rng) {
    if (!mean) return std::nullopt;
    std::poisson_distribution<long> pois(*mean);
    return pois(rng);
}

void check_region_span(const CapRegion& region, const DateSpan& span) {
    if (!(region.radius_km > 0.0)) throw Error("region radius must be positive");
    if (span.to < span.from) throw Error("empty date span");
}

} // namespace

std::vector<catalog::Event> gen_poisson(const PoissonSpec& spec, std::uint64_t seed) {
    if (!(spec.rate > 0.0)) throw Error("event rate must be positive");
    check_region_span(spec.region, spec.span);
    if (spec.class_label.empty()) throw Error("class label must be nonempty");

    const geo::EarthModel earth{};
    std::mt19937_64 rng(seed);
    std::poisson_distribution<long> count_dist(spec.rate * double(spec.span.days()));
    const long n = count_dist(rng);
    std::uniform_int_distribution<long> day_dist(0, spec.span.days() - 1);

    std::vector<Draft> drafts;
    drafts.reserve(std::size_t(n));
    for (long i = 0; i < n; ++i) {
        Draft d;
        d.date = spec.span.from + Day(day_dist(rng));
        d.location = sample_cap(spec.region, rng, earth);
        d.class_idx = 0;
        d.casualties = draw_casualties(spec.casualty_mean, rng);
        drafts.push_back(d);
    }
    return finalize(std::move(drafts), {spec.class_label}, spec.id_prefix);
}

double branching_spectral_radius(const std::vector<std::vector<double>>& alpha) {
    const std::size_t c = alpha.size();
    if (c == 0) return 0.0;
    std::vector<double> v(c, 1.0);
    double radius = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
        std::vector<double> next(c, 0.0);
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j) next[j] += v[i] * alpha[i][j];
        double nrm = 0.0;
        for (double x : next) nrm = std::max(nrm, std::fabs(x));
        if (nrm == 0.0) return 0.0;
        for (double& x : next) x /= nrm;
        radius = nrm;
        v.swap(next);
    }
    return radius;
}

std::vector<catalog::Event> gen_excited(const ExcitationSpec& spec, std::uint64_t seed) {
    const std::size_t c = spec.class_labels.size();
    if (c == 0) throw Error("need at least one class");
    if (spec.mu.size() != c || spec.alpha.size() != c || spec.tau_days.size() != c)
        throw Error("class-indexed fields must all have one entry per class");
    for (std::size_t i = 0; i < c; ++i) {
        if (spec.alpha[i].size() != c || spec.tau_days[i].size() != c)
            throw Error("branching and delay matrices must be square");
        if (!(spec.mu[i] >= 0.0)) throw Error("background rates must be nonnegative");
        for (std::size_t j = 0; j < c; ++j) {
            if (!(spec.alpha[i][j] >= 0.0)) throw Error("branching ratios must be nonnegative");
            if (spec.alpha[i][j] > 0.0 && !(spec.tau_days[i][j] > 0.0))
                throw Error("delay means must be positive where branching is nonzero");
        }
    }
    if (!spec.lag_days.empty()) {
        if (spec.lag_days.size() != c) throw Error("lag matrix must be square");
        for (std::size_t i = 0; i < c; ++i) {
            if (spec.lag_days[i].size() != c) throw Error("lag matrix must be square");
            for (std::size_t j = 0; j < c; ++j)
                if (!(spec.lag_days[i][j] >= 0.0)) throw Error("lags must be nonnegative");
        }
    }
    if (!(spec.sigma_km >= 0.0)) throw Error("spatial scale must be nonnegative");
    check_region_span(spec.region, spec.span);

    const double radius = branching_spectral_radius(spec.alpha);
    if (radius >= 1.0 - 1e-9)
        throw Error("supercritical branching matrix: spectral radius " + std::to_string(radius));

    const geo::EarthModel earth{};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<long> day_dist(0, spec.span.days() - 1);
    std::normal_distribution<double> step(0.0, spec.sigma_km);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    std::vector<Draft> drafts;
    std::deque<std::size_t> queue;
    for (std::size_t ci = 0; ci < c; ++ci) {
        if (spec.mu[ci] <= 0.0) continue;
        std::poisson_distribution<long> bg(spec.mu[ci] * double(spec.span.days()));
        const long n = bg(rng);
        for (long i = 0; i < n; ++i) {
            Draft d;
            d.date = spec.span.from + Day(day_dist(rng));
            d.location = sample_cap(spec.region, rng, earth);
            d.class_idx = ci;
            d.casualties = draw_casualties(spec.casualty_mean, rng);
            queue.push_back(drafts.size());
            drafts.push_back(d);
        }
    }

    while (!queue.empty()) {
        const std::size_t pi = queue.front();
        queue.pop_front();
        const Draft parent = drafts[pi];
        for (std::size_t cj = 0; cj < c; ++cj) {
            const double a = spec.alpha[parent.class_idx][cj];
            if (a <= 0.0) continue;
            std::poisson_distribution<long> brood(a);
            const long n = brood(rng);
            const double tau = spec.tau_days[parent.class_idx][cj];
            const double lag =
                spec.lag_days.empty() ? 0.0 : spec.lag_days[parent.class_idx][cj];
            for (long i = 0; i < n; ++i) {
                const double wait = std::min(-tau * std::log1p(-uni(rng)), 1e7);
                const long delay = lround(lag) + std::max(1L, long(std::ceil(wait)));
                const Day date = parent.date + Day(delay);
                const double dx = spec.sigma_km > 0.0 ? step(rng) : 0.0;
                const double dy = spec.sigma_km > 0.0 ? step(rng) : 0.0;
                if (date > spec.span.to) continue;
                Draft d;
                d.date = date;
                d.location = step_from(parent.location, dx, dy, earth);
                d.class_idx = cj;
                d.casualties = draw_casualties(spec.casualty_mean, rng);
                queue.push_back(drafts.size());
                drafts.push_back(d);
            }
        }
    }
    return finalize(std::move(drafts), spec.class_labels, spec.id_prefix);
}

} // namespace nearwave::synth
