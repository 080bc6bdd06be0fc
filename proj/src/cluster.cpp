#include "nearwave/cluster.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include "nearwave/errors.hpp"

namespace nearwave::cluster {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k, std::uint64_t restart) {
    std::uint64_t z =
        seed + 0x9e3779b97f4a7c15ULL * (k + 1) + 0xbf58476d1ce4e5b9ULL * (restart + 1);
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

std::vector<std::size_t> distinct_indices(std::span<const geo::GeoPoint> points) {
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].lat() != points[b].lat()) return points[a].lat() < points[b].lat();
        return points[a].lon() < points[b].lon();
    });
    std::vector<std::size_t> distinct;
    for (std::size_t i : order) {
        if (!distinct.empty()) {
            const geo::GeoPoint& prev = points[distinct.back()];
            if (prev.lat() == points[i].lat() && prev.lon() == points[i].lon()) continue;
        }
        distinct.push_back(i);
    }
    return distinct;
}

int nearest_center(const geo::Vec3& u, const std::vector<geo::Vec3>& centers) {
    int best = 0;
    double best_dot = centers[0].dot(u);
    for (int c = 1; c < int(centers.size()); ++c) {
        const double d = centers[c].dot(u);
        if (d > best_dot) {
            best_dot = d;
            best = c;
        }
    }
    return best;
}

struct RestartResult {
    double dbar = 0.0;
    std::vector<geo::Vec3> centers;
    std::vector<int> assign;
};

// Squared-distance-weighted initial centers over the distinct points, then
// Lloyd iteration. Assignment uses the dot product, which orders candidate
// centroids exactly as the great-circle distance does.
RestartResult run_restart(const std::vector<geo::Vec3>& units,
                          const std::vector<std::size_t>& distinct, int k, std::uint64_t seed,
                          int max_iterations) {
    const std::size_t n = units.size();
    const std::size_t nd = distinct.size();
    std::mt19937_64 rng(seed);

    std::vector<geo::Vec3> centers;
    centers.reserve(std::size_t(k));
    std::vector<double> weight(nd);
    std::vector<char> used(nd, 0);
    {
        std::uniform_int_distribution<std::size_t> first(0, nd - 1);
        const std::size_t f = first(rng);
        centers.push_back(units[distinct[f]]);
        used[f] = 1;
        for (std::size_t j = 0; j < nd; ++j)
            weight[j] = used[j] ? 0.0 : std::max(0.0, 1.0 - centers[0].dot(units[distinct[j]]));
    }
    while (int(centers.size()) < k) {
        double total = 0.0;
        for (double w : weight) total += w;
        std::size_t pick = nd;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            const double target = u(rng);
            double acc = 0.0;
            for (std::size_t j = 0; j < nd; ++j) {
                if (weight[j] <= 0.0) continue;
                acc += weight[j];
                pick = j;
                if (target < acc) break;
            }
        }
        if (pick == nd) {
            for (std::size_t j = 0; j < nd; ++j)
                if (!used[j]) {
                    pick = j;
                    break;
                }
        }
        const geo::Vec3& cv = units[distinct[pick]];
        centers.push_back(cv);
        used[pick] = 1;
        weight[pick] = 0.0;
        for (std::size_t j = 0; j < nd; ++j)
            if (weight[j] > 0.0)
                weight[j] = std::min(weight[j], std::max(0.0, 1.0 - cv.dot(units[distinct[j]])));
    }

    std::vector<int> assign(n);
    for (std::size_t i = 0; i < n; ++i) assign[i] = nearest_center(units[i], centers);

    for (int iter = 0; iter < max_iterations; ++iter) {
        std::vector<geo::Vec3> sums(std::size_t(k), geo::Vec3{0.0, 0.0, 0.0});
        std::vector<std::size_t> counts(std::size_t(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            geo::Vec3& s = sums[std::size_t(assign[i])];
            s.x += units[i].x;
            s.y += units[i].y;
            s.z += units[i].z;
            counts[std::size_t(assign[i])]++;
        }
        for (int c = 0; c < k; ++c) {
            if (counts[std::size_t(c)] == 0) continue;
            const geo::Vec3& s = sums[std::size_t(c)];
            const double nrm = s.norm();
            // An antipodally balanced cluster keeps its previous center.
            if (nrm > 1e-12) centers[std::size_t(c)] = {s.x / nrm, s.y / nrm, s.z / nrm};
        }
        bool reseeded = false;
        for (int c = 0; c < k; ++c) {
            if (counts[std::size_t(c)] != 0) continue;
            std::size_t far_i = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = 1.0 - centers[std::size_t(assign[i])].dot(units[i]);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            counts[std::size_t(assign[far_i])]--;
            centers[std::size_t(c)] = units[far_i];
            assign[far_i] = c;
            counts[std::size_t(c)] = 1;
            reseeded = true;
        }
        bool changed = reseeded;
        std::vector<int> next(n);
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = nearest_center(units[i], centers);
            changed = changed || next[i] != assign[i];
        }
        assign.swap(next);
        if (!changed) break;
    }

    RestartResult res;
    res.centers = std::move(centers);
    res.assign = std::move(assign);
    return res;
}

} // namespace

ClusterModel kmeans(std::span<const geo::GeoPoint> points, int k, const KmeansOptions& opt,
                    const geo::EarthModel& earth) {
    if (points.empty()) throw Error("no points to cluster");
    if (k < 1) throw Error("cluster count must be positive");
    if (opt.restarts < 1) throw Error("need at least one restart");
    if (opt.max_iterations < 1) throw Error("need at least one iteration");

    const std::vector<std::size_t> distinct = distinct_indices(points);
    if (std::size_t(k) > distinct.size())
        throw Error("fewer distinct points (" + std::to_string(distinct.size()) +
                    ") than clusters (" + std::to_string(k) + ")");

    std::vector<geo::Vec3> units;
    units.reserve(points.size());
    for (const geo::GeoPoint& p : points) units.push_back(geo::to_unit_vector(p));

    const std::size_t nrestart = std::size_t(opt.restarts);
    std::vector<RestartResult> results(nrestart);
    std::vector<double> dbars(nrestart, 0.0);

    auto run_task = [&](std::size_t r) {
        RestartResult res =
            run_restart(units, distinct, k, mix_seed(opt.seed, std::uint64_t(k), r),
                        opt.max_iterations);
        std::vector<geo::GeoPoint> cgs;
        cgs.reserve(res.centers.size());
        for (const geo::Vec3& c : res.centers) cgs.push_back(geo::from_unit_vector(c));
        double ss = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double d =
                geo::great_circle_distance(points[i], cgs[std::size_t(res.assign[i])], earth);
            ss += d * d;
        }
        dbars[r] = std::sqrt(ss / double(points.size()));
        results[r] = std::move(res);
    };

    const int threads = std::max(1, opt.threads);
    if (threads == 1 || nrestart < 2) {
        for (std::size_t r = 0; r < nrestart; ++r) run_task(r);
    } else {
        std::atomic<std::size_t> nextr{0};
        std::exception_ptr first_error;
        std::mutex err_mtx;
        auto worker = [&] {
            for (;;) {
                const std::size_t r = nextr.fetch_add(1);
                if (r >= nrestart) return;
                try {
                    run_task(r);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(err_mtx);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        const std::size_t nworker = std::min(std::size_t(threads), nrestart);
        for (std::size_t i = 0; i < nworker; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    std::size_t best = 0;
    for (std::size_t r = 1; r < nrestart; ++r)
        if (dbars[r] < dbars[best]) best = r;

    const RestartResult& win = results[best];
    ClusterModel model;
    model.k = k;
    model.assignment = win.assign;
    model.dbar = dbars[best];
    model.centroids.reserve(std::size_t(k));
    for (const geo::Vec3& c : win.centers) model.centroids.push_back(geo::from_unit_vector(c));
    model.sizes.assign(std::size_t(k), 0);
    std::vector<double> ss(std::size_t(k), 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const std::size_t c = std::size_t(win.assign[i]);
        const double d = geo::great_circle_distance(points[i], model.centroids[c], earth);
        model.sizes[c]++;
        ss[c] += d * d;
    }
    model.spreads.assign(std::size_t(k), 0.0);
    for (int c = 0; c < k; ++c)
        if (model.sizes[std::size_t(c)] > 0)
            model.spreads[std::size_t(c)] =
                std::sqrt(ss[std::size_t(c)] / double(model.sizes[std::size_t(c)]));
    return model;
}

ElbowCurve elbow_select(std::span<const geo::GeoPoint> points, int k_max, double threshold,
                        const KmeansOptions& opt, const geo::EarthModel& earth) {
    if (points.empty()) throw Error("no points to cluster");
    if (k_max < 2) throw Error("k_max must be at least 2");
    if (!(threshold > 0.0)) throw Error("elbow threshold must be positive");

    const std::size_t distinct = distinct_indices(points).size();
    const int scan_max = int(std::min<std::size_t>(std::size_t(k_max) + 1, distinct));

    std::vector<double> dbars(std::size_t(scan_max) + 1, 0.0);
    for (int k = 1; k <= scan_max; ++k) dbars[std::size_t(k)] = kmeans(points, k, opt, earth).dbar;

    ElbowCurve curve;
    for (int k = 1; k <= scan_max; ++k) {
        ElbowPoint pt;
        pt.k = k;
        pt.dbar = dbars[std::size_t(k)];
        if (k < scan_max)
            pt.ratio = pt.dbar > 0.0
                           ? std::fabs(dbars[std::size_t(k) + 1] - pt.dbar) / pt.dbar
                           : 0.0;
        curve.points.push_back(pt);
    }

    // Ratios exist for k = 1..scan_max-1; a candidate k qualifies when every
    // ratio from k upward stays below the threshold.
    const int i_max = scan_max - 1;
    const int cand_max = std::min(k_max, scan_max);
    int k_star = 0;
    for (int k = 1; k <= cand_max && k_star == 0; ++k) {
        bool ok = true;
        for (int j = k; j <= i_max && ok; ++j)
            ok = *curve.points[std::size_t(j) - 1].ratio < threshold;
        if (ok) k_star = k;
    }
    if (k_star > 0) {
        curve.k_star = k_star;
        curve.elbow_found = true;
    } else {
        curve.k_star = cand_max;
        curve.elbow_found = false;
    }
    return curve;
}

std::vector<int> assign_by_spread(const ClusterModel& model, std::span<const geo::GeoPoint> extras,
                                  double multiplier, const geo::EarthModel& earth) {
    if (model.k < 1 || model.centroids.empty()) throw Error("cluster model has no centroids");
    if (model.spreads.size() != model.centroids.size())
        throw Error("cluster model is missing spreads");
    if (!(multiplier >= 0.0)) throw Error("spread multiplier must be nonnegative");

    std::vector<geo::Vec3> centers;
    centers.reserve(model.centroids.size());
    for (const geo::GeoPoint& c : model.centroids) centers.push_back(geo::to_unit_vector(c));

    std::vector<int> out;
    out.reserve(extras.size());
    for (const geo::GeoPoint& p : extras) {
        const int c = nearest_center(geo::to_unit_vector(p), centers);
        const double d = geo::great_circle_distance(p, model.centroids[std::size_t(c)], earth);
        out.push_back(d <= multiplier * model.spreads[std::size_t(c)] ? c : -1);
    }
    return out;
}

} // namespace nearwave::cluster
