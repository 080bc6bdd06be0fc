#include "nearwave/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <unordered_map>

#include "nearwave/errors.hpp"

namespace nearwave::pairs {

namespace {

struct Candidate {
    const catalog::Event* event;
    geo::Vec3 unit; // unit vector, for grid bucketing
};

// 3-D grid over unit-sphere coordinates. Cell edge equals the unit-chord
// query radius, so any pair within the radius sits in the same or an
// adjacent cell. Poles and the antimeridian need no special casing.
class UnitSphereGrid {
public:
    UnitSphereGrid(std::span<const Candidate> points, double unit_chord)
        : cell_(unit_chord > 1e-12 ? unit_chord : 1e-12) {
        for (std::size_t i = 0; i < points.size(); ++i)
            cells_[key_of(points[i].unit)].push_back(i);
    }

    template <typename Fn>
    void for_neighbors(const geo::Vec3& v, Fn&& fn) const {
        const std::int64_t cx = coord(v.x), cy = coord(v.y), cz = coord(v.z);
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = cells_.find(pack(cx + dx, cy + dy, cz + dz));
                    if (it == cells_.end()) continue;
                    for (std::size_t idx : it->second) fn(idx);
                }
    }

private:
    std::int64_t coord(double x) const { return std::int64_t(std::floor(x / cell_)); }

    static std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
        // Coordinates fit in ~21 bits each for any cell size >= 1e-6.
        const std::uint64_t bias = 1u << 20;
        return ((std::uint64_t(x + bias) & 0x1FFFFF) << 42) |
               ((std::uint64_t(y + bias) & 0x1FFFFF) << 21) |
               (std::uint64_t(z + bias) & 0x1FFFFF);
    }

    std::uint64_t key_of(const geo::Vec3& v) const { return pack(coord(v.x), coord(v.y), coord(v.z)); }

    double cell_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

bool casualty_ok(const catalog::Event& e, const std::optional<long>& min) {
    if (!min) return true;
    return e.casualties && *e.casualties >= *min; // unknown never certifies
}

bool pair_passes(const catalog::Event& src, const catalog::Event& tgt, const PairFilter& f) {
    if (!casualty_ok(src, f.min_casualties_source)) return false;
    if (!casualty_ok(tgt, f.min_casualties_target)) return false;
    if (f.incremental) {
        if (!src.casualties || !tgt.casualties) return false;
        if (!(*tgt.casualties > *src.casualties)) return false;
    }
    return true;
}

std::vector<Candidate> collect(const catalog::ClassifiedCatalog& cat, const std::string& label,
                               const PairScope& scope, bool apply_source_subset) {
    std::vector<Candidate> out;
    for (std::size_t i : cat.members(label)) {
        const catalog::Event& e = cat.events[i];
        if (scope.cluster_ids && !scope.cluster_ids->count(e.id)) continue;
        if (apply_source_subset && scope.source_ids && !scope.source_ids->count(e.id)) continue;
        out.push_back(Candidate{&e, geo::to_unit_vector(e.location)});
    }
    return out;
}

} // namespace

std::vector<LatentPair> enumerate_pairs(const catalog::ClassifiedCatalog& cat,
                                        const WindowSpec& windows, const PairFilter& filter,
                                        const PairScope& scope, const geo::EarthModel& earth) {
    const int window_days = windows.window_days();
    if (window_days <= 0) throw Error("window length must be positive");

    std::vector<Candidate> sources = collect(cat, filter.source_class, scope, true);
    std::vector<Candidate> targets = collect(cat, filter.target_class, scope, false);

    int window_count;
    if (windows.window_count) {
        window_count = *windows.window_count;
        if (window_count <= 0) throw Error("window count must be positive");
    } else {
        // Fill the catalog's era from the window start.
        if (cat.era_to < windows.start) return {};
        window_count = int((std::int64_t(cat.era_to) - windows.start) / window_days) + 1;
    }
    const Day windows_end = windows.start + Day(std::int64_t(window_count) * window_days);

    auto window_of = [&](Day d) -> int {
        if (d < windows.start || d >= windows_end) return -1;
        return int((std::int64_t(d) - windows.start) / window_days);
    };

    // Per-window target buckets.
    std::unordered_map<int, std::vector<Candidate>> targets_by_window;
    for (const Candidate& c : targets) {
        const int w = window_of(c.event->date);
        if (w >= 0) targets_by_window[w].push_back(c);
    }

    struct Enumerated {
        LatentPair pair;
        Day source_date;
        Day target_date;
    };
    std::vector<Enumerated> found;
    auto emit = [&](const Candidate& s, const Candidate& t, int w) {
        const catalog::Event& src = *s.event;
        const catalog::Event& tgt = *t.event;
        if (tgt.date <= src.date) return; // chronological order; same-day discarded
        if (tgt.id == src.id) return;     // joint attribution guard
        if (!pair_passes(src, tgt, filter)) return;
        const double d = geo::great_circle_distance(src.location, tgt.location, earth);
        const bool in_band = filter.band.kind == DistanceBand::Kind::within_max
                                 ? d <= filter.band.km
                                 : d > filter.band.km;
        if (!in_band) return;
        found.push_back(Enumerated{LatentPair{src.id, tgt.id, int(tgt.date - src.date), d, w},
                                   src.date, tgt.date});
    };

    if (filter.band.kind == DistanceBand::Kind::within_max) {
        const double unit_chord = geo::chord_for_arc(filter.band.km, earth) / earth.radius_km;
        std::unordered_map<int, UnitSphereGrid> grid_by_window;
        for (auto& [w, tv] : targets_by_window)
            grid_by_window.emplace(w, UnitSphereGrid(tv, unit_chord));
        for (const Candidate& s : sources) {
            const int w = window_of(s.event->date);
            if (w < 0) continue;
            auto git = grid_by_window.find(w);
            if (git == grid_by_window.end()) continue;
            const auto& tv = targets_by_window[w];
            git->second.for_neighbors(s.unit, [&](std::size_t ti) { emit(s, tv[ti], w); });
        }
    } else {
        // Complement band: no pruning, correctness first.
        for (const Candidate& s : sources) {
            const int w = window_of(s.event->date);
            if (w < 0) continue;
            auto it = targets_by_window.find(w);
            if (it == targets_by_window.end()) continue;
            for (const Candidate& t : it->second) emit(s, t, w);
        }
    }

    std::sort(found.begin(), found.end(), [](const Enumerated& a, const Enumerated& b) {
        if (a.pair.window != b.pair.window) return a.pair.window < b.pair.window;
        if (a.source_date != b.source_date) return a.source_date < b.source_date;
        if (a.target_date != b.target_date) return a.target_date < b.target_date;
        if (a.pair.source_id != b.pair.source_id) return a.pair.source_id < b.pair.source_id;
        return a.pair.target_id < b.pair.target_id;
    });
    std::vector<LatentPair> pairs;
    pairs.reserve(found.size());
    for (Enumerated& e : found) pairs.push_back(std::move(e.pair));
    return pairs;
}

std::unordered_set<std::string> provoked_subset(const catalog::ClassifiedCatalog& cat,
                                                const std::string& provoker_class,
                                                const std::string& responder_class,
                                                double response_max_km, int response_max_weeks,
                                                const geo::EarthModel& earth) {
    const int max_days = response_max_weeks * 7;
    std::vector<Candidate> provokers = collect(cat, provoker_class, {}, false);
    std::vector<Candidate> responders = collect(cat, responder_class, {}, false);

    const double unit_chord = geo::chord_for_arc(response_max_km, earth) / earth.radius_km;
    UnitSphereGrid grid(provokers, unit_chord);

    std::unordered_set<std::string> provoked;
    for (const Candidate& r : responders) {
        bool hit = false;
        grid.for_neighbors(r.unit, [&](std::size_t pi) {
            if (hit) return;
            const catalog::Event& p = *provokers[pi].event;
            const int gap = int(r.event->date - p.date);
            if (gap < 1 || gap > max_days) return;
            if (p.id == r.event->id) return;
            if (geo::great_circle_distance(p.location, r.event->location, earth) <= response_max_km)
                hit = true;
        });
        if (hit) provoked.insert(r.event->id);
    }
    return provoked;
}

Sufficiency pair_sufficiency(std::size_t pair_count, std::size_t min_count) {
    return pair_count >= min_count ? Sufficiency::sufficient : Sufficiency::insufficient;
}

void write_pairs_csv(const std::filesystem::path& path, std::span<const LatentPair> pairs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write pair dump: " + path.string());
    out << "window,source_id,target_id,latent_days,distance_km\n";
    char num[32];
    for (const LatentPair& p : pairs) {
        std::snprintf(num, sizeof num, "%.6f", p.distance_km);
        out << p.window << ',' << p.source_id << ',' << p.target_id << ',' << p.latent_days << ','
            << num << '\n';
    }
}

} // namespace nearwave::pairs
