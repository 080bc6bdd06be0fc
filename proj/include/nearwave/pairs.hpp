#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "nearwave/catalog.hpp"
#include "nearwave/geo.hpp"

namespace nearwave::pairs {

// Consecutive, non-overlapping windows of exactly 7*window_weeks days
// starting at start. Without an explicit count, windows fill the span
// they are applied to.
struct WindowSpec {
    Day start = 0;
    int window_weeks = 44;
    std::optional<int> window_count;

    int window_days() const { return window_weeks * 7; }
};

// Exactly one of the two bounds is active: either pairs separated by at
// most max_km, or by more than min_km.
struct DistanceBand {
    enum class Kind { within_max, beyond_min };
    Kind kind = Kind::within_max;
    double km = 20.0;

    static DistanceBand within(double max_km) { return {Kind::within_max, max_km}; }
    static DistanceBand beyond(double min_km) { return {Kind::beyond_min, min_km}; }
};

struct PairFilter {
    std::string source_class;
    std::string target_class;
    DistanceBand band = DistanceBand::within(20.0);
    std::optional<long> min_casualties_source;
    std::optional<long> min_casualties_target;
    bool incremental = false; // target casualties strictly greater than source's
};

// A (source, target) event pair inside one window: target strictly after
// source, 1 <= latent_days < window length.
struct LatentPair {
    std::string source_id;
    std::string target_id;
    int latent_days = 0;
    double distance_km = 0.0;
    int window = 0;
};

// Optional restrictions for enumerate_pairs: a cluster scope applied to
// both ends, and an explicit source-id subset (used for provoked chains).
struct PairScope {
    const std::unordered_set<std::string>* cluster_ids = nullptr;
    const std::unordered_set<std::string>* source_ids = nullptr;
};

// Emits every qualifying pair exactly once, sorted by (window, source
// date, target date, source id, target id). For a self-class filter each
// unordered pair appears once, oriented chronologically; same-day pairs
// and self-pairs (joint attribution) never appear. The within_max band is
// grid-accelerated; beyond_min scans all in-window pairs.
std::vector<LatentPair> enumerate_pairs(const catalog::ClassifiedCatalog& cat,
                                        const WindowSpec& windows, const PairFilter& filter,
                                        const PairScope& scope = {},
                                        const geo::EarthModel& earth = {});

// All responder-class events preceded by a provoker-class event within
// response_max_km and 1..7*response_max_weeks days. The result acts as a
// virtual source class for a second enumerate_pairs.
std::unordered_set<std::string> provoked_subset(const catalog::ClassifiedCatalog& cat,
                                                const std::string& provoker_class,
                                                const std::string& responder_class,
                                                double response_max_km = 20.0,
                                                int response_max_weeks = 4,
                                                const geo::EarthModel& earth = {});

enum class Sufficiency { sufficient, insufficient };

inline constexpr std::size_t default_min_pairs = 100;

Sufficiency pair_sufficiency(std::size_t pair_count, std::size_t min_count = default_min_pairs);

void write_pairs_csv(const std::filesystem::path& path, std::span<const LatentPair> pairs);

} // namespace nearwave::pairs
