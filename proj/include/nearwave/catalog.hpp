#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nearwave/dates.hpp"
#include "nearwave/geo.hpp"

namespace nearwave::catalog {

// One attack or intervention record. Perpetrators carry the raw actor
// names from the source file (at most three); class resolution happens in
// classify(). Casualties are "unknown" when absent, which is distinct
// from 0: casualty filters cannot certify an unknown.
struct Event {
    std::string id;
    Day date = 0;
    geo::GeoPoint location{0.0, 0.0};
    std::vector<std::string> perpetrators;
    std::optional<long> casualties;
};

// Column-name configuration for the event CSV. Required columns: id,
// date (ISO-8601), lat, lon, perp1. Optional: perp2, perp3, casualties.
// An optional declared span rejects rows outside it.
struct CsvSchema {
    std::string id_col = "id";
    std::string date_col = "date";
    std::string lat_col = "lat";
    std::string lon_col = "lon";
    std::string perp1_col = "perp1";
    std::string perp2_col = "perp2";
    std::string perp3_col = "perp3";
    std::string casualties_col = "casualties";
    std::optional<Day> span_from;
    std::optional<Day> span_to;
};

struct IngestReport {
    std::size_t rows_total = 0;
    std::size_t accepted = 0;
    std::map<std::string, std::size_t> rejected; // reason -> count

    std::size_t rejected_total() const;
};

// Reads and validates events. Rows with missing or unparseable
// coordinates/dates are skipped and counted per reason. Throws Error on
// an unreadable file, a header missing required columns, or when more
// than half of the data rows are rejected ("schema mismatch suspected").
std::vector<Event> ingest_csv(const std::filesystem::path& path, const CsvSchema& schema,
                              IngestReport* report = nullptr);

// Writes events in the same schema ingest_csv reads (round-trip safe).
void write_events_csv(const std::filesystem::path& path, std::span<const Event> events,
                      const CsvSchema& schema = {});

// Maps an actor name to a class label over an inclusive date range.
// Omitted bounds mean open-ended.
struct AffiliationRule {
    std::string actor;
    std::string class_label;
    std::optional<Day> start;
    std::optional<Day> end;
};

// JSON array of {actor, class, start?, end?} objects, dates ISO-8601.
std::vector<AffiliationRule> load_affiliation_rules(const std::filesystem::path& path);

// Events with resolved classes. An event may appear under several classes
// (joint attribution); class_index holds indices into events.
struct ClassifiedCatalog {
    std::vector<Event> events;
    std::map<std::string, std::vector<std::size_t>> class_index;
    Day era_from = 0;
    Day era_to = 0;
    std::size_t dropped_unknown = 0;

    bool has_class(const std::string& label) const;
    // Throws Error for an unknown label.
    const std::vector<std::size_t>& members(const std::string& label) const;
};

// Resolves classes: each perpetrator name matching a rule active on the
// event date adds that rule's class; events whose names match no rule get
// fallback_label; events whose only perpetrators equal unknown_token are
// dropped. Name matching is exact after trimming and ASCII case-folding.
ClassifiedCatalog classify(std::vector<Event> events, std::span<const AffiliationRule> rules,
                           const std::string& fallback_label,
                           const std::string& unknown_token = "unknown");

// Keeps events dated within [from, to] inclusive and rebuilds the index.
// Throws on an inverted range. An empty intersection is valid.
ClassifiedCatalog filter_era(const ClassifiedCatalog& catalog, Day from, Day to);

std::string trim_fold(std::string_view name);

} // namespace nearwave::catalog
