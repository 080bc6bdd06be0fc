#include "nearwave/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "nearwave/errors.hpp"

namespace nearwave::catalog {

namespace {

// Minimal RFC-4180 reader: quoted fields, embedded commas/quotes/newlines,
// CRLF tolerant.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    bool next_record(std::vector<std::string>& fields) {
        fields.clear();
        std::string field;
        bool in_quotes = false;
        bool any = false;
        int c;
        while ((c = in_.get()) != EOF) {
            any = true;
            if (in_quotes) {
                if (c == '"') {
                    if (in_.peek() == '"') {
                        in_.get();
                        field.push_back('"');
                    } else {
                        in_quotes = false;
                    }
                } else {
                    field.push_back(char(c));
                }
            } else if (c == '"') {
                in_quotes = true;
            } else if (c == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else if (c == '\n') {
                if (!field.empty() && field.back() == '\r') field.pop_back();
                fields.push_back(std::move(field));
                return true;
            } else {
                field.push_back(char(c));
            }
        }
        if (!any) return false;
        if (!field.empty() && field.back() == '\r') field.pop_back();
        fields.push_back(std::move(field));
        return true;
    }

private:
    std::istream& in_;
};

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

bool is_blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::optional<double> parse_double(const std::string& s) {
    std::string t(trim_fold(s));
    if (t.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

struct HeaderIndex {
    int id = -1, date = -1, lat = -1, lon = -1, perp1 = -1;
    int perp2 = -1, perp3 = -1, casualties = -1;
};

HeaderIndex resolve_header(const std::vector<std::string>& header, const CsvSchema& schema,
                           const std::filesystem::path& path) {
    auto find = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim_fold(header[i]) == trim_fold(name)) return int(i);
        return -1;
    };
    HeaderIndex ix;
    ix.id = find(schema.id_col);
    ix.date = find(schema.date_col);
    ix.lat = find(schema.lat_col);
    ix.lon = find(schema.lon_col);
    ix.perp1 = find(schema.perp1_col);
    ix.perp2 = find(schema.perp2_col);
    ix.perp3 = find(schema.perp3_col);
    ix.casualties = find(schema.casualties_col);

    std::string missing;
    auto need = [&](int idx, const std::string& name) {
        if (idx < 0) missing += (missing.empty() ? "" : ", ") + name;
    };
    need(ix.id, schema.id_col);
    need(ix.date, schema.date_col);
    need(ix.lat, schema.lat_col);
    need(ix.lon, schema.lon_col);
    need(ix.perp1, schema.perp1_col);
    if (!missing.empty())
        throw Error("header mismatch in " + path.string() + ": missing column(s) " + missing);
    return ix;
}

const std::string& field_at(const std::vector<std::string>& row, int idx) {
    static const std::string empty;
    if (idx < 0 || std::size_t(idx) >= row.size()) return empty;
    return row[std::size_t(idx)];
}

} // namespace

std::string trim_fold(std::string_view name) {
    std::size_t b = 0, e = name.size();
    while (b < e && std::isspace(static_cast<unsigned char>(name[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(name[e - 1]))) --e;
    std::string out(name.substr(b, e - b));
    for (char& c : out) c = char(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::size_t IngestReport::rejected_total() const {
    std::size_t n = 0;
    for (const auto& [reason, count] : rejected) n += count;
    return n;
}

std::vector<Event> ingest_csv(const std::filesystem::path& path, const CsvSchema& schema,
                              IngestReport* report) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open events file: " + path.string());

    CsvReader reader(in);
    std::vector<std::string> row;
    if (!reader.next_record(row)) throw Error("empty events file: " + path.string());
    const HeaderIndex ix = resolve_header(row, schema, path);

    IngestReport local;
    IngestReport& rep = report ? *report : local;
    rep = IngestReport{};

    std::vector<Event> events;
    std::unordered_set<std::string> seen_ids;

    while (reader.next_record(row)) {
        if (row.size() == 1 && is_blank(row[0])) continue; // trailing blank line
        ++rep.rows_total;

        auto reject = [&](const char* reason) { ++rep.rejected[reason]; };

        const std::string& id = field_at(row, ix.id);
        if (is_blank(id)) {
            reject("missing_id");
            continue;
        }
        if (!seen_ids.insert(id).second) {
            reject("duplicate_id");
            continue;
        }

        Day date = 0;
        try {
            date = parse_iso_date(field_at(row, ix.date));
        } catch (const Error&) {
            reject("bad_date");
            seen_ids.erase(id);
            continue;
        }
        if ((schema.span_from && date < *schema.span_from) ||
            (schema.span_to && date > *schema.span_to)) {
            reject("out_of_span");
            seen_ids.erase(id);
            continue;
        }

        const auto lat = parse_double(field_at(row, ix.lat));
        const auto lon = parse_double(field_at(row, ix.lon));
        if (!lat || !lon) {
            reject("bad_coordinate");
            seen_ids.erase(id);
            continue;
        }
        std::optional<geo::GeoPoint> loc;
        try {
            loc.emplace(*lon, *lat);
        } catch (const Error&) {
            reject("bad_coordinate");
            seen_ids.erase(id);
            continue;
        }

        std::vector<std::string> perps;
        for (int idx : {ix.perp1, ix.perp2, ix.perp3}) {
            const std::string& p = field_at(row, idx);
            if (!is_blank(p)) perps.push_back(p);
        }
        if (perps.empty()) {
            reject("missing_perpetrator");
            seen_ids.erase(id);
            continue;
        }

        std::optional<long> casualties;
        const std::string& cas = field_at(row, ix.casualties);
        if (!is_blank(cas)) {
            const auto v = parse_double(cas);
            if (v && *v >= 0.0 && *v == std::floor(*v)) casualties = long(*v);
            // else: unparseable or negative count stays "unknown"
        }

        events.push_back(Event{id, date, *loc, std::move(perps), casualties});
        ++rep.accepted;
    }

    if (rep.rows_total > 0 && rep.rejected_total() * 2 > rep.rows_total)
        throw Error("schema mismatch suspected: " + std::to_string(rep.rejected_total()) + " of " +
                    std::to_string(rep.rows_total) + " rows rejected in " + path.string());
    return events;
}

void write_events_csv(const std::filesystem::path& path, std::span<const Event> events,
                      const CsvSchema& schema) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write events file: " + path.string());

    out << schema.id_col << ',' << schema.date_col << ',' << schema.lat_col << ','
        << schema.lon_col << ',' << schema.perp1_col << ',' << schema.perp2_col << ','
        << schema.perp3_col << ',' << schema.casualties_col << '\n';

    char num[64];
    for (const Event& e : events) {
        out << csv_quote(e.id) << ',' << format_iso_date(e.date) << ',';
        std::snprintf(num, sizeof num, "%.8f", e.location.lat());
        out << num << ',';
        std::snprintf(num, sizeof num, "%.8f", e.location.lon());
        out << num;
        for (std::size_t i = 0; i < 3; ++i)
            out << ',' << (i < e.perpetrators.size() ? csv_quote(e.perpetrators[i]) : "");
        out << ',';
        if (e.casualties) out << *e.casualties;
        out << '\n';
    }
}

std::vector<AffiliationRule> load_affiliation_rules(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open affiliation map: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw Error("malformed affiliation map " + path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw Error("affiliation map must be a JSON array");

    std::vector<AffiliationRule> rules;
    for (const auto& item : doc) {
        AffiliationRule r;
        if (!item.contains("actor") || !item.contains("class"))
            throw Error("affiliation rule needs 'actor' and 'class'");
        r.actor = item.at("actor").get<std::string>();
        r.class_label = item.at("class").get<std::string>();
        if (item.contains("start") && !item.at("start").is_null())
            r.start = parse_iso_date(item.at("start").get<std::string>());
        if (item.contains("end") && !item.at("end").is_null())
            r.end = parse_iso_date(item.at("end").get<std::string>());
        if (r.start && r.end && *r.start > *r.end)
            throw Error("affiliation rule for '" + r.actor + "': start after end");
        rules.push_back(std::move(r));
    }
    return rules;
}

bool ClassifiedCatalog::has_class(const std::string& label) const {
    return class_index.find(label) != class_index.end();
}

const std::vector<std::size_t>& ClassifiedCatalog::members(const std::string& label) const {
    auto it = class_index.find(label);
    if (it == class_index.end()) throw Error("unknown class label: '" + label + "'");
    return it->second;
}

ClassifiedCatalog classify(std::vector<Event> events, std::span<const AffiliationRule> rules,
                           const std::string& fallback_label, const std::string& unknown_token) {
    // Rule lookup by folded actor name; date ranges checked per match.
    struct Active {
        std::string class_label;
        Day start, end;
    };
    std::unordered_map<std::string, std::vector<Active>> by_actor;
    for (const AffiliationRule& r : rules) {
        by_actor[trim_fold(r.actor)].push_back(
            Active{r.class_label, r.start.value_or(std::numeric_limits<Day>::min()),
                   r.end.value_or(std::numeric_limits<Day>::max())});
    }
    const std::string unknown = trim_fold(unknown_token);

    ClassifiedCatalog out;
    for (Event& e : events) {
        std::vector<std::string> known;
        for (const std::string& name : e.perpetrators)
            if (trim_fold(name) != unknown) known.push_back(name);
        if (known.empty()) {
            ++out.dropped_unknown;
            continue;
        }

        std::set<std::string> classes;
        for (const std::string& name : known) {
            auto it = by_actor.find(trim_fold(name));
            if (it == by_actor.end()) continue;
            for (const Active& a : it->second)
                if (e.date >= a.start && e.date <= a.end) classes.insert(a.class_label);
        }
        if (classes.empty()) classes.insert(fallback_label);

        const std::size_t idx = out.events.size();
        out.events.push_back(std::move(e));
        for (const std::string& c : classes) out.class_index[c].push_back(idx);
    }

    if (!out.events.empty()) {
        out.era_from = std::numeric_limits<Day>::max();
        out.era_to = std::numeric_limits<Day>::min();
        for (const Event& e : out.events) {
            out.era_from = std::min(out.era_from, e.date);
            out.era_to = std::max(out.era_to, e.date);
        }
    }
    return out;
}

ClassifiedCatalog filter_era(const ClassifiedCatalog& catalog, Day from, Day to) {
    if (from > to) throw Error("inverted era range: " + format_iso_date(from) + " > " + format_iso_date(to));

    ClassifiedCatalog out;
    out.era_from = from;
    out.era_to = to;
    out.dropped_unknown = catalog.dropped_unknown;

    std::vector<std::size_t> remap(catalog.events.size(), std::size_t(-1));
    for (std::size_t i = 0; i < catalog.events.size(); ++i) {
        const Event& e = catalog.events[i];
        if (e.date < from || e.date > to) continue;
        remap[i] = out.events.size();
        out.events.push_back(e);
    }
    // Labels survive the filter even when emptied; downstream turns an
    // empty class into "insufficient", not "unknown label".
    for (const auto& [label, members] : catalog.class_index) {
        std::vector<std::size_t> kept;
        for (std::size_t i : members)
            if (remap[i] != std::size_t(-1)) kept.push_back(remap[i]);
        out.class_index[label] = std::move(kept);
    }
    return out;
}

} // namespace nearwave::catalog
