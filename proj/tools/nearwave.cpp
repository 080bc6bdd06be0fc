#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nearwave/catalog.hpp"
#include "nearwave/cluster.hpp"
#include "nearwave/dates.hpp"
#include "nearwave/errors.hpp"
#include "nearwave/geo.hpp"
#include "nearwave/pairs.hpp"
#include "nearwave/stats.hpp"
#include "nearwave/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace nearwave;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> events;
    std::string affiliations;
    std::string era;
    std::string fallback_label = "L";
    int window_weeks = 44;
    int bin_weeks = 0; // 0: 2 weeks for self-class panels, 4 for cross-class
    double max_km = -1.0;
    double min_km = -1.0;
    std::size_t min_pairs = pairs::default_min_pairs;
    long min_cas_source = -1;
    long min_cas_target = -1;
    bool incremental = false;
    int k_max = 30;
    double elbow_threshold = cluster::default_elbow_threshold;
    int restarts = 16;
    std::uint64_t seed = 1;
    std::string out = ".";
    bool force = false;
    bool dump_pairs = false;
    int threads = 1;
};

// Binds config-file keys to CLI options so that a key only applies when the
// matching flag was not given on the command line.
class ConfigBinder {
public:
    void bind(CLI::Option* opt, std::string key, std::function<void(const json&)> set) {
        entries_.push_back({opt, std::move(key), std::move(set)});
    }
    void apply(const json& cfg) const {
        for (const Entry& e : entries_) {
            if (e.opt->count() > 0) continue;
            const auto it = cfg.find(e.key);
            if (it == cfg.end() || it->is_null()) continue;
            try {
                e.set(*it);
            } catch (const json::exception& ex) {
                throw Error("config key \"" + e.key + "\": " + ex.what());
            }
        }
    }

private:
    struct Entry {
        CLI::Option* opt;
        std::string key;
        std::function<void(const json&)> set;
    };
    std::vector<Entry> entries_;
};

std::map<const CLI::App*, ConfigBinder> g_binders;

template <typename T>
CLI::Option* bind_opt(CLI::App& cmd, T& var, const std::string& flag, const std::string& key,
                      const std::string& desc) {
    CLI::Option* opt = cmd.add_option(flag, var, desc);
    g_binders[&cmd].bind(opt, key, [&var](const json& v) { var = v.get<T>(); });
    return opt;
}

CLI::Option* bind_flag(CLI::App& cmd, bool& var, const std::string& flag, const std::string& key,
                       const std::string& desc) {
    CLI::Option* opt = cmd.add_flag(flag, var, desc);
    g_binders[&cmd].bind(opt, key, [&var](const json& v) { var = v.get<bool>(); });
    return opt;
}

void add_input_opts(CLI::App& cmd, CommonOpts& o) {
    cmd.add_option("--config", o.config_path, "JSON config file; flags take precedence");
    CLI::Option* ev = cmd.add_option("--events", o.events, "event CSV file (repeatable)");
    g_binders[&cmd].bind(ev, "events", [&o](const json& v) {
        if (v.is_string())
            o.events = {v.get<std::string>()};
        else
            o.events = v.get<std::vector<std::string>>();
    });
    bind_opt(cmd, o.affiliations, "--affiliations", "affiliations",
             "actor-to-class affiliation rules (JSON)");
    bind_opt(cmd, o.era, "--era", "era", "restrict to FROM:TO (ISO dates, inclusive)");
    bind_opt(cmd, o.fallback_label, "--fallback-label", "fallback-label",
             "class for actors matching no rule");
}

void add_window_opts(CLI::App& cmd, CommonOpts& o) {
    bind_opt(cmd, o.window_weeks, "--window-weeks", "window-weeks",
             "observation window length in weeks")
        ->check(CLI::PositiveNumber);
    bind_opt(cmd, o.bin_weeks, "--bin-weeks", "bin-weeks",
             "histogram bin width in weeks (default: 2 self-class, 4 cross-class)")
        ->check(CLI::PositiveNumber);
}

void add_band_opts(CLI::App& cmd, CommonOpts& o) {
    CLI::Option* mx =
        bind_opt(cmd, o.max_km, "--max-km", "max-km", "keep pairs at most this far apart (km)");
    CLI::Option* mn = bind_opt(cmd, o.min_km, "--min-km", "min-km",
                               "keep pairs strictly farther than this (km)");
    mx->excludes(mn);
    mn->excludes(mx);
}

void add_filter_opts(CLI::App& cmd, CommonOpts& o) {
    bind_opt(cmd, o.min_pairs, "--min-pairs", "min-pairs", "sufficiency threshold on pair count")
        ->check(CLI::PositiveNumber);
    bind_opt(cmd, o.min_cas_source, "--min-casualties-source", "min-casualties-source",
             "require at least this many source casualties");
    bind_opt(cmd, o.min_cas_target, "--min-casualties-target", "min-casualties-target",
             "require at least this many target casualties");
    bind_flag(cmd, o.incremental, "--incremental", "incremental",
              "require target casualties to exceed the source's");
}

void add_cluster_opts(CLI::App& cmd, CommonOpts& o) {
    bind_opt(cmd, o.k_max, "--k-max", "k-max", "largest cluster count scanned for the elbow")
        ->check(CLI::PositiveNumber);
    bind_opt(cmd, o.elbow_threshold, "--elbow-threshold", "elbow-threshold",
             "relative-change cutoff for selecting k");
    bind_opt(cmd, o.restarts, "--restarts", "restarts", "k-means restarts per k")
        ->check(CLI::PositiveNumber);
}

void add_run_opts(CLI::App& cmd, CommonOpts& o, bool with_force) {
    bind_opt(cmd, o.seed, "--seed", "seed", "random seed");
    bind_opt(cmd, o.out, "--out", "out", "output directory");
    bind_opt(cmd, o.threads, "--threads", "threads", "worker thread cap")
        ->check(CLI::PositiveNumber);
    if (with_force)
        bind_flag(cmd, o.force, "--force", "force", "analyze insufficient panels anyway");
}

std::pair<Day, Day> parse_era(const std::string& s) {
    const std::size_t pos = s.find(':');
    if (pos == std::string::npos || pos == 0 || pos + 1 >= s.size())
        throw Error("era must be FROM:TO with ISO dates");
    return {parse_iso_date(s.substr(0, pos)), parse_iso_date(s.substr(pos + 1))};
}

geo::GeoPoint parse_latlon(const std::string& s) {
    const std::size_t pos = s.find(',');
    if (pos == std::string::npos) throw Error("expected LAT,LON");
    std::size_t used = 0;
    const double lat = std::stod(s.substr(0, pos), &used);
    const double lon = std::stod(s.substr(pos + 1));
    return geo::GeoPoint(lon, lat);
}

struct LoadedCatalog {
    catalog::ClassifiedCatalog cat;
    ordered_json files;
};

LoadedCatalog load_catalog(const CommonOpts& o) {
    if (o.events.empty()) throw Error("no --events input given");
    std::vector<catalog::Event> events;
    std::unordered_set<std::string> seen;
    ordered_json files = ordered_json::array();
    for (const std::string& path : o.events) {
        catalog::IngestReport rep;
        std::vector<catalog::Event> evs = catalog::ingest_csv(path, {}, &rep);
        std::size_t cross_dupes = 0;
        for (catalog::Event& e : evs) {
            if (!seen.insert(e.id).second) {
                cross_dupes++;
                continue;
            }
            events.push_back(std::move(e));
        }
        ordered_json jf;
        jf["path"] = path;
        jf["rows"] = rep.rows_total;
        jf["accepted"] = rep.accepted - cross_dupes;
        ordered_json jrej = ordered_json::object();
        for (const auto& [reason, count] : rep.rejected) jrej[reason] = count;
        if (cross_dupes > 0) jrej["duplicate_id"] = jrej.value("duplicate_id", 0UL) + cross_dupes;
        jf["rejected"] = jrej;
        files.push_back(std::move(jf));
    }

    std::vector<catalog::AffiliationRule> rules;
    if (!o.affiliations.empty()) rules = catalog::load_affiliation_rules(o.affiliations);
    catalog::ClassifiedCatalog cat = catalog::classify(std::move(events), rules, o.fallback_label);
    if (!o.era.empty()) {
        const auto [from, to] = parse_era(o.era);
        cat = catalog::filter_era(cat, from, to);
    }
    if (cat.events.empty()) throw Error("catalog is empty after ingestion and era filtering");
    return {std::move(cat), std::move(files)};
}

pairs::DistanceBand resolve_band(const CommonOpts& o, double default_max) {
    if (o.max_km >= 0.0 && o.min_km >= 0.0)
        throw Error("--max-km and --min-km are mutually exclusive");
    if (o.min_km >= 0.0) return pairs::DistanceBand::beyond(o.min_km);
    return pairs::DistanceBand::within(o.max_km >= 0.0 ? o.max_km : default_max);
}

pairs::PairFilter make_filter(const CommonOpts& o, std::string src, std::string tgt,
                              double default_max) {
    pairs::PairFilter f;
    f.source_class = std::move(src);
    f.target_class = std::move(tgt);
    f.band = resolve_band(o, default_max);
    if (o.min_cas_source >= 0) f.min_casualties_source = o.min_cas_source;
    if (o.min_cas_target >= 0) f.min_casualties_target = o.min_cas_target;
    f.incremental = o.incremental;
    return f;
}

void write_json_file(const fs::path& path, const ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

ordered_json band_json(const pairs::DistanceBand& band) {
    ordered_json j;
    j[band.kind == pairs::DistanceBand::Kind::within_max ? "max_km" : "min_km"] = band.km;
    return j;
}

ordered_json base_config(const CommonOpts& o) {
    ordered_json j;
    j["events"] = o.events;
    j["affiliations"] = o.affiliations.empty() ? ordered_json() : ordered_json(o.affiliations);
    j["era"] = o.era.empty() ? ordered_json() : ordered_json(o.era);
    j["fallback_label"] = o.fallback_label;
    j["seed"] = o.seed;
    j["threads"] = o.threads;
    j["out"] = o.out;
    return j;
}

ordered_json era_json(const catalog::ClassifiedCatalog& cat) {
    ordered_json j;
    j["from"] = format_iso_date(cat.era_from);
    j["to"] = format_iso_date(cat.era_to);
    return j;
}

ordered_json panel_report(const stats::PanelHistogram& p, const stats::EntropySeries* es) {
    ordered_json bins = ordered_json::array();
    for (std::size_t i = 0; i < p.bins.size(); ++i) {
        const stats::PanelBin& b = p.bins[i];
        ordered_json jb;
        jb["t_start_days"] = b.first_day;
        jb["t_end_days"] = b.last_day;
        jb["count"] = b.count;
        jb["p_hat"] = b.observed;
        jb["p_reh"] = b.expected;
        jb["E_i"] = es ? ordered_json(es->terms[i]) : ordered_json();
        bins.push_back(std::move(jb));
    }
    ordered_json j;
    j["window_days"] = p.window_days;
    j["bin_days"] = p.bin_days;
    j["pair_count"] = p.pair_count;
    j["sufficient"] = p.is_sufficient();
    j["kld"] = es ? ordered_json(es->kld) : ordered_json();
    j["bins"] = std::move(bins);
    return j;
}

void require_sufficient(const stats::PanelHistogram& p, const std::string& name,
                        const CommonOpts& o) {
    if (o.force || p.is_sufficient()) return;
    throw InsufficientDataError(name + " panel has " + std::to_string(p.pair_count) +
                                " pairs, needs " + std::to_string(o.min_pairs));
}

int effective_bin_weeks(const CommonOpts& o, bool self_class) {
    if (o.bin_weeks > 0) return o.bin_weeks;
    return self_class ? 2 : 4;
}

// ---------------------------------------------------------------- commands

int cmd_ingest(const CommonOpts& o) {
    LoadedCatalog lc = load_catalog(o);
    fs::create_directories(o.out);

    ordered_json classes = ordered_json::object();
    for (const auto& [label, members] : lc.cat.class_index) classes[label] = members.size();

    ordered_json j;
    j["config"] = base_config(o);
    j["files"] = lc.files;
    j["events"] = lc.cat.events.size();
    j["dropped_unknown"] = lc.cat.dropped_unknown;
    j["era"] = era_json(lc.cat);
    j["classes"] = std::move(classes);
    write_json_file(fs::path(o.out) / "ingest_report.json", j);
    catalog::write_events_csv(fs::path(o.out) / "events.csv", lc.cat.events);
    return 0;
}

int cmd_cluster(const CommonOpts& o, const std::string& cls) {
    LoadedCatalog lc = load_catalog(o);
    const std::vector<std::size_t>& members = lc.cat.members(cls);
    std::vector<geo::GeoPoint> points;
    points.reserve(members.size());
    for (std::size_t i : members) points.push_back(lc.cat.events[i].location);

    cluster::KmeansOptions ko{o.seed, o.restarts, 300, o.threads};
    const cluster::ElbowCurve curve = cluster::elbow_select(points, o.k_max, o.elbow_threshold, ko);
    const cluster::ClusterModel model = cluster::kmeans(points, curve.k_star, ko);

    std::vector<std::size_t> extra_members;
    std::vector<geo::GeoPoint> extra_points;
    if (o.fallback_label != cls && lc.cat.has_class(o.fallback_label)) {
        for (std::size_t i : lc.cat.members(o.fallback_label)) {
            extra_members.push_back(i);
            extra_points.push_back(lc.cat.events[i].location);
        }
    }
    const std::vector<int> extra_assign = cluster::assign_by_spread(model, extra_points);

    fs::create_directories(o.out);
    ordered_json elbow = ordered_json::array();
    for (const cluster::ElbowPoint& pt : curve.points) {
        ordered_json jp;
        jp["k"] = pt.k;
        jp["dbar_km"] = pt.dbar;
        jp["ratio"] = pt.ratio ? ordered_json(*pt.ratio) : ordered_json();
        elbow.push_back(std::move(jp));
    }
    ordered_json clusters = ordered_json::array();
    for (int c = 0; c < model.k; ++c) {
        ordered_json jc;
        jc["cluster"] = c;
        jc["lat"] = model.centroids[std::size_t(c)].lat();
        jc["lon"] = model.centroids[std::size_t(c)].lon();
        jc["size"] = model.sizes[std::size_t(c)];
        jc["spread_km"] = model.spreads[std::size_t(c)];
        clusters.push_back(std::move(jc));
    }
    std::size_t assigned = 0;
    for (int a : extra_assign)
        if (a >= 0) assigned++;

    ordered_json cfg = base_config(o);
    cfg["class"] = cls;
    cfg["k_max"] = o.k_max;
    cfg["elbow_threshold"] = o.elbow_threshold;
    cfg["restarts"] = o.restarts;
    ordered_json j;
    j["config"] = std::move(cfg);
    j["era"] = era_json(lc.cat);
    j["points"] = points.size();
    j["k_star"] = curve.k_star;
    j["elbow_found"] = curve.elbow_found;
    j["dbar_km"] = model.dbar;
    j["elbow"] = std::move(elbow);
    j["clusters"] = std::move(clusters);
    ordered_json jf;
    jf["label"] = o.fallback_label;
    jf["events"] = extra_points.size();
    jf["assigned"] = assigned;
    jf["discarded"] = extra_points.size() - assigned;
    j["fallback"] = std::move(jf);
    write_json_file(fs::path(o.out) / "cluster.json", j);

    {
        std::ofstream csv(fs::path(o.out) / "assignments.csv", std::ios::binary);
        if (!csv) throw Error("cannot write assignments.csv");
        csv << "id,class,cluster\n";
        for (std::size_t p = 0; p < members.size(); ++p)
            csv << lc.cat.events[members[p]].id << ',' << cls << ',' << model.assignment[p]
                << '\n';
        for (std::size_t p = 0; p < extra_members.size(); ++p)
            csv << lc.cat.events[extra_members[p]].id << ',' << o.fallback_label << ','
                << extra_assign[p] << '\n';
    }
    {
        std::ofstream csv(fs::path(o.out) / "elbow.csv", std::ios::binary);
        if (!csv) throw Error("cannot write elbow.csv");
        csv << "k,dbar_km,ratio\n";
        for (const cluster::ElbowPoint& pt : curve.points) {
            csv << pt.k << ',' << fmt(pt.dbar) << ',';
            if (pt.ratio) csv << fmt(*pt.ratio);
            csv << '\n';
        }
    }
    return 0;
}

int cmd_panel(const CommonOpts& o, const std::string& src, const std::string& tgt_in) {
    const std::string tgt = tgt_in.empty() ? src : tgt_in;
    LoadedCatalog lc = load_catalog(o);
    const int bw = effective_bin_weeks(o, src == tgt);
    const pairs::WindowSpec ws{lc.cat.era_from, o.window_weeks, std::nullopt};
    const pairs::PairFilter filter = make_filter(o, src, tgt, 20.0);
    const std::vector<pairs::LatentPair> ps = pairs::enumerate_pairs(lc.cat, ws, filter);
    const stats::PanelHistogram panel = stats::bin_panel(ps, ws.window_days(), bw * 7, o.min_pairs);
    require_sufficient(panel, src + "->" + tgt, o);
    const stats::EntropySeries es = stats::kld(panel, o.force);

    fs::create_directories(o.out);
    ordered_json cfg = base_config(o);
    cfg["source"] = src;
    cfg["target"] = tgt;
    cfg["window_weeks"] = o.window_weeks;
    cfg["bin_weeks"] = bw;
    cfg["band"] = band_json(filter.band);
    cfg["min_pairs"] = o.min_pairs;
    cfg["min_casualties_source"] =
        o.min_cas_source >= 0 ? ordered_json(o.min_cas_source) : ordered_json();
    cfg["min_casualties_target"] =
        o.min_cas_target >= 0 ? ordered_json(o.min_cas_target) : ordered_json();
    cfg["incremental"] = o.incremental;
    cfg["force"] = o.force;
    ordered_json j;
    j["config"] = std::move(cfg);
    j["era"] = era_json(lc.cat);
    j["panel"] = panel_report(panel, &es);
    write_json_file(fs::path(o.out) / "panel.json", j);

    {
        std::ofstream csv(fs::path(o.out) / "panel.csv", std::ios::binary);
        if (!csv) throw Error("cannot write panel.csv");
        csv << "bin,t_start_days,t_end_days,count,p_hat,p_reh,entropy_term\n";
        for (std::size_t i = 0; i < panel.bins.size(); ++i) {
            const stats::PanelBin& b = panel.bins[i];
            csv << (i + 1) << ',' << b.first_day << ',' << b.last_day << ',' << b.count << ','
                << fmt(b.observed) << ',' << fmt(b.expected) << ',' << fmt(es.terms[i]) << '\n';
        }
    }
    if (o.dump_pairs) pairs::write_pairs_csv(fs::path(o.out) / "pairs.csv", ps);
    return 0;
}

int cmd_react(const CommonOpts& o, const std::string& a, const std::string& b) {
    if (a == b) throw Error("reaction analysis needs two different classes");
    LoadedCatalog lc = load_catalog(o);
    const int bw = effective_bin_weeks(o, false);
    const pairs::WindowSpec ws{lc.cat.era_from, o.window_weeks, std::nullopt};
    const pairs::PairFilter f_ab = make_filter(o, a, b, 20.0);
    const pairs::PairFilter f_ba = make_filter(o, b, a, 20.0);
    const std::vector<pairs::LatentPair> ps_ab = pairs::enumerate_pairs(lc.cat, ws, f_ab);
    const std::vector<pairs::LatentPair> ps_ba = pairs::enumerate_pairs(lc.cat, ws, f_ba);
    const stats::PanelHistogram panel_ab =
        stats::bin_panel(ps_ab, ws.window_days(), bw * 7, o.min_pairs);
    const stats::PanelHistogram panel_ba =
        stats::bin_panel(ps_ba, ws.window_days(), bw * 7, o.min_pairs);
    require_sufficient(panel_ab, a + "->" + b, o);
    require_sufficient(panel_ba, b + "->" + a, o);
    const stats::EntropySeries es_ab = stats::kld(panel_ab, o.force);
    const stats::EntropySeries es_ba = stats::kld(panel_ba, o.force);
    const stats::CorrelationResult corr =
        stats::reaction_correlation(panel_ab, panel_ba, o.force);

    fs::create_directories(o.out);
    ordered_json cfg = base_config(o);
    cfg["class_a"] = a;
    cfg["class_b"] = b;
    cfg["window_weeks"] = o.window_weeks;
    cfg["bin_weeks"] = bw;
    cfg["band"] = band_json(f_ab.band);
    cfg["min_pairs"] = o.min_pairs;
    cfg["incremental"] = o.incremental;
    cfg["force"] = o.force;
    ordered_json j;
    j["config"] = std::move(cfg);
    j["era"] = era_json(lc.cat);
    j["forward"] = panel_report(panel_ab, &es_ab);
    j["reverse"] = panel_report(panel_ba, &es_ba);
    ordered_json jc;
    jc["r"] = corr.r ? ordered_json(*corr.r) : ordered_json();
    jc["classification"] = corr.label();
    jc["degenerate"] = corr.degenerate;
    jc["bins"] = corr.n_bins;
    j["correlation"] = std::move(jc);
    write_json_file(fs::path(o.out) / "react.json", j);

    {
        std::ofstream csv(fs::path(o.out) / "react.csv", std::ios::binary);
        if (!csv) throw Error("cannot write react.csv");
        csv << "bin,t_start_days,t_end_days,p_reh,p_hat_forward,entropy_forward,"
               "p_hat_reverse,entropy_reverse\n";
        for (std::size_t i = 0; i < panel_ab.bins.size(); ++i) {
            const stats::PanelBin& fb = panel_ab.bins[i];
            const stats::PanelBin& rb = panel_ba.bins[i];
            csv << (i + 1) << ',' << fb.first_day << ',' << fb.last_day << ',' << fmt(fb.expected)
                << ',' << fmt(fb.observed) << ',' << fmt(es_ab.terms[i]) << ','
                << fmt(rb.observed) << ',' << fmt(es_ba.terms[i]) << '\n';
        }
    }
    if (o.dump_pairs) {
        pairs::write_pairs_csv(fs::path(o.out) / "pairs_forward.csv", ps_ab);
        pairs::write_pairs_csv(fs::path(o.out) / "pairs_reverse.csv", ps_ba);
    }
    return 0;
}

int cmd_scan(const CommonOpts& o, const std::string& cls, const std::vector<double>& distances,
             int samples, int windows_per_sample, int span_weeks) {
    LoadedCatalog lc = load_catalog(o);
    stats::ScanOptions so;
    so.window_weeks = o.window_weeks;
    so.bin_weeks = effective_bin_weeks(o, true);
    so.span_weeks = span_weeks;
    so.samples = samples;
    so.windows_per_sample = windows_per_sample;
    so.seed = o.seed;
    so.min_pairs = o.min_pairs;
    so.threads = o.threads;
    const std::vector<stats::ScanRow> rows = stats::kld_distance_scan(lc.cat, cls, distances, so);

    fs::create_directories(o.out);
    ordered_json cfg = base_config(o);
    cfg["class"] = cls;
    cfg["window_weeks"] = so.window_weeks;
    cfg["bin_weeks"] = so.bin_weeks;
    cfg["span_weeks"] = so.span_weeks;
    cfg["samples"] = so.samples;
    cfg["windows_per_sample"] = so.windows_per_sample;
    cfg["distances_km"] = distances;
    ordered_json jrows = ordered_json::array();
    for (const stats::ScanRow& r : rows) {
        ordered_json jr;
        jr["distance_km"] = r.distance_km;
        jr["mean_kld"] = r.mean_kld;
        jr["std_kld"] = r.std_kld;
        jr["windows_used"] = r.windows_used;
        jr["pair_total"] = r.pair_total;
        jrows.push_back(std::move(jr));
    }
    ordered_json j;
    j["config"] = std::move(cfg);
    j["era"] = era_json(lc.cat);
    j["rows"] = std::move(jrows);
    write_json_file(fs::path(o.out) / "scan.json", j);

    std::ofstream csv(fs::path(o.out) / "scan.csv", std::ios::binary);
    if (!csv) throw Error("cannot write scan.csv");
    csv << "distance_km,mean_kld,std_kld,windows_used,pair_total\n";
    for (const stats::ScanRow& r : rows)
        csv << fmt(r.distance_km) << ',' << fmt(r.mean_kld) << ',' << fmt(r.std_kld) << ','
            << r.windows_used << ',' << r.pair_total << '\n';
    return 0;
}

int cmd_chain(const CommonOpts& o, const std::string& provoker, const std::string& responder,
              double response_km, int response_weeks) {
    if (provoker == responder) throw Error("chain analysis needs two different classes");
    LoadedCatalog lc = load_catalog(o);
    const std::unordered_set<std::string> provoked =
        pairs::provoked_subset(lc.cat, provoker, responder, response_km, response_weeks);
    if (provoked.empty())
        throw InsufficientDataError("no provoked events: no " + responder + " attack follows a " +
                                    provoker + " attack within " + fmt(response_km) + " km and " +
                                    std::to_string(response_weeks) + " weeks");

    const int bw = effective_bin_weeks(o, false);
    const pairs::WindowSpec ws{lc.cat.era_from, o.window_weeks, std::nullopt};
    const pairs::PairFilter filter = make_filter(o, responder, provoker, 20.0);
    const std::vector<pairs::LatentPair> general_ps = pairs::enumerate_pairs(lc.cat, ws, filter);
    pairs::PairScope scope;
    scope.source_ids = &provoked;
    const std::vector<pairs::LatentPair> provoked_ps =
        pairs::enumerate_pairs(lc.cat, ws, filter, scope);

    const stats::PanelHistogram general_panel =
        stats::bin_panel(general_ps, ws.window_days(), bw * 7, o.min_pairs);
    const stats::PanelHistogram provoked_panel =
        stats::bin_panel(provoked_ps, ws.window_days(), bw * 7, o.min_pairs);
    require_sufficient(general_panel, "general " + responder + "->" + provoker, o);
    require_sufficient(provoked_panel, "provoked " + responder + "->" + provoker, o);
    const stats::EntropySeries general_es = stats::kld(general_panel, o.force);
    const stats::EntropySeries provoked_es = stats::kld(provoked_panel, o.force);

    fs::create_directories(o.out);
    ordered_json cfg = base_config(o);
    cfg["provoker"] = provoker;
    cfg["responder"] = responder;
    cfg["response_km"] = response_km;
    cfg["response_weeks"] = response_weeks;
    cfg["window_weeks"] = o.window_weeks;
    cfg["bin_weeks"] = bw;
    cfg["band"] = band_json(filter.band);
    cfg["min_pairs"] = o.min_pairs;
    cfg["min_casualties_source"] =
        o.min_cas_source >= 0 ? ordered_json(o.min_cas_source) : ordered_json();
    cfg["min_casualties_target"] =
        o.min_cas_target >= 0 ? ordered_json(o.min_cas_target) : ordered_json();
    cfg["incremental"] = o.incremental;
    cfg["force"] = o.force;
    ordered_json j;
    j["config"] = std::move(cfg);
    j["era"] = era_json(lc.cat);
    j["provoked_events"] = provoked.size();
    j["provoked"] = panel_report(provoked_panel, &provoked_es);
    j["general"] = panel_report(general_panel, &general_es);
    j["delta_kld"] = provoked_es.kld - general_es.kld;
    write_json_file(fs::path(o.out) / "chain.json", j);

    {
        std::ofstream csv(fs::path(o.out) / "chain.csv", std::ios::binary);
        if (!csv) throw Error("cannot write chain.csv");
        csv << "bin,t_start_days,t_end_days,p_reh,p_hat_provoked,p_hat_general\n";
        for (std::size_t i = 0; i < provoked_panel.bins.size(); ++i) {
            const stats::PanelBin& pb = provoked_panel.bins[i];
            const stats::PanelBin& gb = general_panel.bins[i];
            csv << (i + 1) << ',' << pb.first_day << ',' << pb.last_day << ',' << fmt(pb.expected)
                << ',' << fmt(pb.observed) << ',' << fmt(gb.observed) << '\n';
        }
    }
    if (o.dump_pairs) {
        pairs::write_pairs_csv(fs::path(o.out) / "pairs_provoked.csv", provoked_ps);
        pairs::write_pairs_csv(fs::path(o.out) / "pairs_general.csv", general_ps);
    }
    return 0;
}

int cmd_wave(const CommonOpts& o, const std::string& cls, const std::string& origin_spec) {
    LoadedCatalog lc = load_catalog(o);
    const std::vector<std::size_t>& members = lc.cat.members(cls);
    std::vector<geo::GeoPoint> points;
    points.reserve(members.size());
    for (std::size_t i : members) points.push_back(lc.cat.events[i].location);

    cluster::KmeansOptions ko{o.seed, o.restarts, 300, o.threads};
    const cluster::ElbowCurve curve = cluster::elbow_select(points, o.k_max, o.elbow_threshold, ko);
    const cluster::ClusterModel model = cluster::kmeans(points, curve.k_star, ko);

    std::vector<std::optional<Day>> first(std::size_t(model.k));
    for (std::size_t p = 0; p < members.size(); ++p) {
        const Day d = lc.cat.events[members[p]].date;
        std::optional<Day>& slot = first[std::size_t(model.assignment[p])];
        if (!slot || d < *slot) slot = d;
    }

    int origin = -1;
    if (!origin_spec.empty()) {
        const geo::GeoPoint anchor = parse_latlon(origin_spec);
        double best = -1.0;
        for (int c = 0; c < model.k; ++c) {
            const double d = geo::great_circle_distance(anchor, model.centroids[std::size_t(c)]);
            if (origin < 0 || d < best) {
                best = d;
                origin = c;
            }
        }
    } else {
        for (int c = 0; c < model.k; ++c) {
            if (!first[std::size_t(c)]) continue;
            if (origin < 0 || *first[std::size_t(c)] < *first[std::size_t(origin)]) origin = c;
        }
    }
    if (origin < 0) throw Error("no cluster has a first-attack date");

    Day t0 = *first[std::size_t(origin)];
    for (const std::optional<Day>& f : first)
        if (f && *f < t0) t0 = *f;

    std::vector<stats::WavePoint> wpoints;
    ordered_json jpoints = ordered_json::array();
    for (int c = 0; c < model.k; ++c) {
        if (!first[std::size_t(c)]) continue;
        stats::WavePoint wp;
        wp.years = double(*first[std::size_t(c)] - t0) / 365.2425;
        wp.distance_km = geo::great_circle_distance(model.centroids[std::size_t(origin)],
                                                    model.centroids[std::size_t(c)]);
        wpoints.push_back(wp);
        ordered_json jp;
        jp["cluster"] = c;
        jp["first_date"] = format_iso_date(*first[std::size_t(c)]);
        jp["years"] = wp.years;
        jp["distance_km"] = wp.distance_km;
        jpoints.push_back(std::move(jp));
    }
    const stats::WaveFit fit = stats::wave_regression(wpoints);

    fs::create_directories(o.out);
    ordered_json cfg = base_config(o);
    cfg["class"] = cls;
    cfg["k_max"] = o.k_max;
    cfg["elbow_threshold"] = o.elbow_threshold;
    cfg["restarts"] = o.restarts;
    cfg["origin"] = origin_spec.empty() ? ordered_json() : ordered_json(origin_spec);
    ordered_json j;
    j["config"] = std::move(cfg);
    j["era"] = era_json(lc.cat);
    j["k_star"] = curve.k_star;
    j["elbow_found"] = curve.elbow_found;
    j["origin_cluster"] = origin;
    ordered_json jo;
    jo["lat"] = model.centroids[std::size_t(origin)].lat();
    jo["lon"] = model.centroids[std::size_t(origin)].lon();
    j["origin_centroid"] = std::move(jo);
    j["slope_km_per_year"] = fit.slope_km_per_year;
    j["intercept_km"] = fit.intercept_km;
    j["r"] = fit.r;
    j["p_value"] = fit.p_value;
    j["points"] = std::move(jpoints);
    write_json_file(fs::path(o.out) / "wave.json", j);

    std::ofstream csv(fs::path(o.out) / "wave.csv", std::ios::binary);
    if (!csv) throw Error("cannot write wave.csv");
    csv << "cluster,first_date,years,distance_km\n";
    for (const auto& jp : j["points"])
        csv << jp["cluster"].get<int>() << ',' << jp["first_date"].get<std::string>() << ','
            << fmt(jp["years"].get<double>()) << ',' << fmt(jp["distance_km"].get<double>())
            << '\n';
    return 0;
}

synth::CapRegion region_from_json(const json& j) {
    synth::CapRegion r;
    if (!j.contains("lat") || !j.contains("lon") || !j.contains("radius_km"))
        throw Error("region needs lat, lon, radius_km");
    r.center = geo::GeoPoint(j.at("lon").get<double>(), j.at("lat").get<double>());
    r.radius_km = j.at("radius_km").get<double>();
    return r;
}

synth::DateSpan span_from_json(const json& j) {
    if (!j.contains("from") || !j.contains("to")) throw Error("span needs from and to dates");
    return {parse_iso_date(j.at("from").get<std::string>()),
            parse_iso_date(j.at("to").get<std::string>())};
}

int cmd_synth(const CommonOpts& o, const std::string& spec_path) {
    std::ifstream in(spec_path, std::ios::binary);
    if (!in) throw Error("cannot read generator spec: " + spec_path);
    json spec;
    try {
        in >> spec;
    } catch (const json::exception& e) {
        throw Error("bad generator spec: " + std::string(e.what()));
    }

    const std::string kind = spec.value("kind", "");
    std::vector<catalog::Event> events;
    std::vector<std::string> labels;
    if (kind == "poisson") {
        synth::PoissonSpec ps;
        ps.rate = spec.at("rate").get<double>();
        ps.region = region_from_json(spec.at("region"));
        ps.span = span_from_json(spec.at("span"));
        ps.class_label = spec.value("class", "A");
        ps.id_prefix = spec.value("id_prefix", "P");
        if (spec.contains("casualty_mean") && !spec.at("casualty_mean").is_null())
            ps.casualty_mean = spec.at("casualty_mean").get<double>();
        labels = {ps.class_label};
        events = synth::gen_poisson(ps, o.seed);
    } else if (kind == "excited") {
        synth::ExcitationSpec es;
        es.class_labels = spec.at("classes").get<std::vector<std::string>>();
        es.mu = spec.at("mu").get<std::vector<double>>();
        es.alpha = spec.at("alpha").get<std::vector<std::vector<double>>>();
        es.tau_days = spec.at("tau_days").get<std::vector<std::vector<double>>>();
        if (spec.contains("lag_days") && !spec.at("lag_days").is_null())
            es.lag_days = spec.at("lag_days").get<std::vector<std::vector<double>>>();
        es.sigma_km = spec.value("sigma_km", 5.0);
        es.region = region_from_json(spec.at("region"));
        es.span = span_from_json(spec.at("span"));
        es.id_prefix = spec.value("id_prefix", "S");
        if (spec.contains("casualty_mean") && !spec.at("casualty_mean").is_null())
            es.casualty_mean = spec.at("casualty_mean").get<double>();
        labels = es.class_labels;
        events = synth::gen_excited(es, o.seed);
    } else {
        throw Error("generator spec needs kind: poisson or excited");
    }

    fs::create_directories(o.out);
    catalog::write_events_csv(fs::path(o.out) / "events.csv", events);

    ordered_json rules = ordered_json::array();
    for (const std::string& label : labels) {
        ordered_json r;
        r["actor"] = label;
        r["class"] = label;
        rules.push_back(std::move(r));
    }
    write_json_file(fs::path(o.out) / "affiliations.json", rules);

    std::map<std::string, std::size_t> by_class;
    for (const catalog::Event& e : events) by_class[e.perpetrators.at(0)]++;
    ordered_json jclasses = ordered_json::object();
    for (const auto& [label, count] : by_class) jclasses[label] = count;

    ordered_json cfg;
    cfg["spec"] = spec_path;
    cfg["seed"] = o.seed;
    cfg["out"] = o.out;
    ordered_json j;
    j["config"] = std::move(cfg);
    j["kind"] = kind;
    j["events"] = events.size();
    j["classes"] = std::move(jclasses);
    write_json_file(fs::path(o.out) / "synth_report.json", j);
    return 0;
}

json load_config_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read config: " + path);
    json cfg;
    try {
        in >> cfg;
    } catch (const json::exception& e) {
        throw Error("bad config JSON: " + std::string(e.what()));
    }
    if (!cfg.is_object()) throw Error("config must be a JSON object");
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatiotemporal point-event analysis: clustering, latent-time"
                 " panels, divergence scans, and spread regression"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string arg_class, arg_source, arg_target, arg_a, arg_b;
    std::string arg_provoker, arg_responder, arg_origin, arg_spec;
    std::vector<double> arg_distances{5, 10, 15, 20, 30, 50, 75, 100};
    int arg_samples = 10, arg_wps = 4, arg_span_weeks = 0;
    double arg_response_km = 20.0;
    int arg_response_weeks = 4;

    CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic event catalog");
    c_synth->add_option("--config", o.config_path, "JSON config file; flags take precedence");
    bind_opt(*c_synth, arg_spec, "--spec", "spec", "generator spec JSON")->required();
    bind_opt(*c_synth, o.seed, "--seed", "seed", "random seed");
    bind_opt(*c_synth, o.out, "--out", "out", "output directory");

    CLI::App* c_ingest = app.add_subcommand("ingest", "validate and normalize event input");
    add_input_opts(*c_ingest, o);
    bind_opt(*c_ingest, o.out, "--out", "out", "output directory");

    CLI::App* c_cluster = app.add_subcommand("cluster", "geographic clustering with elbow pick");
    c_cluster->add_option("class", arg_class, "class label to cluster")->required();
    add_input_opts(*c_cluster, o);
    add_cluster_opts(*c_cluster, o);
    add_run_opts(*c_cluster, o, false);

    CLI::App* c_panel = app.add_subcommand("panel", "latent-time histogram against the null");
    c_panel->add_option("source", arg_source, "source class")->required();
    c_panel->add_option("target", arg_target, "target class (default: source)");
    add_input_opts(*c_panel, o);
    add_window_opts(*c_panel, o);
    add_band_opts(*c_panel, o);
    add_filter_opts(*c_panel, o);
    add_run_opts(*c_panel, o, true);
    bind_flag(*c_panel, o.dump_pairs, "--dump-pairs", "dump-pairs", "write the pair list CSV");

    CLI::App* c_react = app.add_subcommand("react", "mirror panels and their correlation");
    c_react->add_option("class_a", arg_a, "first class")->required();
    c_react->add_option("class_b", arg_b, "second class")->required();
    add_input_opts(*c_react, o);
    add_window_opts(*c_react, o);
    add_band_opts(*c_react, o);
    add_filter_opts(*c_react, o);
    add_run_opts(*c_react, o, true);
    bind_flag(*c_react, o.dump_pairs, "--dump-pairs", "dump-pairs", "write the pair list CSVs");

    CLI::App* c_scan = app.add_subcommand("scan", "divergence versus distance ceiling");
    c_scan->add_option("class", arg_class, "class label to scan")->required();
    add_input_opts(*c_scan, o);
    add_window_opts(*c_scan, o);
    bind_opt(*c_scan, arg_distances, "--distances", "distances", "distance grid in km")
        ->delimiter(',');
    bind_opt(*c_scan, arg_samples, "--samples", "samples", "random start offsets to draw")
        ->check(CLI::PositiveNumber);
    bind_opt(*c_scan, arg_wps, "--windows-per-sample", "windows-per-sample",
             "consecutive windows per offset")
        ->check(CLI::PositiveNumber);
    bind_opt(*c_scan, arg_span_weeks, "--span-weeks", "span-weeks",
             "scan span in weeks (default: whole era)");
    bind_opt(*c_scan, o.min_pairs, "--min-pairs", "min-pairs",
             "sufficiency threshold on pair count")
        ->check(CLI::PositiveNumber);
    add_run_opts(*c_scan, o, false);

    CLI::App* c_chain = app.add_subcommand("chain", "provoked versus general response panels");
    c_chain->add_option("provoker", arg_provoker, "provoking class")->required();
    c_chain->add_option("responder", arg_responder, "responding class")->required();
    add_input_opts(*c_chain, o);
    add_window_opts(*c_chain, o);
    add_band_opts(*c_chain, o);
    add_filter_opts(*c_chain, o);
    bind_opt(*c_chain, arg_response_km, "--response-km", "response-km",
             "provocation distance cap in km");
    bind_opt(*c_chain, arg_response_weeks, "--response-weeks", "response-weeks",
             "provocation delay cap in weeks")
        ->check(CLI::PositiveNumber);
    add_run_opts(*c_chain, o, true);
    bind_flag(*c_chain, o.dump_pairs, "--dump-pairs", "dump-pairs", "write the pair list CSVs");

    CLI::App* c_wave = app.add_subcommand("wave", "first-attack spread regression over clusters");
    c_wave->add_option("class", arg_class, "class label to cluster and regress")->required();
    add_input_opts(*c_wave, o);
    add_cluster_opts(*c_wave, o);
    bind_opt(*c_wave, arg_origin, "--origin", "origin",
             "LAT,LON anchor; nearest centroid becomes the origin (default: earliest cluster)");
    add_run_opts(*c_wave, o, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        CLI::App* active = app.get_subcommands().at(0);
        if (!o.config_path.empty()) g_binders[active].apply(load_config_json(o.config_path));

        if (active == c_synth) return cmd_synth(o, arg_spec);
        if (active == c_ingest) return cmd_ingest(o);
        if (active == c_cluster) return cmd_cluster(o, arg_class);
        if (active == c_panel) return cmd_panel(o, arg_source, arg_target);
        if (active == c_react) return cmd_react(o, arg_a, arg_b);
        if (active == c_scan)
            return cmd_scan(o, arg_class, arg_distances, arg_samples, arg_wps, arg_span_weeks);
        if (active == c_chain)
            return cmd_chain(o, arg_provoker, arg_responder, arg_response_km, arg_response_weeks);
        if (active == c_wave) return cmd_wave(o, arg_class, arg_origin);
        throw Error("unknown subcommand");
    } catch (const InsufficientDataError& e) {
        std::cerr << "nearwave: insufficient data: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "nearwave: error: " << e.what() << '\n';
        return 1;
    }
}
