// Acceptance gate for the full pipeline. Runs ten end-to-end checks, prints
// one PASS/FAIL line per check, and exits nonzero if any fails.
//
// Usage: acceptance <path-to-nearwave-binary> <scratch-dir>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nearwave/cluster.hpp"
#include "nearwave/errors.hpp"
#include "nearwave/geo.hpp"
#include "nearwave/pairs.hpp"
#include "nearwave/stats.hpp"
#include "nearwave/synth.hpp"
#include "test_util.hpp"

using namespace nearwave;
namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_scratch;

struct Outcome {
    bool pass = false;
    std::string note;
};

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------- 1 --------

Outcome check_null_distribution() {
    double max_rel = 0.0;
    for (int w : {7, 308}) {
        const stats::RehDistribution reh(w);
        if (reh.bin_mass_num(1, w) != reh.denom())
            return {false, "rational total mass != 1 at w=" + std::to_string(w)};
        std::int64_t num_sum = 0;
        for (int t = 1; t <= w; ++t) {
            const double want = 2.0 * double(w - t) / (double(w) * double(w - 1));
            const double got = reh.pmf(t);
            const double rel = want == 0.0 ? std::abs(got)
                                           : std::abs(got - want) / want;
            max_rel = std::max(max_rel, rel);
            num_sum += reh.bin_mass_num(t, t);
        }
        if (num_sum != reh.denom())
            return {false, "per-day numerators do not telescope at w=" + std::to_string(w)};
    }
    if (stats::RehDistribution(7).pmf(1) != 2.0 / 7.0) return {false, "P(1) != 2/7 at w=7"};
    if (max_rel > 1e-15) return {false, "pmf deviates by " + num(max_rel)};
    return {true, "max rel err " + num(max_rel)};
}

// ---------------------------------------------------------------- 2 --------

Outcome check_distance_equivalence() {
    std::mt19937_64 rng(19937);
    std::uniform_real_distribution<double> lon(-180.0, 180.0);
    std::uniform_real_distribution<double> z(-1.0, 1.0);
    const double pi = std::acos(-1.0);

    double max_rel = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const geo::GeoPoint a{lon(rng), std::asin(z(rng)) * 180.0 / pi};
        const geo::GeoPoint b{lon(rng), std::asin(z(rng)) * 180.0 / pi};
        const double got = geo::great_circle_distance(a, b);

        const double dlat = (b.lat_rad() - a.lat_rad()) / 2.0;
        const double dlon = (b.lon_rad() - a.lon_rad()) / 2.0;
        const double h = std::sin(dlat) * std::sin(dlat) +
                         std::cos(a.lat_rad()) * std::cos(b.lat_rad()) * std::sin(dlon) *
                             std::sin(dlon);
        const double ref = 2.0 * 6373.0 * std::asin(std::min(1.0, std::sqrt(h)));
        if (ref > 0.0) max_rel = std::max(max_rel, std::abs(got - ref) / ref);
    }
    if (max_rel > 1e-9) return {false, "atan and asin forms deviate by " + num(max_rel)};

    const double anti = geo::great_circle_distance({0.0, 0.0}, {180.0, 0.0});
    if (std::abs(anti - pi * 6373.0) > 1e-9)
        return {false, "equator antipode gives " + num(anti)};
    return {true, "max rel err " + num(max_rel) + ", antipode exact"};
}

// ---------------------------------------------------------------- 3 --------

Outcome check_pair_oracle() {
    std::mt19937_64 rng(30303);
    std::uniform_int_distribution<int> ten(0, 9);
    std::size_t pair_total = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto cat = tu::random_catalog(rng, 300);
        const auto ws = tu::random_windows(rng);
        const auto f = tu::random_filter(rng);

        std::unordered_set<std::string> club, srcs;
        pairs::PairScope scope;
        if (ten(rng) < 2) {
            for (const auto& e : cat.events)
                if (ten(rng) < 6) club.insert(e.id);
            scope.cluster_ids = &club;
        }
        if (ten(rng) < 2) {
            for (const auto& e : cat.events)
                if (ten(rng) < 5) srcs.insert(e.id);
            scope.source_ids = &srcs;
        }

        const auto fast = pairs::enumerate_pairs(cat, ws, f, scope);
        const auto slow = tu::brute_force_pairs(cat, ws, f, scope);
        if (!tu::same_pairs(fast, slow))
            return {false, "mismatch on trial " + std::to_string(trial) + " (" +
                               std::to_string(fast.size()) + " vs " +
                               std::to_string(slow.size()) + " pairs)"};
        pair_total += fast.size();
    }
    if (pair_total < 10000) return {false, "oracle barely exercised: " + std::to_string(pair_total)};
    return {true, "200 catalogs, " + std::to_string(pair_total) + " pairs matched exactly"};
}

// ---------------------------------------------------------------- 4 --------

struct PanelBounds {
    bool kld_ok = false;
    bool bins_ok = false;
    double kld = 0.0;
    double max_z = 0.0;
};

PanelBounds null_bounds(const stats::PanelHistogram& panel) {
    PanelBounds b;
    b.kld = stats::kld(panel, true).kld;
    b.kld_ok = b.kld < 0.01;
    const double n = double(panel.pair_count);
    for (const auto& bin : panel.bins) {
        const double sd = std::sqrt(bin.expected * (1.0 - bin.expected) / n);
        if (sd > 0.0) b.max_z = std::max(b.max_z, std::abs(bin.observed - bin.expected) / sd);
    }
    b.bins_ok = b.max_z < 4.0;
    return b;
}

Outcome check_null_compliance() {
    // Few events per window across many windows: pairs sharing an event have
    // correlated latent times, so thick windows would overshoot the
    // independent-sampling bin bounds checked below.
    synth::PoissonSpec spec;
    spec.rate = 0.06;
    spec.region = {geo::GeoPoint{45.0, 2.0}, 10.0}; // every same-window pair is within 20 km
    spec.span = {0, 110 * 308 - 1};
    const auto events = synth::gen_poisson(spec, 40404);
    const auto cat = tu::identity_catalog(events, {"A"});
    const auto got = pairs::enumerate_pairs(cat, {0, 44, 110}, {"A", "A"});
    const auto panel = stats::bin_panel(got, 308, 14);
    if (panel.pair_count < 10000)
        return {false, "only " + std::to_string(panel.pair_count) + " pairs generated"};

    const PanelBounds b = null_bounds(panel);
    const std::string detail = "N=" + std::to_string(panel.pair_count) + ", kld=" + num(b.kld) +
                               ", max|z|=" + num(b.max_z);
    if (!b.kld_ok || !b.bins_ok) return {false, detail};
    return {true, detail};
}

// ---------------------------------------------------------------- 5 --------

Outcome check_planted_near_repeat() {
    // Same thin-window layout as the null-compliance check: excitation makes
    // events arrive in bursts, and dense windows would let burst-mates
    // correlate the far panel's bins well past the independence bounds.
    synth::ExcitationSpec ex;
    ex.class_labels = {"A"};
    ex.mu = {0.0325};
    ex.alpha = {{0.5}};
    ex.tau_days = {{10.0}};
    ex.sigma_km = 5.0;
    ex.region = {geo::GeoPoint{45.0, 2.0}, 150.0};
    ex.span = {0, 60 * 308 - 1};
    const auto planted = tu::identity_catalog(synth::gen_excited(ex, 50505), {"A"});

    synth::PoissonSpec base;
    base.rate = ex.mu[0] / (1.0 - ex.alpha[0][0]); // same expected event count
    base.region = ex.region;
    base.span = ex.span;
    const auto matched = tu::identity_catalog(synth::gen_poisson(base, 50506), {"A"});

    const pairs::WindowSpec ws{0, 44, 60};
    pairs::PairFilter near{"A", "A"};
    near.band = pairs::DistanceBand::within(20.0);
    pairs::PairFilter far{"A", "A"};
    far.band = pairs::DistanceBand::beyond(100.0);

    const auto panel_near = stats::bin_panel(pairs::enumerate_pairs(planted, ws, near), 308, 14);
    const auto panel_base = stats::bin_panel(pairs::enumerate_pairs(matched, ws, near), 308, 14);
    const auto panel_far = stats::bin_panel(pairs::enumerate_pairs(planted, ws, far), 308, 14);
    if (!panel_near.is_sufficient() || !panel_base.is_sufficient() || !panel_far.is_sufficient())
        return {false, "a panel came out insufficient"};

    const double kld_near = stats::kld(panel_near).kld;
    const double kld_base = stats::kld(panel_base).kld;

    // Inflated probability may only appear in the first four bins (56 days).
    int late_elevated = 0;
    const double n = double(panel_near.pair_count);
    for (const auto& bin : panel_near.bins) {
        const double sd = std::sqrt(bin.expected * (1.0 - bin.expected) / n);
        if (bin.observed > bin.expected + 4.0 * sd && bin.last_day > 56) ++late_elevated;
    }

    const PanelBounds far_b = null_bounds(panel_far);
    const std::string detail = "kld " + num(kld_near) + " (N=" + std::to_string(panel_near.pair_count) +
                               ") vs baseline " + num(kld_base) + ", far kld=" + num(far_b.kld) +
                               ", far max|z|=" + num(far_b.max_z) + " (N=" +
                               std::to_string(panel_far.pair_count) + ")";
    if (kld_near < 5.0 * kld_base) return {false, "no 5x separation: " + detail};
    if (late_elevated > 0)
        return {false, std::to_string(late_elevated) + " elevated bins past day 56: " + detail};
    if (!far_b.kld_ok || !far_b.bins_ok) return {false, "far panel off the null: " + detail};
    return {true, detail};
}

// ---------------------------------------------------------------- 6 --------

Outcome check_minor_class() {
    const pairs::WindowSpec ws{0, 44, 5};
    pairs::PairFilter fa{"A", "A"}, fb{"B", "B"};
    int wins = 0;
    std::string sizes;
    for (int s = 0; s < 10; ++s) {
        synth::ExcitationSpec ex;
        ex.class_labels = {"A", "B"};
        ex.mu = {0.55, 0.055}; // tenfold count difference, identical kernels
        ex.alpha = {{0.4, 0.0}, {0.0, 0.4}};
        ex.tau_days = {{10.0, 10.0}, {10.0, 10.0}};
        ex.sigma_km = 5.0;
        ex.region = {geo::GeoPoint{45.0, 2.0}, 50.0};
        ex.span = {0, 5 * 308 - 1};
        const auto cat = tu::identity_catalog(synth::gen_excited(ex, 60600 + s), {"A", "B"});

        const auto pa = stats::bin_panel(pairs::enumerate_pairs(cat, ws, fa), 308, 14);
        const auto pb = stats::bin_panel(pairs::enumerate_pairs(cat, ws, fb), 308, 14);
        if (!pa.is_sufficient() || !pb.is_sufficient())
            return {false, "insufficient panel on seed " + std::to_string(s)};
        if (stats::kld(pb).kld >= stats::kld(pa).kld) ++wins;
        if (s == 0)
            sizes = " (N_a=" + std::to_string(pa.pair_count) +
                    ", N_b=" + std::to_string(pb.pair_count) + ")";
    }
    const std::string detail = "minor class wins " + std::to_string(wins) + "/10" + sizes;
    return {wins >= 8, detail};
}

// ---------------------------------------------------------------- 7 --------

Outcome check_asymmetry_signs() {
    const pairs::WindowSpec ws{0, 44, 4};
    pairs::PairFilter fwd{"A", "B"}, rev{"B", "A"};
    fwd.band = rev.band = pairs::DistanceBand::within(20.0);

    auto run = [&](bool symmetric, int s) -> std::optional<double> {
        synth::ExcitationSpec ex;
        ex.class_labels = {"A", "B"};
        ex.mu = {0.10, 0.10};
        ex.alpha = {{0.0, 0.35}, {0.35, 0.0}};
        if (symmetric) {
            ex.tau_days = {{1.0, 6.0}, {6.0, 1.0}};
        } else {
            ex.tau_days = {{1.0, 4.0}, {15.0, 1.0}};  // A->B fast, B->A slow
            ex.lag_days = {{0.0, 0.0}, {42.0, 0.0}};
        }
        ex.sigma_km = 5.0;
        ex.region = {geo::GeoPoint{45.0, 2.0}, 60.0};
        ex.span = {0, 4 * 308 - 1};
        const auto cat = tu::identity_catalog(synth::gen_excited(ex, s), {"A", "B"});
        const auto pf = stats::bin_panel(pairs::enumerate_pairs(cat, ws, fwd), 308, 28);
        const auto pr = stats::bin_panel(pairs::enumerate_pairs(cat, ws, rev), 308, 28);
        if (!pf.is_sufficient() || !pr.is_sufficient()) return std::nullopt;
        return stats::reaction_correlation(pf, pr).r;
    };

    int neg = 0, pos = 0;
    double worst_neg = -1.0, worst_pos = 1.0;
    for (int s = 0; s < 10; ++s) {
        const auto r_asym = run(false, 70700 + s);
        if (r_asym && *r_asym < 0.0) {
            ++neg;
            worst_neg = std::max(worst_neg, *r_asym);
        }
        const auto r_sym = run(true, 75700 + s);
        if (r_sym && *r_sym > 0.33) {
            ++pos;
            worst_pos = std::min(worst_pos, *r_sym);
        }
    }
    const std::string detail = "opposed kernels r<0 on " + std::to_string(neg) +
                               "/10 (worst " + num(worst_neg) + "), mutual r>0.33 on " +
                               std::to_string(pos) + "/10 (worst " + num(worst_pos) + ")";
    return {neg >= 9 && pos >= 9, detail};
}

// ---------------------------------------------------------------- 8 --------

Outcome check_elbow_recovery() {
    const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<geo::GeoPoint> centers;
    for (double s1 : {-1.0, 1.0})
        for (double s2 : {-1.0, 1.0}) {
            centers.push_back(geo::from_unit_vector({0.0, s1, s2 * golden}));
            centers.push_back(geo::from_unit_vector({s1, s2 * golden, 0.0}));
            centers.push_back(geo::from_unit_vector({s1 * golden, 0.0, s2}));
        }

    cluster::KmeansOptions opt;
    opt.threads = 4;
    int hits = 0;
    std::vector<int> picks;
    for (int s = 0; s < 10; ++s) {
        std::mt19937_64 rng(80800 + s);
        std::normal_distribution<double> step(0.0, 60.0);
        std::vector<geo::GeoPoint> points;
        for (const auto& c : centers)
            for (int i = 0; i < 200; ++i) points.push_back(tu::displace(c, step(rng), step(rng)));
        const auto curve = cluster::elbow_select(points, 13, 0.075, opt);
        picks.push_back(curve.k_star);
        if (curve.k_star == 12) ++hits;
    }
    std::string detail = "k* = ";
    for (int k : picks) detail += std::to_string(k) + " ";
    detail += "(" + std::to_string(hits) + "/10)";
    return {hits >= 9, detail};
}

// ---------------------------------------------------------------- 9 --------

Outcome check_wave_recovery();

// -------------------------------------------------------------- 10 --------

int run_cli(const std::string& args, const std::string& log_name) {
    const fs::path log = g_scratch / log_name;
    const std::string cmd = g_cli + " " + args + " > " + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    if (WIFEXITED(rc)) return WEXITSTATUS(rc);
    return -2;
}

std::map<std::string, std::string> dir_snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream body;
        body << in.rdbuf();
        out[entry.path().filename().string()] = body.str();
    }
    return out;
}

Outcome check_cli_determinism() {
    const fs::path d = g_scratch / "cli";
    fs::create_directories(d);

    // Generator specs. One mutually excited two-class catalog for the panel
    // family, three staggered single-class caps for clustering and the wave.
    {
        std::ofstream ex(d / "spec_ex.json");
        ex << R"({"kind":"excited","classes":["A","B"],"mu":[0.12,0.12],
                  "alpha":[[0.15,0.3],[0.3,0.15]],"tau_days":[[8,8],[8,8]],
                  "sigma_km":5,"region":{"lat":2.0,"lon":45.0,"radius_km":80},
                  "span":{"from":"2010-01-04","to":"2013-05-21"}})";
        const char* blob = R"({"kind":"poisson","rate":0.6,"class":"A","id_prefix":"B%d",
                  "region":{"lat":%s,"lon":%s,"radius_km":60},
                  "span":{"from":"%s","to":"%s"}})";
        const char* args[3][4] = {{"2.0", "45.0", "2010-01-04", "2010-11-07"},
                                  {"2.0", "49.0", "2010-05-04", "2011-03-07"},
                                  {"5.5", "47.0", "2010-09-04", "2011-07-08"}};
        for (int i = 0; i < 3; ++i) {
            char buf[512];
            std::snprintf(buf, sizeof buf, blob, i + 1, args[i][0], args[i][1], args[i][2],
                          args[i][3]);
            std::ofstream f(d / ("blob" + std::to_string(i + 1) + ".json"));
            f << buf;
        }
    }

    const std::string ex_dir = (d / "synth_ex").string();
    const std::string ev = ex_dir + "/events.csv";
    const std::string af = ex_dir + "/affiliations.json";
    std::string blob_dirs[3];
    for (int i = 0; i < 3; ++i) blob_dirs[i] = (d / ("synth_b" + std::to_string(i + 1))).string();

    // Seed catalogs (also the first half of the synth determinism check).
    if (run_cli("synth --spec " + (d / "spec_ex.json").string() + " --seed 11 --out " + ex_dir,
                "c10_synth.log") != 0)
        return {false, "synth exited nonzero"};
    for (int i = 0; i < 3; ++i) {
        const std::string spec = (d / ("blob" + std::to_string(i + 1) + ".json")).string();
        if (run_cli("synth --spec " + spec + " --seed " + std::to_string(21 + i) + " --out " +
                        blob_dirs[i],
                    "c10_blob.log") != 0)
            return {false, "blob synth exited nonzero"};
    }
    const std::string blobs = " --events " + blob_dirs[0] + "/events.csv --events " +
                              blob_dirs[1] + "/events.csv --events " + blob_dirs[2] +
                              "/events.csv --affiliations " + blob_dirs[0] +
                              "/affiliations.json";

    const std::string in_ex = " --events " + ev + " --affiliations " + af;
    struct Cmd {
        std::string name;
        std::string args;
    };
    const std::vector<Cmd> cmds = {
        {"synth", "synth --spec " + (d / "spec_ex.json").string() + " --seed 11 --out "},
        {"ingest", "ingest" + in_ex + " --out "},
        {"panel", "panel A" + in_ex + " --max-km 20 --dump-pairs --out "},
        {"react", "react A B" + in_ex + " --max-km 20 --min-pairs 20 --out "},
        {"scan", "scan A" + in_ex +
                     " --distances 10,25 --samples 3 --windows-per-sample 2 --seed 4 "
                     "--threads 4 --out "},
        {"chain", "chain B A" + in_ex + " --min-pairs 10 --force --out "},
        {"cluster", "cluster A" + blobs + " --k-max 4 --seed 2 --threads 2 --out "},
        {"wave", "wave A" + blobs + " --k-max 4 --seed 2 --out "},
    };

    for (const auto& cmd : cmds) {
        const fs::path out = d / ("out_" + cmd.name);
        const std::string full = cmd.args + out.string();
        if (run_cli(full, "c10_" + cmd.name + "_1.log") != 0)
            return {false, cmd.name + " exited nonzero on first run"};
        const auto first = dir_snapshot(out);
        if (first.empty()) return {false, cmd.name + " produced no output files"};
        if (run_cli(full, "c10_" + cmd.name + "_2.log") != 0)
            return {false, cmd.name + " exited nonzero on rerun"};
        const auto second = dir_snapshot(out);
        if (first != second) return {false, cmd.name + " rerun output differs"};
    }
    return {true, std::to_string(cmds.size()) + " commands byte-identical on rerun"};
}

// ---------------------------------------------------------------- 9 --------

Outcome check_wave_recovery() {
    std::mt19937_64 rng(90901);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<stats::WavePoint> pts;
    for (int i = 1; i <= 12; ++i) {
        const double t = 0.25 * i;
        pts.push_back({t, 2400.0 * t * (1.0 + 0.1 * g(rng))});
    }
    const auto fit = stats::wave_regression(pts);
    const double rel = std::abs(fit.slope_km_per_year - 2400.0) / 2400.0;
    if (rel > 0.15)
        return {false, "slope " + num(fit.slope_km_per_year) + " off by " + num(rel * 100.0) + "%"};
    if (fit.p_value >= 0.01) return {false, "p = " + num(fit.p_value)};

    // The stock CSV layout must flow through ingest untouched.
    const fs::path csv = g_scratch / "wave_schema.csv";
    {
        std::ofstream out(csv);
        out << "id,date,lat,lon,perp1,perp2,perp3,casualties\n";
        for (int i = 0; i < 12; ++i)
            out << "row" << i << ",2013-0" << (i % 9) + 1 << "-1" << i % 10 << ","
                << 30.0 + i * 0.1 << "," << 44.0 + i * 0.05 << ",actor a,"
                << (i % 3 == 0 ? "actor b" : "") << ",," << (i % 4 == 0 ? "" : std::to_string(i))
                << "\n";
    }
    const fs::path out_dir = g_scratch / "out_schema";
    if (run_cli("ingest --events " + csv.string() + " --out " + out_dir.string(),
                "c9_ingest.log") != 0)
        return {false, "ingest of the stock schema exited nonzero"};
    std::ifstream rep(out_dir / "ingest_report.json");
    nlohmann::json j;
    rep >> j;
    if (j.at("events").get<int>() != 12)
        return {false, "schema ingest kept " + j.at("events").dump() + " of 12 rows"};

    return {true, "slope " + num(fit.slope_km_per_year) + " km/yr (err " + num(rel * 100.0) +
                      "%), p = " + num(fit.p_value) + ", stock schema ingested"};
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::fprintf(stderr, "usage: acceptance <nearwave-binary> <scratch-dir>\n");
        return 2;
    }
    g_cli = argv[1];
    g_scratch = argv[2];
    fs::create_directories(g_scratch);

    struct Row {
        const char* title;
        Outcome (*fn)();
    };
    const Row rows[] = {
        {"null-distribution exactness", check_null_distribution},
        {"distance formula equivalence", check_distance_equivalence},
        {"pair enumeration oracle", check_pair_oracle},
        {"null-catalog compliance", check_null_compliance},
        {"planted near-repeat detection", check_planted_near_repeat},
        {"minor-class amplification", check_minor_class},
        {"asymmetry sign recovery", check_asymmetry_signs},
        {"elbow recovery of planted clusters", check_elbow_recovery},
        {"wave regression recovery", check_wave_recovery},
        {"command-line determinism", check_cli_determinism},
    };

    int failures = 0;
    int id = 0;
    for (const Row& row : rows) {
        ++id;
        Outcome o;
        try {
            o = row.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s %2d: %s  [%s]\n", o.pass ? "PASS" : "FAIL", id, row.title,
                    o.note.c_str());
        std::fflush(stdout);
    }
    if (failures > 0) std::printf("%d of 10 criteria failing\n", failures);
    return failures == 0 ? 0 : 1;
}
