#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "nearwave/errors.hpp"
#include "nearwave/pairs.hpp"
#include "test_util.hpp"

using namespace nearwave;
using tu::displace;
using tu::ev;

namespace {

const geo::GeoPoint kTown{45.0, 2.0};

catalog::ClassifiedCatalog two_class(std::vector<catalog::Event> events) {
    return tu::identity_catalog(std::move(events), {"A", "B"});
}

std::set<std::pair<std::string, std::string>> id_pairs(const std::vector<pairs::LatentPair>& v) {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& p : v) out.insert({p.source_id, p.target_id});
    return out;
}

} // namespace

TEST_CASE("pair enumeration on a hand-checked catalog") {
    std::vector<catalog::Event> events;
    events.push_back(ev("a1", 0, kTown, {"A"}));
    events.push_back(ev("a2", 0, displace(kTown, 3.0, 0.0), {"A"}));
    events.push_back(ev("a3", 5, displace(kTown, 0.0, 4.0), {"A"}));
    events.push_back(ev("b1", 3, displace(kTown, 1.0, 1.0), {"B"}));
    events.push_back(ev("b2", 20, kTown, {"B"}));
    const auto cat = two_class(std::move(events));
    const pairs::WindowSpec ws{0, 2, std::nullopt};

    SUBCASE("self class, chronological, same-day discarded") {
        const auto got = pairs::enumerate_pairs(cat, ws, {"A", "A"});
        REQUIRE(got.size() == 2);
        CHECK(got[0].source_id == "a1");
        CHECK(got[0].target_id == "a3");
        CHECK(got[0].latent_days == 5);
        CHECK(got[0].window == 0);
        CHECK(got[1].source_id == "a2");
        CHECK(got[1].target_id == "a3");
    }

    SUBCASE("cross class requires source before target") {
        const auto got = pairs::enumerate_pairs(cat, ws, {"A", "B"});
        // b1 follows a1/a2 only; a3 is after b1, and b2 is alone in window 1.
        CHECK(id_pairs(got) == std::set<std::pair<std::string, std::string>>{
                                   {"a1", "b1"}, {"a2", "b1"}});
        const auto rev = pairs::enumerate_pairs(cat, ws, {"B", "A"});
        CHECK(id_pairs(rev) == std::set<std::pair<std::string, std::string>>{{"b1", "a3"}});
    }

    SUBCASE("windows never pair across the boundary") {
        std::vector<catalog::Event> e2;
        e2.push_back(ev("w1", 13, kTown, {"A"}));
        e2.push_back(ev("w2", 14, kTown, {"A"}));
        e2.push_back(ev("w3", 27, kTown, {"A"}));
        const auto cat2 = two_class(std::move(e2));
        const auto got = pairs::enumerate_pairs(cat2, {0, 2, std::nullopt}, {"A", "A"});
        REQUIRE(got.size() == 1); // only (w2, w3), latent 13 = window length - 1
        CHECK(got[0].source_id == "w2");
        CHECK(got[0].latent_days == 13);
        CHECK(got[0].window == 1);
    }

    SUBCASE("explicit window count truncates the span") {
        const auto got = pairs::enumerate_pairs(cat, {0, 2, 1}, {"B", "B"});
        CHECK(got.empty()); // b2 sits outside the single window
    }

    SUBCASE("events before the window start are ignored") {
        const auto got = pairs::enumerate_pairs(cat, {2, 2, std::nullopt}, {"A", "A"});
        CHECK(id_pairs(got) == std::set<std::pair<std::string, std::string>>{});
    }
}

TEST_CASE("distance bands") {
    std::vector<catalog::Event> events;
    events.push_back(ev("near_s", 1, kTown, {"A"}));
    events.push_back(ev("near_t", 2, displace(kTown, 10.0, 0.0), {"A"}));
    events.push_back(ev("far_t", 3, displace(kTown, 111.0, 0.0), {"A"}));
    const auto cat = two_class(std::move(events));
    const pairs::WindowSpec ws{0, 44, std::nullopt};

    pairs::PairFilter f{"A", "A"};
    f.band = pairs::DistanceBand::within(20.0);
    auto got = pairs::enumerate_pairs(cat, ws, f);
    CHECK(id_pairs(got) ==
          std::set<std::pair<std::string, std::string>>{{"near_s", "near_t"}});

    f.band = pairs::DistanceBand::beyond(100.0);
    got = pairs::enumerate_pairs(cat, ws, f);
    CHECK(id_pairs(got) == std::set<std::pair<std::string, std::string>>{
                               {"near_s", "far_t"}, {"near_t", "far_t"}});

    f.band = pairs::DistanceBand::within(200.0);
    got = pairs::enumerate_pairs(cat, ws, f);
    CHECK(got.size() == 3);
    for (const auto& p : got) CHECK(p.distance_km <= 200.0);
}

TEST_CASE("casualty filters") {
    std::vector<catalog::Event> events;
    events.push_back(ev("s2", 1, kTown, {"A"}, 2));
    events.push_back(ev("sx", 1, kTown, {"A"}, std::nullopt));
    events.push_back(ev("t5", 10, kTown, {"B"}, 5));
    events.push_back(ev("t1", 11, kTown, {"B"}, 1));
    events.push_back(ev("tx", 12, kTown, {"B"}, std::nullopt));
    const auto cat = two_class(std::move(events));
    const pairs::WindowSpec ws{0, 44, std::nullopt};

    pairs::PairFilter f{"A", "B"};
    f.min_casualties_source = 1;
    f.min_casualties_target = 2;
    const auto got = pairs::enumerate_pairs(cat, ws, f);
    // Unknown casualties never certify a threshold, on either end.
    CHECK(id_pairs(got) == std::set<std::pair<std::string, std::string>>{{"s2", "t5"}});

    pairs::PairFilter inc{"A", "B"};
    inc.incremental = true;
    const auto up = pairs::enumerate_pairs(cat, ws, inc);
    CHECK(id_pairs(up) == std::set<std::pair<std::string, std::string>>{{"s2", "t5"}});

    pairs::PairFilter loose{"A", "B"};
    const auto all = pairs::enumerate_pairs(cat, ws, loose);
    CHECK(all.size() == 6); // casualty-agnostic: both sources pair with all three targets
}

TEST_CASE("joint attribution never pairs an event with itself") {
    std::vector<catalog::Event> events;
    events.push_back(ev("dual1", 1, kTown, {"A", "B"}));
    events.push_back(ev("dual2", 5, displace(kTown, 2.0, 0.0), {"A", "B"}));
    const auto cat = two_class(std::move(events));
    const pairs::WindowSpec ws{0, 44, std::nullopt};

    const auto ab = pairs::enumerate_pairs(cat, ws, {"A", "B"});
    CHECK(id_pairs(ab) == std::set<std::pair<std::string, std::string>>{{"dual1", "dual2"}});
    const auto aa = pairs::enumerate_pairs(cat, ws, {"A", "A"});
    REQUIRE(aa.size() == 1);
    CHECK(aa[0].source_id == "dual1");
}

TEST_CASE("scope restrictions") {
    std::vector<catalog::Event> events;
    for (int i = 0; i < 6; ++i)
        events.push_back(ev("e" + std::to_string(i), Day(1 + i), displace(kTown, i * 1.0, 0.0),
                            {i % 2 ? "B" : "A"}));
    const auto cat = two_class(std::move(events));
    const pairs::WindowSpec ws{0, 44, std::nullopt};

    const std::unordered_set<std::string> club{"e0", "e1", "e2"};
    pairs::PairScope scope;
    scope.cluster_ids = &club;
    const auto got = pairs::enumerate_pairs(cat, ws, {"A", "B"}, scope);
    // e3 is outside the scope, so e2 has no in-club target.
    CHECK(id_pairs(got) == std::set<std::pair<std::string, std::string>>{{"e0", "e1"}});

    const std::unordered_set<std::string> only_e2{"e2"};
    pairs::PairScope src_scope;
    src_scope.source_ids = &only_e2;
    const auto src_only = pairs::enumerate_pairs(cat, ws, {"A", "B"}, src_scope);
    CHECK(id_pairs(src_only) == std::set<std::pair<std::string, std::string>>{
                                    {"e2", "e3"}, {"e2", "e5"}});
}

TEST_CASE("enumeration matches the quadratic reference on random catalogs") {
    std::mt19937_64 rng(424242);
    int nonempty = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const auto cat = tu::random_catalog(rng, 250);
        const auto ws = tu::random_windows(rng);
        const auto f = tu::random_filter(rng);

        std::unordered_set<std::string> club, srcs;
        pairs::PairScope scope;
        std::uniform_int_distribution<int> ten(0, 9);
        if (ten(rng) < 3) {
            for (const auto& e : cat.events)
                if (ten(rng) < 6) club.insert(e.id);
            scope.cluster_ids = &club;
        }
        if (ten(rng) < 3) {
            for (const auto& e : cat.events)
                if (ten(rng) < 5) srcs.insert(e.id);
            scope.source_ids = &srcs;
        }

        const auto fast = pairs::enumerate_pairs(cat, ws, f, scope);
        const auto slow = tu::brute_force_pairs(cat, ws, f, scope);
        REQUIRE(tu::same_pairs(fast, slow));
        if (!fast.empty()) ++nonempty;
    }
    CHECK(nonempty > 20); // the comparison must be exercised on real matches
}

TEST_CASE("enumeration is invariant to input order") {
    std::mt19937_64 rng(77);
    auto cat = tu::random_catalog(rng, 150);
    const pairs::WindowSpec ws{990, 6, std::nullopt};
    pairs::PairFilter f{"A", "B"};
    f.band = pairs::DistanceBand::within(40.0);
    const auto before = pairs::enumerate_pairs(cat, ws, f);

    std::vector<catalog::Event> shuffled = cat.events;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto cat2 = tu::identity_catalog(std::move(shuffled), {"A", "B"});
    const auto after = pairs::enumerate_pairs(cat2, ws, f);
    CHECK(tu::same_pairs(before, after));
}

TEST_CASE("widening the band only adds pairs") {
    std::mt19937_64 rng(5150);
    const auto cat = tu::random_catalog(rng, 200);
    const pairs::WindowSpec ws{990, 13, std::nullopt};
    pairs::PairFilter narrow{"A", "A"}, wide{"A", "A"};
    narrow.band = pairs::DistanceBand::within(10.0);
    wide.band = pairs::DistanceBand::within(30.0);
    const auto small_set = id_pairs(pairs::enumerate_pairs(cat, ws, narrow));
    const auto big_set = id_pairs(pairs::enumerate_pairs(cat, ws, wide));
    for (const auto& p : small_set) CHECK(big_set.count(p) == 1);
    CHECK(big_set.size() >= small_set.size());
}

TEST_CASE("provoked subset finds planted responders") {
    std::vector<catalog::Event> events;
    events.push_back(ev("prov", 100, kTown, {"B"}));
    events.push_back(ev("r_next_day", 101, displace(kTown, 2.0, 0.0), {"A"}));
    events.push_back(ev("r_edge", 128, displace(kTown, 5.0, 0.0), {"A"}));   // gap 28 = 4 weeks
    events.push_back(ev("r_late", 129, displace(kTown, 5.0, 0.0), {"A"}));   // gap 29: too late
    events.push_back(ev("r_far", 101, displace(kTown, 25.0, 0.0), {"A"}));   // 25 km: too far
    events.push_back(ev("r_before", 99, kTown, {"A"}));
    events.push_back(ev("r_same_day", 100, kTown, {"A"}));
    const auto cat = two_class(std::move(events));

    const auto provoked = pairs::provoked_subset(cat, "B", "A", 20.0, 4);
    CHECK(provoked == std::unordered_set<std::string>{"r_next_day", "r_edge"});

    // The subset acts as a source restriction for a second enumeration.
    pairs::PairScope scope;
    scope.source_ids = &provoked;
    const auto follow = pairs::enumerate_pairs(cat, {95, 44, 1}, {"A", "A"}, scope);
    for (const auto& p : follow) CHECK(provoked.count(p.source_id) == 1);
}

TEST_CASE("sufficiency threshold") {
    CHECK(pairs::pair_sufficiency(99) == pairs::Sufficiency::insufficient);
    CHECK(pairs::pair_sufficiency(100) == pairs::Sufficiency::sufficient);
    CHECK(pairs::pair_sufficiency(0) == pairs::Sufficiency::insufficient);
    CHECK(pairs::pair_sufficiency(5, 5) == pairs::Sufficiency::sufficient);
    CHECK(pairs::default_min_pairs == 100);
}

TEST_CASE("pair dump format") {
    std::vector<pairs::LatentPair> v;
    v.push_back({"s", "t", 3, 12.5, 0});
    const auto p = std::filesystem::temp_directory_path() / "nw_test_pairs.csv";
    pairs::write_pairs_csv(p, v);
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    CHECK(line == "window,source_id,target_id,latent_days,distance_km");
    std::getline(in, line);
    CHECK(line == "0,s,t,3,12.500000");
    CHECK_FALSE(std::getline(in, line));
    std::filesystem::remove(p);
}
