#include <set>
#include <sstream>

#include "doctest.h"
#include "flowcast/error.hpp"
#include "flowcast/procgraph.hpp"
#include "flowcast/rng.hpp"
#include "support/oracles.hpp"

using namespace flowcast;

namespace {

std::set<Edge> as_set(std::span<const Edge> edges) { return {edges.begin(), edges.end()}; }

}  // namespace

TEST_CASE("forward and backward chains") {
    CHECK(build_forward_edges(4) == std::vector<Edge>{{1, 2}, {2, 3}, {3, 4}});
    CHECK(build_forward_edges(1).empty());
    CHECK(build_backward_edges(3) == std::vector<Edge>{{2, 1}, {3, 2}});
    CHECK(build_backward_edges(1).empty());
    CHECK_THROWS_AS(build_forward_edges(0), ConfigError);

    // reversal property on random k
    Rng rng = seeded_rng(1, "reversal");
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 1 + static_cast<int>(uniform_index(rng, 30));
        const auto fwd = build_forward_edges(k);
        const auto bwd = build_backward_edges(k);
        REQUIRE(fwd.size() == bwd.size());
        std::set<Edge> swapped;
        for (const auto& [s, d] : fwd) swapped.insert({d, s});
        CHECK(swapped == std::set<Edge>(bwd.begin(), bwd.end()));
    }
}

TEST_CASE("repeat edges for one activity at positions 2 and 5 of a 6-prefix") {
    // the six-event loan prefix: the reviewed activity recurs at 2 and 5
    const std::vector<int> acts = {10, 20, 30, 40, 20, 50};
    const auto rep = connect_repeated_activities(acts, 6);
    CHECK(std::set<Edge>(rep.begin(), rep.end()) == std::set<Edge>{{2, 6}, {5, 3}});
}

TEST_CASE("repeat edge at the boundary is dropped when out of range") {
    // <A,B,C,B>: B at 2 and 4; (2,5) exceeds k, only (4,3) remains
    const std::vector<int> acts = {1, 2, 3, 2};
    const auto rep = connect_repeated_activities(acts, 4);
    CHECK(rep == std::vector<Edge>{{4, 3}});
}

TEST_CASE("all-distinct prefixes yield no repeat edges") {
    CHECK(connect_repeated_activities({1, 2, 3, 4, 5}, 5).empty());
}

TEST_CASE("adjacent repetition produces a kept self-loop") {
    // <A,A>: pair (1,2) gives (1,3) out of range and (2,2) self-loop
    const auto rep = connect_repeated_activities({7, 7}, 2);
    CHECK(rep == std::vector<Edge>{{2, 2}});
}

TEST_CASE("duplicate repeat edges from different pairs are deduplicated") {
    // <A,A,A>: pairs (1,2),(1,3),(2,3) -> edges (1,3),(2,2),(2,3)x? compute:
    // (1,2): (1,3) and (2,2); (1,3): (1,4) oob and (3,2); (2,3): (2,4) oob and (3,3)
    const auto rep = connect_repeated_activities({7, 7, 7}, 3);
    const std::set<Edge> expected = {{1, 3}, {2, 2}, {3, 2}, {3, 3}};
    CHECK(std::set<Edge>(rep.begin(), rep.end()) == expected);
    // sorted and unique
    for (std::size_t i = 1; i < rep.size(); ++i) CHECK(rep[i - 1] < rep[i]);
}

TEST_CASE("structures expose exactly their edge types") {
    const std::vector<int> acts = {10, 20, 30, 40, 20, 50};
    const auto g1 = assemble_structure(acts, StructureId::G1);
    CHECK(g1.edges(EdgeType::Forward).size() == 5);
    CHECK(g1.edges(EdgeType::Backward).empty());
    CHECK(g1.edges(EdgeType::Repeat).empty());
    CHECK(g1.current_node() == 6);

    const auto g4 = assemble_structure(acts, StructureId::G4);
    CHECK(g4.edges(EdgeType::Forward).size() == 5);
    CHECK(g4.edges(EdgeType::Backward).size() == 5);
    CHECK(as_set(g4.edges(EdgeType::Repeat)) == std::set<Edge>{{2, 6}, {5, 3}});

    CHECK_THROWS_AS(assemble_structure({}, StructureId::G1), ConfigError);
}

TEST_CASE("the four views share vertex sets and edge lists") {
    const std::vector<int> acts = {1, 2, 1, 3, 2};
    const auto all = build_all_structures(acts);
    for (const auto& g : all) CHECK(g.num_nodes() == 5);
    // E_f identical everywhere
    const auto f0 = as_set(all[0].edges(EdgeType::Forward));
    for (const auto& g : all) CHECK(as_set(g.edges(EdgeType::Forward)) == f0);
    // repeat list of G3 equals repeat list of G4
    CHECK(as_set(all[2].edges(EdgeType::Repeat)) == as_set(all[3].edges(EdgeType::Repeat)));
    // G2 backward equals G4 backward
    CHECK(as_set(all[1].edges(EdgeType::Backward)) == as_set(all[3].edges(EdgeType::Backward)));
}

TEST_CASE("1000 random prefixes match the brute-force oracle") {
    Rng rng = seeded_rng(2024, "graph-oracle");
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 1 + static_cast<int>(uniform_index(rng, 20));
        const int alphabet = 1 + static_cast<int>(uniform_index(rng, 8));
        std::vector<int> acts(static_cast<std::size_t>(k));
        for (auto& a : acts) a = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(alphabet)));

        const auto expected = oracle::brute_force_edges(acts);
        const auto g4 = assemble_structure(acts, StructureId::G4);
        CHECK(as_set(g4.edges(EdgeType::Forward)) == expected.forward);
        CHECK(as_set(g4.edges(EdgeType::Backward)) == expected.backward);
        CHECK(as_set(g4.edges(EdgeType::Repeat)) == expected.repeat);
    }
}

TEST_CASE("repeat count respects the pairwise upper bound") {
    Rng rng = seeded_rng(77, "bound");
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 1 + static_cast<int>(uniform_index(rng, 30));
        std::vector<int> acts(static_cast<std::size_t>(k));
        for (auto& a : acts) a = static_cast<int>(uniform_index(rng, 5));
        std::map<int, int> occ;
        for (int a : acts) ++occ[a];
        std::size_t bound = 0;
        for (const auto& [a, m] : occ) {
            (void)a;
            bound += static_cast<std::size_t>(m) * (m - 1);  // 2 * C(m,2)
        }
        CHECK(connect_repeated_activities(acts, k).size() <= bound);
    }
}

TEST_CASE("edge-list export emits one typed line per edge") {
    const auto g = assemble_structure({1, 2, 1}, StructureId::G4);
    std::ostringstream os;
    write_edge_list(g, os);
    CHECK(os.str() ==
          "forward 1 2\n"
          "forward 2 3\n"
          "backward 2 1\n"
          "backward 3 2\n"
          "repeat 1 3\n"
          "repeat 3 2\n");
}

TEST_CASE("structure names round-trip") {
    for (StructureId s : kStructures) CHECK(structure_from_name(structure_name(s)) == s);
    CHECK_THROWS_AS(structure_from_name("G9"), ConfigError);
}
