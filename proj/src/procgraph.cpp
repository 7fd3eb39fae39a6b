#include "flowcast/procgraph.hpp"

#include <algorithm>
#include <ostream>
#include <unordered_map>

#include "flowcast/error.hpp"

namespace flowcast {

const char* edge_type_name(EdgeType t) {
    switch (t) {
        case EdgeType::Forward: return "forward";
        case EdgeType::Backward: return "backward";
        case EdgeType::Repeat: return "repeat";
    }
    return "?";
}

const char* structure_name(StructureId s) {
    switch (s) {
        case StructureId::G1: return "G1";
        case StructureId::G2: return "G2";
        case StructureId::G3: return "G3";
        case StructureId::G4: return "G4";
    }
    return "?";
}

StructureId structure_from_name(const std::string& name) {
    for (StructureId s : kStructures)
        if (name == structure_name(s)) return s;
    throw ConfigError("unknown graph structure '" + name + "' (expected G1..G4)");
}

bool structure_has_edge_type(StructureId s, EdgeType t) {
    switch (t) {
        case EdgeType::Forward: return true;
        case EdgeType::Backward: return s == StructureId::G2 || s == StructureId::G4;
        case EdgeType::Repeat: return s == StructureId::G3 || s == StructureId::G4;
    }
    return false;
}

const std::vector<Edge>& EdgeSets::of(EdgeType t) const {
    switch (t) {
        case EdgeType::Forward: return forward;
        case EdgeType::Backward: return backward;
        case EdgeType::Repeat: return repeat;
    }
    throw InternalError("bad edge type");
}

std::vector<Edge> build_forward_edges(int k) {
    if (k < 1) throw ConfigError("prefix length must be >= 1");
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(k > 0 ? k - 1 : 0));
    for (int i = 1; i < k; ++i) edges.emplace_back(i, i + 1);
    return edges;
}

std::vector<Edge> build_backward_edges(int k) {
    if (k < 1) throw ConfigError("prefix length must be >= 1");
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(k > 0 ? k - 1 : 0));
    for (int i = 1; i < k; ++i) edges.emplace_back(i + 1, i);
    return edges;
}

std::vector<Edge> connect_repeated_activities(const std::vector<int>& prefix_activities, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > prefix_activities.size())
        throw ConfigError("prefix length out of range");

    std::unordered_map<int, std::vector<int>> positions;  // activity -> 1-based positions
    for (int i = 0; i < k; ++i)
        positions[prefix_activities[static_cast<std::size_t>(i)]].push_back(i + 1);

    std::vector<Edge> edges;
    for (const auto& [act, pos] : positions) {
        (void)act;
        for (std::size_t i = 0; i + 1 < pos.size(); ++i)
            for (std::size_t j = i + 1; j < pos.size(); ++j) {
                if (pos[j] + 1 <= k) edges.emplace_back(pos[i], pos[j] + 1);
                if (pos[i] + 1 <= k) edges.emplace_back(pos[j], pos[i] + 1);
            }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

std::span<const Edge> ProcessGraph::edges(EdgeType t) const {
    if (!edges_ || !has(t)) return {};
    const auto& v = edges_->of(t);
    return {v.data(), v.size()};
}

// Only the edge lists a structure admits are materialized; G1 never pays for
// repeat-edge construction.
ProcessGraph assemble_structure(const std::vector<int>& prefix_activities, StructureId id) {
    if (prefix_activities.empty()) throw ConfigError("cannot build a graph from an empty prefix");
    const int k = static_cast<int>(prefix_activities.size());
    auto sets = std::make_shared<EdgeSets>();
    sets->forward = build_forward_edges(k);
    if (structure_has_edge_type(id, EdgeType::Backward)) sets->backward = build_backward_edges(k);
    if (structure_has_edge_type(id, EdgeType::Repeat))
        sets->repeat = connect_repeated_activities(prefix_activities, k);
    return ProcessGraph(k, id, std::move(sets));
}

std::array<ProcessGraph, 4> build_all_structures(const std::vector<int>& prefix_activities) {
    if (prefix_activities.empty()) throw ConfigError("cannot build a graph from an empty prefix");
    const int k = static_cast<int>(prefix_activities.size());
    auto sets = std::make_shared<EdgeSets>();
    sets->forward = build_forward_edges(k);
    sets->backward = build_backward_edges(k);
    sets->repeat = connect_repeated_activities(prefix_activities, k);
    return {ProcessGraph(k, StructureId::G1, sets), ProcessGraph(k, StructureId::G2, sets),
            ProcessGraph(k, StructureId::G3, sets), ProcessGraph(k, StructureId::G4, sets)};
}

void write_edge_list(const ProcessGraph& graph, std::ostream& out) {
    for (EdgeType t : kEdgeTypes)
        for (const auto& [src, dst] : graph.edges(t))
            out << edge_type_name(t) << ' ' << src << ' ' << dst << '\n';
}

}  // namespace flowcast
