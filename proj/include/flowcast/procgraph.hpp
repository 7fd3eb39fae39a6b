#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace flowcast {

// Node indices throughout this module are 1-based event positions within the
// prefix, matching the edge-list export format. Node k is the current event.

enum class EdgeType : std::uint8_t { Forward = 0, Backward = 1, Repeat = 2 };
inline constexpr std::array<EdgeType, 3> kEdgeTypes = {EdgeType::Forward, EdgeType::Backward,
                                                       EdgeType::Repeat};
const char* edge_type_name(EdgeType t);

// G1 = forward; G2 = +backward; G3 = forward+repeat; G4 = all three.
enum class StructureId : std::uint8_t { G1 = 0, G2 = 1, G3 = 2, G4 = 3 };
inline constexpr std::array<StructureId, 4> kStructures = {StructureId::G1, StructureId::G2,
                                                           StructureId::G3, StructureId::G4};
const char* structure_name(StructureId s);
StructureId structure_from_name(const std::string& name);
bool structure_has_edge_type(StructureId s, EdgeType t);

using Edge = std::pair<int, int>;  // (src, dst), 1-based positions

struct EdgeSets {
    std::vector<Edge> forward;
    std::vector<Edge> backward;
    std::vector<Edge> repeat;

    const std::vector<Edge>& of(EdgeType t) const;
};

// Consecutive chain edges {(i, i+1) | i in [1, k-1]} and their reversals.
std::vector<Edge> build_forward_edges(int k);
std::vector<Edge> build_backward_edges(int k);

// For an activity occurring at positions p1 < ... < pm, every ordered pair
// (pi, pj) with i < j contributes (pi, pj+1) and (pj, pi+1) when the successor
// position is still inside the prefix. Self-loops from adjacent repetitions
// are kept; duplicates are removed and the list is sorted by (src, dst).
std::vector<Edge> connect_repeated_activities(const std::vector<int>& prefix_activities, int k);

// A prefix graph: one node per event position plus the edge lists its
// structure admits. The edge sets are shared between the four structure views
// built from one prefix.
class ProcessGraph {
  public:
    ProcessGraph() = default;
    ProcessGraph(int num_nodes, StructureId id, std::shared_ptr<const EdgeSets> edges)
        : num_nodes_(num_nodes), id_(id), edges_(std::move(edges)) {}

    int num_nodes() const { return num_nodes_; }
    int current_node() const { return num_nodes_; }
    StructureId structure() const { return id_; }
    bool has(EdgeType t) const { return structure_has_edge_type(id_, t); }
    // Empty when the structure does not include the type.
    std::span<const Edge> edges(EdgeType t) const;

  private:
    int num_nodes_ = 0;
    StructureId id_ = StructureId::G1;
    std::shared_ptr<const EdgeSets> edges_;
};

ProcessGraph assemble_structure(const std::vector<int>& prefix_activities, StructureId id);

// All four views over one shared edge computation.
std::array<ProcessGraph, 4> build_all_structures(const std::vector<int>& prefix_activities);

// Debug export, one line per edge: "<type> <src> <dst>".
void write_edge_list(const ProcessGraph& graph, std::ostream& out);

}  // namespace flowcast
