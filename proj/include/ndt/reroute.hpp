// SPDX-License-Identifier: Apache-2.0
//
// Per-vertex rerouting: turn edge classes into a diversion percentage, pick
// the smallest source-destination pairs that fit under it, spread them over
// uncongested interfaces and emit loop-checked PBR rules.
#pragma once

#include <map>
#include <optional>
#include <vector>

#include "ndt/mpnn.hpp"
#include "ndt/netsim.hpp"
#include "ndt/telemetry.hpp"

namespace ndt {

struct CategoryCounts {
  int e_u = 0;  // uncongested (class 4)
  int e_b = 0;  // balanced (class 3)
  int e_m = 0;  // moderately congested (class 2)
  int e_h = 0;  // highly congested (class 1)
  int total() const { return e_u + e_b + e_m + e_h; }
};

/// One class per outgoing directed edge of the vertex.
CategoryCounts categorize(const std::vector<CongestionClass>& outgoing_classes);

bool should_reroute(const CategoryCounts& counts);

/// Diversion percentage in (0, 50]. Throws ContractError when
/// should_reroute(counts) is false.
double reroute_percentage(const CategoryCounts& counts);

struct SdShare {
  VertexId src_host = -1;
  VertexId dst_host = -1;
  double share = 0.0;  // percent of the vertex's forwarded bytes
};

/// Byte share of every (src, dst) pair among the bytes `vertex` forwarded in
/// the window. Empty when it forwarded nothing.
std::vector<SdShare> traffic_shares(const EventLog& history, VertexId vertex, Window window);

/// Ascending by share (ties by pair), greedily while the running sum stays <= percent.
std::vector<SdShare> select_sd_pairs(std::vector<SdShare> shares, double percent);

/// floor(|S|/|E|) pairs per edge, remainder round-robin from the lowest edge.
/// Edges are processed in ascending (u, v) order; pairs in the given order.
std::map<DirectedEdge, std::vector<SdShare>> distribute(
    const std::vector<SdShare>& selected, std::vector<DirectedEdge> uncongested_edges);

struct EmitReport {
  std::vector<PbrRule> rules;
  int skipped_local = 0;  // destination LAN attached at this vertex
  int dropped = 0;        // failed the reachability or loop check
};

/// Builds one rule per (pair, edge) at `vertex` and keeps those that leave
/// the pair reachable and loop-free when added on top of `state`.
EmitReport emit_rules(VertexId vertex,
                      const std::map<DirectedEdge, std::vector<SdShare>>& assignment,
                      const RoutingState& state, const RuleEvidence& evidence = {});

/// True when every ordered host pair is reachable without loops.
bool all_pairs_reachable(const RoutingState& state);

struct CycleReport {
  std::vector<PbrRule> rules;  // full rule set to install for the next window
  int vertices_rerouting = 0;
  int rules_new = 0;
  int rules_retained = 0;
  int rules_released = 0;  // previous rules whose next hop is now congested
  int skipped_local = 0;
  int dropped = 0;
};

/// One control cycle over every P router. `edge_classes` is aligned with
/// directed_core_edges(topology.core). Previous rules survive while their
/// next-hop edge stays uncongested; new rules are added where rerouting is
/// warranted. Every candidate is validated against the rules accepted so far.
CycleReport control_cycle(const RoutingState& base, const std::vector<PbrRule>& previous,
                          const std::vector<CongestionClass>& edge_classes,
                          const EventLog& history, Window window);

}  // namespace ndt
