// SPDX-License-Identifier: Apache-2.0
//
// Shortest-path forwarding with policy-based overrides, and a deterministic
// time-stepped fluid simulator that turns a transfer schedule into an event
// log of drained chunks per directed edge.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndt/topology.hpp"
#include "ndt/traffic.hpp"

namespace ndt {

struct DirectedEdge {
  VertexId u = -1;
  VertexId v = -1;
  auto operator<=>(const DirectedEdge&) const = default;
};

/// Congestion evidence a rule was derived from.
struct RuleEvidence {
  double percentage = 0.0;
  int e_u = 0, e_b = 0, e_m = 0, e_h = 0;
  double window_t0 = 0.0, window_t1 = 0.0;
};

/// Matches (src_host, dst_host) exactly at `router` and forwards to `next_hop`.
struct PbrRule {
  VertexId router = -1;
  VertexId src_host = -1;
  VertexId dst_host = -1;
  VertexId next_hop = -1;
  RuleEvidence evidence;
};

nlohmann::json to_json(const PbrRule& rule);
PbrRule rule_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<PbrRule>& rules);
/// Takes a rule array or an object holding one under "rules".
std::vector<PbrRule> rules_from_json(const nlohmann::json& j);

/// Forwarding state: unit-cost shortest-path table per (vertex, destination
/// LAN) plus ordered PBR overrides per router. Cheap to copy.
class RoutingState {
 public:
  const Topology& topology() const { return *topology_; }
  std::shared_ptr<const Topology> topology_ptr() const { return topology_; }

  VertexId base_next_hop(VertexId at, int dst_lan) const;
  /// Next vertex for traffic of (src_host, dst_host) sitting at `at`.
  /// Returns -1 when `at` is the destination.
  VertexId next_hop(VertexId at, VertexId src_host, VertexId dst_host) const;
  bool adjacent(VertexId a, VertexId b) const;
  const std::vector<VertexId>& neighbors(VertexId v) const { return adjacency_[v]; }

  const std::vector<PbrRule>& rules_at(VertexId router) const { return rules_[router]; }
  std::vector<PbrRule> all_rules() const;
  std::size_t rule_count() const;

  /// Same base tables, no overrides.
  RoutingState without_rules() const;

 private:
  friend RoutingState build_routing_tables(std::shared_ptr<const Topology> topology);
  friend RoutingState apply_pbr(const RoutingState& state, const std::vector<PbrRule>& rules);

  std::shared_ptr<const Topology> topology_;
  std::vector<std::vector<VertexId>> adjacency_;
  std::vector<std::vector<VertexId>> base_;  // [vertex][lan]
  std::vector<std::vector<PbrRule>> rules_;  // [vertex], match priority = order
};

RoutingState build_routing_tables(std::shared_ptr<const Topology> topology);
RoutingState build_routing_tables(const Topology& topology);

/// Appends rules after any already installed; first match wins.
RoutingState apply_pbr(const RoutingState& state, const std::vector<PbrRule>& rules);

/// Forwarding path from src_host to dst_host, both included.
/// Throws RoutingError on a repeated vertex or an unreachable destination.
std::vector<VertexId> trace_route(const RoutingState& state, VertexId src_host,
                                  VertexId dst_host);
bool reachable(const RoutingState& state, VertexId src_host, VertexId dst_host) noexcept;

struct PacketRecord {
  DirectedEdge edge;
  double arrival_t = 0.0;  // time the chunk's last byte reaches edge.v
  Bytes size = 0;
  VertexId src_host = -1;
  VertexId dst_host = -1;
  int flow_id = 0;
};

using EventLog = std::vector<PacketRecord>;

struct Scenario {
  std::shared_ptr<const Topology> topology;
  std::vector<TransferTask> schedule;
  double tick = 0.01;
  double horizon = 60.0;
  /// Probability that a task suffers one host or port failure mid-transfer.
  double failure_probability = 0.0;
  std::uint64_t failure_seed = 0;
};

struct TaskOutcomes {
  std::vector<TransferTask> tasks;  // final state of every attempt, replacements included
  std::vector<TransferRecord> records;
  Bytes bytes_injected = 0;
  Bytes bytes_delivered = 0;
  Bytes bytes_queued = 0;  // queued or propagating when the run stopped
  double end_t = 0.0;
  int ticks = 0;
};

struct RunResult {
  EventLog events;
  TaskOutcomes outcomes;
};

/// Runs the schedule under `state`. Throws SimulationError if a flow's
/// forwarding path loops.
RunResult run(const Scenario& scenario, const RoutingState& state);

/// flow_id,edge_u,edge_v,arrival_t,size_bytes,src_host,dst_host
void write_event_csv(std::ostream& out, const EventLog& log);
EventLog read_event_csv(std::istream& in);

}  // namespace ndt
