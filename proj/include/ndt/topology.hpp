// SPDX-License-Identifier: Apache-2.0
//
// Degree-constrained random core graphs and the layered provider topology
// (P core, PE/CE gateways, LAN switches and hosts) built on top of them.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace ndt {

using VertexId = int;

enum class GraphModel { ErdosRenyi, BarabasiAlbert, WattsStrogatz };

std::string_view to_string(GraphModel model);
/// Accepts "er"/"ba"/"ws" as well as the full model names.
GraphModel parse_graph_model(std::string_view text);

struct DegreeBounds {
  int min_deg = 2;
  int max_deg = 9;
};

/// Model parameters; only the ones relevant to the model are meaningful.
struct GraphParams {
  double p = 0.0;  // ER edge probability, WS rewiring probability
  int m = 0;       // BA attachment count
  int k = 0;       // WS ring-neighbour count (even)
};

/// Undirected edge stored with u < v.
struct UndirectedEdge {
  VertexId u = 0;
  VertexId v = 0;
  auto operator<=>(const UndirectedEdge&) const = default;
};

struct CoreGraph {
  int n = 0;
  std::vector<UndirectedEdge> edges;  // sorted, unique
  GraphModel model = GraphModel::ErdosRenyi;
  std::uint64_t seed = 0;
  GraphParams params;
  DegreeBounds bounds;

  std::vector<int> degrees() const;
  std::vector<std::vector<VertexId>> adjacency() const;
};

/// Generation limits shared by the three models.
struct RepairLimits {
  int max_rounds = 100;   // repair rounds before reseeding
  int max_reseeds = 64;   // seed+1 retries before giving up
};

CoreGraph gen_erdos_renyi(int n, double p, DegreeBounds bounds, std::uint64_t seed,
                          RepairLimits limits = {});
CoreGraph gen_barabasi_albert(int n, int m, DegreeBounds bounds, std::uint64_t seed,
                              RepairLimits limits = {});
CoreGraph gen_watts_strogatz(int n, int k, double p, DegreeBounds bounds,
                             std::uint64_t seed, RepairLimits limits = {});

/// Dispatches on `model`, taking the matching fields of `params`.
CoreGraph generate(GraphModel model, int n, const GraphParams& params,
                   DegreeBounds bounds, std::uint64_t seed);

/// Default parameters used by the experiment harness for a model at size n.
GraphParams default_params(GraphModel model, int n);

bool is_connected(int n, const std::vector<UndirectedEdge>& edges);

enum class Role { P, PE, CE, Switch, Host };
std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct LinkDefaults {
  double core_bandwidth = 1e7;    // bytes/s on P-P links
  double access_bandwidth = 1e8;  // bytes/s on PE, CE, switch and host links
  double prop_delay = 1e-3;       // seconds
};

struct Link {
  VertexId u = 0;
  VertexId v = 0;
  double bandwidth = 1e7;
  double prop_delay = 1e-3;
};

/// Number of PE routers for a core of `p_count` routers.
int pe_count_for(int p_count);

/// Layered topology. Vertex ids: P routers 0..n-1, then PE, CE, switches
/// and hosts in contiguous blocks. Chain i is P gateway -> pe[i] -> ce[i] ->
/// switches[i] -> three hosts, all in LAN i.
struct Topology {
  CoreGraph core;
  std::uint64_t seed = 0;
  std::vector<Role> roles;
  std::vector<int> lan;  // LAN index for hosts and their switch/CE/PE chain, -1 for P
  std::vector<VertexId> pe_routers, ce_routers, switches, hosts;
  std::vector<VertexId> gateways;  // P vertex hosting pe_routers[i]
  std::vector<Link> links;         // core links first, in core edge order

  int vertex_count() const { return static_cast<int>(roles.size()); }
  int lan_count() const { return static_cast<int>(pe_routers.size()); }
  std::vector<std::vector<VertexId>> adjacency() const;
  std::vector<VertexId> lan_hosts(int lan_id) const;
  /// Index into `links` of the link joining u and v, if any.
  std::optional<std::size_t> find_link(VertexId u, VertexId v) const;
  /// All unordered pairs of distinct gateway P vertices.
  std::vector<std::pair<VertexId, VertexId>> gateway_pairs() const;
};

Topology assign_roles(const CoreGraph& core, std::uint64_t seed,
                      const LinkDefaults& links = {});

struct TopologyStats {
  long long edge_count = 0;
  long long path_count = 0;
  double avg_hop_length = 0.0;
};

/// Exhaustive simple-path enumeration between each gateway pair. Throws once
/// more than `path_ceiling` paths have been found.
TopologyStats topology_stats(const CoreGraph& core,
                             const std::vector<std::pair<VertexId, VertexId>>& gateways,
                             long long path_ceiling = 1'000'000);

nlohmann::json to_json(const Topology& topo);
Topology topology_from_json(const nlohmann::json& j);

}  // namespace ndt
