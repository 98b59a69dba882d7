// SPDX-License-Identifier: Apache-2.0
#include "ndt/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "ndt/error.hpp"

namespace ndt {

std::string_view to_string(GraphModel model) {
  switch (model) {
    case GraphModel::ErdosRenyi: return "er";
    case GraphModel::BarabasiAlbert: return "ba";
    case GraphModel::WattsStrogatz: return "ws";
  }
  return "?";
}

GraphModel parse_graph_model(std::string_view text) {
  if (text == "er" || text == "ER" || text == "erdos_renyi") return GraphModel::ErdosRenyi;
  if (text == "ba" || text == "BA" || text == "barabasi_albert") return GraphModel::BarabasiAlbert;
  if (text == "ws" || text == "WS" || text == "watts_strogatz") return GraphModel::WattsStrogatz;
  throw ContractError("unknown graph model '" + std::string(text) + "'");
}

std::vector<int> CoreGraph::degrees() const {
  std::vector<int> deg(n, 0);
  for (const auto& e : edges) {
    ++deg[e.u];
    ++deg[e.v];
  }
  return deg;
}

std::vector<std::vector<VertexId>> CoreGraph::adjacency() const {
  std::vector<std::vector<VertexId>> adj(n);
  for (const auto& e : edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

namespace {

using AdjSets = std::vector<std::set<VertexId>>;

int component_count(const AdjSets& adj, std::vector<int>* labels = nullptr) {
  const int n = static_cast<int>(adj.size());
  std::vector<int> comp(n, -1);
  int count = 0;
  std::vector<VertexId> stack;
  for (VertexId s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = count;
    stack.push_back(s);
    while (!stack.empty()) {
      VertexId u = stack.back();
      stack.pop_back();
      for (VertexId w : adj[u]) {
        if (comp[w] < 0) {
          comp[w] = count;
          stack.push_back(w);
        }
      }
    }
    ++count;
  }
  if (labels) *labels = std::move(comp);
  return count;
}

void add_edge(AdjSets& adj, VertexId a, VertexId b) {
  adj[a].insert(b);
  adj[b].insert(a);
}

void remove_edge(AdjSets& adj, VertexId a, VertexId b) {
  adj[a].erase(b);
  adj[b].erase(a);
}

int degree(const AdjSets& adj, VertexId v) { return static_cast<int>(adj[v].size()); }

bool satisfies(const AdjSets& adj, int lo, int cap) {
  for (const auto& s : adj) {
    const int d = static_cast<int>(s.size());
    if (d < lo || d > cap) return false;
  }
  return component_count(adj) == 1;
}

// One pass of the repair loop: raise low vertices, trim high ones, join
// components. Returns true if anything changed.
bool repair_round(AdjSets& adj, int lo, int cap) {
  const int n = static_cast<int>(adj.size());
  bool changed = false;

  for (VertexId v = 0; v < n; ++v) {
    while (degree(adj, v) < lo) {
      VertexId best = -1;
      for (VertexId w = 0; w < n; ++w) {
        if (w == v || adj[v].count(w) || degree(adj, w) >= cap) continue;
        if (best < 0 || degree(adj, w) < degree(adj, best)) best = w;
      }
      if (best < 0) break;
      add_edge(adj, v, best);
      changed = true;
    }
  }

  for (VertexId v = 0; v < n; ++v) {
    while (degree(adj, v) > cap) {
      std::vector<VertexId> nbrs(adj[v].begin(), adj[v].end());
      std::stable_sort(nbrs.begin(), nbrs.end(), [&](VertexId a, VertexId b) {
        return degree(adj, a) > degree(adj, b);
      });
      const int before = component_count(adj);
      bool removed = false;
      for (VertexId w : nbrs) {
        if (degree(adj, w) <= lo) continue;
        remove_edge(adj, v, w);
        if (component_count(adj) <= before) {
          removed = true;
          break;
        }
        add_edge(adj, v, w);
      }
      if (!removed) break;
      changed = true;
    }
  }

  std::vector<int> comp;
  const int components = component_count(adj, &comp);
  if (components > 1) {
    auto lowest_in = [&](int c) {
      VertexId best = -1;
      for (VertexId w = 0; w < n; ++w) {
        if (comp[w] != c || degree(adj, w) >= cap) continue;
        if (best < 0 || degree(adj, w) < degree(adj, best)) best = w;
      }
      return best;
    };
    // Components are labelled in order of their lowest vertex id.
    for (int c = 1; c < components; ++c) {
      VertexId a = lowest_in(0);
      VertexId b = lowest_in(c);
      if (a < 0 || b < 0) continue;
      add_edge(adj, a, b);
      for (VertexId w = 0; w < n; ++w)
        if (comp[w] == c) comp[w] = 0;
      changed = true;
    }
  }
  return changed;
}

bool repair(AdjSets& adj, const DegreeBounds& bounds, int max_rounds) {
  const int n = static_cast<int>(adj.size());
  const int cap = std::min(bounds.max_deg, n - 1);
  for (int round = 0; round < max_rounds; ++round) {
    if (satisfies(adj, bounds.min_deg, cap)) return true;
    if (!repair_round(adj, bounds.min_deg, cap)) break;
  }
  return satisfies(adj, bounds.min_deg, cap);
}

void check_common(int n, const DegreeBounds& bounds) {
  if (n < 3) throw ContractError("graph needs at least 3 vertices for minimum degree 2");
  if (bounds.min_deg < 2 || bounds.min_deg > bounds.max_deg)
    throw ContractError("degree bounds must satisfy 2 <= min_deg <= max_deg");
  if (bounds.min_deg > n - 1)
    throw ContractError("min_deg " + std::to_string(bounds.min_deg) +
                        " exceeds n-1 for n=" + std::to_string(n));
}

template <typename Base>
CoreGraph generate_with_repair(int n, GraphModel model, GraphParams params,
                               DegreeBounds bounds, std::uint64_t seed,
                               RepairLimits limits, Base&& base) {
  for (int attempt = 0; attempt <= limits.max_reseeds; ++attempt) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(attempt));
    AdjSets adj(n);
    base(adj, rng);
    if (!repair(adj, bounds, limits.max_rounds)) continue;
    CoreGraph g;
    g.n = n;
    g.model = model;
    g.seed = seed;
    g.params = params;
    g.bounds = bounds;
    for (VertexId u = 0; u < n; ++u)
      for (VertexId v : adj[u])
        if (u < v) g.edges.push_back({u, v});
    return g;
  }
  throw GenerationError("degree repair failed for " + std::string(to_string(model)) +
                        " n=" + std::to_string(n) + " seed=" + std::to_string(seed) +
                        " after " + std::to_string(limits.max_reseeds + 1) + " attempts");
}

}  // namespace

CoreGraph gen_erdos_renyi(int n, double p, DegreeBounds bounds, std::uint64_t seed,
                          RepairLimits limits) {
  check_common(n, bounds);
  if (!(p > 0.0 && p <= 1.0)) throw ContractError("ER probability must be in (0, 1]");
  GraphParams params;
  params.p = p;
  return generate_with_repair(n, GraphModel::ErdosRenyi, params, bounds, seed, limits,
                              [&](AdjSets& adj, std::mt19937_64& rng) {
                                std::uniform_real_distribution<double> coin(0.0, 1.0);
                                for (VertexId u = 0; u < n; ++u)
                                  for (VertexId v = u + 1; v < n; ++v)
                                    if (coin(rng) < p) add_edge(adj, u, v);
                              });
}

CoreGraph gen_barabasi_albert(int n, int m, DegreeBounds bounds, std::uint64_t seed,
                              RepairLimits limits) {
  check_common(n, bounds);
  if (m < 1 || m >= n) throw ContractError("BA attachment count must satisfy 1 <= m < n");
  GraphParams params;
  params.m = m;
  return generate_with_repair(
      n, GraphModel::BarabasiAlbert, params, bounds, seed, limits,
      [&](AdjSets& adj, std::mt19937_64& rng) {
        // Seed clique on the first m+1 vertices.
        const int initial = m + 1;
        for (VertexId u = 0; u < initial; ++u)
          for (VertexId v = u + 1; v < initial; ++v) add_edge(adj, u, v);
        for (VertexId v = initial; v < n; ++v) {
          std::vector<double> weights(v);
          for (VertexId w = 0; w < v; ++w) weights[w] = std::max(1, degree(adj, w));
          std::vector<VertexId> targets;
          while (static_cast<int>(targets.size()) < m) {
            std::discrete_distribution<int> pick(weights.begin(), weights.end());
            const VertexId t = pick(rng);
            targets.push_back(t);
            weights[t] = 0.0;
          }
          for (VertexId t : targets) add_edge(adj, v, t);
        }
      });
}

CoreGraph gen_watts_strogatz(int n, int k, double p, DegreeBounds bounds,
                             std::uint64_t seed, RepairLimits limits) {
  check_common(n, bounds);
  if (k < 2 || k % 2 != 0 || k >= n)
    throw ContractError("WS neighbour count must be even with 2 <= k < n");
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("WS rewiring probability must be in [0, 1]");
  GraphParams params;
  params.k = k;
  params.p = p;
  return generate_with_repair(
      n, GraphModel::WattsStrogatz, params, bounds, seed, limits,
      [&](AdjSets& adj, std::mt19937_64& rng) {
        for (VertexId u = 0; u < n; ++u)
          for (int j = 1; j <= k / 2; ++j) add_edge(adj, u, (u + j) % n);
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        std::uniform_int_distribution<VertexId> any(0, n - 1);
        for (int j = 1; j <= k / 2; ++j) {
          for (VertexId u = 0; u < n; ++u) {
            const VertexId v = (u + j) % n;
            if (coin(rng) >= p) continue;
            if (!adj[u].count(v) || degree(adj, u) >= n - 1) continue;
            VertexId w = any(rng);
            while (w == u || adj[u].count(w)) w = any(rng);
            remove_edge(adj, u, v);
            add_edge(adj, u, w);
          }
        }
      });
}

CoreGraph generate(GraphModel model, int n, const GraphParams& params,
                   DegreeBounds bounds, std::uint64_t seed) {
  switch (model) {
    case GraphModel::ErdosRenyi: return gen_erdos_renyi(n, params.p, bounds, seed);
    case GraphModel::BarabasiAlbert: return gen_barabasi_albert(n, params.m, bounds, seed);
    case GraphModel::WattsStrogatz:
      return gen_watts_strogatz(n, params.k, params.p, bounds, seed);
  }
  throw ContractError("unknown graph model");
}

GraphParams default_params(GraphModel model, int n) {
  GraphParams params;
  switch (model) {
    case GraphModel::ErdosRenyi:
      params.p = std::min(0.6, 4.0 / std::max(1, n - 1));
      break;
    case GraphModel::BarabasiAlbert:
      params.m = std::min(2, n - 1);
      break;
    case GraphModel::WattsStrogatz:
      params.k = 2;
      params.p = 0.3;
      break;
  }
  return params;
}

bool is_connected(int n, const std::vector<UndirectedEdge>& edges) {
  if (n == 0) return true;
  AdjSets adj(n);
  for (const auto& e : edges) add_edge(adj, e.u, e.v);
  return component_count(adj) == 1;
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::P: return "P";
    case Role::PE: return "PE";
    case Role::CE: return "CE";
    case Role::Switch: return "switch";
    case Role::Host: return "host";
  }
  return "?";
}

Role parse_role(std::string_view text) {
  if (text == "P") return Role::P;
  if (text == "PE") return Role::PE;
  if (text == "CE") return Role::CE;
  if (text == "switch") return Role::Switch;
  if (text == "host") return Role::Host;
  throw ContractError("unknown vertex role '" + std::string(text) + "'");
}

int pe_count_for(int p_count) { return std::max(2, p_count / 5 + 1); }

std::vector<std::vector<VertexId>> Topology::adjacency() const {
  std::vector<std::vector<VertexId>> adj(vertex_count());
  for (const auto& l : links) {
    adj[l.u].push_back(l.v);
    adj[l.v].push_back(l.u);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

std::vector<VertexId> Topology::lan_hosts(int lan_id) const {
  std::vector<VertexId> out;
  for (VertexId h : hosts)
    if (lan[h] == lan_id) out.push_back(h);
  return out;
}

std::optional<std::size_t> Topology::find_link(VertexId u, VertexId v) const {
  for (std::size_t i = 0; i < links.size(); ++i)
    if ((links[i].u == u && links[i].v == v) || (links[i].u == v && links[i].v == u)) return i;
  return std::nullopt;
}

std::vector<std::pair<VertexId, VertexId>> Topology::gateway_pairs() const {
  std::vector<VertexId> g = gateways;
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  std::vector<std::pair<VertexId, VertexId>> out;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i + 1; j < g.size(); ++j) out.emplace_back(g[i], g[j]);
  return out;
}

Topology assign_roles(const CoreGraph& core, std::uint64_t seed, const LinkDefaults& defaults) {
  const int p_count = core.n;
  const int lans = pe_count_for(p_count);
  if (p_count < lans)
    throw ContractError("core has " + std::to_string(p_count) + " P routers, fewer than the " +
                        std::to_string(lans) + " PE routers it needs");

  Topology topo;
  topo.core = core;
  topo.seed = seed;

  const auto deg = core.degrees();
  std::vector<VertexId> order(p_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](VertexId a, VertexId b) { return deg[a] > deg[b]; });
  topo.gateways.assign(order.begin(), order.begin() + lans);

  const int total = p_count + 3 * lans + 3 * lans;
  topo.roles.assign(total, Role::P);
  topo.lan.assign(total, -1);
  VertexId next = p_count;
  for (int i = 0; i < lans; ++i) topo.pe_routers.push_back(next++);
  for (int i = 0; i < lans; ++i) topo.ce_routers.push_back(next++);
  for (int i = 0; i < lans; ++i) topo.switches.push_back(next++);
  for (int i = 0; i < 3 * lans; ++i) topo.hosts.push_back(next++);

  for (const auto& e : core.edges)
    topo.links.push_back({e.u, e.v, defaults.core_bandwidth, defaults.prop_delay});
  for (int i = 0; i < lans; ++i) {
    const VertexId pe = topo.pe_routers[i], ce = topo.ce_routers[i], sw = topo.switches[i];
    topo.roles[pe] = Role::PE;
    topo.roles[ce] = Role::CE;
    topo.roles[sw] = Role::Switch;
    topo.lan[pe] = topo.lan[ce] = topo.lan[sw] = i;
    topo.links.push_back({topo.gateways[i], pe, defaults.access_bandwidth, defaults.prop_delay});
    topo.links.push_back({pe, ce, defaults.access_bandwidth, defaults.prop_delay});
    topo.links.push_back({ce, sw, defaults.access_bandwidth, defaults.prop_delay});
    for (int h = 0; h < 3; ++h) {
      const VertexId host = topo.hosts[3 * i + h];
      topo.roles[host] = Role::Host;
      topo.lan[host] = i;
      topo.links.push_back({sw, host, defaults.access_bandwidth, defaults.prop_delay});
    }
  }
  return topo;
}

TopologyStats topology_stats(const CoreGraph& core,
                             const std::vector<std::pair<VertexId, VertexId>>& gateways,
                             long long path_ceiling) {
  const auto adj = core.adjacency();
  TopologyStats stats;
  stats.edge_count = static_cast<long long>(core.edges.size());
  long long total_hops = 0;
  std::vector<char> on_path(core.n, 0);

  // Iterative DFS would save stack, but core graphs are tiny.
  auto dfs = [&](auto&& self, VertexId u, VertexId target, int depth) -> void {
    if (u == target) {
      ++stats.path_count;
      total_hops += depth;
      if (stats.path_count > path_ceiling)
        throw ContractError("simple-path enumeration exceeded ceiling of " +
                            std::to_string(path_ceiling));
      return;
    }
    on_path[u] = 1;
    for (VertexId w : adj[u])
      if (!on_path[w]) self(self, w, target, depth + 1);
    on_path[u] = 0;
  };

  for (const auto& [a, b] : gateways) {
    if (a < 0 || b < 0 || a >= core.n || b >= core.n)
      throw ContractError("gateway vertex out of range");
    if (a == b) continue;
    dfs(dfs, a, b, 0);
  }
  if (stats.path_count > 0)
    stats.avg_hop_length = static_cast<double>(total_hops) / static_cast<double>(stats.path_count);
  return stats;
}

nlohmann::json to_json(const Topology& topo) {
  nlohmann::json j;
  j["model"] = std::string(to_string(topo.core.model));
  j["seed"] = topo.core.seed;
  j["params"] = {{"p", topo.core.params.p}, {"m", topo.core.params.m}, {"k", topo.core.params.k}};
  j["bounds"] = {{"min_deg", topo.core.bounds.min_deg}, {"max_deg", topo.core.bounds.max_deg}};
  auto& vertices = j["vertices"] = nlohmann::json::array();
  for (VertexId v = 0; v < topo.vertex_count(); ++v) {
    nlohmann::json vj = {{"id", v}, {"role", std::string(to_string(topo.roles[v]))}};
    vj["lan"] = topo.lan[v] >= 0 ? nlohmann::json(topo.lan[v]) : nlohmann::json(nullptr);
    vertices.push_back(std::move(vj));
  }
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& l : topo.links)
    edges.push_back({{"u", l.u},
                     {"v", l.v},
                     {"bandwidth_bytes_per_s", l.bandwidth},
                     {"prop_delay_s", l.prop_delay}});
  return j;
}

Topology topology_from_json(const nlohmann::json& j) {
  try {
    Topology topo;
    topo.core.model = parse_graph_model(j.at("model").get<std::string>());
    topo.core.seed = j.at("seed").get<std::uint64_t>();
    topo.seed = topo.core.seed;
    const auto& pj = j.at("params");
    topo.core.params.p = pj.value("p", 0.0);
    topo.core.params.m = pj.value("m", 0);
    topo.core.params.k = pj.value("k", 0);
    if (j.contains("bounds")) {
      topo.core.bounds.min_deg = j["bounds"].value("min_deg", 2);
      topo.core.bounds.max_deg = j["bounds"].value("max_deg", 9);
    }
    const auto& vs = j.at("vertices");
    const int count = static_cast<int>(vs.size());
    topo.roles.assign(count, Role::P);
    topo.lan.assign(count, -1);
    for (const auto& vj : vs) {
      const VertexId id = vj.at("id").get<int>();
      if (id < 0 || id >= count) throw ContractError("vertex id out of range");
      topo.roles[id] = parse_role(vj.at("role").get<std::string>());
      if (vj.contains("lan") && !vj["lan"].is_null()) topo.lan[id] = vj["lan"].get<int>();
    }
    for (VertexId v = 0; v < count; ++v) {
      switch (topo.roles[v]) {
        case Role::P: ++topo.core.n; break;
        case Role::PE: topo.pe_routers.push_back(v); break;
        case Role::CE: topo.ce_routers.push_back(v); break;
        case Role::Switch: topo.switches.push_back(v); break;
        case Role::Host: topo.hosts.push_back(v); break;
      }
    }
    auto by_lan = [&](std::vector<VertexId>& list) {
      std::stable_sort(list.begin(), list.end(),
                       [&](VertexId a, VertexId b) { return topo.lan[a] < topo.lan[b]; });
    };
    by_lan(topo.pe_routers);
    by_lan(topo.ce_routers);
    by_lan(topo.switches);
    by_lan(topo.hosts);
    topo.gateways.assign(topo.pe_routers.size(), -1);
    for (const auto& ej : j.at("edges")) {
      Link l;
      l.u = ej.at("u").get<int>();
      l.v = ej.at("v").get<int>();
      l.bandwidth = ej.at("bandwidth_bytes_per_s").get<double>();
      l.prop_delay = ej.at("prop_delay_s").get<double>();
      if (l.u < 0 || l.v < 0 || l.u >= count || l.v >= count || l.u == l.v)
        throw ContractError("edge endpoint out of range");
      if (!(l.bandwidth > 0.0) || l.prop_delay < 0.0)
        throw ContractError("edge needs positive bandwidth and nonnegative delay");
      topo.links.push_back(l);
      const Role ru = topo.roles[l.u], rv = topo.roles[l.v];
      if (ru == Role::P && rv == Role::P) {
        topo.core.edges.push_back({std::min(l.u, l.v), std::max(l.u, l.v)});
      } else if (ru == Role::P && rv == Role::PE) {
        topo.gateways[topo.lan[l.v]] = l.u;
      } else if (rv == Role::P && ru == Role::PE) {
        topo.gateways[topo.lan[l.u]] = l.v;
      }
    }
    std::sort(topo.core.edges.begin(), topo.core.edges.end());
    for (VertexId g : topo.gateways)
      if (g < 0) throw ContractError("PE router without a P attachment");
    return topo;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed topology JSON: ") + e.what());
  }
}

}  // namespace ndt
