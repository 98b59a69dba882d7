// SPDX-License-Identifier: Apache-2.0
#include "ndt/reroute.hpp"

#include <algorithm>
#include <set>

#include "ndt/error.hpp"

namespace ndt {

CategoryCounts categorize(const std::vector<CongestionClass>& outgoing_classes) {
  CategoryCounts c;
  for (auto cls : outgoing_classes) {
    switch (cls) {
      case CongestionClass::HighlyCongested: ++c.e_h; break;
      case CongestionClass::ModeratelyCongested: ++c.e_m; break;
      case CongestionClass::Balanced: ++c.e_b; break;
      case CongestionClass::Uncongested: ++c.e_u; break;
    }
  }
  return c;
}

bool should_reroute(const CategoryCounts& c) {
  const int total = c.total();
  const int calm = c.e_u + c.e_b;
  const int hot = c.e_m + c.e_h;
  if (total == calm || total == hot || total == 2) return false;
  return calm >= 1 && hot >= 1 && total > 2;
}

double reroute_percentage(const CategoryCounts& c) {
  if (!should_reroute(c))
    throw ContractError("reroute_percentage called for a vertex that must not reroute");
  // W_h = 100 (t - e_h) / t and W_m = 75 (t - e_m) / t, kept as integers over
  // a common denominator 4t so the final division is the only rounding step.
  // A category with no edges contributes no weight.
  const long long t = c.total();
  long long numerator = 0;
  if (c.e_h > 0) numerator += 400 * (t - c.e_h);
  if (c.e_m > 0) numerator += 300 * (t - c.e_m);
  const long long denominator = 4 * t * (c.e_m + c.e_h);
  const double pct = static_cast<double>(numerator) / static_cast<double>(denominator);
  return std::min(pct, 50.0);
}

std::vector<SdShare> traffic_shares(const EventLog& history, VertexId vertex, Window window) {
  std::map<std::pair<VertexId, VertexId>, Bytes> bytes;
  Bytes total = 0;
  for (const auto& r : history) {
    if (r.edge.u != vertex || !window.contains(r.arrival_t)) continue;
    bytes[{r.src_host, r.dst_host}] += r.size;
    total += r.size;
  }
  std::vector<SdShare> out;
  if (total == 0) return out;
  for (const auto& [pair, b] : bytes)
    out.push_back({pair.first, pair.second,
                   100.0 * static_cast<double>(b) / static_cast<double>(total)});
  return out;
}

std::vector<SdShare> select_sd_pairs(std::vector<SdShare> shares, double percent) {
  std::stable_sort(shares.begin(), shares.end(), [](const SdShare& a, const SdShare& b) {
    if (a.share != b.share) return a.share < b.share;
    return std::pair{a.src_host, a.dst_host} < std::pair{b.src_host, b.dst_host};
  });
  std::vector<SdShare> picked;
  double cumulative = 0.0;
  for (const auto& s : shares) {
    if (cumulative + s.share > percent) break;
    cumulative += s.share;
    picked.push_back(s);
  }
  return picked;
}

std::map<DirectedEdge, std::vector<SdShare>> distribute(const std::vector<SdShare>& selected,
                                                        std::vector<DirectedEdge> edges) {
  std::map<DirectedEdge, std::vector<SdShare>> out;
  if (selected.empty()) return out;
  if (edges.empty()) throw ContractError("distribute needs at least one uncongested edge");
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (const auto& e : edges) out[e];
  // Dealing round-robin gives every edge floor(|S|/|E|) pairs and the
  // remainder to the lowest edges.
  for (std::size_t i = 0; i < selected.size(); ++i) out[edges[i % edges.size()]].push_back(selected[i]);
  return out;
}

namespace {

bool passes_through(const std::vector<VertexId>& path, VertexId router, VertexId next_hop) {
  for (std::size_t i = 0; i + 1 < path.size(); ++i)
    if (path[i] == router) return path[i + 1] == next_hop;
  return false;
}

// Adds `rule` to `state` if the pair stays reachable, loop-free and actually
// takes the rule's next hop.
bool try_install(RoutingState& state, const PbrRule& rule) {
  RoutingState scratch = apply_pbr(state, {rule});
  if (!reachable(scratch, rule.src_host, rule.dst_host)) return false;
  if (!passes_through(trace_route(scratch, rule.src_host, rule.dst_host), rule.router,
                      rule.next_hop))
    return false;
  state = std::move(scratch);
  return true;
}

}  // namespace

EmitReport emit_rules(VertexId vertex,
                      const std::map<DirectedEdge, std::vector<SdShare>>& assignment,
                      const RoutingState& state, const RuleEvidence& evidence) {
  EmitReport report;
  const auto& topo = state.topology();
  RoutingState scratch = state;
  for (const auto& [edge, pairs] : assignment) {
    if (edge.u != vertex)
      throw ContractError("assignment edge does not leave vertex " + std::to_string(vertex));
    for (const auto& pair : pairs) {
      const int dst_lan = topo.lan.at(pair.dst_host);
      if (dst_lan >= 0 && topo.gateways.at(dst_lan) == vertex) {
        ++report.skipped_local;
        continue;
      }
      PbrRule rule{vertex, pair.src_host, pair.dst_host, edge.v, evidence};
      if (!state.adjacent(vertex, edge.v) || !try_install(scratch, rule)) {
        ++report.dropped;
        continue;
      }
      report.rules.push_back(rule);
    }
  }
  return report;
}

bool all_pairs_reachable(const RoutingState& state) {
  const auto& hosts = state.topology().hosts;
  for (VertexId a : hosts)
    for (VertexId b : hosts)
      if (a != b && !reachable(state, a, b)) return false;
  return true;
}

CycleReport control_cycle(const RoutingState& base, const std::vector<PbrRule>& previous,
                          const std::vector<CongestionClass>& edge_classes,
                          const EventLog& history, Window window) {
  const auto& topo = base.topology();
  const auto dirs = directed_core_edges(topo.core);
  if (dirs.size() != edge_classes.size())
    throw ContractError("control cycle got " + std::to_string(edge_classes.size()) +
                        " edge classes for " + std::to_string(dirs.size()) + " directed edges");
  std::map<DirectedEdge, CongestionClass> cls;
  for (std::size_t i = 0; i < dirs.size(); ++i) cls[dirs[i]] = edge_classes[i];
  auto uncongested = [&](VertexId u, VertexId v) {
    auto it = cls.find({u, v});
    return it != cls.end() && !is_congested(it->second);
  };

  CycleReport report;
  RoutingState state = base.without_rules();
  std::set<std::tuple<VertexId, VertexId, VertexId>> covered;  // (router, src, dst)

  for (const auto& rule : previous) {
    if (!uncongested(rule.router, rule.next_hop) || !try_install(state, rule)) {
      ++report.rules_released;
      continue;
    }
    report.rules.push_back(rule);
    covered.insert({rule.router, rule.src_host, rule.dst_host});
    ++report.rules_retained;
  }

  for (VertexId v = 0; v < topo.core.n; ++v) {
    std::vector<CongestionClass> out_classes;
    std::vector<DirectedEdge> calm_edges;
    std::set<VertexId> hot_next;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      if (dirs[i].u != v) continue;
      out_classes.push_back(edge_classes[i]);
      if (is_congested(edge_classes[i]))
        hot_next.insert(dirs[i].v);
      else
        calm_edges.push_back(dirs[i]);
    }
    const CategoryCounts counts = categorize(out_classes);
    if (!should_reroute(counts)) continue;
    const double pct = reroute_percentage(counts);

    // Candidate pairs are those this vertex sent over a congested interface.
    std::set<std::pair<VertexId, VertexId>> on_hot;
    for (const auto& r : history)
      if (r.edge.u == v && window.contains(r.arrival_t) && hot_next.count(r.edge.v))
        on_hot.insert({r.src_host, r.dst_host});
    std::vector<SdShare> candidates;
    for (const auto& s : traffic_shares(history, v, window))
      if (on_hot.count({s.src_host, s.dst_host}) && !covered.count({v, s.src_host, s.dst_host}))
        candidates.push_back(s);

    const auto selected = select_sd_pairs(candidates, pct);
    if (selected.empty()) continue;
    ++report.vertices_rerouting;
    const auto assignment = distribute(selected, calm_edges);
    RuleEvidence evidence{pct, counts.e_u, counts.e_b, counts.e_m, counts.e_h, window.t0, window.t1};
    const EmitReport emitted = emit_rules(v, assignment, state, evidence);
    report.skipped_local += emitted.skipped_local;
    report.dropped += emitted.dropped;
    if (emitted.rules.empty()) continue;
    state = apply_pbr(state, emitted.rules);
    for (const auto& r : emitted.rules) {
      report.rules.push_back(r);
      covered.insert({r.router, r.src_host, r.dst_host});
    }
    report.rules_new += static_cast<int>(emitted.rules.size());
  }

  if (!all_pairs_reachable(state))
    throw RoutingError("control cycle produced a rule set that breaks host reachability");
  return report;
}

}  // namespace ndt
