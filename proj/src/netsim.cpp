// SPDX-License-Identifier: Apache-2.0
#include "ndt/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "ndt/error.hpp"
#include "ndt/format.hpp"

namespace ndt {

nlohmann::json to_json(const PbrRule& rule) {
  const auto& ev = rule.evidence;
  return {{"router", rule.router},
          {"match", {{"src", rule.src_host}, {"dst", rule.dst_host}}},
          {"next_hop", rule.next_hop},
          {"evidence",
           {{"percentage", ev.percentage},
            {"counts", {{"E_u", ev.e_u}, {"E_b", ev.e_b}, {"E_m", ev.e_m}, {"E_h", ev.e_h}}},
            {"window", {ev.window_t0, ev.window_t1}}}}};
}

PbrRule rule_from_json(const nlohmann::json& j) {
  try {
    PbrRule r;
    r.router = j.at("router").get<int>();
    r.src_host = j.at("match").at("src").get<int>();
    r.dst_host = j.at("match").at("dst").get<int>();
    r.next_hop = j.at("next_hop").get<int>();
    if (j.contains("evidence")) {
      const auto& ev = j["evidence"];
      r.evidence.percentage = ev.value("percentage", 0.0);
      if (ev.contains("counts")) {
        r.evidence.e_u = ev["counts"].value("E_u", 0);
        r.evidence.e_b = ev["counts"].value("E_b", 0);
        r.evidence.e_m = ev["counts"].value("E_m", 0);
        r.evidence.e_h = ev["counts"].value("E_h", 0);
      }
      if (ev.contains("window") && ev["window"].size() == 2) {
        r.evidence.window_t0 = ev["window"][0].get<double>();
        r.evidence.window_t1 = ev["window"][1].get<double>();
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed rule JSON: ") + e.what());
  }
}

nlohmann::json to_json(const std::vector<PbrRule>& rules) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rules) arr.push_back(to_json(r));
  return arr;
}

std::vector<PbrRule> rules_from_json(const nlohmann::json& j) {
  // Accept a control-cycle report as well as a bare rule array.
  const auto& arr = j.is_object() && j.contains("rules") ? j["rules"] : j;
  if (!arr.is_array()) throw IoError("rule JSON must be an array or contain a \"rules\" array");
  std::vector<PbrRule> out;
  for (const auto& rj : arr) out.push_back(rule_from_json(rj));
  return out;
}

VertexId RoutingState::base_next_hop(VertexId at, int dst_lan) const {
  return base_.at(at).at(dst_lan);
}

bool RoutingState::adjacent(VertexId a, VertexId b) const {
  if (a < 0 || a >= static_cast<int>(adjacency_.size())) return false;
  return std::binary_search(adjacency_[a].begin(), adjacency_[a].end(), b);
}

VertexId RoutingState::next_hop(VertexId at, VertexId src_host, VertexId dst_host) const {
  if (at == dst_host) return -1;
  if (adjacent(at, dst_host)) return dst_host;
  for (const auto& rule : rules_[at])
    if (rule.src_host == src_host && rule.dst_host == dst_host) return rule.next_hop;
  return base_[at][topology_->lan[dst_host]];
}

std::vector<PbrRule> RoutingState::all_rules() const {
  std::vector<PbrRule> out;
  for (const auto& list : rules_) out.insert(out.end(), list.begin(), list.end());
  return out;
}

std::size_t RoutingState::rule_count() const {
  std::size_t n = 0;
  for (const auto& list : rules_) n += list.size();
  return n;
}

RoutingState RoutingState::without_rules() const {
  RoutingState copy = *this;
  for (auto& list : copy.rules_) list.clear();
  return copy;
}

RoutingState build_routing_tables(std::shared_ptr<const Topology> topology) {
  if (!topology) throw ContractError("routing tables need a topology");
  RoutingState state;
  state.topology_ = topology;
  state.adjacency_ = topology->adjacency();
  const int count = topology->vertex_count();
  const int lans = topology->lan_count();
  state.base_.assign(count, std::vector<VertexId>(lans, -1));
  state.rules_.assign(count, {});

  for (int lan = 0; lan < lans; ++lan) {
    // BFS from the LAN switch; hosts are leaves so never transit.
    const VertexId target = topology->switches[lan];
    std::vector<int> dist(count, -1);
    std::deque<VertexId> queue{target};
    dist[target] = 0;
    while (!queue.empty()) {
      const VertexId u = queue.front();
      queue.pop_front();
      for (VertexId w : state.adjacency_[u]) {
        if (dist[w] >= 0) continue;
        dist[w] = dist[u] + 1;
        if (topology->roles[w] != Role::Host) queue.push_back(w);
      }
    }
    for (VertexId v = 0; v < count; ++v) {
      if (v == target) continue;
      if (dist[v] < 0)
        throw RoutingError("vertex " + std::to_string(v) + " cannot reach LAN " +
                           std::to_string(lan));
      // Neighbours are sorted, so the first one on a shortest path is the lowest id.
      for (VertexId w : state.adjacency_[v]) {
        if (dist[w] == dist[v] - 1 && topology->roles[w] != Role::Host) {
          state.base_[v][lan] = w;
          break;
        }
      }
    }
  }
  return state;
}

RoutingState build_routing_tables(const Topology& topology) {
  return build_routing_tables(std::make_shared<const Topology>(topology));
}

RoutingState apply_pbr(const RoutingState& state, const std::vector<PbrRule>& rules) {
  RoutingState next = state;
  const int count = state.topology().vertex_count();
  for (const auto& rule : rules) {
    if (rule.router < 0 || rule.router >= count)
      throw RoutingError("rule router " + std::to_string(rule.router) + " does not exist");
    if (!state.adjacent(rule.router, rule.next_hop))
      throw RoutingError("rule at router " + std::to_string(rule.router) + " names next hop " +
                         std::to_string(rule.next_hop) + ", which is not adjacent");
    next.rules_[rule.router].push_back(rule);
  }
  return next;
}

std::vector<VertexId> trace_route(const RoutingState& state, VertexId src_host,
                                  VertexId dst_host) {
  const auto& topo = state.topology();
  const int count = topo.vertex_count();
  auto is_host = [&](VertexId v) { return v >= 0 && v < count && topo.roles[v] == Role::Host; };
  if (!is_host(src_host) || !is_host(dst_host))
    throw RoutingError("trace endpoints must be hosts (" + std::to_string(src_host) + ", " +
                       std::to_string(dst_host) + ")");
  std::vector<VertexId> path{src_host};
  std::vector<char> seen(count, 0);
  seen[src_host] = 1;
  VertexId at = src_host;
  while (at != dst_host) {
    const VertexId next = state.next_hop(at, src_host, dst_host);
    if (next < 0)
      throw RoutingError("no route from " + std::to_string(at) + " towards host " +
                         std::to_string(dst_host));
    if (seen[next])
      throw RoutingError("forwarding loop for (" + std::to_string(src_host) + ", " +
                         std::to_string(dst_host) + "): vertex " + std::to_string(next) +
                         " visited twice");
    seen[next] = 1;
    path.push_back(next);
    at = next;
  }
  return path;
}

bool reachable(const RoutingState& state, VertexId src_host, VertexId dst_host) noexcept {
  try {
    trace_route(state, src_host, dst_host);
    return true;
  } catch (...) {
    return false;
  }
}

namespace {

struct EdgeTable {
  std::map<std::pair<VertexId, VertexId>, int> index;
  std::vector<DirectedEdge> edges;
  std::vector<Bytes> budget;  // bytes drained per tick
  std::vector<double> bandwidth;
  std::vector<double> prop_delay;
};

EdgeTable make_edge_table(const Topology& topo, double tick) {
  EdgeTable t;
  for (const auto& l : topo.links) {
    for (auto [a, b] : {std::pair{l.u, l.v}, std::pair{l.v, l.u}}) {
      t.index[{a, b}] = static_cast<int>(t.edges.size());
      t.edges.push_back({a, b});
      t.budget.push_back(std::max<Bytes>(1, static_cast<Bytes>(std::floor(l.bandwidth * tick))));
      t.bandwidth.push_back(l.bandwidth);
      t.prop_delay.push_back(l.prop_delay);
    }
  }
  return t;
}

struct Flow {
  int id = 0;
  std::size_t task = 0;  // index into outcomes.tasks
  std::vector<int> path;  // directed edge indices
  Bytes size = 0;
  Bytes injected = 0;
  Bytes delivered = 0;
  Bytes fail_after = -1;  // injected-byte mark at which the attempt fails
  FailureCause fail_cause = FailureCause::HostDown;
  bool active = false;  // still injecting or waiting for delivery
  double last_arrival = 0.0;
};

struct Chunk {
  int eligible_tick = 0;
  int flow = 0;  // index into flows
  std::size_t hop = 0;
  Bytes bytes = 0;
};

std::string describe_rules(const RoutingState& state) {
  std::ostringstream os;
  os << "[";
  bool first = true;
  for (const auto& r : state.all_rules()) {
    os << (first ? "" : ", ") << "router " << r.router << " (" << r.src_host << "->"
       << r.dst_host << ") via " << r.next_hop;
    first = false;
  }
  os << "]";
  return os.str();
}

void validate(const Scenario& s) {
  if (!s.topology) throw ContractError("scenario has no topology");
  if (!(s.tick > 0.0)) throw ContractError("scenario tick must be positive");
  if (!(s.horizon > 0.0)) throw ContractError("scenario horizon must be positive");
  const auto& topo = *s.topology;
  for (const auto& t : s.schedule) {
    const int count = topo.vertex_count();
    if (t.src_host < 0 || t.src_host >= count || t.dst_host < 0 || t.dst_host >= count ||
        topo.roles[t.src_host] != Role::Host || topo.roles[t.dst_host] != Role::Host)
      throw ContractError("task " + std::to_string(t.id) + " endpoints are not hosts");
    if (topo.lan[t.src_host] == topo.lan[t.dst_host])
      throw ContractError("task " + std::to_string(t.id) + " does not cross LANs");
    if (t.size <= 0) throw ContractError("task " + std::to_string(t.id) + " has no bytes");
  }
}

}  // namespace

RunResult run(const Scenario& scenario, const RoutingState& state) {
  validate(scenario);
  const Topology& topo = *scenario.topology;
  const double tick = scenario.tick;
  const EdgeTable table = make_edge_table(topo, tick);
  const std::size_t edge_count = table.edges.size();

  RunResult result;
  auto& out = result.outcomes;
  std::vector<Flow> flows;
  std::vector<std::map<int, Bytes>> queues(edge_count);  // flow index -> backlog
  std::deque<Chunk> pending;
  std::mt19937_64 failure_rng(scenario.failure_seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  int next_task_id = 0;
  for (const auto& t : scenario.schedule) next_task_id = std::max(next_task_id, t.id + 1);

  std::vector<std::size_t> waiting(scenario.schedule.size());
  for (std::size_t i = 0; i < waiting.size(); ++i) waiting[i] = i;
  std::stable_sort(waiting.begin(), waiting.end(), [&](std::size_t a, std::size_t b) {
    return scenario.schedule[a].start_t < scenario.schedule[b].start_t;
  });
  std::size_t next_waiting = 0;
  std::vector<TransferTask> restarts;  // replacements to start next tick

  auto start_flow = [&](TransferTask task, bool may_fail) {
    std::vector<VertexId> path;
    try {
      path = trace_route(state, task.src_host, task.dst_host);
    } catch (const RoutingError& e) {
      throw SimulationError(std::string(e.what()) + "; installed rules " + describe_rules(state));
    }
    if (static_cast<int>(path.size()) - 1 > topo.vertex_count())
      throw SimulationError("hop count exceeds vertex count; installed rules " +
                            describe_rules(state));
    if (task.state == TaskState::Running) task = step_task(task, TaskEvent::Start);
    Flow f;
    f.id = task.id;
    f.size = task.size;
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
      f.path.push_back(table.index.at({path[i], path[i + 1]}));
    if (may_fail && scenario.failure_probability > 0.0 &&
        coin(failure_rng) < scenario.failure_probability) {
      f.fail_after = std::max<Bytes>(1, task.size / 2);
      f.fail_cause = coin(failure_rng) < 0.5 ? FailureCause::HostDown : FailureCause::PortDown;
    }
    f.active = true;
    f.task = out.tasks.size();
    out.tasks.push_back(task);
    flows.push_back(std::move(f));
  };

  const int max_ticks = static_cast<int>(std::ceil(scenario.horizon / tick - 1e-9));
  int k = 0;
  for (; k < max_ticks; ++k) {
    const double t0 = k * tick;

    for (auto& task : restarts) start_flow(task, false);
    restarts.clear();
    while (next_waiting < waiting.size() &&
           scenario.schedule[waiting[next_waiting]].start_t <= t0 + 1e-12) {
      start_flow(scenario.schedule[waiting[next_waiting]], true);
      ++next_waiting;
    }

    bool in_network = !pending.empty();
    for (const auto& q : queues) in_network = in_network || !q.empty();
    bool any_active = false;
    for (const auto& f : flows) any_active = any_active || f.active;
    if (!in_network && !any_active && next_waiting == waiting.size()) break;

    while (!pending.empty() && pending.front().eligible_tick <= k) {
      const Chunk c = pending.front();
      pending.pop_front();
      queues[flows[c.flow].path[c.hop]][c.flow] += c.bytes;
    }

    // Hosts inject at their access-link rate.
    for (std::size_t fi = 0; fi < flows.size(); ++fi) {
      Flow& f = flows[fi];
      if (!f.active || f.injected >= f.size) continue;
      Bytes limit = f.size;
      if (f.fail_after >= 0) limit = std::min(limit, f.fail_after);
      const Bytes amount = std::min(limit - f.injected, table.budget[f.path.front()]);
      if (amount <= 0) continue;
      f.injected += amount;
      out.bytes_injected += amount;
      queues[f.path.front()][static_cast<int>(fi)] += amount;
    }

    std::vector<Chunk> forwarded;
    for (std::size_t e = 0; e < edge_count; ++e) {
      auto& q = queues[e];
      if (q.empty()) continue;
      Bytes backlog = 0;
      for (const auto& [fi, b] : q) backlog += b;
      const Bytes budget = table.budget[e];
      std::vector<std::pair<int, Bytes>> drained;
      if (backlog <= budget) {
        for (const auto& [fi, b] : q) drained.emplace_back(fi, b);
      } else {
        // Backlog-proportional split, remainder by largest fractional part.
        Bytes assigned = 0;
        std::vector<std::pair<Bytes, int>> remainders;
        for (const auto& [fi, b] : q) {
          const __int128 scaled = static_cast<__int128>(b) * budget;
          const Bytes share = static_cast<Bytes>(scaled / backlog);
          drained.emplace_back(fi, share);
          remainders.emplace_back(static_cast<Bytes>(scaled % backlog), fi);
          assigned += share;
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        Bytes left = budget - assigned;
        for (const auto& [rem, fi] : remainders) {
          if (left == 0) break;
          for (auto& [dfi, amount] : drained) {
            if (dfi == fi && amount < q.at(fi)) {
              ++amount;
              --left;
              break;
            }
          }
        }
      }
      Bytes cumulative = 0;
      for (const auto& [fi, amount] : drained) {
        if (amount <= 0) continue;
        Flow& f = flows[fi];
        auto it = q.find(fi);
        it->second -= amount;
        if (it->second == 0) q.erase(it);
        cumulative += amount;
        const double arrival = t0 + static_cast<double>(cumulative) / table.bandwidth[e] +
                               table.prop_delay[e];
        const auto& task = out.tasks[f.task];
        result.events.push_back(
            {table.edges[e], arrival, amount, task.src_host, task.dst_host, f.id});
        const std::size_t hop =
            static_cast<std::size_t>(std::find(f.path.begin(), f.path.end(), static_cast<int>(e)) -
                                     f.path.begin());
        if (hop + 1 == f.path.size()) {
          f.delivered += amount;
          out.bytes_delivered += amount;
          f.last_arrival = std::max(f.last_arrival, arrival);
        } else {
          const int delay_ticks = 1 + static_cast<int>(std::floor(table.prop_delay[e] / tick));
          forwarded.push_back({k + delay_ticks, fi, hop + 1, amount});
        }
      }
    }
    for (const auto& c : forwarded) pending.push_back(c);
    std::stable_sort(pending.begin(), pending.end(), [](const Chunk& a, const Chunk& b) {
      return a.eligible_tick < b.eligible_tick;
    });

    const double t1 = t0 + tick;
    for (auto& f : flows) {
      if (!f.active) continue;
      auto& task = out.tasks[f.task];
      if (f.fail_after >= 0 && f.injected >= f.fail_after) {
        task = step_task(task, f.fail_cause == FailureCause::HostDown ? TaskEvent::HostFailure
                                                                      : TaskEvent::PortFailure);
        task.end_t = t1;
        out.records.push_back({task.id, task.src_host, task.dst_host, task.size,
                               t1 - task.start_t, 0.0, TaskState::Failed, task.failure_cause, t1});
        f.active = false;
        restarts.push_back(recover(task, next_task_id++, t1));
      } else if (f.delivered >= f.size) {
        task = step_task(task, TaskEvent::TransferDone);
        task.end_t = f.last_arrival;
        const double duration = task.end_t - task.start_t;
        out.records.push_back({task.id, task.src_host, task.dst_host, task.size, duration,
                               transfer_rate(task.size, duration), TaskState::Completed,
                               std::nullopt, task.end_t});
        f.active = false;
      }
    }
  }
  out.ticks = k;
  out.end_t = k * tick;

  for (auto& f : flows) {
    if (!f.active) continue;
    auto& task = out.tasks[f.task];
    task.state = TaskState::Failed;
    task.failure_cause = FailureCause::Timeout;
    task.end_t = out.end_t;
    out.records.push_back({task.id, task.src_host, task.dst_host, task.size,
                           out.end_t - task.start_t, 0.0, TaskState::Failed,
                           FailureCause::Timeout, out.end_t});
  }
  for (std::size_t i = next_waiting; i < waiting.size(); ++i) {
    TransferTask task = scenario.schedule[waiting[i]];
    task.state = TaskState::Failed;
    task.failure_cause = FailureCause::Timeout;
    out.tasks.push_back(task);
    out.records.push_back({task.id, task.src_host, task.dst_host, task.size, 0.0, 0.0,
                           TaskState::Failed, FailureCause::Timeout, out.end_t});
  }
  for (const auto& q : queues)
    for (const auto& [fi, b] : q) out.bytes_queued += b;
  for (const auto& c : pending) out.bytes_queued += c.bytes;
  return result;
}

void write_event_csv(std::ostream& out, const EventLog& log) {
  out << "flow_id,edge_u,edge_v,arrival_t,size_bytes,src_host,dst_host\n";
  for (const auto& r : log)
    out << r.flow_id << ',' << r.edge.u << ',' << r.edge.v << ',' << format_number(r.arrival_t)
        << ',' << r.size << ',' << r.src_host << ',' << r.dst_host << '\n';
}

EventLog read_event_csv(std::istream& in) {
  EventLog log;
  std::string line;
  if (!std::getline(in, line)) return log;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    PacketRecord r;
    char c1, c2, c3, c4, c5, c6;
    if (!(ls >> r.flow_id >> c1 >> r.edge.u >> c2 >> r.edge.v >> c3 >> r.arrival_t >> c4 >>
          r.size >> c5 >> r.src_host >> c6 >> r.dst_host))
      throw IoError("malformed event log line " + std::to_string(line_no));
    log.push_back(r);
  }
  return log;
}

}  // namespace ndt
