// SPDX-License-Identifier: Apache-2.0
#include "ndt/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "ndt/error.hpp"
#include "ndt/format.hpp"

namespace ndt {

std::optional<double> edge_delay(std::span<const double> sorted_arrivals) {
  if (sorted_arrivals.size() < 2) return std::nullopt;
  double sum = 0.0;
  for (std::size_t i = 1; i < sorted_arrivals.size(); ++i)
    sum += sorted_arrivals[i] - sorted_arrivals[i - 1];
  return sum / static_cast<double>(sorted_arrivals.size() - 1);
}

std::optional<double> vertex_delay(std::optional<double> first_ingress_t,
                                   std::optional<double> last_egress_t) {
  if (!first_ingress_t || !last_egress_t) return std::nullopt;
  if (*last_egress_t < *first_ingress_t)
    throw ContractError("egress activity precedes ingress activity; window misaligned");
  return *last_egress_t - *first_ingress_t;
}

std::optional<double> throughput(double bytes, double interval) {
  if (!(interval > 0.0)) return std::nullopt;
  return bytes / interval;
}

std::optional<CongestionReading> congestion(double throughput, double t_max) {
  if (!(t_max > 0.0)) return std::nullopt;
  if (throughput > t_max) return CongestionReading{100.0, true};
  return CongestionReading{std::max(0.0, throughput / t_max * 100.0), false};
}

double edge_cost(double delay_norm, double congestion_norm) {
  return 0.5 * delay_norm + 0.5 * congestion_norm;
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / span;
  return out;
}

std::vector<DirectedEdge> directed_core_edges(const CoreGraph& core) {
  std::vector<DirectedEdge> out;
  out.reserve(core.edges.size() * 2);
  for (const auto& e : core.edges) {
    out.push_back({e.u, e.v});
    out.push_back({e.v, e.u});
  }
  return out;
}

WindowMetrics compute_metrics(const EventLog& log, const Topology& topology, Window window) {
  if (!(window.length() > 0.0)) throw ContractError("telemetry window must have positive length");
  WindowMetrics wm;
  wm.window = window;

  const auto core_edges = directed_core_edges(topology.core);
  std::map<DirectedEdge, std::size_t> edge_slot;
  for (std::size_t i = 0; i < core_edges.size(); ++i) edge_slot[core_edges[i]] = i;

  std::vector<std::vector<double>> arrivals(core_edges.size());
  std::vector<Bytes> edge_bytes(core_edges.size(), 0);
  const int p_count = topology.core.n;
  std::vector<std::optional<double>> first_in(p_count), last_out(p_count);
  std::vector<Bytes> vertex_bytes(p_count, 0);

  for (const auto& r : log) {
    if (!window.contains(r.arrival_t)) continue;
    if (auto it = edge_slot.find(r.edge); it != edge_slot.end()) {
      arrivals[it->second].push_back(r.arrival_t);
      edge_bytes[it->second] += r.size;
    }
    if (r.edge.v >= 0 && r.edge.v < p_count) {
      auto& f = first_in[r.edge.v];
      if (!f || r.arrival_t < *f) f = r.arrival_t;
      vertex_bytes[r.edge.v] += r.size;
    }
    if (r.edge.u >= 0 && r.edge.u < p_count) {
      auto& l = last_out[r.edge.u];
      if (!l || r.arrival_t > *l) l = r.arrival_t;
      vertex_bytes[r.edge.u] += r.size;
    }
  }

  const double interval = window.length();
  std::vector<double> delays(core_edges.size(), 0.0), congestions(core_edges.size(), 0.0);
  for (std::size_t i = 0; i < core_edges.size(); ++i) {
    EdgeMetrics em;
    em.edge = core_edges[i];
    em.window = window;
    auto& times = arrivals[i];
    std::sort(times.begin(), times.end());
    if (auto d = edge_delay(times)) {
      em.delay = *d;
      em.has_delay = true;
    }
    em.data_size = edge_bytes[i];
    em.throughput = throughput(static_cast<double>(em.data_size), interval).value_or(0.0);
    const auto link = topology.find_link(em.edge.u, em.edge.v);
    const double capacity = link ? topology.links[*link].bandwidth : 0.0;
    if (auto c = congestion(em.throughput, capacity)) {
      em.congestion = c->percent;
      if (c->clamped) ++wm.clamped;
    }
    delays[i] = em.delay;
    congestions[i] = em.congestion;
    wm.bytes_drained += em.data_size;
    wm.edges.push_back(em);
  }
  const auto d_norm = min_max_normalize(delays);
  const auto c_norm = min_max_normalize(congestions);
  for (std::size_t i = 0; i < wm.edges.size(); ++i) {
    wm.edges[i].cost = edge_cost(d_norm[i], c_norm[i]);
    wm.total_cost += wm.edges[i].cost;
  }

  double vertex_t_max = 0.0;
  for (VertexId v = 0; v < p_count; ++v) {
    VertexMetrics vm;
    vm.vertex = v;
    vm.window = window;
    vm.data_size = vertex_bytes[v];
    std::optional<double> d;
    if (first_in[v] && last_out[v] && *last_out[v] >= *first_in[v])
      d = vertex_delay(first_in[v], last_out[v]);
    if (d) {
      vm.delay = *d;
      vm.has_delay = true;
      vm.throughput = throughput(static_cast<double>(vm.data_size), *d).value_or(0.0);
    }
    vertex_t_max = std::max(vertex_t_max, vm.throughput);
    wm.vertices.push_back(vm);
  }
  for (auto& vm : wm.vertices)
    if (auto c = congestion(vm.throughput, vertex_t_max)) vm.congestion = c->percent;
  return wm;
}

FeatureBundle features_from_metrics(const WindowMetrics& metrics) {
  FeatureBundle b;
  for (const auto& vm : metrics.vertices)
    b.vertex_features.push_back({vm.delay, vm.congestion, vm.throughput});
  for (const auto& em : metrics.edges) {
    b.edge_features.push_back({em.delay, em.congestion, em.throughput});
    b.edge_index.push_back(em.edge);
  }
  return b;
}

FeatureBundle build_features(const EventLog& log, const Topology& topology, Window window) {
  return features_from_metrics(compute_metrics(log, topology, window));
}

namespace {

void fit_columns(const std::vector<const std::vector<FeatureRow>*>& tables, FeatureRow& mean,
                 FeatureRow& stddev) {
  std::size_t count = 0;
  FeatureRow sum{}, sq{};
  for (const auto* rows : tables)
    for (const auto& row : *rows) {
      ++count;
      for (std::size_t c = 0; c < kFeatureWidth; ++c) sum[c] += row[c];
    }
  if (count == 0) return;
  for (std::size_t c = 0; c < kFeatureWidth; ++c) mean[c] = sum[c] / count;
  for (const auto* rows : tables)
    for (const auto& row : *rows)
      for (std::size_t c = 0; c < kFeatureWidth; ++c) sq[c] += (row[c] - mean[c]) * (row[c] - mean[c]);
  for (std::size_t c = 0; c < kFeatureWidth; ++c) {
    const double s = std::sqrt(sq[c] / count);
    stddev[c] = s > 0.0 ? s : 1.0;
  }
}

}  // namespace

FeatureScaler FeatureScaler::fit(std::span<const FeatureBundle> bundles) {
  FeatureScaler s;
  std::vector<const std::vector<FeatureRow>*> v, e;
  for (const auto& b : bundles) {
    v.push_back(&b.vertex_features);
    e.push_back(&b.edge_features);
  }
  fit_columns(v, s.vertex_mean, s.vertex_std);
  fit_columns(e, s.edge_mean, s.edge_std);
  return s;
}

FeatureBundle FeatureScaler::transform(const FeatureBundle& bundle) const {
  FeatureBundle out = bundle;
  for (auto& row : out.vertex_features)
    for (std::size_t c = 0; c < kFeatureWidth; ++c) row[c] = (row[c] - vertex_mean[c]) / vertex_std[c];
  for (auto& row : out.edge_features)
    for (std::size_t c = 0; c < kFeatureWidth; ++c) row[c] = (row[c] - edge_mean[c]) / edge_std[c];
  return out;
}

nlohmann::json to_json(const FeatureBundle& bundle) {
  nlohmann::json j;
  j["x_v"] = bundle.vertex_features;
  j["x_e"] = bundle.edge_features;
  std::vector<int> src, dst;
  for (const auto& e : bundle.edge_index) {
    src.push_back(e.u);
    dst.push_back(e.v);
  }
  j["edge_index"] = {src, dst};
  return j;
}

FeatureBundle bundle_from_json(const nlohmann::json& j) {
  try {
    FeatureBundle b;
    b.vertex_features = j.at("x_v").get<std::vector<FeatureRow>>();
    b.edge_features = j.at("x_e").get<std::vector<FeatureRow>>();
    const auto& ei = j.at("edge_index");
    const auto src = ei.at(0).get<std::vector<int>>();
    const auto dst = ei.at(1).get<std::vector<int>>();
    if (src.size() != dst.size()) throw IoError("edge_index rows differ in length");
    for (std::size_t i = 0; i < src.size(); ++i) b.edge_index.push_back({src[i], dst[i]});
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed feature bundle: ") + e.what());
  }
}

nlohmann::json to_json(const FeatureScaler& s) {
  return {{"vertex_mean", s.vertex_mean},
          {"vertex_std", s.vertex_std},
          {"edge_mean", s.edge_mean},
          {"edge_std", s.edge_std}};
}

FeatureScaler scaler_from_json(const nlohmann::json& j) {
  FeatureScaler s;
  s.vertex_mean = j.at("vertex_mean").get<FeatureRow>();
  s.vertex_std = j.at("vertex_std").get<FeatureRow>();
  s.edge_mean = j.at("edge_mean").get<FeatureRow>();
  s.edge_std = j.at("edge_std").get<FeatureRow>();
  return s;
}

void write_metrics_csv(std::ostream& out, const WindowMetrics& m, bool header) {
  if (header) out << "kind,id,u,v,t0,t1,D,T,C,S,W\n";
  const std::string t0 = format_number(m.window.t0), t1 = format_number(m.window.t1);
  for (std::size_t i = 0; i < m.edges.size(); ++i) {
    const auto& e = m.edges[i];
    out << "edge," << i << ',' << e.edge.u << ',' << e.edge.v << ',' << t0 << ',' << t1 << ','
        << format_number(e.delay) << ',' << format_number(e.throughput) << ','
        << format_number(e.congestion) << ',' << e.data_size << ',' << format_number(e.cost)
        << '\n';
  }
  for (const auto& v : m.vertices)
    out << "vertex," << v.vertex << ',' << v.vertex << ',' << v.vertex << ',' << t0 << ',' << t1
        << ',' << format_number(v.delay) << ',' << format_number(v.throughput) << ','
        << format_number(v.congestion) << ',' << v.data_size << ",\n";
}

}  // namespace ndt
