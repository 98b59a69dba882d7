// SPDX-License-Identifier: Apache-2.0
//
// Per-window edge and vertex metrics (delay, throughput, congestion, data
// size, cost) computed from a simulator event log, and the feature bundle
// fed to the congestion classifier.
#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "ndt/netsim.hpp"
#include "ndt/topology.hpp"

namespace ndt {

struct Window {
  double t0 = 0.0;
  double t1 = 0.0;
  double length() const { return t1 - t0; }
  bool contains(double t) const { return t >= t0 && t < t1; }
};

/// Mean gap between successive arrivals; empty with fewer than two.
std::optional<double> edge_delay(std::span<const double> sorted_arrivals);
/// last_egress - first_ingress. Throws ContractError if egress precedes ingress.
std::optional<double> vertex_delay(std::optional<double> first_ingress_t,
                                   std::optional<double> last_egress_t);
std::optional<double> throughput(double bytes, double interval);

struct CongestionReading {
  double percent = 0.0;
  bool clamped = false;  // throughput exceeded the ceiling
};
std::optional<CongestionReading> congestion(double throughput, double t_max);

double edge_cost(double delay_norm, double congestion_norm);
/// Rescales to [0, 1]; a constant population maps to all zeros.
std::vector<double> min_max_normalize(std::span<const double> values);

struct EdgeMetrics {
  DirectedEdge edge;
  Window window;
  double delay = 0.0;  // 0 when idle
  bool has_delay = false;
  double throughput = 0.0;
  double congestion = 0.0;
  Bytes data_size = 0;
  double cost = 0.0;
};

struct VertexMetrics {
  VertexId vertex = -1;
  Window window;
  double delay = 0.0;
  bool has_delay = false;
  double throughput = 0.0;
  double congestion = 0.0;
  Bytes data_size = 0;
};

struct WindowMetrics {
  Window window;
  std::vector<EdgeMetrics> edges;       // directed core edges, feature order
  std::vector<VertexMetrics> vertices;  // P routers
  double total_cost = 0.0;
  int clamped = 0;                      // congestion readings clamped to 100
  Bytes bytes_drained = 0;              // over directed core edges
};

/// Directed core edges in feature order: each undirected core edge (u < v)
/// contributes (u, v) then (v, u).
std::vector<DirectedEdge> directed_core_edges(const CoreGraph& core);

WindowMetrics compute_metrics(const EventLog& log, const Topology& topology, Window window);

inline constexpr std::size_t kFeatureWidth = 3;  // [delay, congestion, throughput]
using FeatureRow = std::array<double, kFeatureWidth>;

struct FeatureBundle {
  std::vector<FeatureRow> vertex_features;  // one row per vertex
  std::vector<FeatureRow> edge_features;    // one row per directed edge
  std::vector<DirectedEdge> edge_index;     // (source, target) per row

  int vertex_count() const { return static_cast<int>(vertex_features.size()); }
  int edge_count() const { return static_cast<int>(edge_features.size()); }
};

FeatureBundle features_from_metrics(const WindowMetrics& metrics);
FeatureBundle build_features(const EventLog& log, const Topology& topology, Window window);

/// Column-wise z-score statistics fitted over a collection of bundles.
struct FeatureScaler {
  FeatureRow vertex_mean{}, vertex_std{1.0, 1.0, 1.0};
  FeatureRow edge_mean{}, edge_std{1.0, 1.0, 1.0};

  static FeatureScaler fit(std::span<const FeatureBundle> bundles);
  FeatureBundle transform(const FeatureBundle& bundle) const;
};

nlohmann::json to_json(const FeatureBundle& bundle);
FeatureBundle bundle_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FeatureScaler& scaler);
FeatureScaler scaler_from_json(const nlohmann::json& j);

/// kind,id,u,v,t0,t1,D,T,C,S,W
void write_metrics_csv(std::ostream& out, const WindowMetrics& metrics, bool header = true);

}  // namespace ndt
