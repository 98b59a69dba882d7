// SPDX-License-Identifier: Apache-2.0
//
// Two-phase experiment protocol: phase 1 runs every scenario under
// shortest-path routing and collects labelled telemetry; phase 2 replays the
// same scenarios with the classifier driving PBR rules between iterations.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ndt/mpnn.hpp"
#include "ndt/netsim.hpp"
#include "ndt/reroute.hpp"
#include "ndt/topology.hpp"
#include "ndt/traffic.hpp"

namespace ndt {

enum class Phase { Baseline, MpnnPbr };
std::string_view to_string(Phase phase);

struct SimParams {
  double tick = 0.01;
  double horizon = 30.0;           // per-iteration simulation limit, seconds
  double window = 0.25;            // telemetry window = iteration period, seconds
  LinkDefaults links;
  DegreeBounds bounds;
  PairingPolicy pairing = PairingPolicy::Fixed;
  double failure_probability = 0.0;
};

struct ExperimentConfig {
  std::vector<GraphModel> models{GraphModel::ErdosRenyi, GraphModel::BarabasiAlbert,
                                 GraphModel::WattsStrogatz};
  std::vector<int> sizes{5, 10};
  int iterations = 8;
  std::vector<std::uint64_t> seeds{1};        // evaluation scenarios
  std::vector<std::uint64_t> train_seeds;     // empty: train on `seeds`
  TrainConfig hyper;
  SimParams sim;
  std::filesystem::path out_dir = "ndt-out";
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);

struct ScenarioKey {
  std::string model;
  int n = 0;
  std::uint64_t seed = 0;
  int iteration = 0;
  auto operator<=>(const ScenarioKey&) const = default;
};

struct ReportRow {
  ScenarioKey key;
  double mean_delay = 0.0;          // mean per-transfer completion time, s
  double p95_delay = 0.0;
  double mean_edge_delay = 0.0;     // mean inter-arrival on active core edges, s
  double mean_congestion = 0.0;     // mean C over core edges carrying bytes, %
  double max_congestion = 0.0;
  double total_cost = 0.0;
  double transfer_rate = 0.0;       // mean per-transfer rate, B/s
  double throughput = 0.0;          // delivered bytes / makespan, B/s
  double vertex_utilization = 0.0;  // % of P routers forwarding bytes
  double edge_utilization = 0.0;    // % of directed core edges carrying bytes
  int rules_active = 0;
  int rules_dropped = 0;
  int completed = 0;
  int failed = 0;
};

/// Metric accessors in export order.
const std::vector<std::pair<std::string, double ReportRow::*>>& report_metrics();

struct ExperimentReport {
  Phase phase = Phase::Baseline;
  std::vector<ReportRow> rows;  // ordered by key
};

/// Scenario construction shared by both phases.
struct ScenarioSetup {
  std::shared_ptr<const Topology> topology;
  RoutingState base;
  std::vector<TransferTask> schedule;
};
ScenarioSetup make_scenario(GraphModel model, int n, std::uint64_t seed, int iterations,
                            const SimParams& sim);

/// Per-iteration observation passed to callers that want raw telemetry.
struct IterationResult {
  RunResult run;
  WindowMetrics metrics;
  ReportRow row;
};

/// Simulates one iteration's tasks (rebased to t = 0) under `state` and
/// checks byte conservation.
IterationResult run_iteration(const ScenarioSetup& setup, int iteration, const RoutingState& state,
                              const SimParams& sim, const ScenarioKey& key);

struct PhaseOneResult {
  TrainingSet dataset;
  ExperimentReport report;
};

PhaseOneResult run_phase1(const ExperimentConfig& config);
PhaseOneResult run_phase1(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds);

/// Maps a raw feature bundle to one class per directed core edge.
using EdgeClassifier = std::function<std::vector<CongestionClass>(const FeatureBundle&)>;

ExperimentReport run_phase2(const ExperimentConfig& config, const ModelParams& params);
ExperimentReport run_phase2(const ExperimentConfig& config, const EdgeClassifier& classifier);

/// Phase-2 loop for a single prepared scenario; used by both overloads.
std::vector<IterationResult> run_closed_loop(const ScenarioSetup& setup, int iterations,
                                             const SimParams& sim, const EdgeClassifier& classifier,
                                             const ScenarioKey& key_prefix);

struct MetricDelta {
  double baseline = 0.0;
  double optimized = 0.0;
  double delta = 0.0;      // optimized - baseline
  double delta_pct = 0.0;  // 100 * delta / baseline; 0 when both are 0
};

struct ComparisonSummary {
  std::map<ScenarioKey, std::map<std::string, MetricDelta>> per_key;
  std::map<std::string, std::map<std::string, MetricDelta>> per_model;
  std::map<int, std::map<std::string, MetricDelta>> per_size;
  std::map<std::string, MetricDelta> overall;
};

/// Throws Error listing unmatched keys when the reports differ in keys.
ComparisonSummary compare(const ExperimentReport& baseline, const ExperimentReport& optimized);
MetricDelta metric_delta(double baseline, double optimized);

nlohmann::json to_json(const ComparisonSummary& summary);

/// One CSV per metric (model,n,seed,iteration,baseline,optimized) plus
/// summary.json. `optimized` may be empty.
void export_report(const ExperimentReport& baseline, const ExperimentReport* optimized,
                   const std::filesystem::path& dir);

void write_report_csv(std::ostream& out, const ExperimentReport& report);
ExperimentReport read_report_csv(std::istream& in);

}  // namespace ndt
