// SPDX-License-Identifier: Apache-2.0
#include "ndt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ndt/error.hpp"
#include "ndt/format.hpp"

namespace ndt {

std::string_view to_string(Phase phase) {
  return phase == Phase::Baseline ? "baseline" : "mpnn_pbr";
}

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 step keeps derived seeds decorrelated.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

ReportRow summarize(const ScenarioKey& key, const RunResult& run, const WindowMetrics& wm) {
  ReportRow row;
  row.key = key;
  std::vector<double> durations;
  double rate_sum = 0.0, makespan = 0.0;
  for (const auto& r : run.outcomes.records) {
    if (r.status == TaskState::Completed) {
      durations.push_back(r.duration);
      rate_sum += r.rate;
      makespan = std::max(makespan, r.timestamp);
      ++row.completed;
    } else {
      ++row.failed;
    }
  }
  if (!durations.empty()) {
    double sum = 0.0;
    for (double d : durations) sum += d;
    row.mean_delay = sum / static_cast<double>(durations.size());
    row.transfer_rate = rate_sum / static_cast<double>(durations.size());
    row.p95_delay = percentile(durations, 0.95);
  }
  if (makespan > 0.0)
    row.throughput = static_cast<double>(run.outcomes.bytes_delivered) / makespan;

  int active = 0, with_delay = 0;
  double congestion_sum = 0.0, delay_sum = 0.0;
  for (const auto& e : wm.edges) {
    if (e.data_size <= 0) continue;
    ++active;
    congestion_sum += e.congestion;
    row.max_congestion = std::max(row.max_congestion, e.congestion);
    if (e.has_delay) {
      ++with_delay;
      delay_sum += e.delay;
    }
  }
  if (active > 0) row.mean_congestion = congestion_sum / active;
  if (with_delay > 0) row.mean_edge_delay = delay_sum / with_delay;
  if (!wm.edges.empty()) row.edge_utilization = 100.0 * active / static_cast<double>(wm.edges.size());
  int busy_vertices = 0;
  for (const auto& v : wm.vertices) busy_vertices += v.data_size > 0;
  if (!wm.vertices.empty())
    row.vertex_utilization = 100.0 * busy_vertices / static_cast<double>(wm.vertices.size());
  row.total_cost = wm.total_cost;
  return row;
}

}  // namespace

const std::vector<std::pair<std::string, double ReportRow::*>>& report_metrics() {
  static const std::vector<std::pair<std::string, double ReportRow::*>> metrics{
      {"delay", &ReportRow::mean_delay},
      {"delay_p95", &ReportRow::p95_delay},
      {"edge_delay", &ReportRow::mean_edge_delay},
      {"congestion", &ReportRow::mean_congestion},
      {"congestion_max", &ReportRow::max_congestion},
      {"cost", &ReportRow::total_cost},
      {"transfer_rate", &ReportRow::transfer_rate},
      {"throughput", &ReportRow::throughput},
      {"vertex_utilization", &ReportRow::vertex_utilization},
      {"edge_utilization", &ReportRow::edge_utilization},
  };
  return metrics;
}

ScenarioSetup make_scenario(GraphModel model, int n, std::uint64_t seed, int iterations,
                            const SimParams& sim) {
  ScenarioSetup setup;
  const CoreGraph core = generate(model, n, default_params(model, n), sim.bounds, seed);
  setup.topology = std::make_shared<const Topology>(assign_roles(core, seed, sim.links));
  setup.base = build_routing_tables(setup.topology);
  setup.schedule = build_schedule(*setup.topology, iterations, mix(seed, 1), sim.pairing);
  return setup;
}

IterationResult run_iteration(const ScenarioSetup& setup, int iteration, const RoutingState& state,
                              const SimParams& sim, const ScenarioKey& key) {
  Scenario scenario;
  scenario.topology = setup.topology;
  scenario.tick = sim.tick;
  scenario.horizon = sim.horizon;
  scenario.failure_probability = sim.failure_probability;
  scenario.failure_seed = mix(key.seed, 100 + static_cast<std::uint64_t>(iteration));
  for (auto task : setup.schedule) {
    if (task.iteration != iteration) continue;
    task.start_t = 0.0;
    scenario.schedule.push_back(task);
  }
  IterationResult result;
  result.run = run(scenario, state);
  const auto& o = result.run.outcomes;
  if (o.bytes_injected != o.bytes_delivered + o.bytes_queued)
    throw SimulationError("byte conservation violated in " + key.model + " n=" +
                          std::to_string(key.n) + " seed=" + std::to_string(key.seed) +
                          " iteration=" + std::to_string(iteration));
  result.metrics = compute_metrics(result.run.events, *setup.topology, Window{0.0, sim.window});
  result.row = summarize(key, result.run, result.metrics);
  result.row.key.iteration = iteration;
  return result;
}

PhaseOneResult run_phase1(const ExperimentConfig& config) {
  return run_phase1(config, config.seeds);
}

PhaseOneResult run_phase1(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds) {
  PhaseOneResult out;
  out.report.phase = Phase::Baseline;
  if (config.iterations <= 0) return out;
  for (auto model : config.models)
    for (int n : config.sizes)
      for (auto seed : seeds) {
        ScenarioKey key{std::string(to_string(model)), n, seed, 0};
        ScenarioSetup setup;
        try {
          setup = make_scenario(model, n, seed, config.iterations, config.sim);
          for (int it = 0; it < config.iterations; ++it) {
            auto result = run_iteration(setup, it, setup.base, config.sim, key);
            TrainingSample sample = make_sample(result.metrics);
            sample.model = key.model;
            sample.n = n;
            sample.seed = seed;
            sample.iteration = it;
            out.dataset.samples.push_back(std::move(sample));
            out.report.rows.push_back(result.row);
          }
        } catch (const Error& e) {
          throw Error("phase 1, " + key.model + " n=" + std::to_string(n) + " seed=" +
                      std::to_string(seed) + ": " + e.what());
        }
      }
  std::sort(out.report.rows.begin(), out.report.rows.end(),
            [](const ReportRow& a, const ReportRow& b) { return a.key < b.key; });
  return out;
}

std::vector<IterationResult> run_closed_loop(const ScenarioSetup& setup, int iterations,
                                             const SimParams& sim, const EdgeClassifier& classifier,
                                             const ScenarioKey& key_prefix) {
  std::vector<IterationResult> results;
  std::vector<PbrRule> rules;
  for (int it = 0; it < iterations; ++it) {
    const RoutingState state = apply_pbr(setup.base, rules);
    auto result = run_iteration(setup, it, state, sim, key_prefix);
    result.row.rules_active = static_cast<int>(rules.size());
    // Only model outputs reach the control loop; ground-truth labels never do.
    const auto classes = classifier(features_from_metrics(result.metrics));
    const CycleReport cycle =
        control_cycle(setup.base, rules, classes, result.run.events, result.metrics.window);
    result.row.rules_dropped = cycle.dropped;
    rules = cycle.rules;
    results.push_back(std::move(result));
  }
  return results;
}

ExperimentReport run_phase2(const ExperimentConfig& config, const ModelParams& params) {
  return run_phase2(config, [&params](const FeatureBundle& raw) { return classify(params, raw); });
}

ExperimentReport run_phase2(const ExperimentConfig& config, const EdgeClassifier& classifier) {
  ExperimentReport report;
  report.phase = Phase::MpnnPbr;
  if (config.iterations <= 0) return report;
  for (auto model : config.models)
    for (int n : config.sizes)
      for (auto seed : config.seeds) {
        ScenarioKey key{std::string(to_string(model)), n, seed, 0};
        try {
          const auto setup = make_scenario(model, n, seed, config.iterations, config.sim);
          for (auto& r : run_closed_loop(setup, config.iterations, config.sim, classifier, key))
            report.rows.push_back(r.row);
        } catch (const Error& e) {
          throw Error("phase 2, " + key.model + " n=" + std::to_string(n) + " seed=" +
                      std::to_string(seed) + ": " + e.what());
        }
      }
  std::sort(report.rows.begin(), report.rows.end(),
            [](const ReportRow& a, const ReportRow& b) { return a.key < b.key; });
  return report;
}

MetricDelta metric_delta(double baseline, double optimized) {
  MetricDelta d{baseline, optimized, optimized - baseline, 0.0};
  if (baseline != 0.0) d.delta_pct = 100.0 * (optimized - baseline) / baseline;
  return d;
}

namespace {

std::string describe(const ScenarioKey& k) {
  return k.model + "/n=" + std::to_string(k.n) + "/seed=" + std::to_string(k.seed) + "/it=" +
         std::to_string(k.iteration);
}

}  // namespace

ComparisonSummary compare(const ExperimentReport& baseline, const ExperimentReport& optimized) {
  std::map<ScenarioKey, const ReportRow*> base, opt;
  for (const auto& r : baseline.rows) base[r.key] = &r;
  for (const auto& r : optimized.rows) opt[r.key] = &r;
  std::vector<std::string> unmatched;
  for (const auto& [k, r] : base)
    if (!opt.count(k)) unmatched.push_back("baseline-only " + describe(k));
  for (const auto& [k, r] : opt)
    if (!base.count(k)) unmatched.push_back("optimized-only " + describe(k));
  if (!unmatched.empty()) {
    std::string msg = "reports cover different scenarios:";
    for (const auto& u : unmatched) msg += " " + u + ";";
    throw Error(msg);
  }

  ComparisonSummary s;
  struct Sums {
    double base = 0.0, opt = 0.0;
    int count = 0;
  };
  std::map<std::string, std::map<std::string, Sums>> by_model;
  std::map<int, std::map<std::string, Sums>> by_size;
  std::map<std::string, Sums> overall;
  for (const auto& [key, b] : base) {
    const ReportRow* o = opt.at(key);
    for (const auto& [name, member] : report_metrics()) {
      s.per_key[key][name] = metric_delta(b->*member, o->*member);
      for (Sums* sums : {&by_model[key.model][name], &by_size[key.n][name], &overall[name]}) {
        sums->base += b->*member;
        sums->opt += o->*member;
        ++sums->count;
      }
    }
  }
  auto mean_delta = [](const Sums& x) {
    return x.count ? metric_delta(x.base / x.count, x.opt / x.count) : MetricDelta{};
  };
  for (const auto& [m, metrics] : by_model)
    for (const auto& [name, sums] : metrics) s.per_model[m][name] = mean_delta(sums);
  for (const auto& [n, metrics] : by_size)
    for (const auto& [name, sums] : metrics) s.per_size[n][name] = mean_delta(sums);
  for (const auto& [name, sums] : overall) s.overall[name] = mean_delta(sums);
  return s;
}

nlohmann::json to_json(const ComparisonSummary& s) {
  auto block = [](const std::map<std::string, MetricDelta>& metrics) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, d] : metrics)
      j[name] = {{"baseline", d.baseline},
                 {"optimized", d.optimized},
                 {"delta", d.delta},
                 {"delta_pct", d.delta_pct}};
    return j;
  };
  nlohmann::json j;
  j["overall"] = block(s.overall);
  for (const auto& [m, metrics] : s.per_model) j["per_model"][m] = block(metrics);
  for (const auto& [n, metrics] : s.per_size) j["per_size"][std::to_string(n)] = block(metrics);
  j["scenario_count"] = s.per_key.size();
  return j;
}

namespace {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

void export_report(const ExperimentReport& baseline, const ExperimentReport* optimized,
                   const std::filesystem::path& dir) {
  ensure_dir(dir);
  std::map<ScenarioKey, const ReportRow*> opt;
  if (optimized) {
    compare(baseline, *optimized);  // validates keys
    for (const auto& r : optimized->rows) opt[r.key] = &r;
  }
  std::vector<const ReportRow*> rows;
  for (const auto& r : baseline.rows) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ReportRow* a, const ReportRow* b) { return a->key < b->key; });
  for (const auto& [name, member] : report_metrics()) {
    auto out = open_out(dir / (name + ".csv"));
    out << "model,n,seed,iteration,baseline,optimized\n";
    for (const ReportRow* r : rows) {
      out << r->key.model << ',' << r->key.n << ',' << r->key.seed << ',' << r->key.iteration
          << ',' << format_number(r->*member) << ',';
      if (optimized) out << format_number(opt.at(r->key)->*member);
      out << '\n';
    }
  }
  nlohmann::json summary;
  summary["rows"] = baseline.rows.size();
  if (optimized) {
    summary["comparison"] = to_json(compare(baseline, *optimized));
  } else {
    nlohmann::json means = nlohmann::json::object();
    for (const auto& [name, member] : report_metrics()) {
      double sum = 0.0;
      for (const auto& r : baseline.rows) sum += r.*member;
      means[name] = baseline.rows.empty() ? 0.0 : sum / static_cast<double>(baseline.rows.size());
    }
    summary["baseline_means"] = means;
  }
  auto out = open_out(dir / "summary.json");
  out << summary.dump(2) << '\n';
}

void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  out << "phase,model,n,seed,iteration";
  for (const auto& [name, member] : report_metrics()) out << ',' << name;
  out << ",rules_active,rules_dropped,completed,failed\n";
  for (const auto& r : report.rows) {
    out << to_string(report.phase) << ',' << r.key.model << ',' << r.key.n << ',' << r.key.seed
        << ',' << r.key.iteration;
    for (const auto& [name, member] : report_metrics()) out << ',' << format_number(r.*member);
    out << ',' << r.rules_active << ',' << r.rules_dropped << ',' << r.completed << ','
        << r.failed << '\n';
  }
}

ExperimentReport read_report_csv(std::istream& in) {
  ExperimentReport report;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty report file");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::size_t expected = 5 + report_metrics().size() + 4;
    if (cells.size() != expected)
      throw IoError("report line " + std::to_string(line_no) + " has " +
                    std::to_string(cells.size()) + " cells, expected " + std::to_string(expected));
    try {
      report.phase = cells[0] == "baseline" ? Phase::Baseline : Phase::MpnnPbr;
      ReportRow r;
      r.key = {cells[1], std::stoi(cells[2]), std::stoull(cells[3]), std::stoi(cells[4])};
      std::size_t c = 5;
      for (const auto& [name, member] : report_metrics()) r.*member = std::stod(cells[c++]);
      r.rules_active = std::stoi(cells[c++]);
      r.rules_dropped = std::stoi(cells[c++]);
      r.completed = std::stoi(cells[c++]);
      r.failed = std::stoi(cells[c++]);
      report.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw IoError("report line " + std::to_string(line_no) + " has a malformed number");
    }
  }
  return report;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig c;
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j["models"]) c.models.push_back(parse_graph_model(m.get<std::string>()));
    }
    if (j.contains("sizes")) c.sizes = j["sizes"].get<std::vector<int>>();
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("train_seeds")) c.train_seeds = j["train_seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("hyper")) {
      const auto& h = j["hyper"];
      c.hyper.lr = h.value("lr", c.hyper.lr);
      c.hyper.epochs = h.value("epochs", c.hyper.epochs);
      c.hyper.batch = h.value("batch", c.hyper.batch);
      c.hyper.seed = h.value("seed", c.hyper.seed);
      c.hyper.layers = h.value("layers", c.hyper.layers);
      c.hyper.validation_fraction = h.value("validation_fraction", c.hyper.validation_fraction);
      c.hyper.class_weighting = h.value("class_weighting", c.hyper.class_weighting);
      const std::string opt = h.value("optimizer", std::string(
          c.hyper.optimizer == Optimizer::Adam ? "adam" : "sgd"));
      if (opt != "sgd" && opt != "adam") throw ContractError("optimizer must be sgd or adam");
      c.hyper.optimizer = opt == "adam" ? Optimizer::Adam : Optimizer::Sgd;
    }
    if (j.contains("sim")) {
      const auto& s = j["sim"];
      c.sim.tick = s.value("tick", c.sim.tick);
      c.sim.horizon = s.value("horizon", c.sim.horizon);
      c.sim.window = s.value("window", c.sim.window);
      c.sim.links.core_bandwidth = s.value("core_bandwidth", c.sim.links.core_bandwidth);
      c.sim.links.access_bandwidth = s.value("access_bandwidth", c.sim.links.access_bandwidth);
      c.sim.links.prop_delay = s.value("prop_delay", c.sim.links.prop_delay);
      c.sim.failure_probability = s.value("failure_probability", c.sim.failure_probability);
      const std::string pairing = s.value("pairing", std::string("fixed"));
      if (pairing != "fixed" && pairing != "per_iteration")
        throw ContractError("pairing must be fixed or per_iteration");
      c.sim.pairing = pairing == "fixed" ? PairingPolicy::Fixed : PairingPolicy::PerIteration;
    }
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (c.models.empty() || c.sizes.empty() || c.seeds.empty())
      throw ContractError("config needs nonempty models, sizes and seeds");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed experiment config: ") + e.what());
  }
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  for (auto m : c.models) j["models"].push_back(std::string(to_string(m)));
  j["sizes"] = c.sizes;
  j["iterations"] = c.iterations;
  j["seeds"] = c.seeds;
  j["train_seeds"] = c.train_seeds;
  j["hyper"] = {{"lr", c.hyper.lr},
                {"epochs", c.hyper.epochs},
                {"batch", c.hyper.batch},
                {"seed", c.hyper.seed},
                {"layers", c.hyper.layers},
                {"validation_fraction", c.hyper.validation_fraction},
                {"class_weighting", c.hyper.class_weighting},
                {"optimizer", c.hyper.optimizer == Optimizer::Adam ? "adam" : "sgd"}};
  j["sim"] = {{"tick", c.sim.tick},
              {"horizon", c.sim.horizon},
              {"window", c.sim.window},
              {"core_bandwidth", c.sim.links.core_bandwidth},
              {"access_bandwidth", c.sim.links.access_bandwidth},
              {"prop_delay", c.sim.links.prop_delay},
              {"failure_probability", c.sim.failure_probability},
              {"pairing", c.sim.pairing == PairingPolicy::Fixed ? "fixed" : "per_iteration"}};
  j["out_dir"] = c.out_dir.string();
  return j;
}

}  // namespace ndt
