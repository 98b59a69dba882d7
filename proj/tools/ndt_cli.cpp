// SPDX-License-Identifier: Apache-2.0
// Command-line front end: graph generation, single simulations, model
// training and evaluation, one rerouting cycle, and full experiments.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ndt/error.hpp"
#include "ndt/format.hpp"
#include "ndt/harness.hpp"

namespace fs = std::filesystem;
using namespace ndt;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void save_dataset(const TrainingSet& set, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    std::string name = std::to_string(i);
    name.insert(0, 6 - std::min<std::size_t>(6, name.size()), '0');
    write_json(dir / ("sample_" + name + ".json"), to_json(set.samples[i]));
  }
}

TrainingSet load_dataset(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  TrainingSet set;
  for (const auto& f : files) set.samples.push_back(sample_from_json(read_json(f)));
  if (set.samples.empty()) throw IoError("no samples in " + dir.string());
  return set;
}

void write_curve(const ModelParams& model, const fs::path& path) {
  auto out = open_out(path);
  out << "epoch,train_loss,validation_loss\n";
  for (const auto& p : model.curve)
    out << p.epoch << ',' << format_number(p.train_loss) << ','
        << format_number(p.validation_loss) << '\n';
}

void save_report(const ExperimentReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  auto out = open_out(dir / "report.csv");
  write_report_csv(out, report);
}

ExperimentReport load_report(const fs::path& dir) {
  std::ifstream in(dir / "report.csv");
  if (!in) throw IoError("cannot read " + (dir / "report.csv").string());
  return read_report_csv(in);
}

bool all_completed(const ExperimentReport& report) {
  for (const auto& r : report.rows)
    if (r.failed > 0) return false;
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network digital twin: simulation, congestion classification and PBR rerouting"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a layered topology");
  std::string model_name = "er";
  int n = 5;
  std::uint64_t seed = 1;
  std::optional<double> gen_p;
  std::optional<int> gen_m, gen_k;
  fs::path out_path;
  gen->add_option("--model", model_name, "er|ba|ws")->required();
  gen->add_option("--n", n, "number of P routers")->required();
  gen->add_option("--seed", seed);
  gen->add_option("--p", gen_p, "ER edge probability or WS rewiring probability");
  gen->add_option("--m", gen_m, "BA attachment count");
  gen->add_option("--k", gen_k, "WS neighbour count");
  gen->add_option("--out", out_path)->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a schedule on a topology");
  fs::path topo_path, schedule_path, rules_path, out_dir;
  double tick = 0.01, horizon = 60.0, window_len = 0.25;
  sim->add_option("--topology", topo_path)->required();
  sim->add_option("--schedule", schedule_path, "schedule JSON; generated when omitted");
  sim->add_option("--rules", rules_path);
  sim->add_option("--tick", tick);
  sim->add_option("--horizon", horizon);
  sim->add_option("--window", window_len, "telemetry window length starting at t = 0");
  sim->add_option("--iterations", n, "iterations when generating a schedule");
  sim->add_option("--seed", seed);
  sim->add_option("--out", out_dir)->required();

  // train
  auto* tr = app.add_subcommand("train", "Train the edge classifier");
  fs::path data_dir;
  TrainConfig hyper;
  std::string optimizer = "sgd";
  tr->add_option("--data", data_dir)->required();
  tr->add_option("--out", out_path)->required();
  tr->add_option("--lr", hyper.lr);
  tr->add_option("--epochs", hyper.epochs);
  tr->add_option("--seed", hyper.seed);
  tr->add_option("--batch", hyper.batch);
  tr->add_option("--layers", hyper.layers);
  tr->add_option("--validation", hyper.validation_fraction);
  tr->add_flag("--class-weights", hyper.class_weighting);
  tr->add_option("--optimizer", optimizer)->check(CLI::IsMember({"sgd", "adam"}));

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Accuracy of a model on a dataset");
  fs::path model_path;
  ev->add_option("--model", model_path)->required();
  ev->add_option("--data", data_dir)->required();

  // reroute
  auto* rr = app.add_subcommand("reroute", "Run one control cycle on recorded telemetry");
  double t0 = 0.0;
  rr->add_option("--model", model_path)->required();
  rr->add_option("--telemetry", data_dir, "directory holding events.csv")->required();
  rr->add_option("--topology", topo_path)->required();
  rr->add_option("--rules", rules_path, "rules currently installed");
  rr->add_option("--t0", t0);
  rr->add_option("--window", window_len);
  rr->add_option("--out", out_path)->required();

  // experiment
  auto* ex = app.add_subcommand("experiment", "Run phase 1, phase 2 or both");
  fs::path config_path;
  std::string phase = "both";
  ex->add_option("--config", config_path)->required();
  ex->add_option("--phase", phase)->check(CLI::IsMember({"1", "2", "both"}));
  ex->add_option("--model", model_path, "trained model for --phase 2");
  ex->add_option("--out", out_dir);

  // compare
  auto* cmp = app.add_subcommand("compare", "Compare two experiment reports");
  fs::path base_dir, opt_dir;
  cmp->add_option("--baseline", base_dir)->required();
  cmp->add_option("--optimized", opt_dir)->required();
  cmp->add_option("--out", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const GraphModel model = parse_graph_model(model_name);
      GraphParams params = default_params(model, n);
      if (gen_p) params.p = *gen_p;
      if (gen_m) params.m = *gen_m;
      if (gen_k) params.k = *gen_k;
      const CoreGraph core = generate(model, n, params, DegreeBounds{}, seed);
      write_json(out_path, to_json(assign_roles(core, seed)));
      return 0;
    }

    if (sim->parsed()) {
      auto topo = std::make_shared<const Topology>(topology_from_json(read_json(topo_path)));
      Scenario scenario;
      scenario.topology = topo;
      scenario.tick = tick;
      scenario.horizon = horizon;
      scenario.schedule = schedule_path.empty()
                              ? build_schedule(*topo, 1, seed)
                              : schedule_from_json(read_json(schedule_path));
      RoutingState state = build_routing_tables(topo);
      if (!rules_path.empty()) state = apply_pbr(state, rules_from_json(read_json(rules_path)));
      const RunResult result = run(scenario, state);
      fs::create_directories(out_dir);
      auto events = open_out(out_dir / "events.csv");
      write_event_csv(events, result.events);
      auto transfers = open_out(out_dir / "transfers.csv");
      write_transfer_csv(transfers, result.outcomes.records);
      auto metrics = open_out(out_dir / "metrics.csv");
      write_metrics_csv(metrics, compute_metrics(result.events, *topo, Window{0.0, window_len}));
      const auto& o = result.outcomes;
      std::cout << "injected " << o.bytes_injected << " delivered " << o.bytes_delivered
                << " queued " << o.bytes_queued << " end " << format_number(o.end_t) << '\n';
      for (const auto& r : o.records)
        if (r.status != TaskState::Completed) return 1;
      return 0;
    }

    if (tr->parsed()) {
      hyper.optimizer = optimizer == "adam" ? Optimizer::Adam : Optimizer::Sgd;
      const TrainingSet data = load_dataset(data_dir);
      const ModelParams model = train(data, hyper);
      write_json(out_path, to_json(model));
      fs::path curve = out_path;
      curve.replace_extension(".curve.csv");
      write_curve(model, curve);
      std::cout << "train accuracy " << format_number(accuracy(model, data)) << '\n';
      return 0;
    }

    if (ev->parsed()) {
      const ModelParams model = model_from_json(read_json(model_path));
      const TrainingSet data = load_dataset(data_dir);
      std::cout << "accuracy " << format_number(accuracy(model, data)) << " over "
                << data.edge_count() << " edges\n";
      return 0;
    }

    if (rr->parsed()) {
      const ModelParams model = model_from_json(read_json(model_path));
      auto topo = std::make_shared<const Topology>(topology_from_json(read_json(topo_path)));
      std::ifstream in(data_dir / "events.csv");
      if (!in) throw IoError("cannot read " + (data_dir / "events.csv").string());
      const EventLog log = read_event_csv(in);
      const Window window{t0, t0 + window_len};
      std::vector<PbrRule> previous;
      if (!rules_path.empty()) previous = rules_from_json(read_json(rules_path));
      const auto classes = classify(model, build_features(log, *topo, window));
      const CycleReport report =
          control_cycle(build_routing_tables(topo), previous, classes, log, window);
      nlohmann::json j;
      j["rules"] = to_json(report.rules);
      j["report"] = {{"vertices_rerouting", report.vertices_rerouting},
                     {"new", report.rules_new},
                     {"retained", report.rules_retained},
                     {"released", report.rules_released},
                     {"skipped_local", report.skipped_local},
                     {"dropped", report.dropped}};
      write_json(out_path, j);
      return 0;
    }

    if (ex->parsed()) {
      ExperimentConfig config = config_from_json(read_json(config_path));
      if (!out_dir.empty()) config.out_dir = out_dir;
      const fs::path root = config.out_dir;
      fs::create_directories(root);
      write_json(root / "config.json", to_json(config));
      bool ok = true;

      std::optional<ExperimentReport> baseline;
      ModelParams model;
      if (phase == "1" || phase == "both") {
        auto p1 = run_phase1(config);
        save_report(p1.report, root / "baseline");
        ok = ok && all_completed(p1.report);
        baseline = std::move(p1.report);
        TrainingSet train_set = std::move(p1.dataset);
        if (!config.train_seeds.empty()) train_set = run_phase1(config, config.train_seeds).dataset;
        save_dataset(train_set, root / "dataset");
        model = train(train_set, config.hyper);
        write_json(root / "model.json", to_json(model));
        write_curve(model, root / "training_curve.csv");
        std::cerr << "phase 1: " << baseline->rows.size() << " rows, training accuracy "
                  << format_number(accuracy(model, train_set)) << '\n';
      }
      if (phase == "2" || phase == "both") {
        if (phase == "2") {
          if (model_path.empty()) throw ContractError("--phase 2 needs --model");
          model = model_from_json(read_json(model_path));
        }
        const ExperimentReport optimized = run_phase2(config, model);
        save_report(optimized, root / "mpnn_pbr");
        ok = ok && all_completed(optimized);
        if (baseline) export_report(*baseline, &optimized, root / "comparison");
      } else if (baseline) {
        export_report(*baseline, nullptr, root / "comparison");
      }
      return ok ? 0 : 1;
    }

    if (cmp->parsed()) {
      const ExperimentReport base = load_report(base_dir);
      const ExperimentReport opt = load_report(opt_dir);
      export_report(base, &opt, out_dir);
      std::cout << to_json(compare(base, opt))["overall"].dump(2) << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
