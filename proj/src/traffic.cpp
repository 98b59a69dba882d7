// SPDX-License-Identifier: Apache-2.0
#include "ndt/traffic.hpp"

#include <ostream>
#include <random>
#include <string>

#include "ndt/error.hpp"
#include "ndt/format.hpp"

namespace ndt {

std::string_view to_string(TaskState state) {
  switch (state) {
    case TaskState::Running: return "running";
    case TaskState::Executing: return "executing";
    case TaskState::Completed: return "completed";
    case TaskState::Failed: return "failed";
  }
  return "?";
}

std::string_view to_string(FailureCause cause) {
  switch (cause) {
    case FailureCause::HostDown: return "host_down";
    case FailureCause::PortDown: return "port_down";
    case FailureCause::Timeout: return "timeout";
  }
  return "?";
}

std::string_view to_string(TaskEvent event) {
  switch (event) {
    case TaskEvent::Start: return "start";
    case TaskEvent::TransferDone: return "transfer_done";
    case TaskEvent::HostFailure: return "host_failure";
    case TaskEvent::PortFailure: return "port_failure";
    case TaskEvent::Tick: return "tick";
    case TaskEvent::AllPeersDone: return "all_peers_done";
  }
  return "?";
}

Bytes next_file_size(std::optional<Bytes> prev) {
  if (!prev) return kMinFileSize;
  if (*prev < 0) throw ContractError("file size must be nonnegative");
  return *prev + kFileSizeStep;
}

Bytes file_size_for_iteration(int iteration) {
  if (iteration < 0) throw ContractError("iteration must be nonnegative");
  return kMinFileSize + static_cast<Bytes>(iteration) * kFileSizeStep;
}

std::vector<TransferTask> build_schedule(const Topology& topology, int iterations,
                                         std::uint64_t seed, PairingPolicy pairing,
                                         double iteration_period) {
  if (topology.lan_count() < 2)
    throw ContractError("schedule needs at least two LANs, topology has " +
                        std::to_string(topology.lan_count()));
  if (iterations < 0) throw ContractError("iteration count must be nonnegative");

  std::mt19937_64 rng(seed);
  auto draw_peers = [&] {
    std::vector<VertexId> peers;
    peers.reserve(topology.hosts.size());
    for (VertexId h : topology.hosts) {
      std::vector<VertexId> candidates;
      for (VertexId other : topology.hosts)
        if (topology.lan[other] != topology.lan[h]) candidates.push_back(other);
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      peers.push_back(candidates[pick(rng)]);
    }
    return peers;
  };

  std::vector<TransferTask> tasks;
  std::vector<VertexId> peers;
  if (pairing == PairingPolicy::Fixed) peers = draw_peers();
  int next_id = 0;
  for (int it = 0; it < iterations; ++it) {
    if (pairing == PairingPolicy::PerIteration) peers = draw_peers();
    for (std::size_t i = 0; i < topology.hosts.size(); ++i) {
      TransferTask t;
      t.id = next_id++;
      t.src_host = topology.hosts[i];
      t.dst_host = peers[i];
      t.iteration = it;
      t.size = file_size_for_iteration(it);
      t.state = TaskState::Running;
      t.start_t = it * iteration_period;
      tasks.push_back(t);
    }
  }
  return tasks;
}

namespace {

[[noreturn]] void illegal(const TransferTask& task, TaskEvent event) {
  throw ContractError("task " + std::to_string(task.id) + ": event " +
                      std::string(to_string(event)) + " is not valid in state " +
                      std::string(to_string(task.state)));
}

}  // namespace

TransferTask step_task(const TransferTask& task, TaskEvent event) {
  TransferTask next = task;
  switch (task.state) {
    case TaskState::Running:
      if (event == TaskEvent::Tick) return next;
      if (event == TaskEvent::Start) {
        next.state = TaskState::Executing;
        return next;
      }
      break;
    case TaskState::Executing:
      switch (event) {
        case TaskEvent::Tick: return next;
        case TaskEvent::TransferDone: next.state = TaskState::Completed; return next;
        case TaskEvent::HostFailure:
          next.state = TaskState::Failed;
          next.failure_cause = FailureCause::HostDown;
          return next;
        case TaskEvent::PortFailure:
          next.state = TaskState::Failed;
          next.failure_cause = FailureCause::PortDown;
          return next;
        default: break;
      }
      break;
    case TaskState::Completed:
      if (event == TaskEvent::AllPeersDone) {
        next.state = TaskState::Running;
        next.iteration = task.iteration + 1;
        next.size = next_file_size(task.size);
        next.failure_cause.reset();
        return next;
      }
      break;
    case TaskState::Failed:
      break;
  }
  illegal(task, event);
}

TransferTask recover(const TransferTask& failed, int new_id, double restart_t) {
  if (failed.state != TaskState::Failed)
    throw ContractError("only failed tasks can be recovered (task " +
                        std::to_string(failed.id) + ")");
  if (failed.failure_cause == FailureCause::Timeout)
    throw ContractError("timed-out tasks are not resent");
  TransferTask fresh = failed;
  fresh.id = new_id;
  fresh.state = TaskState::Executing;
  fresh.failure_cause.reset();
  fresh.start_t = restart_t;
  fresh.end_t = 0.0;
  return fresh;
}

double transfer_rate(Bytes size, double duration) {
  if (!(duration > 0.0)) throw ContractError("transfer duration must be positive");
  return static_cast<double>(size) / duration;
}

nlohmann::json to_json(const std::vector<TransferTask>& schedule) {
  auto arr = nlohmann::json::array();
  for (const auto& t : schedule)
    arr.push_back({{"id", t.id},
                   {"src_host", t.src_host},
                   {"dst_host", t.dst_host},
                   {"iteration", t.iteration},
                   {"size_bytes", t.size},
                   {"start_t", t.start_t}});
  return arr;
}

std::vector<TransferTask> schedule_from_json(const nlohmann::json& j) {
  try {
    std::vector<TransferTask> out;
    for (const auto& tj : j) {
      TransferTask t;
      t.id = tj.at("id").get<int>();
      t.src_host = tj.at("src_host").get<int>();
      t.dst_host = tj.at("dst_host").get<int>();
      t.iteration = tj.value("iteration", 0);
      t.size = tj.at("size_bytes").get<Bytes>();
      t.start_t = tj.value("start_t", 0.0);
      if (t.size <= 0) throw ContractError("task " + std::to_string(t.id) + " has no bytes");
      out.push_back(t);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed schedule JSON: ") + e.what());
  }
}

void write_transfer_csv(std::ostream& out, const std::vector<TransferRecord>& records) {
  out << "timestamp,task_id,src,dst,size,duration,rate,status\n";
  for (const auto& r : records) {
    std::string status(to_string(r.status));
    if (r.cause) status += ":" + std::string(to_string(*r.cause));
    out << format_number(r.timestamp) << ',' << r.task_id << ',' << r.src << ',' << r.dst
        << ',' << r.size << ',' << format_number(r.duration) << ','
        << format_number(r.rate) << ',' << status << '\n';
  }
}

}  // namespace ndt
