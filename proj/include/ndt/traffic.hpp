// SPDX-License-Identifier: Apache-2.0
//
// Growing file-transfer workload between hosts of different LANs and the
// per-task Running/Executing/Completed/Failed state machine.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ndt/topology.hpp"

namespace ndt {

using Bytes = std::int64_t;

/// Constant per-iteration growth of the transferred file.
inline constexpr Bytes kFileSizeStep = 140428;
/// Size of the first file; equal to the step so F_n = (n + 1) * step.
inline constexpr Bytes kMinFileSize = kFileSizeStep;

enum class TaskState { Running, Executing, Completed, Failed };
enum class FailureCause { HostDown, PortDown, Timeout };
enum class TaskEvent { Start, TransferDone, HostFailure, PortFailure, Tick, AllPeersDone };

std::string_view to_string(TaskState state);
std::string_view to_string(FailureCause cause);
std::string_view to_string(TaskEvent event);

struct TransferTask {
  int id = 0;
  VertexId src_host = -1;
  VertexId dst_host = -1;
  int iteration = 0;
  Bytes size = kMinFileSize;
  TaskState state = TaskState::Running;
  std::optional<FailureCause> failure_cause;
  double start_t = 0.0;
  double end_t = 0.0;
};

struct TransferRecord {
  int task_id = 0;
  VertexId src = -1;
  VertexId dst = -1;
  Bytes size = 0;
  double duration = 0.0;
  double rate = 0.0;
  TaskState status = TaskState::Completed;
  std::optional<FailureCause> cause;
  double timestamp = 0.0;
};

/// F_0 when `prev` is empty, otherwise prev + step.
Bytes next_file_size(std::optional<Bytes> prev);
/// F_n for iteration n.
Bytes file_size_for_iteration(int iteration);

/// Whether each host keeps one peer for the whole run or draws a new one
/// every iteration.
enum class PairingPolicy { Fixed, PerIteration };

/// Every host starts one cross-LAN transfer per iteration; tasks of
/// iteration i start at i * iteration_period. Tasks are created Running.
std::vector<TransferTask> build_schedule(const Topology& topology, int iterations,
                                         std::uint64_t seed,
                                         PairingPolicy pairing = PairingPolicy::Fixed,
                                         double iteration_period = 0.0);

/// Advances the state machine by one event. Illegal pairs throw ContractError.
/// Running+Start -> Executing; Running+Tick -> Running;
/// Executing+TransferDone -> Completed; Executing+HostFailure -> Failed(HostDown);
/// Executing+PortFailure -> Failed(PortDown); Executing+Tick -> Executing;
/// Completed+AllPeersDone -> Running at the next iteration with the next size.
TransferTask step_task(const TransferTask& task, TaskEvent event);

/// Replacement for a failed task: the same pair and the same size, Executing.
TransferTask recover(const TransferTask& failed, int new_id, double restart_t);

double transfer_rate(Bytes size, double duration);

nlohmann::json to_json(const std::vector<TransferTask>& schedule);
std::vector<TransferTask> schedule_from_json(const nlohmann::json& j);

/// timestamp,task_id,src,dst,size,duration,rate,status
void write_transfer_csv(std::ostream& out, const std::vector<TransferRecord>& records);

}  // namespace ndt
