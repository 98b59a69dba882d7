// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "ndt/error.hpp"
#include "ndt/traffic.hpp"

using namespace ndt;

namespace {

Topology two_lan_topology() {
  return assign_roles(gen_erdos_renyi(5, 0.6, {}, 4), 4);
}

}  // namespace

TEST_CASE("file size ladder") {
  CHECK(next_file_size(std::nullopt) == 140428);
  CHECK(next_file_size(140428) == 280856);
  CHECK(next_file_size(140428 * 9) == 1404280);
  for (int n = 1; n < 50; ++n)
    CHECK(file_size_for_iteration(n) - file_size_for_iteration(n - 1) == kFileSizeStep);
  CHECK(file_size_for_iteration(0) == kMinFileSize);
  CHECK_THROWS_AS(next_file_size(-1), ContractError);
}

TEST_CASE("one iteration on two LANs gives six cross-LAN tasks") {
  const Topology t = two_lan_topology();
  const auto s = build_schedule(t, 1, 3);
  REQUIRE(s.size() == 6);
  std::set<VertexId> sources;
  for (const auto& task : s) {
    CHECK(t.lan[task.src_host] != t.lan[task.dst_host]);
    CHECK(t.roles[task.dst_host] == Role::Host);
    CHECK(task.state == TaskState::Running);
    CHECK(task.size == kMinFileSize);
    sources.insert(task.src_host);
  }
  CHECK(sources.size() == 6);
}

TEST_CASE("sizes follow the ladder per host and start times the period") {
  const Topology t = assign_roles(gen_barabasi_albert(10, 2, {}, 1), 1);
  const auto s = build_schedule(t, 3, 9, PairingPolicy::PerIteration, 0.5);
  CHECK(s.size() == 27);
  std::map<VertexId, std::vector<Bytes>> sizes;
  for (const auto& task : s) {
    sizes[task.src_host].push_back(task.size);
    CHECK(task.start_t == doctest::Approx(0.5 * task.iteration));
    CHECK(task.size == file_size_for_iteration(task.iteration));
    CHECK(t.lan[task.src_host] != t.lan[task.dst_host]);
  }
  for (const auto& [host, v] : sizes)
    CHECK(v == std::vector<Bytes>{140428, 280856, 421284});
}

TEST_CASE("fixed pairing keeps one peer per host; schedules are seeded") {
  const Topology t = assign_roles(gen_watts_strogatz(15, 4, 0.3, {}, 2), 2);
  const auto fixed = build_schedule(t, 5, 11, PairingPolicy::Fixed);
  std::map<VertexId, std::set<VertexId>> peers;
  for (const auto& task : fixed) peers[task.src_host].insert(task.dst_host);
  for (const auto& [h, p] : peers) CHECK(p.size() == 1);

  const auto varying = build_schedule(t, 5, 11, PairingPolicy::PerIteration);
  std::map<VertexId, std::set<VertexId>> seen;
  for (const auto& task : varying) seen[task.src_host].insert(task.dst_host);
  std::size_t distinct = 0;
  for (const auto& [h, p] : seen) distinct += p.size();
  CHECK(distinct > seen.size());

  const auto again = build_schedule(t, 5, 11, PairingPolicy::PerIteration);
  REQUIRE(again.size() == varying.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].src_host == varying[i].src_host);
    CHECK(again[i].dst_host == varying[i].dst_host);
  }
}

TEST_CASE("a single LAN cannot host a schedule") {
  Topology t = two_lan_topology();
  t.pe_routers.resize(1);
  CHECK_THROWS_AS(build_schedule(t, 1, 1), ContractError);
  CHECK(build_schedule(two_lan_topology(), 0, 1).empty());
}

TEST_CASE("state machine transitions") {
  TransferTask task;
  task.id = 3;
  task.size = 280856;
  task.iteration = 1;

  CHECK(step_task(task, TaskEvent::Tick).state == TaskState::Running);
  const auto exec = step_task(task, TaskEvent::Start);
  CHECK(exec.state == TaskState::Executing);
  CHECK(step_task(exec, TaskEvent::Tick).state == TaskState::Executing);
  const auto done = step_task(exec, TaskEvent::TransferDone);
  CHECK(done.state == TaskState::Completed);

  const auto next = step_task(done, TaskEvent::AllPeersDone);
  CHECK(next.state == TaskState::Running);
  CHECK(next.iteration == 2);
  CHECK(next.size == 421284);

  const auto host_down = step_task(exec, TaskEvent::HostFailure);
  CHECK(host_down.state == TaskState::Failed);
  CHECK(host_down.failure_cause == FailureCause::HostDown);
  const auto port_down = step_task(exec, TaskEvent::PortFailure);
  CHECK(port_down.failure_cause == FailureCause::PortDown);

  for (const auto& failed : {host_down, port_down}) {
    const auto resend = recover(failed, 99, 1.25);
    CHECK(resend.id == 99);
    CHECK(resend.size == failed.size);
    CHECK(resend.src_host == failed.src_host);
    CHECK(resend.dst_host == failed.dst_host);
    CHECK(resend.state == TaskState::Executing);
    CHECK(resend.start_t == 1.25);
    CHECK_FALSE(resend.failure_cause.has_value());
  }
}

TEST_CASE("illegal transitions are contract errors") {
  TransferTask running;
  CHECK_THROWS_AS(step_task(running, TaskEvent::TransferDone), ContractError);
  CHECK_THROWS_AS(step_task(running, TaskEvent::HostFailure), ContractError);
  CHECK_THROWS_AS(step_task(running, TaskEvent::AllPeersDone), ContractError);
  const auto exec = step_task(running, TaskEvent::Start);
  CHECK_THROWS_AS(step_task(exec, TaskEvent::Start), ContractError);
  CHECK_THROWS_AS(step_task(exec, TaskEvent::AllPeersDone), ContractError);
  const auto done = step_task(exec, TaskEvent::TransferDone);
  CHECK_THROWS_AS(step_task(done, TaskEvent::TransferDone), ContractError);
  const auto failed = step_task(exec, TaskEvent::HostFailure);
  CHECK_THROWS_AS(step_task(failed, TaskEvent::Tick), ContractError);
  CHECK_THROWS_AS(recover(done, 1, 0.0), ContractError);
}

TEST_CASE("transfer rate") {
  CHECK(transfer_rate(1404280, 2.0) == 702140.0);
  CHECK(transfer_rate(140428, 1.0) == 140428.0);
  CHECK(transfer_rate(0, 1.0) == 0.0);
  CHECK_THROWS_AS(transfer_rate(10, 0.0), ContractError);
  CHECK_THROWS_AS(transfer_rate(10, -1.0), ContractError);
}

TEST_CASE("schedule JSON and transfer CSV") {
  const auto s = build_schedule(two_lan_topology(), 2, 5);
  const auto back = schedule_from_json(to_json(s));
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back[i].id == s[i].id);
    CHECK(back[i].size == s[i].size);
    CHECK(back[i].dst_host == s[i].dst_host);
    CHECK(back[i].iteration == s[i].iteration);
  }
  std::ostringstream out;
  write_transfer_csv(out, {{7, 20, 25, 140428, 0.5, 280856.0, TaskState::Completed, {}, 0.5}});
  const std::string csv = out.str();
  CHECK(csv.rfind("timestamp,task_id,src,dst,size,duration,rate,status\n", 0) == 0);
  CHECK(csv.find("0.5,7,20,25,140428,0.5,280856,completed") != std::string::npos);
}
