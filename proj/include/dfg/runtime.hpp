#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dfg/inference.hpp"
#include "dfg/net.hpp"

namespace dfg {

// ---- failure sensing ----

struct PeerStatus {
    std::string node_id;
    enum class State : uint8_t { Alive, Suspected, Failed } state = State::Alive;
    std::chrono::steady_clock::time_point last_heartbeat;
};

// Pure keep-alive bookkeeping over injected clocks; the daemon couples it to
// sockets. A peer is failed once no heartbeat lands within the suspicion
// timeout (or on hard transport evidence), suspected after one quiet interval,
// and revives on the next heartbeat.
class HeartbeatMonitor {
  public:
    using Clock = std::chrono::steady_clock;

    HeartbeatMonitor(std::vector<std::string> peers, Clock::duration interval,
                     Clock::duration suspicion_timeout, Clock::time_point start);

    void record_heartbeat(const std::string& peer, Clock::time_point t);
    void mark_failed(const std::string& peer);  // EOF or send failure on the link
    bool failed(const std::string& peer, Clock::time_point now) const;
    std::vector<PeerStatus> tick(Clock::time_point now) const;
    const std::vector<std::string>& peers() const { return peer_ids_; }

  private:
    struct Entry {
        Clock::time_point last;
        bool hard_failed = false;
    };
    PeerStatus status_of(const std::string& id, const Entry& e, Clock::time_point now) const;

    std::vector<std::string> peer_ids_;
    Clock::duration interval_;
    Clock::duration suspicion_;
    mutable std::mutex mu_;
    std::map<std::string, Entry> entries_;
};

// ---- chaos plans ----

struct ChaosAction {
    enum class Kind : uint8_t { Kill, Revive } kind = Kind::Kill;
    std::string node_id;
    // Trigger: a round index, or a wall-clock offset applied at the next round
    // boundary after it elapses.
    uint64_t at_round = 0;
    bool by_time = false;
    long at_ms = 0;
};

struct ChaosPlan {
    std::vector<ChaosAction> actions;

    bool empty() const { return actions.empty(); }
    // Actions may only target fallible nodes.
    void validate(const DistributedDnn& graph) const;
    // Fallible nodes down at the given round under round-triggered actions.
    std::set<std::string> failed_at_round(uint64_t round) const;
};

// ---- shared runtime settings ----

struct RuntimeTimeouts {
    int round_timeout_ms = 200;        // per-round wait before null substitution
    int heartbeat_interval_ms = 100;
    int suspicion_timeout_ms = 400;
    int handshake_timeout_ms = 15000;  // daemon wiring + readiness barrier
    int coordinator_round_timeout_ms = 500;
};

struct NodeEndpoints {
    std::map<std::string, std::string> node_address;  // compute node id -> host:port
    std::string coordinator_address;
};

// Stable wire ids: a node's index in the topology's declaration order.
std::map<std::string, uint16_t> wire_ids(const DistributedDnn& graph);

// ---- per-node daemon ----

// Serves one node slice: waits per round for DATA on every in-edge whose
// source is still alive, substitutes the null vector on timeout or known
// failure, runs Add -> expansion -> slab, and emits on every out-edge. The
// terminal node reports to the coordinator instead.
class NodeDaemon {
  public:
    NodeDaemon(DistributedNet<float> net, std::string node_id, NodeEndpoints endpoints,
               RuntimeTimeouts timeouts);
    ~NodeDaemon();

    // Blocks until SHUTDOWN arrives; returns a process exit code.
    int run();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// ---- coordinator ----

struct RoundOutcome {
    uint64_t inference_id = 0;
    bool null_outcome = false;  // random-guess marker: nothing reached the output
    bool timed_out = false;     // null because the coordinator gave up waiting
    std::vector<float> output;  // terminal node's class distribution
    int predicted = -1;
};

// Kill/revive hooks the pipeline invokes at round boundaries.
class ProcessControl {
  public:
    virtual ~ProcessControl() = default;
    virtual void kill_node(const std::string& id) = 0;
    virtual void revive_node(const std::string& id) = 0;
};

// Sequential test-split driver: feeds row r of each view as inference r,
// applies chaos actions at their trigger points, and collects the terminal
// node's emissions in order.
std::vector<RoundOutcome> run_pipeline(const DistributedDnn& graph,
                                       const std::map<std::string, Mat<float>>& iot_inputs,
                                       const ChaosPlan& chaos, const NodeEndpoints& endpoints,
                                       const RuntimeTimeouts& timeouts,
                                       ProcessControl* control = nullptr);

// Local child-process manager backing chaos runs: fork/exec per node, SIGKILL
// for kills, relaunch for revivals.
class DaemonProcessManager : public ProcessControl {
  public:
    ~DaemonProcessManager() override;

    void register_node(const std::string& id, std::vector<std::string> argv);
    void start_all();
    void kill_node(const std::string& id) override;
    void revive_node(const std::string& id) override;
    void stop_all(int grace_ms);

  private:
    void launch(const std::string& id);
    struct Proc {
        std::vector<std::string> argv;
        long pid = -1;
    };
    std::map<std::string, Proc> procs_;
};

}  // namespace dfg
