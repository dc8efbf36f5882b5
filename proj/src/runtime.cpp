#include "dfg/runtime.hpp"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <functional>
#include <iostream>
#include <set>
#include <thread>

#include "dfg/wire.hpp"

namespace dfg {

using Clock = std::chrono::steady_clock;

// ---- HeartbeatMonitor ----

HeartbeatMonitor::HeartbeatMonitor(std::vector<std::string> peers, Clock::duration interval,
                                   Clock::duration suspicion_timeout, Clock::time_point start)
    : peer_ids_(std::move(peers)), interval_(interval), suspicion_(suspicion_timeout) {
    if (interval_ >= suspicion_)
        throw std::invalid_argument("heartbeat: interval must be below the suspicion timeout");
    for (const auto& id : peer_ids_) entries_[id] = Entry{start, false};
}

void HeartbeatMonitor::record_heartbeat(const std::string& peer, Clock::time_point t) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(peer);
    if (it == entries_.end()) return;
    it->second.last = std::max(it->second.last, t);
    it->second.hard_failed = false;  // revival
}

void HeartbeatMonitor::mark_failed(const std::string& peer) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(peer);
    if (it != entries_.end()) it->second.hard_failed = true;
}

PeerStatus HeartbeatMonitor::status_of(const std::string& id, const Entry& e,
                                       Clock::time_point now) const {
    PeerStatus s;
    s.node_id = id;
    s.last_heartbeat = e.last;
    const auto quiet = now - e.last;
    if (e.hard_failed || quiet > suspicion_)
        s.state = PeerStatus::State::Failed;
    else if (quiet > interval_)
        s.state = PeerStatus::State::Suspected;
    else
        s.state = PeerStatus::State::Alive;
    return s;
}

bool HeartbeatMonitor::failed(const std::string& peer, Clock::time_point now) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(peer);
    if (it == entries_.end()) return false;
    return status_of(peer, it->second, now).state == PeerStatus::State::Failed;
}

std::vector<PeerStatus> HeartbeatMonitor::tick(Clock::time_point now) const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<PeerStatus> out;
    for (const auto& id : peer_ids_) out.push_back(status_of(id, entries_.at(id), now));
    return out;
}

// ---- ChaosPlan ----

void ChaosPlan::validate(const DistributedDnn& graph) const {
    for (const auto& a : actions) {
        const PhysicalNode* n = graph.find_node(a.node_id);
        if (!n) throw std::invalid_argument("chaos plan targets unknown node " + a.node_id);
        if (!n->fallible)
            throw std::invalid_argument("chaos plan targets non-fallible node " + a.node_id);
    }
}

std::set<std::string> ChaosPlan::failed_at_round(uint64_t round) const {
    std::set<std::string> failed;
    for (const auto& a : actions) {
        if (a.by_time || a.at_round > round) continue;
        if (a.kind == ChaosAction::Kind::Kill)
            failed.insert(a.node_id);
        else
            failed.erase(a.node_id);
    }
    return failed;
}

std::map<std::string, uint16_t> wire_ids(const DistributedDnn& graph) {
    std::map<std::string, uint16_t> ids;
    for (size_t i = 0; i < graph.nodes.size(); ++i)
        ids[graph.nodes[i].id] = static_cast<uint16_t>(i);
    return ids;
}

namespace {

constexpr uint16_t kCoordinatorId = 0xffff;

// Outbound link with lazy reconnect. A reader thread answers keep-alives and
// hands every other inbound message to the owner.
class Sender {
  public:
    Sender(uint16_t self_id, std::string host, int port,
           std::function<void(const WireMessage&)> on_message = {})
        : self_id_(self_id), host_(std::move(host)), port_(port), on_message_(std::move(on_message)) {}

    ~Sender() { shutdown(); }

    bool ensure_connected() {
        std::lock_guard<std::mutex> lock(mu_);
        return ensure_connected_locked();
    }

    bool send(const WireMessage& msg) {
        std::lock_guard<std::mutex> lock(mu_);
        if (ensure_connected_locked() && sock_->write_message(msg)) return true;
        drop_locked();
        if (!ensure_connected_locked()) return false;
        if (sock_->write_message(msg)) return true;
        drop_locked();
        return false;
    }

    void shutdown() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            closing_ = true;
            drop_locked();
        }
        for (auto& t : readers_)
            if (t.joinable()) t.join();
        readers_.clear();
    }

  private:
    bool ensure_connected_locked() {
        if (sock_ && !sock_->closed()) return true;
        if (closing_) return false;
        auto s = FrameSocket::connect(host_, port_, 250);
        if (!s) return false;
        WireMessage hello;
        hello.type = MsgType::Hello;
        hello.source_node = self_id_;
        if (!s->write_message(hello)) return false;
        sock_ = std::shared_ptr<FrameSocket>(std::move(s));
        auto sock = sock_;
        readers_.emplace_back([this, sock] { read_loop(sock); });
        return true;
    }

    void drop_locked() {
        if (sock_) sock_->close_now();
        sock_.reset();
    }

    void read_loop(std::shared_ptr<FrameSocket> sock) {
        while (true) {
            auto msg = sock->read_message();
            if (!msg) return;
            if (msg->version != kWireVersion) {  // incompatible peer: drop the link
                sock->close_now();
                return;
            }
            if (msg->type == MsgType::KeepAlive) {
                WireMessage ack;
                ack.type = MsgType::KeepAliveAck;
                ack.source_node = self_id_;
                ack.inference_id = msg->inference_id;
                sock->write_message(ack);
            } else if (on_message_) {
                on_message_(*msg);
            }
        }
    }

    uint16_t self_id_;
    std::string host_;
    int port_;
    std::function<void(const WireMessage&)> on_message_;
    std::mutex mu_;
    std::shared_ptr<FrameSocket> sock_;
    std::vector<std::thread> readers_;
    bool closing_ = false;
};

}  // namespace

// ---- NodeDaemon ----

struct NodeDaemon::Impl {
    DistributedNet<float> net;
    std::string node_id;
    NodeEndpoints endpoints;
    RuntimeTimeouts timeouts;

    int self_idx = -1;
    uint16_t self_wire = 0;
    bool terminal = false;
    std::map<std::string, uint16_t> wire_of;
    std::map<uint16_t, std::string> name_of;

    struct InEdge {
        uint16_t src_wire = 0;
        std::string src_id;
        int dim = 0;
        bool src_compute = false;
    };
    std::vector<InEdge> in_edges;

    std::unique_ptr<Listener> listener;
    std::unique_ptr<HeartbeatMonitor> monitor;
    std::vector<std::unique_ptr<Sender>> out_senders;
    std::unique_ptr<Sender> control;

    std::mutex conn_mu;
    std::map<uint16_t, std::shared_ptr<FrameSocket>> inbound;

    struct Event {
        enum class Kind : uint8_t { Data, SrcDown, Shutdown } kind;
        uint16_t src = 0;
        WireMessage msg;
    };
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Event> events;
    bool running = true;

    struct PendingRound {
        std::map<uint16_t, ActivationVector<float>> got;
        Clock::time_point deadline;
    };
    std::map<uint64_t, PendingRound> pending;
    int64_t max_fired = -1;

    std::vector<std::thread> threads;

    void post(Event e) {
        {
            std::lock_guard<std::mutex> lock(mu);
            events.push_back(std::move(e));
        }
        cv.notify_all();
    }

    void accept_loop() {
        while (auto sock = listener->accept_one()) {
            std::shared_ptr<FrameSocket> conn(std::move(sock));
            std::lock_guard<std::mutex> lock(conn_mu);
            threads.emplace_back([this, conn] { inbound_loop(conn); });
        }
    }

    void inbound_loop(std::shared_ptr<FrameSocket> conn) {
        uint16_t src = 0;
        bool registered = false;
        while (true) {
            auto msg = conn->read_message();
            if (!msg) break;
            if (msg->version != kWireVersion) break;  // version mismatch closes the link
            switch (msg->type) {
                case MsgType::Hello:
                    src = msg->source_node;
                    registered = true;
                    {
                        std::lock_guard<std::mutex> lock(conn_mu);
                        inbound[src] = conn;
                    }
                    if (auto it = name_of.find(src); it != name_of.end() && monitor)
                        monitor->record_heartbeat(it->second, Clock::now());
                    break;
                case MsgType::Data:
                    if (registered) {
                        if (auto it = name_of.find(src); it != name_of.end() && monitor)
                            monitor->record_heartbeat(it->second, Clock::now());
                        post({Event::Kind::Data, src, std::move(*msg)});
                    }
                    break;
                case MsgType::KeepAlive: {
                    WireMessage ack;
                    ack.type = MsgType::KeepAliveAck;
                    ack.source_node = self_wire;
                    ack.inference_id = msg->inference_id;
                    conn->write_message(ack);
                    break;
                }
                case MsgType::KeepAliveAck:
                    if (auto it = name_of.find(msg->source_node); it != name_of.end() && monitor)
                        monitor->record_heartbeat(it->second, Clock::now());
                    break;
                case MsgType::Shutdown:
                    post({Event::Kind::Shutdown, src, {}});
                    return;
            }
        }
        // Transport loss from a registered source is hard failure evidence.
        if (registered) {
            if (auto it = name_of.find(src); it != name_of.end() && monitor) {
                monitor->mark_failed(it->second);
                post({Event::Kind::SrcDown, src, {}});
            }
        }
    }

    void heartbeat_loop() {
        std::set<std::string> known_failed;
        while (true) {
            {
                std::unique_lock<std::mutex> lock(mu);
                if (cv.wait_for(lock, std::chrono::milliseconds(timeouts.heartbeat_interval_ms),
                                [&] { return !running; }))
                    return;
            }
            // Probe in-edge sources over their inbound links.
            for (const auto& e : in_edges) {
                if (!e.src_compute) continue;
                std::shared_ptr<FrameSocket> conn;
                {
                    std::lock_guard<std::mutex> lock(conn_mu);
                    auto it = inbound.find(e.src_wire);
                    if (it != inbound.end()) conn = it->second;
                }
                if (!conn) continue;
                WireMessage ka;
                ka.type = MsgType::KeepAlive;
                ka.source_node = self_wire;
                if (!conn->write_message(ka)) monitor->mark_failed(e.src_id);
            }
            for (const auto& st : monitor->tick(Clock::now())) {
                if (st.state == PeerStatus::State::Failed) {
                    if (known_failed.insert(st.node_id).second)
                        post({Event::Kind::SrcDown, wire_of.at(st.node_id), {}});
                } else {
                    known_failed.erase(st.node_id);
                }
            }
        }
    }

    // Fires when every in-edge has delivered or its source is known failed.
    bool round_ready(const PendingRound& round, Clock::time_point now) const {
        for (const auto& e : in_edges) {
            if (round.got.count(e.src_wire)) continue;
            if (e.src_compute && monitor->failed(e.src_id, now)) continue;
            return false;
        }
        return true;
    }

    void fire_round(uint64_t id, PendingRound& round) {
        const NetNode<float>& me = net.nodes()[self_idx];
        Mat<float> sum(1, me.expansion);
        bool any = false;
        for (size_t i = 0; i < me.ins.size(); ++i) {
            auto it = round.got.find(in_edges[i].src_wire);
            if (it == round.got.end() || !it->second) continue;  // null substitution
            any = true;
            Mat<float> operand(1, static_cast<int>(it->second->size()));
            std::copy(it->second->begin(), it->second->end(), operand.row(0));
            add_padded_inplace(sum, operand, me.ins[i].scale);
        }

        WireMessage out;
        out.type = MsgType::Data;
        out.source_node = self_wire;
        out.inference_id = id;
        if (!any) {
            out.null_flag = 1;  // only null vectors arrived; propagate the null
        } else {
            Mat<float> h = std::move(sum);
            for (const auto& layer : me.layers) h = layer.forward(h);
            out.payload.assign(h.row(0), h.row(0) + h.cols);
        }
        for (auto& sender : out_senders) sender->send(out);
        if (terminal && control) control->send(out);
    }

    void main_loop() {
        while (true) {
            Event ev;
            bool have_event = false;
            {
                std::unique_lock<std::mutex> lock(mu);
                Clock::time_point wake = Clock::now() + std::chrono::milliseconds(50);
                for (const auto& [id, round] : pending) wake = std::min(wake, round.deadline);
                cv.wait_until(lock, wake, [&] { return !events.empty() || !running; });
                if (!running) return;
                if (!events.empty()) {
                    ev = std::move(events.front());
                    events.pop_front();
                    have_event = true;
                }
            }

            if (have_event) {
                switch (ev.kind) {
                    case Event::Kind::Shutdown: {
                        std::lock_guard<std::mutex> lock(mu);
                        running = false;
                    }
                        cv.notify_all();
                        return;
                    case Event::Kind::Data: handle_data(ev.src, ev.msg); break;
                    case Event::Kind::SrcDown: break;  // just re-examine pending rounds
                }
            }
            sweep(Clock::now());
        }
    }

    void handle_data(uint16_t src, const WireMessage& msg) {
        if (static_cast<int64_t>(msg.inference_id) <= max_fired) return;  // stale round
        const InEdge* edge = nullptr;
        for (const auto& e : in_edges)
            if (e.src_wire == src) edge = &e;
        if (!edge) return;  // not one of our hyperconnections
        if (!msg.null_flag && static_cast<int>(msg.payload.size()) != edge->dim) return;

        PendingRound& round = pending[msg.inference_id];
        if (round.got.empty())
            round.deadline = Clock::now() + std::chrono::milliseconds(timeouts.round_timeout_ms);
        round.got[src] = msg.null_flag ? ActivationVector<float>(std::nullopt)
                                       : ActivationVector<float>(msg.payload);
    }

    void sweep(Clock::time_point now) {
        std::vector<uint64_t> done;
        for (auto& [id, round] : pending)
            if (now >= round.deadline || round_ready(round, now)) done.push_back(id);
        std::sort(done.begin(), done.end());
        for (uint64_t id : done) {
            fire_round(id, pending[id]);
            max_fired = std::max<int64_t>(max_fired, static_cast<int64_t>(id));
            pending.erase(id);
        }
        // Rounds far behind the watermark were abandoned upstream.
        for (auto it = pending.begin(); it != pending.end();)
            it = static_cast<int64_t>(it->first) + 64 < max_fired ? pending.erase(it)
                                                                  : std::next(it);
    }
};

NodeDaemon::NodeDaemon(DistributedNet<float> net, std::string node_id, NodeEndpoints endpoints,
                       RuntimeTimeouts timeouts)
    : impl_(std::make_unique<Impl>()) {
    impl_->net = std::move(net);
    impl_->node_id = std::move(node_id);
    impl_->endpoints = std::move(endpoints);
    impl_->timeouts = timeouts;

    const DistributedDnn& graph = impl_->net.graph();
    if (!graph.find_node(impl_->node_id))
        throw std::invalid_argument("serve-node: unknown node " + impl_->node_id);
    if (graph.node(impl_->node_id).tier == Tier::Iot)
        throw std::invalid_argument("serve-node: iot nodes carry no layers to serve");
    impl_->self_idx = impl_->net.node_index(impl_->node_id);
    impl_->wire_of = wire_ids(graph);
    for (const auto& [id, w] : impl_->wire_of) impl_->name_of[w] = id;
    impl_->self_wire = impl_->wire_of.at(impl_->node_id);
    impl_->terminal = graph.output_node() == impl_->node_id;

    for (const Hyperconnection* hc : graph.in_edges(impl_->node_id)) {
        Impl::InEdge e;
        e.src_id = hc->src;
        e.src_wire = impl_->wire_of.at(hc->src);
        e.dim = hc->dim;
        e.src_compute = graph.node(hc->src).tier != Tier::Iot;
        impl_->in_edges.push_back(e);
    }
    if (impl_->endpoints.node_address.find(impl_->node_id) == impl_->endpoints.node_address.end())
        throw std::invalid_argument("serve-node: no listen address for " + impl_->node_id);
}

NodeDaemon::~NodeDaemon() = default;

int NodeDaemon::run() {
    Impl& im = *impl_;
    const auto [host, port] = split_address(im.endpoints.node_address.at(im.node_id));
    try {
        im.listener = std::make_unique<Listener>(port);
    } catch (const std::exception& e) {
        std::cerr << "[" << im.node_id << "] " << e.what() << "\n";
        return 2;
    }

    std::vector<std::string> peers;
    for (const auto& e : im.in_edges)
        if (e.src_compute) peers.push_back(e.src_id);
    im.monitor = std::make_unique<HeartbeatMonitor>(
        peers, std::chrono::milliseconds(im.timeouts.heartbeat_interval_ms),
        std::chrono::milliseconds(im.timeouts.suspicion_timeout_ms), Clock::now());

    const DistributedDnn& graph = im.net.graph();
    for (const Hyperconnection* hc : graph.out_edges(im.node_id)) {
        auto it = im.endpoints.node_address.find(hc->dst);
        if (it == im.endpoints.node_address.end()) {
            std::cerr << "[" << im.node_id << "] no address for peer " << hc->dst << "\n";
            return 2;
        }
        const auto [peer_host, peer_port] = split_address(it->second);
        im.out_senders.push_back(std::make_unique<Sender>(im.self_wire, peer_host, peer_port));
    }

    const auto [coord_host, coord_port] = split_address(im.endpoints.coordinator_address);
    im.control = std::make_unique<Sender>(im.self_wire, coord_host, coord_port,
                                          [&im](const WireMessage& msg) {
                                              if (msg.type == MsgType::Shutdown)
                                                  im.post({Impl::Event::Kind::Shutdown, 0, {}});
                                          });

    {
        std::lock_guard<std::mutex> lock(im.conn_mu);
        im.threads.emplace_back([&im] { im.accept_loop(); });
        im.threads.emplace_back([&im] { im.heartbeat_loop(); });
    }

    // Wire up, then report readiness: the HELLO to the coordinator means every
    // outbound link of this node is connected.
    const auto deadline = Clock::now() + std::chrono::milliseconds(im.timeouts.handshake_timeout_ms);
    bool wired = false;
    while (!wired && Clock::now() < deadline) {
        bool outs = true;
        for (auto& s : im.out_senders) outs = s->ensure_connected() && outs;
        if (outs) wired = im.control->ensure_connected();
        if (!wired) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    if (!wired) {
        std::cerr << "[" << im.node_id << "] peers unreachable within handshake timeout\n";
        return 1;
    }

    im.main_loop();

    im.listener->close_now();
    {
        std::lock_guard<std::mutex> lock(im.conn_mu);
        for (auto& [w, conn] : im.inbound) conn->close_now();
    }
    for (auto& s : im.out_senders) s->shutdown();
    im.control->shutdown();
    im.cv.notify_all();
    for (size_t i = 0;; ++i) {
        std::thread t;
        {
            std::lock_guard<std::mutex> lock(im.conn_mu);
            if (i >= im.threads.size()) break;
            t = std::move(im.threads[i]);
        }
        if (t.joinable()) t.join();
    }
    return 0;
}

// ---- coordinator ----

std::vector<RoundOutcome> run_pipeline(const DistributedDnn& graph,
                                       const std::map<std::string, Mat<float>>& iot_inputs,
                                       const ChaosPlan& chaos, const NodeEndpoints& endpoints,
                                       const RuntimeTimeouts& timeouts, ProcessControl* control) {
    chaos.validate(graph);
    if (!chaos.empty() && !control)
        throw std::invalid_argument("chaos plan given without process control");

    const auto ids = wire_ids(graph);
    std::set<uint16_t> compute_ids;
    for (const auto& n : graph.nodes)
        if (n.tier != Tier::Iot) compute_ids.insert(ids.at(n.id));

    int rounds_total = -1;
    for (const auto& [id, m] : iot_inputs) {
        if (!graph.find_node(id) || graph.node(id).tier != Tier::Iot)
            throw std::invalid_argument("pipeline input for non-iot node " + id);
        if (rounds_total < 0) rounds_total = m.rows;
        if (m.rows != rounds_total) throw std::invalid_argument("pipeline inputs disagree on rows");
    }
    if (rounds_total <= 0) throw std::invalid_argument("pipeline has no input rows");

    const auto [host, port] = split_address(endpoints.coordinator_address);
    Listener listener(port);

    std::mutex mu;
    std::condition_variable cv;
    std::set<uint16_t> ready;
    std::deque<WireMessage> outputs;
    std::map<uint16_t, std::shared_ptr<FrameSocket>> controls;
    std::vector<std::thread> threads;
    std::mutex threads_mu;
    const uint16_t terminal_wire = ids.at(graph.output_node());

    auto reader = [&](std::shared_ptr<FrameSocket> conn) {
        uint16_t src = 0;
        bool registered = false;
        while (true) {
            auto msg = conn->read_message();
            if (!msg || msg->version != kWireVersion) break;
            if (msg->type == MsgType::Hello) {
                src = msg->source_node;
                registered = true;
                std::lock_guard<std::mutex> lock(mu);
                ready.insert(src);
                controls[src] = conn;
                cv.notify_all();
            } else if (msg->type == MsgType::Data && registered && src == terminal_wire) {
                std::lock_guard<std::mutex> lock(mu);
                outputs.push_back(std::move(*msg));
                cv.notify_all();
            } else if (msg->type == MsgType::KeepAlive) {
                WireMessage ack;
                ack.type = MsgType::KeepAliveAck;
                ack.source_node = kCoordinatorId;
                conn->write_message(ack);
            }
        }
        if (registered) {
            std::lock_guard<std::mutex> lock(mu);
            ready.erase(src);
            cv.notify_all();
        }
    };

    std::thread acceptor([&] {
        while (auto sock = listener.accept_one()) {
            std::shared_ptr<FrameSocket> conn(std::move(sock));
            std::lock_guard<std::mutex> lock(threads_mu);
            threads.emplace_back([conn, &reader] { reader(conn); });
        }
    });

    auto wait_ready = [&](const std::set<uint16_t>& want) {
        std::unique_lock<std::mutex> lock(mu);
        if (!cv.wait_for(lock, std::chrono::milliseconds(timeouts.handshake_timeout_ms), [&] {
                return std::includes(ready.begin(), ready.end(), want.begin(), want.end());
            }))
            throw std::runtime_error("pipeline: daemons not ready within handshake timeout");
    };
    wait_ready(compute_ids);

    // The coordinator plays every iot source: one sender per iot out-edge.
    std::vector<std::tuple<std::string, std::unique_ptr<Sender>>> iot_senders;
    for (const auto& n : graph.nodes) {
        if (n.tier != Tier::Iot) continue;
        for (const Hyperconnection* hc : graph.out_edges(n.id)) {
            const auto [peer_host, peer_port] = split_address(endpoints.node_address.at(hc->dst));
            iot_senders.emplace_back(n.id,
                                     std::make_unique<Sender>(ids.at(n.id), peer_host, peer_port));
        }
    }

    std::vector<RoundOutcome> results;
    const auto started = Clock::now();
    std::vector<bool> time_action_done(chaos.actions.size(), false);

    for (int r = 0; r < rounds_total; ++r) {
        // Chaos actions due at this round boundary.
        for (size_t a = 0; a < chaos.actions.size(); ++a) {
            const ChaosAction& act = chaos.actions[a];
            const bool due_by_round = !act.by_time && act.at_round == static_cast<uint64_t>(r);
            const bool due_by_time =
                act.by_time && !time_action_done[a] &&
                Clock::now() - started >= std::chrono::milliseconds(act.at_ms);
            if (!due_by_round && !due_by_time) continue;
            time_action_done[a] = true;
            if (act.kind == ChaosAction::Kind::Kill) {
                control->kill_node(act.node_id);
            } else {
                control->revive_node(act.node_id);
                wait_ready({ids.at(act.node_id)});
            }
        }

        for (auto& [iot_id, sender] : iot_senders) {
            const Mat<float>& view = iot_inputs.at(iot_id);
            WireMessage msg;
            msg.type = MsgType::Data;
            msg.source_node = ids.at(iot_id);
            msg.inference_id = static_cast<uint64_t>(r);
            msg.payload.assign(view.row(r), view.row(r) + view.cols);
            sender->send(msg);  // a dead destination just drops this edge's data
        }

        RoundOutcome outcome;
        outcome.inference_id = static_cast<uint64_t>(r);
        std::unique_lock<std::mutex> lock(mu);
        const auto deadline =
            Clock::now() + std::chrono::milliseconds(timeouts.coordinator_round_timeout_ms);
        bool got = false;
        while (!got) {
            if (!cv.wait_until(lock, deadline, [&] { return !outputs.empty(); })) break;
            while (!outputs.empty()) {
                WireMessage msg = std::move(outputs.front());
                outputs.pop_front();
                if (msg.inference_id != static_cast<uint64_t>(r)) continue;  // stale
                got = true;
                if (msg.null_flag) {
                    outcome.null_outcome = true;
                } else {
                    outcome.output = std::move(msg.payload);
                    outcome.predicted = 0;
                    for (size_t c = 1; c < outcome.output.size(); ++c)
                        if (outcome.output[c] > outcome.output[outcome.predicted])
                            outcome.predicted = static_cast<int>(c);
                }
                break;
            }
        }
        if (!got) {
            outcome.null_outcome = true;
            outcome.timed_out = true;
        }
        lock.unlock();
        results.push_back(std::move(outcome));
    }

    {
        std::lock_guard<std::mutex> lock(mu);
        WireMessage bye;
        bye.type = MsgType::Shutdown;
        bye.source_node = kCoordinatorId;
        for (auto& [w, conn] : controls) conn->write_message(bye);
    }
    for (auto& [iot_id, sender] : iot_senders) sender->shutdown();
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    listener.close_now();
    {
        std::lock_guard<std::mutex> lock(mu);
        for (auto& [w, conn] : controls) conn->close_now();
    }
    acceptor.join();
    for (size_t i = 0;; ++i) {
        std::thread t;
        {
            std::lock_guard<std::mutex> lock(threads_mu);
            if (i >= threads.size()) break;
            t = std::move(threads[i]);
        }
        if (t.joinable()) t.join();
    }
    return results;
}

// ---- local process management ----

DaemonProcessManager::~DaemonProcessManager() { stop_all(0); }

void DaemonProcessManager::register_node(const std::string& id, std::vector<std::string> argv) {
    if (argv.empty()) throw std::invalid_argument("process manager: empty argv");
    procs_[id] = Proc{std::move(argv), -1};
}

void DaemonProcessManager::launch(const std::string& id) {
    Proc& p = procs_.at(id);
    std::vector<char*> argv;
    for (auto& a : p.argv) argv.push_back(a.data());
    argv.push_back(nullptr);
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed for node " + id);
    if (pid == 0) {
        ::execv(argv[0], argv.data());
        std::perror("execv");
        ::_exit(127);
    }
    p.pid = pid;
}

void DaemonProcessManager::start_all() {
    for (auto& [id, p] : procs_)
        if (p.pid < 0) launch(id);
}

void DaemonProcessManager::kill_node(const std::string& id) {
    Proc& p = procs_.at(id);
    if (p.pid <= 0) return;
    ::kill(static_cast<pid_t>(p.pid), SIGKILL);
    int status = 0;
    ::waitpid(static_cast<pid_t>(p.pid), &status, 0);
    p.pid = -1;
}

void DaemonProcessManager::revive_node(const std::string& id) {
    Proc& p = procs_.at(id);
    if (p.pid > 0) return;  // already running
    launch(id);
}

void DaemonProcessManager::stop_all(int grace_ms) {
    const auto deadline = Clock::now() + std::chrono::milliseconds(grace_ms);
    for (auto& [id, p] : procs_) {
        if (p.pid <= 0) continue;
        int status = 0;
        pid_t done = 0;
        while ((done = ::waitpid(static_cast<pid_t>(p.pid), &status, WNOHANG)) == 0 &&
               Clock::now() < deadline)
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        if (done == 0) {
            ::kill(static_cast<pid_t>(p.pid), SIGKILL);
            ::waitpid(static_cast<pid_t>(p.pid), &status, 0);
        }
        p.pid = -1;
    }
}

}  // namespace dfg
