#include "failover/sim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <random>
#include <set>

#include "failover/store.hpp"
#include "failover/wire.hpp"

namespace failover::sim {

namespace {

// splitmix64; derives independent per-component RNG streams from the run
// seed so adding a component does not perturb the others' draws.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t run_seed, const std::string& component) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : component) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
    return mix64(run_seed ^ h);
}

struct Event {
    SimTime time = 0;
    std::uint64_t seq = 0;
    std::function<void()> fn;
};

struct EventCompare {
    bool operator()(const Event& a, const Event& b) const {
        return std::tie(a.time, a.seq) > std::tie(b.time, b.seq);
    }
};

struct LedgerEntry {
    std::uint64_t write_id = 0;
    SimTime issue_time = 0;
    SimTime ack_time = -1;
    std::string ack_region;
    std::uint64_t epoch = 0;
    std::uint64_t lsn = 0;
    bool survived = false;
};

struct PendingWrite {
    std::uint64_t write_id = 0;
    std::uint64_t lsn = 0;
    std::uint64_t epoch = 0;
};

struct Node {
    std::string id;
    int priority = 0;
    bool powered = true;
    std::uint64_t gen = 0;  // bumped on power transitions; stale events check it

    // Durable state: survives power loss.
    std::uint64_t committed_lsn = 0;
    ProgressTable progress;

    // Volatile role state.
    bool write_primary = false;
    bool quiesced = false;
    std::uint64_t write_epoch = 0;   // epoch at which this node became primary
    std::uint64_t accept_epoch = 1;  // replication stream currently accepted
    SimTime last_success = std::numeric_limits<SimTime>::min() / 2;
    bool ever_succeeded = false;

    // Proposer round state.
    bool busy = false;  // a round or a backoff retry is in flight
    std::uint64_t round_id = 0;
    unsigned attempt = 1;
    bool round_conflicted = false;
    bool ballot_refresh_available = true;
    LeaderState leader;
    LearnerState learner;
    std::optional<NakMessage> last_nak;
    ProposalTiming timing;
    std::optional<ProposalTiming> last_clean_timing;
    std::optional<Duration> pending_phase2_sample;
    SimTime cycle_anchor = 0;  // static policy: fixed 30 s cadence anchor
    PartitionReport report;  // snapshot taken at round start

    std::optional<FailoverManagerState> learned;

    // Write-region bookkeeping.
    std::map<std::string, std::uint64_t> commit_view;  // region -> acked lsn
    std::vector<PendingWrite> pending_writes;

    std::mt19937_64 rng;

    std::uint64_t data_epoch() const {
        return progress.entries.empty() ? 1 : progress.entries.rbegin()->first;
    }
};

struct Store {
    std::string id;
    std::string region;
    bool available = true;
    InMemoryStore backend;
};

class PartitionSetSim {
  public:
    PartitionSetSim(const ScenarioConfig& config, std::uint64_t seed)
        : config_(config), params_(config.fm_params()), seed_(seed) {}

    SimResult run();

  private:
    // -- engine plumbing --
    void at(SimTime t, std::function<void()> fn) {
        queue_.push(Event{t, next_seq_++, std::move(fn)});
    }
    void trace(const std::string& kind, const std::string& actor, const std::string& detail) {
        TraceEvent ev{now_, kind, actor, detail};
        recent_.push_back(ev);
        if (recent_.size() > 4096) recent_.pop_front();
        if (config_.trace) full_trace_.push_back(ev);
    }
    [[noreturn]] void violate(const std::string& what) {
        std::vector<TraceEvent> prefix(recent_.begin(), recent_.end());
        throw InvariantViolation("invariant violation at t=" + std::to_string(now_) + "us: " + what,
                                 std::move(prefix));
    }

    // -- network --
    bool link_severed(const std::string& a, const std::string& b) const;
    Duration sample_latency(const std::string& from, const std::string& to);
    bool dropped();

    // -- proposer protocol --
    void schedule_first_attempts();
    void scheduled_attempt(std::size_t node_idx);
    void schedule_next_attempt(std::size_t node_idx, bool after_success);
    void start_round(std::size_t node_idx);
    void send_to_stores(std::size_t node_idx, const PaxosMessage& msg);
    void on_store_response(std::size_t node_idx, std::uint64_t round_id, std::uint64_t gen,
                           const PersistResult& resp);
    void on_nak(std::size_t node_idx, const NakMessage& nak);
    void on_round_success(std::size_t node_idx, const RegisterValue& value);
    ValueEditor make_editor(std::size_t node_idx);
    void apply_actions(std::size_t node_idx, const FailoverManagerState& fm);
    void on_learned(std::size_t node_idx, const FailoverManagerState& fm,
                    std::uint64_t cas_version);

    // -- replication / clients --
    void commit_write(std::size_t node_idx, std::uint64_t write_id);
    void broadcast_watermark(std::size_t node_idx);
    void on_replication(std::size_t node_idx, std::uint64_t gen, const std::string& from,
                        std::uint64_t epoch, std::uint64_t lsn);
    void on_repl_ack(std::size_t node_idx, std::uint64_t gen, const std::string& from,
                     std::uint64_t lsn);
    void try_ack_pending(std::size_t node_idx);
    void ack_write(std::uint64_t write_id, const std::string& region);
    void client_issue(std::uint64_t write_id, std::size_t try_rank);
    void client_loop();
    bool node_can_ack(const Node& node) const;
    void set_committed(Node& node, std::uint64_t lsn, bool truncation);

    // -- faults / checkers / metrics --
    void schedule_faults();
    void power_off(std::size_t node_idx);
    void power_on(std::size_t node_idx);
    void lease_tick(std::size_t node_idx);
    void liveness_tick();
    void check_single_writer();
    void finalize_metrics();

    std::size_t node_index(const std::string& id) const {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].id == id) return i;
        }
        throw std::invalid_argument("unknown region: " + id);
    }
    bool faults_quiet() const;

    ScenarioConfig config_;
    FailoverParams params_;
    std::uint64_t seed_ = 0;

    SimTime now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, EventCompare> queue_;

    std::vector<Node> nodes_;
    std::deque<Store> stores_;  // deque: Store is pinned (contains a mutex)
    std::string paxos_key_;
    std::size_t store_quorum_ = 0;

    std::mt19937_64 network_rng_;
    std::mt19937_64 client_rng_;
    std::map<std::pair<std::string, std::string>, std::pair<double, double>> latency_;  // us
    std::map<std::pair<std::string, std::string>, SimTime> link_fifo_;
    std::vector<PartitionWindow> partitions_;

    // Committed chain bookkeeping: cas_version -> (epoch, serialized payload).
    std::map<std::uint64_t, std::pair<std::uint64_t, std::string>> chain_;
    std::optional<FailoverManagerState> latest_state_;
    std::uint64_t latest_version_ = 0;
    std::map<std::uint64_t, std::uint64_t> epoch_cutoffs_;  // old epoch -> retained lsn

    std::vector<LedgerEntry> ledger_;
    std::uint64_t next_write_id_ = 0;
    std::optional<std::size_t> client_cache_;
    Duration client_loop_gap_ = seconds(1);
    SimTime last_ack_time_ = 0;

    unsigned healthy_streak_ = 0;
    SimTime last_writes_enabled_ = 0;

    MetricsRecord metrics_;
    std::deque<TraceEvent> recent_;
    std::vector<TraceEvent> full_trace_;
};

// ---------------------------------------------------------------------------

bool PartitionSetSim::link_severed(const std::string& a, const std::string& b) const {
    if (a == b) return false;
    for (const auto& w : partitions_) {
        if (now_ < w.start || now_ >= w.end) continue;
        if ((w.a == a && w.b == b) || (w.a == b && w.b == a)) return true;
    }
    return false;
}

Duration PartitionSetSim::sample_latency(const std::string& from, const std::string& to) {
    if (from == to) return milliseconds(1);
    auto it = latency_.find({from, to});
    double p50, jitter;
    if (it != latency_.end()) {
        p50 = it->second.first;
        jitter = it->second.second;
    } else {
        p50 = config_.network.default_p50_ms * 1000.0;
        jitter = config_.network.default_jitter_ms * 1000.0;
    }
    std::normal_distribution<double> dist(p50, jitter);
    double sample = dist(network_rng_);
    if (sample < p50 / 4.0) sample = p50 / 4.0;  // truncated normal, never negative
    return static_cast<Duration>(sample);
}

bool PartitionSetSim::dropped() {
    if (config_.network.drop_rate <= 0.0) return false;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(network_rng_) < config_.network.drop_rate;
}

// ---------------------------------------------------------------------------

SimResult PartitionSetSim::run() {
    network_rng_.seed(stream_seed(seed_, "network"));
    client_rng_.seed(stream_seed(seed_, "client"));
    paxos_key_ = "partition-set-0";

    for (const auto& r : config_.regions) {
        Node node;
        node.id = r.id;
        node.priority = r.priority;
        node.rng.seed(stream_seed(seed_, "proposer/" + r.id));
        node.report.region = r.id;
        nodes_.push_back(std::move(node));
    }
    std::sort(nodes_.begin(), nodes_.end(),
              [](const Node& a, const Node& b) { return a.priority < b.priority; });

    for (int i = 0; i < config_.acceptors; ++i) {
        Store& s = stores_.emplace_back();
        s.id = "store" + std::to_string(i);
        s.region = config_.regions[static_cast<std::size_t>(i) % config_.regions.size()].id;
    }
    store_quorum_ = majority_of(stores_.size());

    // Per-pair latencies, heterogeneous when a random range is configured.
    std::set<std::string> places;
    for (const auto& n : nodes_) places.insert(n.id);
    for (const auto& s : stores_) places.insert(s.region);
    if (config_.network.random_p50_range_ms) {
        auto [lo, hi] = *config_.network.random_p50_range_ms;
        std::uniform_real_distribution<double> pick(lo * 1000.0, hi * 1000.0);
        for (const auto& a : places) {
            for (const auto& b : places) {
                if (a >= b) continue;
                double p50 = pick(network_rng_);
                double jitter = p50 * config_.network.random_jitter_frac;
                latency_[{a, b}] = {p50, jitter};
                latency_[{b, a}] = {p50, jitter};
            }
        }
    }
    for (const auto& o : config_.network.overrides) {
        latency_[{o.from, o.to}] = {o.p50_ms * 1000.0, o.jitter_ms * 1000.0};
        latency_[{o.to, o.from}] = {o.p50_ms * 1000.0, o.jitter_ms * 1000.0};
    }
    partitions_ = config_.network.partitions;
    for (const auto& f : config_.faults) {
        if (f.kind == FaultEntry::Kind::LinkPartition) {
            partitions_.push_back(PartitionWindow{f.a, f.b, f.start, f.start + f.duration});
        }
        if (f.kind == FaultEntry::Kind::RegionPowerOutage) {
            OutageMetrics o;
            o.outage_start = f.start;
            o.outage_end = f.start + f.duration;
            metrics_.outages.push_back(o);
        }
    }

    schedule_faults();
    schedule_first_attempts();

    // Lease accounting and liveness checking cadences.
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Duration offset = config_.proposer_interval * static_cast<Duration>(i + 1) /
                                static_cast<Duration>(nodes_.size() + 1);
        at(config_.proposer_interval + offset, [this, i] { lease_tick(i); });
    }
    at(config_.lease_window, [this] { liveness_tick(); });

    if (config_.client_writes_per_s > 0.0) {
        client_loop_gap_ = static_cast<Duration>(1e6 / config_.client_writes_per_s);
        // Client writes start after a warmup so the first failover manager
        // rounds have established a write region.
        at(seconds(60), [this] { client_loop(); });
    }

    while (!queue_.empty()) {
        Event ev = queue_.top();
        queue_.pop();
        if (ev.time > config_.duration) break;
        now_ = ev.time;
        ev.fn();
    }
    now_ = config_.duration;
    finalize_metrics();
    return SimResult{metrics_, std::move(full_trace_)};
}

// ---------------------------------------------------------------------------

void PartitionSetSim::schedule_first_attempts() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (config_.policy == BackoffPolicyKind::Static) {
            // All regions deploy the same update cadence; only jitter
            // separates their first (and every later) attempt.
            std::uniform_int_distribution<Duration> u(0, std::max<Duration>(1, config_.sched_jitter));
            at(u(nodes_[i].rng), [this, i] { scheduled_attempt(i); });
        } else {
            std::uniform_int_distribution<Duration> u(0, config_.proposer_interval - 1);
            at(u(nodes_[i].rng), [this, i] { scheduled_attempt(i); });
        }
    }
}

void PartitionSetSim::scheduled_attempt(std::size_t node_idx) {
    Node& node = nodes_[node_idx];
    if (!node.powered) return;  // rescheduled by power_on
    if (node.busy) {
        // A contended round is still running; come back next interval.
        at(now_ + config_.proposer_interval, [this, node_idx] { scheduled_attempt(node_idx); });
        return;
    }
    node.attempt = 1;
    node.round_conflicted = false;
    node.ballot_refresh_available = true;
    node.last_nak.reset();
    node.timing = ProposalTiming{};
    node.timing.interval = config_.proposer_interval;
    node.timing.phase1a_start = now_;
    start_round(node_idx);
}

void PartitionSetSim::schedule_next_attempt(std::size_t node_idx, bool after_success) {
    Node& node = nodes_[node_idx];
    Duration delay = config_.proposer_interval;
    if (config_.policy == BackoffPolicyKind::Adaptive) {
        if (after_success && !node.round_conflicted) node.last_clean_timing = node.timing;
        if (node.last_clean_timing) {
            ProposalTiming t = *node.last_clean_timing;
            t.interval = config_.proposer_interval;
            delay = next_proposal_delay(t);
        }
        at(now_ + delay, [this, node_idx] { scheduled_attempt(node_idx); });
        return;
    }
    // Static policy: a fixed cadence anchored at startup, like a cron job.
    // Colliding proposers collide again next cycle; only the jitter around
    // the anchor (not proposal duration) separates them.
    std::uniform_int_distribution<Duration> u(0, std::max<Duration>(1, config_.sched_jitter));
    do {
        node.cycle_anchor += config_.proposer_interval;
    } while (node.cycle_anchor <= now_);
    at(node.cycle_anchor + u(node.rng), [this, node_idx] { scheduled_attempt(node_idx); });
}

void PartitionSetSim::start_round(std::size_t node_idx) {
    Node& node = nodes_[node_idx];
    if (!node.powered) return;
    node.busy = true;
    node.round_id++;
    node.leader.self_id = node.id;
    node.leader.quorum_threshold = store_quorum_;
    node.learner = LearnerState{store_quorum_};
    node.report = PartitionReport{node.id, true, node.committed_lsn, node.data_epoch(), now_};

    auto [leader, p1a] = leader_start_phase1(node.leader, node.last_nak);
    node.leader = leader;
    trace("phase1a", node.id, "round=" + std::to_string(node.round_id) +
                                  " ballot=" + std::to_string(p1a.ballot.round));
    send_to_stores(node_idx, p1a);

    const std::uint64_t round = node.round_id;
    const std::uint64_t gen = node.gen;
    at(now_ + config_.round_timeout, [this, node_idx, round, gen] {
        Node& n = nodes_[node_idx];
        if (!n.powered || n.gen != gen || n.round_id != round || !n.busy) return;
        n.busy = false;
        trace("round_timeout", n.id, "round=" + std::to_string(round));
        schedule_next_attempt(node_idx, /*after_success=*/false);
    });
}

void PartitionSetSim::send_to_stores(std::size_t node_idx, const PaxosMessage& msg) {
    Node& node = nodes_[node_idx];
    const std::uint64_t round = node.round_id;
    const std::uint64_t gen = node.gen;
    for (std::size_t s = 0; s < stores_.size(); ++s) {
        if (link_severed(node.id, stores_[s].region) || dropped()) continue;
        const Duration to = sample_latency(node.id, stores_[s].region);
        at(now_ + to, [this, node_idx, s, msg, round, gen] {
            Store& store = stores_[s];
            if (!store.available) return;  // caller sees a timeout
            PersistResult resp = persist_acceptor_message(store.backend, paxos_key_, store.id, msg);
            if (std::holds_alternative<StoreUnavailable>(resp)) return;
            if (link_severed(stores_[s].region, nodes_[node_idx].id) || dropped()) return;
            const Duration back = sample_latency(store.region, nodes_[node_idx].id);
            at(now_ + back, [this, node_idx, round, gen, resp] {
                on_store_response(node_idx, round, gen, resp);
            });
        });
    }
}

void PartitionSetSim::on_store_response(std::size_t node_idx, std::uint64_t round_id,
                                        std::uint64_t gen, const PersistResult& resp) {
    Node& node = nodes_[node_idx];
    if (!node.powered || node.gen != gen || node.round_id != round_id || !node.busy) return;

    if (const auto* nak = std::get_if<NakMessage>(&resp)) {
        on_nak(node_idx, *nak);
        return;
    }
    if (const auto* p1b = std::get_if<Phase1bMessage>(&resp)) {
        Phase2Start result = leader_on_phase1b(node.leader, *p1b, make_editor(node_idx));
        node.leader = result.state;
        if (result.status == Phase2Status::Proposed) {
            node.timing.phase2a_start = now_;
            trace("phase2a", node.id, "round=" + std::to_string(node.round_id));
            send_to_stores(node_idx, *result.message);
        }
        return;
    }
    if (const auto* p2b = std::get_if<Phase2bMessage>(&resp)) {
        if (node.leader.phase != LeaderPhase::Proposed || p2b->ballot != node.leader.ballot) return;
        auto [learner, learned] = learner_learn(node.learner, *p2b);
        node.learner = learner;
        if (learned) on_round_success(node_idx, *learned);
        return;
    }
}

void PartitionSetSim::on_nak(std::size_t node_idx, const NakMessage& nak) {
    Node& node = nodes_[node_idx];
    node.busy = false;  // further responses for this round are ignored via round_id
    node.round_id++;
    node.last_nak = nak;

    // A ballot gone stale since our previous round is not a duel: refresh
    // from the promise carried by the nak and retry once, immediately.
    if (node.ballot_refresh_available) {
        node.ballot_refresh_available = false;
        start_round(node_idx);
        return;
    }
    node.round_conflicted = true;
    metrics_.cas_conflicts++;

    Duration delay;
    if (config_.policy == BackoffPolicyKind::Adaptive) {
        const SchedulerStats stats =
            node.learned ? node.learned->scheduler_stats : SchedulerStats{};
        delay = adaptive_nak_delay(stats, node.attempt, config_.adaptive_fallback_delta, node.rng);
    } else {
        delay = static_nak_delay(node.attempt, config_.static_delta, node.rng);
    }
    node.attempt++;
    trace("nak", node.id,
          "attempt=" + std::to_string(node.attempt) + " delay_us=" + std::to_string(delay));

    const std::uint64_t gen = node.gen;
    node.busy = true;  // stay busy across the backoff wait
    at(now_ + delay, [this, node_idx, gen] {
        Node& n = nodes_[node_idx];
        if (!n.powered || n.gen != gen) return;
        n.busy = false;
        start_round(node_idx);
    });
}

ValueEditor PartitionSetSim::make_editor(std::size_t node_idx) {
    return [this, node_idx](const std::optional<RegisterValue>& current)
               -> std::optional<std::string> {
        Node& node = nodes_[node_idx];
        FailoverManagerState state = current ? deserialize_fm_state(current->payload)
                                             : initial_state(config_.regions, config_.min_durability);
        state = transition(state, node.report, {}, now_, params_);

        // Write-region housekeeping: drop leases of regions that stopped
        // reporting, so the durability quorum tracks reality.
        if (state.write_region == node.id) {
            std::vector<std::string> stale;
            for (const auto& region : state.active_leases) {
                auto it = state.latest_reports.find(region);
                if (it == state.latest_reports.end() ||
                    now_ - it->second.report_time > params_.lease_window) {
                    stale.push_back(region);
                }
            }
            for (const auto& region : stale) {
                RevocationResult rev = request_lease_revocation(state, region);
                if (rev.permitted) {
                    state = std::move(rev.state);
                    trace("lease_revoked", node.id, region);
                }
            }
        } else if (!state.active_leases.count(node.id)) {
            state = readd_lease(state, node.id, node.report, params_);
        }

        if (node.pending_phase2_sample) {
            state.scheduler_stats.alpha = config_.adaptive_alpha;
            state.scheduler_stats =
                record_phase2_duration(state.scheduler_stats, *node.pending_phase2_sample);
        }
        return serialize_fm_state(state);
    };
}

void PartitionSetSim::on_round_success(std::size_t node_idx, const RegisterValue& value) {
    Node& node = nodes_[node_idx];
    node.busy = false;
    node.round_id++;
    node.timing.phase2b_end = now_;
    node.timing.proposal_end = now_;
    node.pending_phase2_sample = phase2_duration(node.timing);
    node.last_success = now_;
    node.ever_succeeded = true;
    node.last_nak.reset();

    FailoverManagerState fm = deserialize_fm_state(value.payload);
    on_learned(node_idx, fm, value.cas_version);
    node.learned = fm;
    apply_actions(node_idx, fm);
    trace("update_ok", node.id, "epoch=" + std::to_string(fm.epoch) +
                                    " cas=" + std::to_string(value.cas_version));
    if (node.write_primary && !node.quiesced) broadcast_watermark(node_idx);
    schedule_next_attempt(node_idx, /*after_success=*/true);
}

void PartitionSetSim::on_learned(std::size_t node_idx, const FailoverManagerState& fm,
                                 std::uint64_t cas_version) {
    if (auto violation = check_state_invariants(fm)) violate(*violation);

    // Agreement along the committed chain, and epoch monotonicity in
    // cas_version order.
    const std::string payload = serialize_fm_state(fm);
    auto it = chain_.find(cas_version);
    if (it != chain_.end()) {
        if (it->second.second != payload) {
            violate("two different values learned at cas_version " + std::to_string(cas_version));
        }
    } else {
        chain_[cas_version] = {fm.epoch, payload};
        auto self = chain_.find(cas_version);
        if (self != chain_.begin() && std::prev(self)->second.first > fm.epoch) {
            violate("epoch decreased along the committed chain");
        }
        auto next = std::next(self);
        if (next != chain_.end() && next->second.first < fm.epoch) {
            violate("epoch decreased along the committed chain");
        }
    }

    if (cas_version <= latest_version_) return;
    const std::optional<FailoverManagerState> prev = latest_state_;
    latest_state_ = fm;
    latest_version_ = cas_version;

    // Classify failovers and attribute them to outages for metrics.
    if (prev && fm.epoch > prev->epoch) {
        // The state itself records whether the latest install was graceful;
        // an observer may have skipped the intermediate state in which the
        // handoff was pending, so its previous snapshot is not reliable.
        const bool graceful_completion =
            fm.last_install_graceful && fm.write_region != prev->write_region;
        if (graceful_completion) {
            metrics_.graceful_failovers++;
            trace("graceful_failover", fm.write_region, "epoch=" + std::to_string(fm.epoch));
            for (auto& o : metrics_.outages) {
                if (o.failback_detect_time >= 0 && o.failback_complete_time < 0 &&
                    fm.write_region == nodes_[0].id) {
                    o.failback_complete_time = now_;
                    break;
                }
            }
        } else {
            metrics_.ungraceful_failovers++;
            trace("ungraceful_failover", fm.write_region,
                  "epoch=" + std::to_string(fm.epoch) + " from=" + prev->write_region);
            for (auto& o : metrics_.outages) {
                if (o.outage_start <= now_ && o.ungraceful_epoch_increments == 0 &&
                    (metrics_.outages.size() == 1 || now_ <= o.outage_end + seconds(600))) {
                    if (now_ >= o.outage_start) o.ungraceful_epoch_increments++;
                }
            }
        }
        if (fm.fork && fm.epoch > prev->epoch) {
            // The fork point carries the last LSN the old chain *reported*,
            // which can lag its actual committed progress by one report
            // interval. Anchor the retained cutoff to the freshest copy held
            // by replicas the new primary can reach, so acknowledged writes
            // that raced past the report are kept rather than discarded. A
            // severed or dead old writer cannot donate its tail, so it is
            // excluded unless it was drained by a graceful handoff.
            std::uint64_t retained = fm.fork->lsn;
            for (const Node& n : nodes_) {
                if (!n.powered || n.data_epoch() != fm.fork->epoch) continue;
                if (link_severed(fm.write_region, n.id)) continue;
                if (!graceful_completion && n.id == prev->write_region) continue;
                retained = std::max(retained, n.committed_lsn);
            }
            epoch_cutoffs_[fm.fork->epoch] = retained;
        }
    }
    if (!prev && fm.fork) epoch_cutoffs_.emplace(fm.fork->epoch, fm.fork->lsn);

    for (auto& o : metrics_.outages) {
        if (o.detect_time < 0 && fm.ungraceful_pending_since &&
            *fm.ungraceful_pending_since >= o.outage_start && now_ <= o.outage_end) {
            o.detect_time = *fm.ungraceful_pending_since;
            trace("outage_detected", fm.write_region, "t=" + std::to_string(o.detect_time));
        }
        if (o.failback_detect_time < 0 && now_ >= o.outage_end) {
            auto rep = fm.latest_reports.find(nodes_[0].id);
            if (rep != fm.latest_reports.end() && rep->second.healthy &&
                rep->second.report_time >= o.outage_end) {
                o.failback_detect_time = now_;
                trace("failback_detected", nodes_[0].id, "t=" + std::to_string(now_));
            }
        }
    }
    metrics_.final_epoch = fm.epoch;

    if (prev && !prev->graceful && fm.graceful) {
        metrics_.graceful_attempt_times.push_back(fm.graceful->started_at);
        trace("graceful_started", fm.graceful->target,
              "count=" + std::to_string(fm.graceful_failure_count));
    }
}

void PartitionSetSim::apply_actions(std::size_t node_idx, const FailoverManagerState& fm) {
    Node& node = nodes_[node_idx];
    const LocalProgress local{node.committed_lsn, node.data_epoch()};
    const std::vector<ReplicaAction> actions = derive_actions(fm, node.id, local);
    for (const ReplicaAction& action : actions) {
        switch (action.kind) {
            case ReplicaActionKind::TruncateFalseProgress: {
                // Keep everything at or below the retained cutoff of the
                // closed epoch: those writes survived the failover even if
                // they lie past the fork point the manager recorded.
                std::uint64_t keep = action.to_lsn;
                auto cit = epoch_cutoffs_.find(fm.fork->epoch);
                if (cit != epoch_cutoffs_.end()) keep = std::max(keep, cit->second);
                if (node.committed_lsn > keep) {
                    const std::uint64_t span = node.committed_lsn - keep;
                    metrics_.truncations.push_back(TruncateRecord{fm.fork->epoch, span});
                    trace("truncate", node.id,
                          "to=" + std::to_string(keep) + " span=" + std::to_string(span));
                    set_committed(node, keep, /*truncation=*/true);
                    auto pit = node.progress.entries.find(fm.fork->epoch);
                    if (pit != node.progress.entries.end() && pit->second > keep) {
                        pit->second = keep;
                    }
                }
                break;
            }
            case ReplicaActionKind::BecomeWritePrimary: {
                // Before enabling writes, align with the retained cutoff of
                // the chain being closed: sync the tail up from the freshest
                // reachable replica if behind, and drop replication that
                // raced past the cutoff if ahead. The clamp records no
                // truncation span because any dropped LSNs also live on the
                // old writer, which accounts for them when it rejoins.
                if (fm.fork && fm.fork->epoch == node.data_epoch() &&
                    fm.epoch > node.write_epoch) {
                    std::uint64_t cutoff = fm.fork->lsn;
                    auto cit = epoch_cutoffs_.find(fm.fork->epoch);
                    if (cit != epoch_cutoffs_.end()) cutoff = cit->second;
                    if (node.committed_lsn != cutoff) {
                        trace(node.committed_lsn < cutoff ? "takeover_sync" : "takeover_clamp",
                              node.id, "to=" + std::to_string(cutoff));
                        set_committed(node, cutoff,
                                      /*truncation=*/node.committed_lsn > cutoff);
                    }
                    node.progress.entries[fm.fork->epoch] = cutoff;
                }
                const bool was_primary = node.write_primary && node.write_epoch == fm.epoch;
                node.write_primary = true;
                node.quiesced = false;
                node.write_epoch = fm.epoch;
                node.accept_epoch = fm.epoch;
                node.progress.entries.emplace(fm.epoch, node.committed_lsn);
                check_single_writer();
                if (!was_primary) {
                    trace("writes_enabled", node.id, "epoch=" + std::to_string(fm.epoch));
                    for (auto& o : metrics_.outages) {
                        if (o.detect_time >= 0 && o.restore_time < 0 && now_ >= o.detect_time &&
                            node_idx != 0) {
                            o.restore_time = now_;
                            break;
                        }
                    }
                }
                break;
            }
            case ReplicaActionKind::QuiesceWrites:
                node.write_primary = true;
                node.write_epoch = fm.epoch;
                node.quiesced = true;
                break;
            case ReplicaActionKind::ResumeWrites:
                node.quiesced = false;
                break;
            case ReplicaActionKind::BecomeReadSecondary:
                node.write_primary = false;
                node.quiesced = false;
                node.accept_epoch = fm.epoch;
                break;
            case ReplicaActionKind::NoOp:
                break;
        }
    }
}

// ---------------------------------------------------------------------------

bool PartitionSetSim::node_can_ack(const Node& node) const {
    if (!node.powered || !node.write_primary || node.quiesced) return false;
    // Lease enforcer: a primary that cannot renew its state loses the right
    // to acknowledge writes.
    return now_ - node.last_success < config_.lease_window;
}

void PartitionSetSim::set_committed(Node& node, std::uint64_t lsn, bool truncation) {
    if (lsn < node.committed_lsn && !truncation) {
        violate("committed lsn decreased outside truncation at " + node.id);
    }
    node.committed_lsn = lsn;
}

void PartitionSetSim::client_issue(std::uint64_t write_id, std::size_t try_rank) {
    // Region try order: cached region first, then priority order.
    std::vector<std::size_t> order;
    if (client_cache_) order.push_back(*client_cache_);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!client_cache_ || i != *client_cache_) order.push_back(i);
    }
    if (try_rank >= order.size()) {
        metrics_.client_unavailable_events++;
        trace("client_unavailable", "client", "write=" + std::to_string(write_id));
        at(now_ + seconds(5), [this, write_id] { client_issue(write_id, 0); });
        return;
    }
    const std::size_t target = order[try_rank];
    Node& node = nodes_[target];
    if (!node.powered) {
        // Dead region: the request times out before the client moves on.
        at(now_ + seconds(5), [this, write_id, try_rank] { client_issue(write_id, try_rank + 1); });
        return;
    }
    if (!node_can_ack(node)) {
        client_issue(write_id, try_rank + 1);  // immediate error, try the next region
        return;
    }
    commit_write(target, write_id);
}

void PartitionSetSim::commit_write(std::size_t node_idx, std::uint64_t write_id) {
    Node& node = nodes_[node_idx];
    set_committed(node, node.committed_lsn + 1, false);
    const std::uint64_t lsn = node.committed_lsn;
    const std::uint64_t epoch = node.write_epoch;
    node.progress.entries[epoch] = lsn;

    for (auto& entry : ledger_) {
        if (entry.write_id == write_id) {
            entry.epoch = epoch;
            entry.lsn = lsn;
            break;
        }
    }
    if (config_.consistency == ConsistencyMode::Eventual) {
        ack_write(write_id, node.id);
    } else {
        node.pending_writes.push_back(PendingWrite{write_id, lsn, epoch});
    }
    broadcast_watermark(node_idx);
    if (config_.consistency == ConsistencyMode::Strong) try_ack_pending(node_idx);
}

void PartitionSetSim::broadcast_watermark(std::size_t node_idx) {
    Node& node = nodes_[node_idx];
    const std::uint64_t epoch = node.write_epoch;
    const std::uint64_t lsn = node.committed_lsn;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (i == node_idx) continue;
        if (link_severed(node.id, nodes_[i].id) || dropped()) continue;
        // Per-link FIFO keeps the replication stream ordered despite jitter.
        SimTime deliver = now_ + sample_latency(node.id, nodes_[i].id);
        auto& fifo = link_fifo_[{node.id, nodes_[i].id}];
        if (deliver <= fifo) deliver = fifo + 1;
        fifo = deliver;
        const std::uint64_t gen = nodes_[i].gen;
        const std::string from = node.id;
        at(deliver,
           [this, i, gen, from, epoch, lsn] { on_replication(i, gen, from, epoch, lsn); });
    }
}

void PartitionSetSim::on_replication(std::size_t node_idx, std::uint64_t gen,
                                     const std::string& from, std::uint64_t epoch,
                                     std::uint64_t lsn) {
    Node& node = nodes_[node_idx];
    if (!node.powered || node.gen != gen) return;
    if (epoch != node.accept_epoch) return;  // fenced: stream from another configuration
    if (lsn > node.committed_lsn) {
        set_committed(node, lsn, false);
        auto& entry = node.progress.entries[epoch];
        entry = std::max(entry, lsn);
    }
    if (link_severed(node.id, from) || dropped()) return;
    SimTime deliver = now_ + sample_latency(node.id, from);
    const std::size_t sender = node_index(from);
    const std::uint64_t sender_gen = nodes_[sender].gen;
    const std::string self = node.id;
    const std::uint64_t acked = node.committed_lsn;
    at(deliver, [this, sender, sender_gen, self, acked] {
        on_repl_ack(sender, sender_gen, self, acked);
    });
}

void PartitionSetSim::on_repl_ack(std::size_t node_idx, std::uint64_t gen, const std::string& from,
                                  std::uint64_t lsn) {
    Node& node = nodes_[node_idx];
    if (!node.powered || node.gen != gen) return;
    auto& view = node.commit_view[from];
    view = std::max(view, lsn);
    if (config_.consistency == ConsistencyMode::Strong) try_ack_pending(node_idx);
}

void PartitionSetSim::try_ack_pending(std::size_t node_idx) {
    Node& node = nodes_[node_idx];
    if (!node.learned || !node_can_ack(node)) return;
    // Ack once a majority of lease holders (the implicit write lease
    // included) has committed the write.
    const std::size_t holders = node.learned->active_leases.size() + 1;
    const std::size_t needed = majority_of(holders);
    auto it = node.pending_writes.begin();
    while (it != node.pending_writes.end()) {
        std::size_t have = 1;  // self
        for (const auto& region : node.learned->active_leases) {
            auto view = node.commit_view.find(region);
            if (view != node.commit_view.end() && view->second >= it->lsn) have++;
        }
        if (have >= needed) {
            ack_write(it->write_id, node.id);
            it = node.pending_writes.erase(it);
        } else {
            ++it;
        }
    }
}

void PartitionSetSim::ack_write(std::uint64_t write_id, const std::string& region) {
    for (auto& entry : ledger_) {
        if (entry.write_id != write_id) continue;
        if (entry.ack_time >= 0) return;  // acked once
        entry.ack_time = now_;
        entry.ack_region = region;
        metrics_.acknowledged_writes++;
        if (metrics_.acknowledged_writes > 1) {
            metrics_.max_ack_gap = std::max(metrics_.max_ack_gap, now_ - last_ack_time_);
        }
        last_ack_time_ = now_;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].id == region) client_cache_ = i;
        }
        return;
    }
}

void PartitionSetSim::client_loop() {
    const std::uint64_t id = next_write_id_++;
    ledger_.push_back(LedgerEntry{id, now_});
    client_issue(id, 0);
    at(now_ + client_loop_gap_, [this] { client_loop(); });
}

// ---------------------------------------------------------------------------

void PartitionSetSim::schedule_faults() {
    for (const auto& f : config_.faults) {
        switch (f.kind) {
            case FaultEntry::Kind::RegionPowerOutage: {
                const std::size_t idx = node_index(f.target);
                at(f.start, [this, idx] { power_off(idx); });
                at(f.start + f.duration, [this, idx] { power_on(idx); });
                break;
            }
            case FaultEntry::Kind::StoreOutage: {
                for (std::size_t s = 0; s < stores_.size(); ++s) {
                    if (stores_[s].id != f.target) continue;
                    at(f.start, [this, s] {
                        stores_[s].available = false;
                        stores_[s].backend.set_available(false);
                        trace("store_down", stores_[s].id, "");
                    });
                    at(f.start + f.duration, [this, s] {
                        stores_[s].available = true;
                        stores_[s].backend.set_available(true);
                        trace("store_up", stores_[s].id, "");
                    });
                }
                break;
            }
            case FaultEntry::Kind::LinkPartition:
                break;  // handled via partitions_ windows
        }
    }
}

void PartitionSetSim::power_off(std::size_t node_idx) {
    Node& node = nodes_[node_idx];
    node.powered = false;
    node.gen++;  // cancels all in-flight deliveries and timers for this node
    // Volatile state is lost; committed_lsn and the progress table are durable.
    node.write_primary = false;
    node.quiesced = false;
    node.busy = false;
    node.learned.reset();
    node.last_nak.reset();
    node.pending_writes.clear();
    node.commit_view.clear();
    node.pending_phase2_sample.reset();
    node.last_clean_timing.reset();
    node.ever_succeeded = false;
    trace("power_off", node.id, "");
}

void PartitionSetSim::power_on(std::size_t node_idx) {
    Node& node = nodes_[node_idx];
    node.powered = true;
    node.gen++;
    node.accept_epoch = node.data_epoch();
    node.last_success = std::numeric_limits<SimTime>::min() / 2;
    trace("power_on", node.id, "");
    std::uniform_int_distribution<Duration> u(seconds(1), config_.proposer_interval);
    at(now_ + u(node.rng), [this, node_idx] { scheduled_attempt(node_idx); });
    const Duration offset = u(node.rng);
    at(now_ + offset, [this, node_idx] { lease_tick(node_idx); });
}

void PartitionSetSim::lease_tick(std::size_t node_idx) {
    Node& node = nodes_[node_idx];
    if (!node.powered) return;  // resumed by power_on
    if (node.ever_succeeded) {
        metrics_.lease_windows_total++;
        if (now_ - node.last_success >= config_.lease_window) {
            metrics_.lease_windows_failed++;
            trace("lease_lost", node.id,
                  "stale_us=" + std::to_string(now_ - node.last_success));
        }
    }
    check_single_writer();
    at(now_ + config_.proposer_interval, [this, node_idx] { lease_tick(node_idx); });
}

bool PartitionSetSim::faults_quiet() const {
    for (const auto& n : nodes_) {
        if (!n.powered) return false;
    }
    for (const auto& s : stores_) {
        if (!s.available) return false;
    }
    for (const auto& w : partitions_) {
        if (now_ >= w.start && now_ < w.end) return false;
    }
    return true;
}

void PartitionSetSim::liveness_tick() {
    // Runtime analog of "writes enabled at the end of a stable history":
    // after enough consecutive fault-free lease windows in which state
    // updates themselves make progress, some region must be acking writes.
    // "Healthy" includes the ability to renew: a region whose own state
    // updates are starved (dueling storms) does not count toward a stable
    // history, or the checker would fire on contention the experiment is
    // designed to measure.
    bool updates_live = true;
    bool enabled = false;
    for (const auto& n : nodes_) {
        if (n.powered && !(n.ever_succeeded && now_ - n.last_success < config_.lease_window)) {
            updates_live = false;
        }
        if (node_can_ack(n)) enabled = true;
    }
    if (enabled) last_writes_enabled_ = now_;
    if (faults_quiet() && updates_live) {
        healthy_streak_++;
    } else {
        healthy_streak_ = 0;
    }
    if (healthy_streak_ >= 4 && now_ - last_writes_enabled_ > config_.lease_window) {
        violate("writes not re-enabled after a stable healthy history");
    }
    at(now_ + config_.lease_window, [this] { liveness_tick(); });
}

void PartitionSetSim::check_single_writer() {
    // No two regions may hold write-primary for the same epoch.
    std::map<std::uint64_t, std::string> writers;
    for (const auto& n : nodes_) {
        if (!n.powered || !n.write_primary) continue;
        auto [it, inserted] = writers.emplace(n.write_epoch, n.id);
        if (!inserted) {
            violate("split brain: " + it->second + " and " + n.id + " both primary in epoch " +
                    std::to_string(n.write_epoch));
        }
    }
}

void PartitionSetSim::finalize_metrics() {
    metrics_.failure_rate =
        metrics_.lease_windows_total == 0
            ? 0.0
            : static_cast<double>(metrics_.lease_windows_failed) /
                  static_cast<double>(metrics_.lease_windows_total);

    // Survival: a write survives when its lsn lies at or below the retained
    // cutoff of its epoch; epochs never closed by a failover retain all.
    for (auto& entry : ledger_) {
        if (entry.ack_time < 0) continue;
        auto cutoff = epoch_cutoffs_.find(entry.epoch);
        entry.survived = cutoff == epoch_cutoffs_.end() || entry.lsn <= cutoff->second;
        if (entry.survived) {
            metrics_.surviving_writes++;
        } else {
            metrics_.lost_writes++;
        }
    }
    if (metrics_.acknowledged_writes != metrics_.surviving_writes + metrics_.lost_writes) {
        violate("write conservation: acked != surviving + lost");
    }
}

}  // namespace

nlohmann::json metrics_to_json(const MetricsRecord& m) {
    nlohmann::json j;
    j["lease_windows_total"] = m.lease_windows_total;
    j["lease_windows_failed"] = m.lease_windows_failed;
    j["failure_rate"] = m.failure_rate;
    j["cas_conflicts"] = m.cas_conflicts;
    j["acknowledged_writes"] = m.acknowledged_writes;
    j["surviving_writes"] = m.surviving_writes;
    j["lost_writes"] = m.lost_writes;
    j["client_unavailable_events"] = m.client_unavailable_events;
    j["max_ack_gap_us"] = m.max_ack_gap;
    j["final_epoch"] = m.final_epoch;
    j["graceful_failovers"] = m.graceful_failovers;
    j["ungraceful_failovers"] = m.ungraceful_failovers;
    nlohmann::json outages = nlohmann::json::array();
    for (const auto& o : m.outages) {
        outages.push_back({{"outage_start_us", o.outage_start},
                           {"outage_end_us", o.outage_end},
                           {"detect_us", o.detect_time},
                           {"restore_us", o.restore_time},
                           {"failback_detect_us", o.failback_detect_time},
                           {"failback_complete_us", o.failback_complete_time},
                           {"ungraceful_epoch_increments", o.ungraceful_epoch_increments}});
    }
    j["outages"] = outages;
    nlohmann::json truncations = nlohmann::json::array();
    for (const auto& t : m.truncations) {
        truncations.push_back({{"epoch", t.epoch}, {"span", t.span}});
    }
    j["truncations"] = truncations;
    j["graceful_attempt_times_us"] = m.graceful_attempt_times;
    return j;
}

SimResult sim_run(const ScenarioConfig& config, std::uint64_t seed) {
    PartitionSetSim sim(config, seed);
    return sim.run();
}

}  // namespace failover::sim
