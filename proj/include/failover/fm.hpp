// Per-partition-set Failover Manager: the replicated state, its edit
// function, graceful/ungraceful failover, dynamic-quorum lease management,
// and false-progress truncation. Everything here is a pure function over
// value types; the CAS Paxos round that persists the result lives in the
// caller.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "failover/scheduler.hpp"
#include "json.hpp"

namespace failover {

enum class RegionServiceStatus {
    ReadOnlyReplicationAllowed,
    ReadOnlyReplicationDisallowed,
    ReadWrite,
    ReadWriteWithWritesQuiesced,
};

struct PartitionReport {
    std::string region;
    bool healthy = false;
    std::uint64_t committed_lsn = 0;
    std::uint64_t epoch_seen = 0;
    SimTime report_time = 0;

    friend bool operator==(const PartitionReport&, const PartitionReport&) = default;
};

struct GracefulFailover {
    std::string target;
    SimTime started_at = 0;
    friend bool operator==(const GracefulFailover&, const GracefulFailover&) = default;
};

// The (epoch, lsn) point at which the write region last changed; data a
// rejoining region wrote beyond it in the old epoch is false progress.
struct ForkPoint {
    std::uint64_t epoch = 0;
    std::uint64_t lsn = 0;
    friend bool operator==(const ForkPoint&, const ForkPoint&) = default;
};

struct FailoverManagerState {
    std::string write_region;
    std::uint64_t epoch = 1;
    std::vector<std::string> priority_list;  // user preference, best first
    std::map<std::string, RegionServiceStatus> region_status;
    std::set<std::string> active_leases;  // read leases; the write region's is implicit
    std::uint64_t min_durability = 1;
    std::map<std::string, PartitionReport> latest_reports;
    std::optional<GracefulFailover> graceful;
    std::uint64_t graceful_failure_count = 0;
    std::optional<SimTime> last_graceful_attempt;
    std::optional<SimTime> ungraceful_pending_since;
    bool write_status_revoked = false;  // set by a RevokeWriteStatus intent
    std::optional<ForkPoint> fork;
    // Whether the install that produced the current epoch was a graceful
    // handoff. Observers can miss intermediate register states, so the kind
    // of the last install travels with the state instead of being inferred
    // from the observer's previous snapshot.
    bool last_install_graceful = false;
    SchedulerStats scheduler_stats;
    std::uint64_t intent_watermark = 0;
    std::vector<std::uint64_t> rejected_intents;
    // Unknown fields seen on deserialization, preserved on round-trip.
    nlohmann::json extra = nlohmann::json::object();

    friend bool operator==(const FailoverManagerState&, const FailoverManagerState&) = default;
};

struct TopologyIntent {
    enum class Kind { RevokeWriteStatus, AddRegion, RemoveRegion };
    std::uint64_t id = 0;
    Kind kind = Kind::RevokeWriteStatus;
    std::string region;    // AddRegion / RemoveRegion
    std::uint64_t priority = 0;  // AddRegion: 1-based slot in the priority list
    SimTime issued_at = 0;
};

enum class ReplicaActionKind {
    BecomeWritePrimary,
    BecomeReadSecondary,
    QuiesceWrites,
    ResumeWrites,
    TruncateFalseProgress,
    NoOp,
};

struct ReplicaAction {
    ReplicaActionKind kind = ReplicaActionKind::NoOp;
    std::uint64_t to_lsn = 0;  // TruncateFalseProgress only
    friend bool operator==(const ReplicaAction&, const ReplicaAction&) = default;
};

struct ProgressTable {
    std::map<std::uint64_t, std::uint64_t> entries;  // epoch -> highest lsn written
    friend bool operator==(const ProgressTable&, const ProgressTable&) = default;
};

struct FailoverParams {
    Duration lease_window = seconds(45);
    Duration proposer_interval = seconds(30);
    Duration target_wait = seconds(30);      // report-wait window before quorum rule applies
    Duration graceful_timeout = seconds(60);  // escalate to ungraceful past this
    Duration backoff_base = seconds(60);
    unsigned backoff_cap_exponent = 6;
    std::uint64_t catchup_bound_lsns = 50;  // lease re-add: max lag behind the write region
};

struct RegionConfig {
    std::string id;
    int priority = 0;  // lower is better
};

// All regions start leased and caught up; the best-priority region writes.
FailoverManagerState initial_state(const std::vector<RegionConfig>& regions,
                                   std::uint64_t min_durability);

// One failover-manager edit: merge the report, apply intents, advance
// graceful/ungraceful failovers. Deterministic and total.
FailoverManagerState transition(const FailoverManagerState& state, const PartitionReport& report,
                                const std::vector<TopologyIntent>& intents, SimTime now,
                                const FailoverParams& params);

// Pick the new write region once enough lease holders have reported:
// either every candidate is fresh, or the wait window elapsed with a
// majority of read-lease holders fresh. Highest progress wins, ties broken
// by priority order. Absent means keep waiting.
std::optional<std::string> select_failover_target(const FailoverManagerState& state, SimTime now,
                                                  const FailoverParams& params);

// Graceful failovers are gated by base * 2^failure_count since the last
// attempt, capped.
bool graceful_backoff_gate(const FailoverManagerState& state, SimTime now,
                           const FailoverParams& params);

Duration graceful_backoff_interval(const FailoverManagerState& state,
                                   const FailoverParams& params);

enum class RevocationDenyReason { BelowDurabilityFloor, RegionNotLeased };

struct RevocationResult {
    bool permitted = false;
    std::optional<RevocationDenyReason> deny_reason;
    FailoverManagerState state;
};

RevocationResult request_lease_revocation(const FailoverManagerState& state,
                                          const std::string& region);

// Re-add a recovered region's read lease once it is healthy and within the
// catch-up bound of the write region's progress. Idempotent.
FailoverManagerState readd_lease(const FailoverManagerState& state, const std::string& region,
                                 const PartitionReport& report, const FailoverParams& params);

struct FullReseedRequired {};
using TruncateResult = std::variant<std::uint64_t, FullReseedRequired>;

// The LSN a rejoining replica must truncate to: the authoritative progress
// table's extent for the fork epoch. A missing fork epoch means no delta is
// possible and the replica must be reseeded in full.
TruncateResult truncate_false_progress(const ProgressTable& table, std::uint64_t local_max_lsn,
                                       const ForkPoint& fork);

struct LocalProgress {
    std::uint64_t max_lsn = 0;
    std::uint64_t epoch = 0;
};

std::vector<ReplicaAction> derive_actions(const FailoverManagerState& state,
                                          const std::string& my_region,
                                          const std::optional<LocalProgress>& local = {});

FailoverManagerState apply_topology_intent(const FailoverManagerState& state,
                                           const TopologyIntent& intent, SimTime now);

// State-machine invariants; returns a description of the first violation.
std::optional<std::string> check_state_invariants(const FailoverManagerState& state);

// Versioned serialization (the CAS Paxos register payload). Unknown fields
// round-trip through FailoverManagerState::extra.
std::string serialize_fm_state(const FailoverManagerState& state);
FailoverManagerState deserialize_fm_state(const std::string& bytes);

}  // namespace failover
