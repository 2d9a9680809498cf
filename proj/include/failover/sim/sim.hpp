// Deterministic discrete-event simulator for one partition-set: regions,
// acceptor stores, proposers, a minimal replication/client model, fault
// injection, invariant checking, and metrics. A (config, seed) pair fully
// determines the event trace.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "failover/sim/config.hpp"

namespace failover::sim {

struct TraceEvent {
    SimTime time_us = 0;
    std::string kind;
    std::string actor;
    std::string detail;
};

struct OutageMetrics {
    SimTime outage_start = 0;
    SimTime outage_end = 0;
    SimTime detect_time = -1;            // absolute; -1 if never detected
    SimTime restore_time = -1;           // writes re-enabled at the new region
    SimTime failback_detect_time = -1;   // preferred region seen healthy again
    SimTime failback_complete_time = -1; // graceful failback finished
    std::uint64_t ungraceful_epoch_increments = 0;
};

struct TruncateRecord {
    std::uint64_t epoch = 0;
    std::uint64_t span = 0;  // LSNs of false progress discarded
};

struct MetricsRecord {
    std::uint64_t lease_windows_total = 0;
    std::uint64_t lease_windows_failed = 0;
    double failure_rate = 0.0;
    std::uint64_t cas_conflicts = 0;
    std::uint64_t acknowledged_writes = 0;
    std::uint64_t surviving_writes = 0;
    std::uint64_t lost_writes = 0;
    std::uint64_t client_unavailable_events = 0;
    SimTime max_ack_gap = 0;  // longest stretch without an acknowledged write
    std::uint64_t final_epoch = 1;
    std::uint64_t graceful_failovers = 0;
    std::uint64_t ungraceful_failovers = 0;
    std::vector<OutageMetrics> outages;
    std::vector<TruncateRecord> truncations;
    std::vector<SimTime> graceful_attempt_times;  // initiation timestamps
};

nlohmann::json metrics_to_json(const MetricsRecord& m);

struct SimResult {
    MetricsRecord metrics;
    std::vector<TraceEvent> trace;
};

// Thrown when a runtime invariant checker fires; carries the violating
// trace prefix for diagnosis.
class InvariantViolation : public std::runtime_error {
  public:
    InvariantViolation(const std::string& what, std::vector<TraceEvent> trace_prefix)
        : std::runtime_error(what), trace(std::move(trace_prefix)) {}
    std::vector<TraceEvent> trace;
};

SimResult sim_run(const ScenarioConfig& config, std::uint64_t seed);

}  // namespace failover::sim
