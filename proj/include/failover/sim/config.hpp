// Scenario configuration: the structured document the CLI and tests feed
// into sim_run. Parsing is strict; unknown fields are rejected by name.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "failover/fm.hpp"
#include "failover/scheduler.hpp"
#include "json.hpp"

namespace failover::sim {

struct LinkOverride {
    std::string from;
    std::string to;
    double p50_ms = 0;
    double jitter_ms = 0;
};

struct PartitionWindow {
    std::string a;
    std::string b;
    SimTime start = 0;
    SimTime end = 0;
};

struct NetworkConfig {
    double default_p50_ms = 50.0;
    double default_jitter_ms = 10.0;
    // When set, each ordered (region, store-region) pair gets a p50 sampled
    // uniformly from this range, with jitter = p50 * random_jitter_frac.
    std::optional<std::pair<double, double>> random_p50_range_ms;
    double random_jitter_frac = 0.2;
    std::vector<LinkOverride> overrides;
    double drop_rate = 0.0;
    std::vector<PartitionWindow> partitions;
};

struct FaultEntry {
    enum class Kind { RegionPowerOutage, LinkPartition, StoreOutage };
    Kind kind = Kind::RegionPowerOutage;
    std::string target;  // region or store id
    std::string a, b;    // link partition endpoints
    SimTime start = 0;
    Duration duration = 0;
};

enum class BackoffPolicyKind { Static, Adaptive };
enum class ConsistencyMode { Strong, Eventual };

struct ScenarioConfig {
    std::string scenario = "custom";
    std::vector<RegionConfig> regions;
    int acceptors = 7;
    Duration lease_window = seconds(45);
    Duration proposer_interval = seconds(30);
    BackoffPolicyKind policy = BackoffPolicyKind::Static;
    // Conservative static upper bound on proposal duration (the quantity the
    // adaptive policy learns online instead).
    Duration static_delta = seconds(4);
    double adaptive_alpha = 0.1;
    Duration adaptive_fallback_delta = milliseconds(200);  // until first phase-2 sample
    Duration sched_jitter = seconds(8);  // static policy schedule jitter
    ConsistencyMode consistency = ConsistencyMode::Strong;
    NetworkConfig network;
    std::vector<FaultEntry> faults;
    Duration duration = seconds(3600);
    std::uint64_t min_durability = 1;
    double client_writes_per_s = 0.0;
    Duration round_timeout = seconds(10);
    Duration graceful_timeout = seconds(60);
    Duration backoff_base = seconds(60);
    unsigned backoff_cap_exponent = 6;
    Duration target_wait = seconds(30);
    std::uint64_t catchup_bound_lsns = 50;
    std::uint64_t seed = 0;
    bool trace = false;

    FailoverParams fm_params() const {
        FailoverParams p;
        p.lease_window = lease_window;
        p.proposer_interval = proposer_interval;
        p.target_wait = target_wait;
        p.graceful_timeout = graceful_timeout;
        p.backoff_base = backoff_base;
        p.backoff_cap_exponent = backoff_cap_exponent;
        p.catchup_bound_lsns = catchup_bound_lsns;
        return p;
    }
};

// Throws std::invalid_argument naming the offending field.
ScenarioConfig parse_config(const nlohmann::json& j);
ScenarioConfig load_config_file(const std::string& path);
nlohmann::json config_to_json(const ScenarioConfig& config);

// Prebuilt scenarios.
ScenarioConfig scenario_dueling_proposers(int proposers, BackoffPolicyKind policy, double hours);
// Table-1-style topology: a preferred write region plus two readers, with
// repeated power outages of the preferred region.
ScenarioConfig scenario_power_outage(int outages, Duration outage_duration, Duration spacing,
                                     ConsistencyMode consistency);
ScenarioConfig scenario_two_region(std::uint64_t min_durability, const std::string& failed_region,
                                   SimTime fail_at, Duration outage_duration);
ScenarioConfig scenario_link_partition_write_region();

}  // namespace failover::sim
