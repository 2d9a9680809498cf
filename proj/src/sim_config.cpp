#include "failover/sim/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace failover::sim {

namespace {

using json = nlohmann::json;

[[noreturn]] void bad_field(const std::string& context, const std::string& field) {
    throw std::invalid_argument("config: unknown field '" + field + "' in " + context);
}

void require_known(const json& j, const std::string& context, const std::set<std::string>& known) {
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) bad_field(context, key);
    }
}

Duration seconds_field(const json& j, const char* name, Duration fallback) {
    if (!j.contains(name)) return fallback;
    return static_cast<Duration>(j.at(name).get<double>() * 1'000'000.0);
}

Duration ms_field(const json& j, const char* name, Duration fallback) {
    if (!j.contains(name)) return fallback;
    return static_cast<Duration>(j.at(name).get<double>() * 1000.0);
}

NetworkConfig parse_network(const json& j) {
    require_known(j, "network",
                  {"default_p50_ms", "default_jitter_ms", "random_p50_range_ms",
                   "random_jitter_frac", "overrides", "drop_rate", "partitions"});
    NetworkConfig n;
    if (j.contains("default_p50_ms")) j.at("default_p50_ms").get_to(n.default_p50_ms);
    if (j.contains("default_jitter_ms")) j.at("default_jitter_ms").get_to(n.default_jitter_ms);
    if (j.contains("random_p50_range_ms")) {
        const auto& range = j.at("random_p50_range_ms");
        n.random_p50_range_ms = {range.at(0).get<double>(), range.at(1).get<double>()};
    }
    if (j.contains("random_jitter_frac")) j.at("random_jitter_frac").get_to(n.random_jitter_frac);
    if (j.contains("drop_rate")) j.at("drop_rate").get_to(n.drop_rate);
    if (j.contains("overrides")) {
        for (const auto& o : j.at("overrides")) {
            require_known(o, "network.overrides", {"from", "to", "p50_ms", "jitter_ms"});
            LinkOverride link;
            o.at("from").get_to(link.from);
            o.at("to").get_to(link.to);
            o.at("p50_ms").get_to(link.p50_ms);
            if (o.contains("jitter_ms")) o.at("jitter_ms").get_to(link.jitter_ms);
            n.overrides.push_back(link);
        }
    }
    if (j.contains("partitions")) {
        for (const auto& p : j.at("partitions")) {
            require_known(p, "network.partitions", {"a", "b", "start_s", "end_s"});
            PartitionWindow w;
            p.at("a").get_to(w.a);
            p.at("b").get_to(w.b);
            w.start = static_cast<SimTime>(p.at("start_s").get<double>() * 1'000'000.0);
            w.end = static_cast<SimTime>(p.at("end_s").get<double>() * 1'000'000.0);
            n.partitions.push_back(w);
        }
    }
    return n;
}

std::vector<FaultEntry> parse_faults(const json& j) {
    std::vector<FaultEntry> faults;
    for (const auto& f : j) {
        require_known(f, "faults", {"kind", "target", "a", "b", "start_s", "duration_s"});
        FaultEntry entry;
        const std::string kind = f.at("kind").get<std::string>();
        if (kind == "region_power_outage") {
            entry.kind = FaultEntry::Kind::RegionPowerOutage;
        } else if (kind == "link_partition") {
            entry.kind = FaultEntry::Kind::LinkPartition;
        } else if (kind == "store_outage") {
            entry.kind = FaultEntry::Kind::StoreOutage;
        } else {
            throw std::invalid_argument("config: unknown fault kind '" + kind + "'");
        }
        if (f.contains("target")) f.at("target").get_to(entry.target);
        if (f.contains("a")) f.at("a").get_to(entry.a);
        if (f.contains("b")) f.at("b").get_to(entry.b);
        entry.start = static_cast<SimTime>(f.at("start_s").get<double>() * 1'000'000.0);
        entry.duration = static_cast<Duration>(f.at("duration_s").get<double>() * 1'000'000.0);
        faults.push_back(entry);
    }
    return faults;
}

}  // namespace

ScenarioConfig parse_config(const json& j) {
    require_known(j, "config",
                  {"scenario", "regions", "acceptors", "lease_window_s", "proposer_interval_s",
                   "backoff_policy", "sched_jitter_s", "consistency", "network", "faults",
                   "duration_s", "min_durability", "client_writes_per_s", "round_timeout_s",
                   "graceful_timeout_s", "backoff_base_s", "backoff_cap_exponent", "target_wait_s",
                   "catchup_bound_lsns", "seed", "trace"});
    ScenarioConfig c;
    if (j.contains("scenario")) j.at("scenario").get_to(c.scenario);
    if (!j.contains("regions")) throw std::invalid_argument("config: missing field 'regions'");
    for (const auto& r : j.at("regions")) {
        require_known(r, "regions", {"id", "priority"});
        c.regions.push_back(RegionConfig{r.at("id").get<std::string>(), r.at("priority").get<int>()});
    }
    if (c.regions.empty()) throw std::invalid_argument("config: 'regions' must be non-empty");
    if (j.contains("acceptors")) j.at("acceptors").get_to(c.acceptors);
    if (c.acceptors < 1) throw std::invalid_argument("config: 'acceptors' must be >= 1");
    c.lease_window = seconds_field(j, "lease_window_s", c.lease_window);
    c.proposer_interval = seconds_field(j, "proposer_interval_s", c.proposer_interval);
    if (j.contains("backoff_policy")) {
        const json& b = j.at("backoff_policy");
        require_known(b, "backoff_policy", {"kind", "delta_ms", "alpha", "fallback_delta_ms"});
        const std::string kind = b.at("kind").get<std::string>();
        if (kind == "static") {
            c.policy = BackoffPolicyKind::Static;
        } else if (kind == "adaptive") {
            c.policy = BackoffPolicyKind::Adaptive;
        } else {
            throw std::invalid_argument("config: backoff_policy.kind must be static|adaptive");
        }
        c.static_delta = ms_field(b, "delta_ms", c.static_delta);
        if (b.contains("alpha")) b.at("alpha").get_to(c.adaptive_alpha);
        c.adaptive_fallback_delta = ms_field(b, "fallback_delta_ms", c.adaptive_fallback_delta);
    }
    c.sched_jitter = seconds_field(j, "sched_jitter_s", c.sched_jitter);
    if (j.contains("consistency")) {
        const std::string mode = j.at("consistency").get<std::string>();
        if (mode == "strong") {
            c.consistency = ConsistencyMode::Strong;
        } else if (mode == "eventual") {
            c.consistency = ConsistencyMode::Eventual;
        } else {
            throw std::invalid_argument("config: consistency must be strong|eventual");
        }
    }
    if (j.contains("network")) c.network = parse_network(j.at("network"));
    if (j.contains("faults")) c.faults = parse_faults(j.at("faults"));
    c.duration = seconds_field(j, "duration_s", c.duration);
    if (j.contains("min_durability")) j.at("min_durability").get_to(c.min_durability);
    if (j.contains("client_writes_per_s")) j.at("client_writes_per_s").get_to(c.client_writes_per_s);
    c.round_timeout = seconds_field(j, "round_timeout_s", c.round_timeout);
    c.graceful_timeout = seconds_field(j, "graceful_timeout_s", c.graceful_timeout);
    c.backoff_base = seconds_field(j, "backoff_base_s", c.backoff_base);
    if (j.contains("backoff_cap_exponent")) j.at("backoff_cap_exponent").get_to(c.backoff_cap_exponent);
    c.target_wait = seconds_field(j, "target_wait_s", c.target_wait);
    if (j.contains("catchup_bound_lsns")) j.at("catchup_bound_lsns").get_to(c.catchup_bound_lsns);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (j.contains("trace")) j.at("trace").get_to(c.trace);
    return c;
}

ScenarioConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    json j = json::parse(in);
    return parse_config(j);
}

nlohmann::json config_to_json(const ScenarioConfig& c) {
    json j;
    j["scenario"] = c.scenario;
    json regions = json::array();
    for (const auto& r : c.regions) regions.push_back({{"id", r.id}, {"priority", r.priority}});
    j["regions"] = regions;
    j["acceptors"] = c.acceptors;
    j["lease_window_s"] = static_cast<double>(c.lease_window) / 1e6;
    j["proposer_interval_s"] = static_cast<double>(c.proposer_interval) / 1e6;
    j["backoff_policy"] = {
        {"kind", c.policy == BackoffPolicyKind::Static ? "static" : "adaptive"},
        {"delta_ms", static_cast<double>(c.static_delta) / 1e3},
        {"alpha", c.adaptive_alpha},
        {"fallback_delta_ms", static_cast<double>(c.adaptive_fallback_delta) / 1e3}};
    j["sched_jitter_s"] = static_cast<double>(c.sched_jitter) / 1e6;
    j["consistency"] = c.consistency == ConsistencyMode::Strong ? "strong" : "eventual";
    json network;
    network["default_p50_ms"] = c.network.default_p50_ms;
    network["default_jitter_ms"] = c.network.default_jitter_ms;
    if (c.network.random_p50_range_ms) {
        network["random_p50_range_ms"] = {c.network.random_p50_range_ms->first,
                                          c.network.random_p50_range_ms->second};
    }
    network["random_jitter_frac"] = c.network.random_jitter_frac;
    network["drop_rate"] = c.network.drop_rate;
    json overrides = json::array();
    for (const auto& o : c.network.overrides) {
        overrides.push_back(
            {{"from", o.from}, {"to", o.to}, {"p50_ms", o.p50_ms}, {"jitter_ms", o.jitter_ms}});
    }
    network["overrides"] = overrides;
    json windows = json::array();
    for (const auto& w : c.network.partitions) {
        windows.push_back({{"a", w.a},
                           {"b", w.b},
                           {"start_s", static_cast<double>(w.start) / 1e6},
                           {"end_s", static_cast<double>(w.end) / 1e6}});
    }
    network["partitions"] = windows;
    j["network"] = network;
    json faults = json::array();
    for (const auto& f : c.faults) {
        const char* kind = f.kind == FaultEntry::Kind::RegionPowerOutage ? "region_power_outage"
                           : f.kind == FaultEntry::Kind::LinkPartition   ? "link_partition"
                                                                         : "store_outage";
        faults.push_back({{"kind", kind},
                          {"target", f.target},
                          {"a", f.a},
                          {"b", f.b},
                          {"start_s", static_cast<double>(f.start) / 1e6},
                          {"duration_s", static_cast<double>(f.duration) / 1e6}});
    }
    j["faults"] = faults;
    j["duration_s"] = static_cast<double>(c.duration) / 1e6;
    j["min_durability"] = c.min_durability;
    j["client_writes_per_s"] = c.client_writes_per_s;
    j["round_timeout_s"] = static_cast<double>(c.round_timeout) / 1e6;
    j["graceful_timeout_s"] = static_cast<double>(c.graceful_timeout) / 1e6;
    j["backoff_base_s"] = static_cast<double>(c.backoff_base) / 1e6;
    j["backoff_cap_exponent"] = c.backoff_cap_exponent;
    j["target_wait_s"] = static_cast<double>(c.target_wait) / 1e6;
    j["catchup_bound_lsns"] = c.catchup_bound_lsns;
    j["seed"] = c.seed;
    j["trace"] = c.trace;
    return j;
}

ScenarioConfig scenario_dueling_proposers(int proposers, BackoffPolicyKind policy, double hours) {
    ScenarioConfig c;
    c.scenario = "dueling_proposers";
    for (int i = 0; i < proposers; ++i) {
        c.regions.push_back(RegionConfig{"region" + std::to_string(i), i + 1});
    }
    c.acceptors = 7;
    c.policy = policy;
    c.network.random_p50_range_ms = {20.0, 250.0};
    c.network.random_jitter_frac = 0.25;
    c.duration = static_cast<Duration>(hours * 3600.0 * 1e6);
    c.client_writes_per_s = 0.0;
    return c;
}

ScenarioConfig scenario_power_outage(int outages, Duration outage_duration, Duration spacing,
                                     ConsistencyMode consistency) {
    ScenarioConfig c;
    c.scenario = "power_outage";
    c.regions = {RegionConfig{"east-asia", 1}, RegionConfig{"southeast-asia", 2},
                 RegionConfig{"south-central-us", 3}};
    c.acceptors = 7;
    c.policy = BackoffPolicyKind::Adaptive;
    c.consistency = consistency;
    c.client_writes_per_s = 1.0;
    c.network.random_p50_range_ms = {20.0, 120.0};
    for (int i = 0; i < outages; ++i) {
        FaultEntry f;
        f.kind = FaultEntry::Kind::RegionPowerOutage;
        f.target = "east-asia";
        f.start = seconds(120) + static_cast<SimTime>(i) * spacing;
        f.duration = outage_duration;
        c.faults.push_back(f);
    }
    c.duration = seconds(120) + static_cast<SimTime>(outages) * spacing + seconds(900);
    return c;
}

ScenarioConfig scenario_two_region(std::uint64_t min_durability, const std::string& failed_region,
                                   SimTime fail_at, Duration outage_duration) {
    ScenarioConfig c;
    c.scenario = "two_region";
    c.regions = {RegionConfig{"primary", 1}, RegionConfig{"secondary", 2}};
    c.acceptors = 7;
    c.policy = BackoffPolicyKind::Adaptive;
    c.consistency = ConsistencyMode::Strong;
    c.min_durability = min_durability;
    c.client_writes_per_s = 1.0;
    FaultEntry f;
    f.kind = FaultEntry::Kind::RegionPowerOutage;
    f.target = failed_region;
    f.start = fail_at;
    f.duration = outage_duration;
    c.faults.push_back(f);
    c.duration = fail_at + outage_duration + seconds(600);
    return c;
}

ScenarioConfig scenario_link_partition_write_region() {
    ScenarioConfig c;
    c.scenario = "link_partition";
    c.regions = {RegionConfig{"west", 1}, RegionConfig{"central", 2}, RegionConfig{"east", 3}};
    c.acceptors = 7;
    c.policy = BackoffPolicyKind::Adaptive;
    c.consistency = ConsistencyMode::Eventual;
    c.client_writes_per_s = 1.0;
    // Sever the write region from both other regions for ten minutes.
    // Stores placed in those regions become unreachable from it too, so its
    // lease enforcer must quiesce it while the survivors elect one writer.
    for (const std::string& other : {std::string("central"), std::string("east")}) {
        FaultEntry f;
        f.kind = FaultEntry::Kind::LinkPartition;
        f.a = "west";
        f.b = other;
        f.start = seconds(300);
        f.duration = seconds(600);
        c.faults.push_back(f);
    }
    c.duration = seconds(2400);
    return c;
}

}  // namespace failover::sim
