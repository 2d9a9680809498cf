#include "failover/fm.hpp"

#include <algorithm>
#include <stdexcept>

#include "failover/core.hpp"

namespace failover {

namespace {

bool is_fresh(const FailoverManagerState& state, const std::string& region, SimTime now,
              const FailoverParams& params) {
    auto it = state.latest_reports.find(region);
    if (it == state.latest_reports.end()) return false;
    return it->second.healthy && now - it->second.report_time <= params.lease_window;
}

std::uint64_t reported_lsn(const FailoverManagerState& state, const std::string& region) {
    auto it = state.latest_reports.find(region);
    return it == state.latest_reports.end() ? 0 : it->second.committed_lsn;
}

std::size_t priority_rank(const FailoverManagerState& state, const std::string& region) {
    auto it = std::find(state.priority_list.begin(), state.priority_list.end(), region);
    return static_cast<std::size_t>(it - state.priority_list.begin());
}

// Candidate set for a new write region: the read-lease holders, plus the
// current write region itself when it is merely quiesced (a timed-out
// graceful failover may hand writes back to a healthy source). A region
// whose write status was revoked by intent is never re-selected.
std::vector<std::string> failover_candidates(const FailoverManagerState& state) {
    std::vector<std::string> candidates(state.active_leases.begin(), state.active_leases.end());
    if (!state.write_status_revoked &&
        std::find(candidates.begin(), candidates.end(), state.write_region) == candidates.end()) {
        candidates.push_back(state.write_region);
    }
    return candidates;
}

void install_write_region(FailoverManagerState& state, const std::string& target, bool graceful) {
    const std::string old = state.write_region;
    if (target != old) {
        state.fork = ForkPoint{state.epoch, reported_lsn(state, target)};
        state.active_leases.erase(target);  // its lease becomes the implicit write lease
        if (graceful) {
            // A drained source stays a caught-up reader.
            state.active_leases.insert(old);
            state.region_status[old] = RegionServiceStatus::ReadOnlyReplicationAllowed;
        } else {
            // The failed source must catch up and be re-added explicitly.
            state.active_leases.erase(old);
            state.region_status[old] = RegionServiceStatus::ReadOnlyReplicationDisallowed;
            if (state.active_leases.size() + 1 < state.min_durability) {
                // Dropping its lease would breach the durability floor; keep
                // the source counted as a durable copy until a replacement
                // catches up and is re-added.
                state.active_leases.insert(old);
                state.region_status[old] = RegionServiceStatus::ReadOnlyReplicationAllowed;
            }
        }
        state.write_region = target;
    }
    state.epoch += 1;
    state.last_install_graceful = graceful;
    state.region_status[target] = RegionServiceStatus::ReadWrite;
    state.graceful.reset();
    state.ungraceful_pending_since.reset();
    state.write_status_revoked = false;
}

}  // namespace

FailoverManagerState initial_state(const std::vector<RegionConfig>& regions,
                                   std::uint64_t min_durability) {
    if (regions.empty()) throw std::invalid_argument("initial_state: no regions");
    std::vector<RegionConfig> ordered = regions;
    std::sort(ordered.begin(), ordered.end(), [](const RegionConfig& a, const RegionConfig& b) {
        return std::tie(a.priority, a.id) < std::tie(b.priority, b.id);
    });
    FailoverManagerState state;
    state.min_durability = min_durability;
    state.write_region = ordered.front().id;
    for (const auto& r : ordered) {
        state.priority_list.push_back(r.id);
        if (r.id == state.write_region) {
            state.region_status[r.id] = RegionServiceStatus::ReadWrite;
        } else {
            state.region_status[r.id] = RegionServiceStatus::ReadOnlyReplicationAllowed;
            state.active_leases.insert(r.id);
        }
    }
    return state;
}

std::optional<std::string> select_failover_target(const FailoverManagerState& state, SimTime now,
                                                  const FailoverParams& params) {
    if (!state.ungraceful_pending_since) return std::nullopt;
    const std::vector<std::string> candidates = failover_candidates(state);
    std::vector<std::string> fresh;
    for (const auto& region : candidates) {
        if (is_fresh(state, region, now, params)) fresh.push_back(region);
    }
    if (fresh.empty()) return std::nullopt;

    const bool all_fresh = fresh.size() == candidates.size();
    // The quorum rule counts fresh read-lease holders against the majority
    // of the read-lease set; a fresh quiesced source is selectable on its own.
    std::size_t fresh_leaseholders = 0;
    for (const auto& region : fresh) {
        if (state.active_leases.count(region)) fresh_leaseholders++;
    }
    const bool window_elapsed = now - *state.ungraceful_pending_since >= params.target_wait;
    const bool quorum = state.active_leases.empty()
                            ? true
                            : fresh_leaseholders >= majority_of(state.active_leases.size());
    if (!all_fresh && !(window_elapsed && quorum)) return std::nullopt;

    std::uint64_t max_lsn = 0;
    for (const auto& region : fresh) max_lsn = std::max(max_lsn, reported_lsn(state, region));
    std::optional<std::string> best;
    for (const auto& region : fresh) {
        if (reported_lsn(state, region) != max_lsn) continue;
        if (!best || priority_rank(state, region) < priority_rank(state, *best)) best = region;
    }
    return best;
}

Duration graceful_backoff_interval(const FailoverManagerState& state,
                                   const FailoverParams& params) {
    const unsigned exponent =
        state.graceful_failure_count > params.backoff_cap_exponent
            ? params.backoff_cap_exponent
            : static_cast<unsigned>(state.graceful_failure_count);
    return params.backoff_base * static_cast<Duration>(std::uint64_t{1} << exponent);
}

bool graceful_backoff_gate(const FailoverManagerState& state, SimTime now,
                           const FailoverParams& params) {
    if (!state.last_graceful_attempt) return true;
    return now - *state.last_graceful_attempt >= graceful_backoff_interval(state, params);
}

RevocationResult request_lease_revocation(const FailoverManagerState& state,
                                          const std::string& region) {
    if (!state.active_leases.count(region)) {
        return {false, RevocationDenyReason::RegionNotLeased, state};
    }
    // Remaining leases include the write region's implicit one.
    const std::uint64_t remaining = state.active_leases.size() - 1 + 1;
    if (remaining < state.min_durability) {
        return {false, RevocationDenyReason::BelowDurabilityFloor, state};
    }
    FailoverManagerState next = state;
    next.active_leases.erase(region);
    next.region_status[region] = RegionServiceStatus::ReadOnlyReplicationDisallowed;
    return {true, std::nullopt, std::move(next)};
}

FailoverManagerState readd_lease(const FailoverManagerState& state, const std::string& region,
                                 const PartitionReport& report, const FailoverParams& params) {
    if (region == state.write_region || state.active_leases.count(region)) return state;
    if (!report.healthy) return state;
    if (!state.region_status.count(region)) return state;
    const std::uint64_t write_lsn = reported_lsn(state, state.write_region);
    if (write_lsn > params.catchup_bound_lsns &&
        report.committed_lsn < write_lsn - params.catchup_bound_lsns) {
        return state;  // still behind the catch-up bound; retry later
    }
    FailoverManagerState next = state;
    next.active_leases.insert(region);
    next.region_status[region] = RegionServiceStatus::ReadOnlyReplicationAllowed;
    return next;
}

TruncateResult truncate_false_progress(const ProgressTable& table, std::uint64_t local_max_lsn,
                                       const ForkPoint& fork) {
    auto it = table.entries.find(fork.epoch);
    if (it == table.entries.end()) return FullReseedRequired{};
    return std::min(it->second, local_max_lsn);
}

std::vector<ReplicaAction> derive_actions(const FailoverManagerState& state,
                                          const std::string& my_region,
                                          const std::optional<LocalProgress>& local) {
    auto it = state.region_status.find(my_region);
    if (it == state.region_status.end()) return {ReplicaAction{ReplicaActionKind::NoOp}};

    std::vector<ReplicaAction> actions;
    // A replica rejoining a newer epoch with writes past the fork point must
    // discard the false progress before replicating again.
    if (local && state.fork && my_region != state.write_region &&
        local->epoch == state.fork->epoch && local->max_lsn > state.fork->lsn) {
        actions.push_back(ReplicaAction{ReplicaActionKind::TruncateFalseProgress, state.fork->lsn});
    }
    switch (it->second) {
        case RegionServiceStatus::ReadWrite:
            actions.push_back(ReplicaAction{ReplicaActionKind::BecomeWritePrimary});
            break;
        case RegionServiceStatus::ReadWriteWithWritesQuiesced:
            actions.push_back(ReplicaAction{ReplicaActionKind::QuiesceWrites});
            break;
        case RegionServiceStatus::ReadOnlyReplicationAllowed:
        case RegionServiceStatus::ReadOnlyReplicationDisallowed:
            actions.push_back(ReplicaAction{ReplicaActionKind::BecomeReadSecondary});
            break;
    }
    return actions;
}

FailoverManagerState apply_topology_intent(const FailoverManagerState& state,
                                           const TopologyIntent& intent, SimTime now) {
    if (intent.id <= state.intent_watermark) return state;  // already applied
    FailoverManagerState next = state;
    next.intent_watermark = intent.id;
    switch (intent.kind) {
        case TopologyIntent::Kind::RevokeWriteStatus:
            next.region_status[next.write_region] =
                RegionServiceStatus::ReadWriteWithWritesQuiesced;
            next.write_status_revoked = true;
            if (!next.ungraceful_pending_since) next.ungraceful_pending_since = now;
            break;
        case TopologyIntent::Kind::AddRegion: {
            if (next.region_status.count(intent.region)) {
                next.rejected_intents.push_back(intent.id);
                break;
            }
            std::size_t slot = intent.priority == 0 ? next.priority_list.size()
                                                    : static_cast<std::size_t>(intent.priority - 1);
            slot = std::min(slot, next.priority_list.size());
            next.priority_list.insert(next.priority_list.begin() + static_cast<long>(slot),
                                      intent.region);
            // New regions join unleased until they catch up.
            next.region_status[intent.region] = RegionServiceStatus::ReadOnlyReplicationDisallowed;
            break;
        }
        case TopologyIntent::Kind::RemoveRegion: {
            if (intent.region == next.write_region || !next.region_status.count(intent.region)) {
                next.rejected_intents.push_back(intent.id);
                break;
            }
            if (next.active_leases.count(intent.region)) {
                RevocationResult rev = request_lease_revocation(next, intent.region);
                if (!rev.permitted) {
                    next.rejected_intents.push_back(intent.id);
                    break;
                }
                next = std::move(rev.state);
                next.intent_watermark = intent.id;
            }
            next.region_status.erase(intent.region);
            next.latest_reports.erase(intent.region);
            next.priority_list.erase(
                std::remove(next.priority_list.begin(), next.priority_list.end(), intent.region),
                next.priority_list.end());
            break;
        }
    }
    return next;
}

FailoverManagerState transition(const FailoverManagerState& state, const PartitionReport& report,
                                const std::vector<TopologyIntent>& intents, SimTime now,
                                const FailoverParams& params) {
    FailoverManagerState next = state;

    // 1. Merge the report. LSNs are monotone per region within an epoch.
    if (next.region_status.count(report.region)) {
        auto it = next.latest_reports.find(report.region);
        if (it == next.latest_reports.end() || report.report_time >= it->second.report_time) {
            PartitionReport merged = report;
            if (it != next.latest_reports.end() && it->second.epoch_seen == report.epoch_seen) {
                merged.committed_lsn = std::max(merged.committed_lsn, it->second.committed_lsn);
            }
            next.latest_reports[report.region] = merged;
        }
    }

    // 2. Pending control-plane intents.
    for (const auto& intent : intents) next = apply_topology_intent(next, intent, now);

    // 3. Graceful failover progress or escalation.
    if (next.graceful) {
        const std::string target = next.graceful->target;
        if (now - next.graceful->started_at >= params.graceful_timeout) {
            next.graceful.reset();
            next.graceful_failure_count += 1;
            next.ungraceful_pending_since = now;
            // Source stays quiesced until a new write region is selected.
        } else if (is_fresh(next, target, now, params) &&
                   reported_lsn(next, target) >= reported_lsn(next, next.write_region)) {
            install_write_region(next, target, /*graceful=*/true);
            next.graceful_failure_count = 0;
        }
    }

    // 4. Ungraceful detection: the write region stopped reporting.
    if (!next.graceful) {
        const bool wr_fresh = is_fresh(next, next.write_region, now, params);
        if (!wr_fresh && !next.ungraceful_pending_since) {
            next.ungraceful_pending_since = now;
        } else if (wr_fresh && next.ungraceful_pending_since && !next.write_status_revoked &&
                   next.region_status[next.write_region] == RegionServiceStatus::ReadWrite) {
            next.ungraceful_pending_since.reset();  // it came back before selection
        }
    }

    // 5. Target selection for a pending ungraceful failover.
    if (next.ungraceful_pending_since && !next.graceful) {
        if (std::optional<std::string> target = select_failover_target(next, now, params)) {
            install_write_region(next, *target, /*graceful=*/false);
        }
    }

    // 6. Graceful failover initiation toward a better-priority lease holder.
    if (!next.graceful && !next.ungraceful_pending_since &&
        next.region_status[next.write_region] == RegionServiceStatus::ReadWrite &&
        is_fresh(next, next.write_region, now, params)) {
        const std::size_t current_rank = priority_rank(next, next.write_region);
        std::optional<std::string> target;
        for (std::size_t rank = 0; rank < current_rank; ++rank) {
            const std::string& candidate = next.priority_list[rank];
            if (next.active_leases.count(candidate) && is_fresh(next, candidate, now, params)) {
                target = candidate;
                break;
            }
        }
        if (target && graceful_backoff_gate(next, now, params)) {
            next.graceful = GracefulFailover{*target, now};
            next.last_graceful_attempt = now;
            next.region_status[next.write_region] =
                RegionServiceStatus::ReadWriteWithWritesQuiesced;
        }
    }

    return next;
}

std::optional<std::string> check_state_invariants(const FailoverManagerState& state) {
    if (state.epoch == 0) return "epoch must be positive";
    if (std::find(state.priority_list.begin(), state.priority_list.end(), state.write_region) ==
        state.priority_list.end()) {
        return "write_region not in priority_list";
    }
    std::size_t writers = 0;
    for (const auto& [region, status] : state.region_status) {
        if (status == RegionServiceStatus::ReadWrite ||
            status == RegionServiceStatus::ReadWriteWithWritesQuiesced) {
            writers++;
            if (region != state.write_region) return "write status at non-write region " + region;
        }
    }
    if (writers > 1) return "multiple regions hold write status";
    for (const auto& region : state.active_leases) {
        if (!state.region_status.count(region)) return "lease for unknown region " + region;
        if (region == state.write_region) return "explicit lease on write region";
    }
    if (state.active_leases.size() + 1 < state.min_durability) {
        return "lease count below minimum durability";
    }
    return std::nullopt;
}

// --- Serialization -----------------------------------------------------------

namespace {

using json = nlohmann::json;

const char* status_name(RegionServiceStatus s) {
    switch (s) {
        case RegionServiceStatus::ReadOnlyReplicationAllowed: return "ro_repl_allowed";
        case RegionServiceStatus::ReadOnlyReplicationDisallowed: return "ro_repl_disallowed";
        case RegionServiceStatus::ReadWrite: return "read_write";
        case RegionServiceStatus::ReadWriteWithWritesQuiesced: return "read_write_quiesced";
    }
    return "unknown";
}

RegionServiceStatus status_from_name(const std::string& name) {
    if (name == "ro_repl_allowed") return RegionServiceStatus::ReadOnlyReplicationAllowed;
    if (name == "ro_repl_disallowed") return RegionServiceStatus::ReadOnlyReplicationDisallowed;
    if (name == "read_write") return RegionServiceStatus::ReadWrite;
    if (name == "read_write_quiesced") return RegionServiceStatus::ReadWriteWithWritesQuiesced;
    throw std::invalid_argument("unknown region status: " + name);
}

json report_to_json(const PartitionReport& r) {
    return json{{"region", r.region},
                {"healthy", r.healthy},
                {"committed_lsn", r.committed_lsn},
                {"epoch_seen", r.epoch_seen},
                {"report_time", r.report_time}};
}

PartitionReport report_from_json(const json& j) {
    PartitionReport r;
    j.at("region").get_to(r.region);
    j.at("healthy").get_to(r.healthy);
    j.at("committed_lsn").get_to(r.committed_lsn);
    j.at("epoch_seen").get_to(r.epoch_seen);
    j.at("report_time").get_to(r.report_time);
    return r;
}

const std::set<std::string> kKnownFields = {
    "v",         "write_region",   "epoch",          "priority_list",
    "region_status", "active_leases", "min_durability", "latest_reports",
    "graceful",  "graceful_failure_count", "last_graceful_attempt",
    "ungraceful_pending_since", "write_status_revoked", "fork",
    "last_install_graceful", "scheduler_stats", "intent_watermark", "rejected_intents"};

}  // namespace

std::string serialize_fm_state(const FailoverManagerState& s) {
    json j = s.extra.is_object() ? s.extra : json::object();
    j["v"] = 1;
    j["write_region"] = s.write_region;
    j["epoch"] = s.epoch;
    j["priority_list"] = s.priority_list;
    json statuses = json::object();
    for (const auto& [region, status] : s.region_status) statuses[region] = status_name(status);
    j["region_status"] = statuses;
    j["active_leases"] = s.active_leases;
    j["min_durability"] = s.min_durability;
    json reports = json::object();
    for (const auto& [region, report] : s.latest_reports) reports[region] = report_to_json(report);
    j["latest_reports"] = reports;
    if (s.graceful) {
        j["graceful"] = json{{"target", s.graceful->target}, {"started_at", s.graceful->started_at}};
    }
    j["graceful_failure_count"] = s.graceful_failure_count;
    if (s.last_graceful_attempt) j["last_graceful_attempt"] = *s.last_graceful_attempt;
    if (s.ungraceful_pending_since) j["ungraceful_pending_since"] = *s.ungraceful_pending_since;
    j["write_status_revoked"] = s.write_status_revoked;
    if (s.fork) j["fork"] = json{{"epoch", s.fork->epoch}, {"lsn", s.fork->lsn}};
    j["last_install_graceful"] = s.last_install_graceful;
    j["scheduler_stats"] = json{{"count", s.scheduler_stats.count},
                                {"ema_mean", s.scheduler_stats.ema_mean},
                                {"variance", s.scheduler_stats.variance_accumulator},
                                {"alpha", s.scheduler_stats.alpha}};
    j["intent_watermark"] = s.intent_watermark;
    j["rejected_intents"] = s.rejected_intents;
    return j.dump();
}

FailoverManagerState deserialize_fm_state(const std::string& bytes) {
    json j = json::parse(bytes);
    FailoverManagerState s;
    j.at("write_region").get_to(s.write_region);
    j.at("epoch").get_to(s.epoch);
    j.at("priority_list").get_to(s.priority_list);
    for (const auto& [region, name] : j.at("region_status").items()) {
        s.region_status[region] = status_from_name(name.get<std::string>());
    }
    for (const auto& region : j.at("active_leases")) {
        s.active_leases.insert(region.get<std::string>());
    }
    j.at("min_durability").get_to(s.min_durability);
    for (const auto& [region, report] : j.at("latest_reports").items()) {
        s.latest_reports[region] = report_from_json(report);
    }
    if (j.contains("graceful")) {
        s.graceful = GracefulFailover{j["graceful"].at("target").get<std::string>(),
                                      j["graceful"].at("started_at").get<SimTime>()};
    }
    j.at("graceful_failure_count").get_to(s.graceful_failure_count);
    if (j.contains("last_graceful_attempt"))
        s.last_graceful_attempt = j["last_graceful_attempt"].get<SimTime>();
    if (j.contains("ungraceful_pending_since"))
        s.ungraceful_pending_since = j["ungraceful_pending_since"].get<SimTime>();
    j.at("write_status_revoked").get_to(s.write_status_revoked);
    if (j.contains("fork")) {
        s.fork = ForkPoint{j["fork"].at("epoch").get<std::uint64_t>(),
                           j["fork"].at("lsn").get<std::uint64_t>()};
    }
    if (j.contains("last_install_graceful")) {
        j["last_install_graceful"].get_to(s.last_install_graceful);
    }
    const json& stats = j.at("scheduler_stats");
    stats.at("count").get_to(s.scheduler_stats.count);
    stats.at("ema_mean").get_to(s.scheduler_stats.ema_mean);
    stats.at("variance").get_to(s.scheduler_stats.variance_accumulator);
    stats.at("alpha").get_to(s.scheduler_stats.alpha);
    j.at("intent_watermark").get_to(s.intent_watermark);
    j.at("rejected_intents").get_to(s.rejected_intents);
    for (const auto& [key, value] : j.items()) {
        if (!kKnownFields.count(key)) s.extra[key] = value;
    }
    return s;
}

}  // namespace failover
