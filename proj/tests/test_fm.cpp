#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "failover/fm.hpp"

using namespace failover;

namespace {

const FailoverParams kParams;  // defaults: 45 s lease, 30 s wait, 60 s timeout

FailoverManagerState three_region_state() {
    return initial_state({{"A", 1}, {"B", 2}, {"C", 3}}, 2);
}

PartitionReport fresh_report(const std::string& region, std::uint64_t lsn, SimTime now,
                             std::uint64_t epoch = 1) {
    return PartitionReport{region, true, lsn, epoch, now};
}

FailoverManagerState with_report(FailoverManagerState s, const PartitionReport& r) {
    s.latest_reports[r.region] = r;
    return s;
}

}  // namespace

TEST_CASE("initial_state: best priority writes, others leased") {
    auto s = three_region_state();
    CHECK(s.write_region == "A");
    CHECK(s.epoch == 1);
    CHECK(s.priority_list == std::vector<std::string>{"A", "B", "C"});
    CHECK(s.active_leases == std::set<std::string>{"B", "C"});
    CHECK(s.region_status.at("A") == RegionServiceStatus::ReadWrite);
    CHECK(!check_state_invariants(s));
}

TEST_CASE("transition: healthy write region just refreshes its report") {
    auto s = three_region_state();
    SimTime now = seconds(100);
    auto next = transition(s, fresh_report("A", 50, now), {}, now, kParams);
    CHECK(next.write_region == "A");
    CHECK(next.epoch == 1);
    CHECK(next.latest_reports.at("A").report_time == now);
    CHECK(derive_actions(next, "A") ==
          std::vector<ReplicaAction>{ReplicaAction{ReplicaActionKind::BecomeWritePrimary}});
}

TEST_CASE("transition: stale write region fails over to highest-lsn, best-priority holder") {
    // A stale; B (priority 2) and C (priority 3) both at lsn 100 and fresh.
    auto s = three_region_state();
    s = with_report(s, fresh_report("A", 100, seconds(0)));
    SimTime now = seconds(100);  // A's report is 100 s old > 45 s lease window
    s = transition(s, fresh_report("B", 100, now), {}, now, kParams);
    CHECK(s.ungraceful_pending_since == now);
    s = transition(s, fresh_report("C", 100, now), {}, now, kParams);
    CHECK(s.write_region == "A");  // stale source still a candidate; wait window pending
    SimTime later = now + kParams.target_wait;
    auto next = transition(s, fresh_report("B", 100, later), {}, later, kParams);
    CHECK(next.write_region == "B");
    CHECK(next.epoch == 2);
    CHECK(!next.graceful);
    CHECK(next.region_status.at("B") == RegionServiceStatus::ReadWrite);
    // The failed source lost its lease and must be re-added explicitly.
    CHECK(!next.active_leases.count("A"));
    CHECK(next.region_status.at("A") == RegionServiceStatus::ReadOnlyReplicationDisallowed);
    CHECK(!check_state_invariants(next));
    CHECK(derive_actions(next, "B") ==
          std::vector<ReplicaAction>{ReplicaAction{ReplicaActionKind::BecomeWritePrimary}});
}

TEST_CASE("transition: graceful failover toward a healthy priority-1 region") {
    // B writes; A (priority 1) is healthy and leased; gate is open.
    auto s = three_region_state();
    s.write_region = "B";
    s.region_status["B"] = RegionServiceStatus::ReadWrite;
    s.region_status["A"] = RegionServiceStatus::ReadOnlyReplicationAllowed;
    s.active_leases = {"A", "C"};
    SimTime now = seconds(100);
    s = with_report(s, fresh_report("A", 90, now));
    auto next = transition(s, fresh_report("B", 100, now), {}, now, kParams);
    REQUIRE(next.graceful);
    CHECK(next.graceful->target == "A");
    CHECK(next.graceful->started_at == now);
    CHECK(next.region_status.at("B") == RegionServiceStatus::ReadWriteWithWritesQuiesced);
    CHECK(derive_actions(next, "B") ==
          std::vector<ReplicaAction>{ReplicaAction{ReplicaActionKind::QuiesceWrites}});

    SUBCASE("target catching up completes the switch and resets the failure count") {
        next.graceful_failure_count = 2;
        SimTime later = now + seconds(10);
        auto done = transition(next, fresh_report("A", 100, later), {}, later, kParams);
        CHECK(done.write_region == "A");
        CHECK(done.epoch == 2);
        CHECK(!done.graceful);
        CHECK(done.graceful_failure_count == 0);
        // The drained source keeps a lease as a caught-up reader.
        CHECK(done.active_leases.count("B"));
        CHECK(!check_state_invariants(done));
    }
    SUBCASE("timeout escalates to ungraceful and bumps the failure count") {
        SimTime later = now + kParams.graceful_timeout;
        auto esc = transition(next, fresh_report("C", 95, later), {}, later, kParams);
        CHECK(!esc.graceful);
        CHECK(esc.graceful_failure_count == 1);
        CHECK(esc.ungraceful_pending_since == later);
    }
}

TEST_CASE("select_failover_target") {
    auto s = three_region_state();
    s.ungraceful_pending_since = seconds(100);
    s.write_status_revoked = true;  // keep the stale source out of the candidate set
    SimTime now = seconds(110);

    SUBCASE("only one of two holders fresh, window not elapsed: keep waiting") {
        s = with_report(s, fresh_report("B", 100, now));
        CHECK(!select_failover_target(s, now, kParams));
    }
    SUBCASE("window elapsed with a fresh majority: highest progress wins") {
        s = with_report(s, fresh_report("B", 90, now));
        s = with_report(s, fresh_report("C", 100, now));
        SimTime later = seconds(100) + kParams.target_wait;
        CHECK(select_failover_target(s, later, kParams) == "C");
    }
    SUBCASE("progress tie broken by priority order") {
        s = with_report(s, fresh_report("B", 100, now));
        s = with_report(s, fresh_report("C", 100, now));
        CHECK(select_failover_target(s, now, kParams) == "B");
    }
}

TEST_CASE("graceful_backoff_gate") {
    auto s = three_region_state();
    SUBCASE("no prior attempt: allowed") {
        CHECK(graceful_backoff_gate(s, seconds(0), kParams));
    }
    SUBCASE("count 3, last attempt 200 s ago: disallowed (needs 480 s)") {
        s.graceful_failure_count = 3;
        s.last_graceful_attempt = seconds(1000);
        CHECK(graceful_backoff_interval(s, kParams) == seconds(480));
        CHECK(!graceful_backoff_gate(s, seconds(1200), kParams));
        CHECK(graceful_backoff_gate(s, seconds(1480), kParams));
    }
    SUBCASE("interval stops growing at the cap") {
        s.graceful_failure_count = kParams.backoff_cap_exponent;
        Duration at_cap = graceful_backoff_interval(s, kParams);
        s.graceful_failure_count = kParams.backoff_cap_exponent + 5;
        CHECK(graceful_backoff_interval(s, kParams) == at_cap);
        CHECK(at_cap == kParams.backoff_base * (1 << kParams.backoff_cap_exponent));
    }
    SUBCASE("gaps form a geometric sequence with ratio 2 until the cap") {
        Duration prev = 0;
        for (std::uint64_t count = 0; count <= kParams.backoff_cap_exponent; ++count) {
            s.graceful_failure_count = count;
            Duration interval = graceful_backoff_interval(s, kParams);
            if (count > 0) CHECK(interval == 2 * prev);
            prev = interval;
        }
    }
}

TEST_CASE("request_lease_revocation") {
    SUBCASE("two regions, min_durability 1: revoking the read region is permitted") {
        auto s = initial_state({{"P", 1}, {"S", 2}}, 1);
        auto r = request_lease_revocation(s, "S");
        REQUIRE(r.permitted);
        CHECK(r.state.active_leases.empty());  // remaining durable copies: the write lease
        CHECK(!check_state_invariants(r.state));
    }
    SUBCASE("revocation breaching the durability floor is denied") {
        auto s = initial_state({{"P", 1}, {"S", 2}}, 2);
        auto r = request_lease_revocation(s, "S");
        CHECK(!r.permitted);
        CHECK(r.deny_reason == RevocationDenyReason::BelowDurabilityFloor);
        CHECK(r.state == s);
    }
    SUBCASE("revoking an unleased region is denied with a distinct reason") {
        auto s = three_region_state();
        auto r = request_lease_revocation(s, "A");  // write region: lease is implicit
        CHECK(!r.permitted);
        CHECK(r.deny_reason == RevocationDenyReason::RegionNotLeased);
    }
}

TEST_CASE("readd_lease") {
    auto s = three_region_state();
    // C lost its lease earlier.
    s.active_leases = {"B"};
    s.region_status["C"] = RegionServiceStatus::ReadOnlyReplicationDisallowed;
    s = with_report(s, fresh_report("A", 200, seconds(100)));
    SUBCASE("caught-up recovered region gets its lease back") {
        auto next = readd_lease(s, "C", fresh_report("C", 200, seconds(100)), kParams);
        CHECK(next.active_leases.count("C"));
        CHECK(next.region_status.at("C") == RegionServiceStatus::ReadOnlyReplicationAllowed);
    }
    SUBCASE("region still behind the catch-up bound is left unchanged") {
        auto next = readd_lease(
            s, "C", fresh_report("C", 200 - kParams.catchup_bound_lsns - 1, seconds(100)), kParams);
        CHECK(next == s);
    }
    SUBCASE("already-leased region is an idempotent no-op") {
        auto next = readd_lease(s, "B", fresh_report("B", 200, seconds(100)), kParams);
        CHECK(next == s);
    }
}

TEST_CASE("truncate_false_progress") {
    ProgressTable table;
    table.entries[1] = 100;
    SUBCASE("local data past the fork is discarded back to the table's extent") {
        auto r = truncate_false_progress(table, 120, ForkPoint{1, 100});
        CHECK(std::get<std::uint64_t>(r) == 100);
    }
    SUBCASE("local max at the fork lsn is a no-op") {
        auto r = truncate_false_progress(table, 100, ForkPoint{1, 100});
        CHECK(std::get<std::uint64_t>(r) == 100);
    }
    SUBCASE("missing fork epoch requires a full reseed") {
        auto r = truncate_false_progress(table, 120, ForkPoint{7, 100});
        CHECK(std::holds_alternative<FullReseedRequired>(r));
    }
}

TEST_CASE("derive_actions") {
    auto s = three_region_state();
    SUBCASE("write region with ReadWrite becomes the primary") {
        CHECK(derive_actions(s, "A") ==
              std::vector<ReplicaAction>{ReplicaAction{ReplicaActionKind::BecomeWritePrimary}});
    }
    SUBCASE("quiesced write region quiesces") {
        s.region_status["A"] = RegionServiceStatus::ReadWriteWithWritesQuiesced;
        CHECK(derive_actions(s, "A") ==
              std::vector<ReplicaAction>{ReplicaAction{ReplicaActionKind::QuiesceWrites}});
    }
    SUBCASE("rejoiner with false progress truncates before replicating") {
        s.write_region = "B";
        s.region_status["A"] = RegionServiceStatus::ReadOnlyReplicationDisallowed;
        s.region_status["B"] = RegionServiceStatus::ReadWrite;
        s.fork = ForkPoint{1, 100};
        s.epoch = 2;
        auto actions = derive_actions(s, "A", LocalProgress{120, 1});
        REQUIRE(actions.size() == 2);
        CHECK(actions[0] == ReplicaAction{ReplicaActionKind::TruncateFalseProgress, 100});
        CHECK(actions[1] == ReplicaAction{ReplicaActionKind::BecomeReadSecondary});
    }
}

TEST_CASE("apply_topology_intent") {
    auto s = three_region_state();
    SUBCASE("RevokeWriteStatus quiesces the writer and starts selection") {
        auto next = apply_topology_intent(
            s, TopologyIntent{1, TopologyIntent::Kind::RevokeWriteStatus, "", 0, seconds(5)},
            seconds(5));
        CHECK(next.region_status.at("A") == RegionServiceStatus::ReadWriteWithWritesQuiesced);
        CHECK(next.ungraceful_pending_since == seconds(5));
        CHECK(next.write_status_revoked);
    }
    SUBCASE("RemoveRegion on the write region is rejected") {
        auto next = apply_topology_intent(
            s, TopologyIntent{1, TopologyIntent::Kind::RemoveRegion, "A", 0, seconds(5)},
            seconds(5));
        CHECK(next.rejected_intents == std::vector<std::uint64_t>{1});
        CHECK(next.write_region == "A");
        CHECK(next.priority_list == s.priority_list);
    }
    SUBCASE("RemoveRegion breaching the durability floor is rejected") {
        auto next = apply_topology_intent(
            s, TopologyIntent{1, TopologyIntent::Kind::RemoveRegion, "B", 0, seconds(5)},
            seconds(5));
        // min_durability 2 with only C left would be satisfied; shrink to the floor first.
        auto strict = s;
        strict.min_durability = 3;
        auto denied = apply_topology_intent(
            strict, TopologyIntent{2, TopologyIntent::Kind::RemoveRegion, "B", 0, seconds(5)},
            seconds(5));
        CHECK(denied.rejected_intents == std::vector<std::uint64_t>{2});
        CHECK(denied.active_leases.count("B"));
        CHECK(next.rejected_intents.empty());
        CHECK(!next.active_leases.count("B"));
    }
    SUBCASE("AddRegion slots into the priority list unleased") {
        auto next = apply_topology_intent(
            s, TopologyIntent{1, TopologyIntent::Kind::AddRegion, "D", 1, seconds(5)}, seconds(5));
        CHECK(next.priority_list == std::vector<std::string>{"D", "A", "B", "C"});
        CHECK(!next.active_leases.count("D"));
        CHECK(next.region_status.at("D") == RegionServiceStatus::ReadOnlyReplicationDisallowed);
        CHECK(!check_state_invariants(next));
    }
    SUBCASE("intents are applied at most once") {
        TopologyIntent intent{1, TopologyIntent::Kind::AddRegion, "D", 1, seconds(5)};
        auto once = apply_topology_intent(s, intent, seconds(5));
        auto twice = apply_topology_intent(once, intent, seconds(6));
        CHECK(once == twice);
    }
}

TEST_CASE("fm state serialization") {
    auto s = three_region_state();
    s.epoch = 4;
    s.graceful = GracefulFailover{"B", seconds(7)};
    s.last_graceful_attempt = seconds(7);
    s.fork = ForkPoint{3, 250};
    s.scheduler_stats = record_phase2_duration(SchedulerStats{}, milliseconds(130));
    s.latest_reports["B"] = fresh_report("B", 240, seconds(6));

    SUBCASE("round-trip is exact") {
        auto back = deserialize_fm_state(serialize_fm_state(s));
        CHECK(back == s);
        CHECK(serialize_fm_state(back) == serialize_fm_state(s));
    }
    SUBCASE("unknown fields are preserved on round-trip") {
        nlohmann::json j = nlohmann::json::parse(serialize_fm_state(s));
        j["future_field"] = nlohmann::json{{"nested", 42}};
        auto back = deserialize_fm_state(j.dump());
        CHECK(back.extra.at("future_field").at("nested") == 42);
        nlohmann::json rt = nlohmann::json::parse(serialize_fm_state(back));
        CHECK(rt.at("future_field").at("nested") == 42);
        CHECK(deserialize_fm_state(rt.dump()) == back);
    }
}

TEST_CASE("lease floor holds after every transition in a random walk") {
    std::mt19937_64 rng(21);
    const std::vector<std::string> regions = {"A", "B", "C"};
    for (int walk = 0; walk < 300; ++walk) {
        auto s = initial_state({{"A", 1}, {"B", 2}, {"C", 3}}, 1 + walk % 3);
        SimTime now = 0;
        std::uint64_t last_epoch = s.epoch;
        for (int step = 0; step < 60; ++step) {
            now += seconds(1 + rng() % 40);
            const std::string& region = regions[rng() % regions.size()];
            PartitionReport report{region, rng() % 4 != 0, rng() % 500, s.epoch, now};
            std::vector<TopologyIntent> intents;
            if (rng() % 20 == 0) {
                intents.push_back(TopologyIntent{
                    static_cast<std::uint64_t>(step + walk * 100 + 1),
                    TopologyIntent::Kind::RevokeWriteStatus, "", 0, now});
            }
            s = transition(s, report, intents, now, kParams);
            auto violation = check_state_invariants(s);
            if (violation) CAPTURE(*violation);
            REQUIRE(!violation);
            REQUIRE(s.epoch >= last_epoch);
            REQUIRE(s.epoch - last_epoch <= 1);
            last_epoch = s.epoch;
        }
    }
}
