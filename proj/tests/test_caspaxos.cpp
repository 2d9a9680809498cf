#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "failover/core.hpp"
#include "failover/wire.hpp"

using namespace failover;

namespace {
ValueEditor appender(const std::string& tag) {
    return [tag](const std::optional<RegisterValue>& current) {
        return std::optional<std::string>((current ? current->payload : "") + tag);
    };
}
}  // namespace

TEST_CASE("leader_start_phase1 picks minimal fresh ballot") {
    LeaderState leader;
    leader.self_id = "p";
    leader.quorum_threshold = 2;
    auto [next, msg] = leader_start_phase1(leader);
    CHECK(msg.ballot == BallotNumber{1, "p"});
    CHECK(next.phase == LeaderPhase::CollectingPhase1b);
}

TEST_CASE("leader_start_phase1 jumps past a nak's promise") {
    LeaderState leader;
    leader.self_id = "p";
    NakMessage nak{BallotNumber{1, "p"}, BallotNumber{5, "other"}};
    auto [next, msg] = leader_start_phase1(leader, nak);
    CHECK(msg.ballot.round >= 6);
    // Oracle: the acceptor state machine rejects anything <= the promise.
    AcceptorState acc;
    acc.promised_ballot = BallotNumber{5, "other"};
    auto [acc2, resp] = acceptor_on_phase1a(acc, Phase1aMessage{msg.ballot}, "a");
    CHECK(std::holds_alternative<Phase1bMessage>(resp));
}

TEST_CASE("leader_start_phase1 ballots strictly increase") {
    LeaderState leader;
    leader.self_id = "p";
    auto [s1, m1] = leader_start_phase1(leader);
    auto [s2, m2] = leader_start_phase1(s1);
    CHECK(m2.ballot > m1.ballot);
}

TEST_CASE("leader_on_phase1b: empty-register base case at quorum 2 of 3") {
    LeaderState leader;
    leader.self_id = "p";
    leader.quorum_threshold = 2;
    auto [s, p1a] = leader_start_phase1(leader);

    Phase1bMessage r1{p1a.ballot, "a0", {}, {}};
    Phase2Start after1 = leader_on_phase1b(s, r1, appender("x"));
    CHECK(after1.status == Phase2Status::Pending);

    Phase1bMessage r2{p1a.ballot, "a1", {}, {}};
    Phase2Start after2 = leader_on_phase1b(after1.state, r2, appender("x"));
    REQUIRE(after2.status == Phase2Status::Proposed);
    CHECK(after2.message->value.payload == "x");
    CHECK(after2.message->value.cas_version == 1);
}

TEST_CASE("leader_on_phase1b edits the highest-ballot carried value") {
    LeaderState leader;
    leader.self_id = "p";
    leader.quorum_threshold = 2;
    leader.highest_round = 3;
    auto [s, p1a] = leader_start_phase1(leader);

    Phase1bMessage r1{p1a.ballot, "a0", BallotNumber{2, "a"}, RegisterValue{"old", 4}};
    Phase1bMessage r2{p1a.ballot, "a1", BallotNumber{3, "b"}, RegisterValue{"new", 5}};
    Phase2Start after1 = leader_on_phase1b(s, r1, appender("+"));
    Phase2Start after2 = leader_on_phase1b(after1.state, r2, appender("+"));
    REQUIRE(after2.status == Phase2Status::Proposed);
    CHECK(after2.message->value.payload == "new+");
    CHECK(after2.message->value.cas_version == 6);  // 1 + highest carried
}

TEST_CASE("leader_on_phase1b deduplicates acceptors") {
    LeaderState leader;
    leader.self_id = "p";
    leader.quorum_threshold = 2;
    auto [s, p1a] = leader_start_phase1(leader);
    Phase1bMessage r{p1a.ballot, "a0", {}, {}};
    Phase2Start after1 = leader_on_phase1b(s, r, appender("x"));
    Phase2Start after2 = leader_on_phase1b(after1.state, r, appender("x"));
    CHECK(after2.status == Phase2Status::Pending);
}

TEST_CASE("leader_on_phase1b ignores stale ballots with a counter") {
    LeaderState leader;
    leader.self_id = "p";
    leader.quorum_threshold = 2;
    auto [s, p1a] = leader_start_phase1(leader);
    Phase1bMessage stale{BallotNumber{p1a.ballot.round + 7, "q"}, "a0", {}, {}};
    Phase2Start after = leader_on_phase1b(s, stale, appender("x"));
    CHECK(after.status == Phase2Status::StaleMessage);
    CHECK(after.state.stale_messages == 1);
}

TEST_CASE("declining editor issues no proposal") {
    LeaderState leader;
    leader.self_id = "p";
    leader.quorum_threshold = 1;
    auto [s, p1a] = leader_start_phase1(leader);
    ValueEditor decline = [](const std::optional<RegisterValue>&) {
        return std::optional<std::string>{};
    };
    Phase2Start after = leader_on_phase1b(s, Phase1bMessage{p1a.ballot, "a0", {}, {}}, decline);
    CHECK(after.status == Phase2Status::Declined);
    CHECK(!after.message);
}

TEST_CASE("acceptor_on_phase1a") {
    SUBCASE("empty state promises") {
        auto [next, resp] = acceptor_on_phase1a({}, Phase1aMessage{{3, "p"}}, "a");
        CHECK(next.promised_ballot == BallotNumber{3, "p"});
        auto& p1b = std::get<Phase1bMessage>(resp);
        CHECK(!p1b.accepted_value);
    }
    SUBCASE("lower ballot rejected, state unchanged") {
        AcceptorState acc;
        acc.promised_ballot = BallotNumber{5, "q"};
        auto [next, resp] = acceptor_on_phase1a(acc, Phase1aMessage{{3, "p"}}, "a");
        CHECK(next == acc);
        auto& nak = std::get<NakMessage>(resp);
        CHECK(nak.rejected_ballot == BallotNumber{3, "p"});
        CHECK(nak.promised_ballot == BallotNumber{5, "q"});
    }
    SUBCASE("higher ballot carries the accepted pair") {
        AcceptorState acc;
        acc.promised_ballot = BallotNumber{3, "p"};
        acc.accepted_ballot = BallotNumber{2, "q"};
        acc.accepted_value = RegisterValue{"v", 1};
        auto [next, resp] = acceptor_on_phase1a(acc, Phase1aMessage{{5, "r"}}, "a");
        CHECK(next.promised_ballot == BallotNumber{5, "r"});
        auto& p1b = std::get<Phase1bMessage>(resp);
        CHECK(p1b.accepted_ballot == BallotNumber{2, "q"});
        CHECK(p1b.accepted_value == RegisterValue{"v", 1});
    }
}

TEST_CASE("acceptor_on_phase2a") {
    SUBCASE("accepts at the promised ballot") {
        AcceptorState acc;
        acc.promised_ballot = BallotNumber{3, "p"};
        auto [next, resp] =
            acceptor_on_phase2a(acc, Phase2aMessage{{3, "p"}, {"v", 1}}, "a");
        CHECK(next.accepted_ballot == BallotNumber{3, "p"});
        CHECK(next.accepted_value == RegisterValue{"v", 1});
        CHECK(std::holds_alternative<Phase2bMessage>(resp));
    }
    SUBCASE("naks below the promise") {
        AcceptorState acc;
        acc.promised_ballot = BallotNumber{5, "q"};
        auto [next, resp] =
            acceptor_on_phase2a(acc, Phase2aMessage{{3, "p"}, {"v", 1}}, "a");
        CHECK(next == acc);
        CHECK(std::holds_alternative<NakMessage>(resp));
    }
    SUBCASE("replay is idempotent") {
        AcceptorState acc;
        acc.promised_ballot = BallotNumber{3, "p"};
        Phase2aMessage msg{{3, "p"}, {"v", 1}};
        auto [s1, r1] = acceptor_on_phase2a(acc, msg, "a");
        auto [s2, r2] = acceptor_on_phase2a(s1, msg, "a");
        CHECK(s1 == s2);
        CHECK(std::get<Phase2bMessage>(r1) == std::get<Phase2bMessage>(r2));
    }
}

TEST_CASE("acceptor invariants hold across random message sequences") {
    std::mt19937_64 rng(7);
    AcceptorState acc;
    std::optional<BallotNumber> last_promise;
    for (int i = 0; i < 2000; ++i) {
        BallotNumber b{rng() % 20, rng() % 2 ? "p" : "q"};
        if (rng() % 2) {
            acc = acceptor_on_phase1a(acc, Phase1aMessage{b}, "a").first;
        } else {
            acc = acceptor_on_phase2a(acc, Phase2aMessage{b, {"v", rng() % 5}}, "a").first;
        }
        if (acc.accepted_ballot) {
            REQUIRE(acc.promised_ballot);
            REQUIRE(*acc.promised_ballot >= *acc.accepted_ballot);
        }
        if (last_promise && acc.promised_ballot) {
            REQUIRE(*acc.promised_ballot >= *last_promise);  // never decreases
        }
        last_promise = acc.promised_ballot;
    }
}

TEST_CASE("learner_learn") {
    Phase2bMessage m1{{3, "p"}, "a0", {"v", 1}};
    Phase2bMessage m2{{3, "p"}, "a1", {"v", 1}};
    SUBCASE("quorum of two distinct acceptors learns") {
        LearnerState learner{2};
        auto [s1, v1] = learner_learn(learner, m1);
        CHECK(!v1);
        auto [s2, v2] = learner_learn(s1, m2);
        REQUIRE(v2);
        CHECK(*v2 == RegisterValue{"v", 1});
    }
    SUBCASE("different ballots never combine") {
        LearnerState learner{2};
        Phase2bMessage other{{4, "q"}, "a1", {"v", 1}};
        auto [s1, v1] = learner_learn(learner, m1);
        auto [s2, v2] = learner_learn(s1, other);
        CHECK(!v2);
    }
    SUBCASE("duplicate acceptor does not complete quorum") {
        LearnerState learner{2};
        auto [s1, v1] = learner_learn(learner, m1);
        auto [s2, v2] = learner_learn(s1, m1);
        CHECK(!v2);
    }
}

TEST_CASE("QuorumChecker deduplicates") {
    QuorumChecker q(2);
    CHECK(!q.add("a0"));
    CHECK(!q.add("a0"));
    CHECK(q.add("a1"));
}

TEST_CASE("wire round-trip is bit-exact for every message kind") {
    const std::vector<PaxosMessage> messages = {
        Phase1aMessage{{3, "p"}},
        Phase1bMessage{{3, "p"}, "a0", BallotNumber{2, "q"}, RegisterValue{"v", 1}},
        Phase1bMessage{{3, "p"}, "a0", {}, {}},
        Phase2aMessage{{3, "p"}, {"v", 7}},
        Phase2bMessage{{3, "p"}, "a1", {"v", 7}},
        NakMessage{{3, "p"}, {5, "q"}},
    };
    for (const auto& msg : messages) {
        const std::string bytes = serialize_message(msg);
        const PaxosMessage back = deserialize_message(bytes);
        CHECK(serialize_message(back) == bytes);
        CHECK(back == msg);
    }
}

TEST_CASE("acceptor state serialization round-trips") {
    AcceptorState acc;
    acc.promised_ballot = BallotNumber{9, "p"};
    acc.accepted_ballot = BallotNumber{8, "q"};
    acc.accepted_value = RegisterValue{"payload", 12};
    const std::string bytes = serialize_acceptor_state(acc);
    CHECK(deserialize_acceptor_state(bytes) == acc);
    CHECK(serialize_acceptor_state(deserialize_acceptor_state(bytes)) == bytes);
}
