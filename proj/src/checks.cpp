#include "failover/checks.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "failover/fm.hpp"
#include "failover/store.hpp"

namespace failover {

AcceptorPhase2aRule correct_phase2a_rule() {
    return [](const AcceptorState& state, const Phase2aMessage& msg) {
        auto [next, result] = acceptor_on_phase2a(state, msg, "");
        return std::make_pair(next, result);
    };
}

AcceptorPhase2aRule buggy_phase2a_rule() {
    return [](const AcceptorState& state,
              const Phase2aMessage& msg) -> std::pair<AcceptorState, Phase2bResult> {
        // Compares only rounds: proposers sharing a round both get accepted.
        if (state.promised_ballot && msg.ballot.round < state.promised_ballot->round) {
            return {state, NakMessage{msg.ballot, *state.promised_ballot}};
        }
        AcceptorState next = state;
        next.promised_ballot = msg.ballot;
        next.accepted_ballot = msg.ballot;
        next.accepted_value = msg.value;
        return {next, Phase2bMessage{msg.ballot, "", msg.value}};
    };
}

namespace {

// One in-flight message of the trial network.
struct InFlight {
    bool to_acceptor = true;
    std::size_t acceptor = 0;
    std::size_t proposer = 0;
    PaxosMessage msg;
};

struct TrialProposer {
    LeaderState leader;
    LearnerState learner{2};
    bool done = false;
    int committed = 0;
    int restarts = 0;
};

std::string trial_payload(const std::optional<RegisterValue>& current, const std::string& who) {
    const std::uint64_t n = current ? current->cas_version : 0;
    return std::to_string(n + 1) + ":" + who;
}

}  // namespace

std::optional<std::string> agreement_trial(std::uint64_t seed, const AcceptorPhase2aRule& rule) {
    std::mt19937_64 rng(seed);
    const std::size_t num_acceptors = 3;
    const std::size_t num_proposers = 2 + (rng() % 2);  // 2 or 3
    const int ops_per_proposer = 3;
    constexpr std::size_t kQuorum = 2;

    std::vector<AcceptorState> acceptors(num_acceptors);
    std::vector<TrialProposer> proposers(num_proposers);
    for (std::size_t p = 0; p < num_proposers; ++p) {
        proposers[p].leader.self_id = "p" + std::to_string(p);
        proposers[p].leader.quorum_threshold = kQuorum;
    }

    std::vector<InFlight> pool;
    // cas_version -> payload learned at that version
    std::map<std::uint64_t, std::string> learned;

    auto broadcast = [&](std::size_t p, const PaxosMessage& msg) {
        for (std::size_t a = 0; a < num_acceptors; ++a) {
            pool.push_back(InFlight{true, a, p, msg});
        }
    };
    auto start_round = [&](std::size_t p, const std::optional<NakMessage>& nak) {
        auto [leader, p1a] = leader_start_phase1(proposers[p].leader, nak);
        proposers[p].leader = leader;
        proposers[p].learner = LearnerState{kQuorum};
        broadcast(p, p1a);
    };

    std::optional<std::string> violation;
    auto learn = [&](std::uint64_t version, const std::string& payload) {
        auto [it, inserted] = learned.emplace(version, payload);
        if (!inserted && it->second != payload) {
            std::ostringstream os;
            os << "agreement violated at cas_version " << version << ": \"" << it->second
               << "\" vs \"" << payload << "\"";
            if (!violation) violation = os.str();
        }
    };

    auto deliver_to_acceptor = [&](const InFlight& m) {
        AcceptorState& acc = acceptors[m.acceptor];
        const std::string acc_id = "a" + std::to_string(m.acceptor);
        if (const auto* p1a = std::get_if<Phase1aMessage>(&m.msg)) {
            auto [next, result] = acceptor_on_phase1a(acc, *p1a, acc_id);
            acc = next;
            if (auto* p1b = std::get_if<Phase1bMessage>(&result)) {
                pool.push_back(InFlight{false, m.acceptor, m.proposer, *p1b});
            } else {
                pool.push_back(InFlight{false, m.acceptor, m.proposer,
                                        std::get<NakMessage>(result)});
            }
        } else if (const auto* p2a = std::get_if<Phase2aMessage>(&m.msg)) {
            auto [next, result] = rule(acc, *p2a);
            acc = next;
            if (auto* p2b = std::get_if<Phase2bMessage>(&result)) {
                Phase2bMessage stamped = *p2b;
                stamped.acceptor_id = acc_id;
                pool.push_back(InFlight{false, m.acceptor, m.proposer, stamped});
            } else {
                pool.push_back(InFlight{false, m.acceptor, m.proposer,
                                        std::get<NakMessage>(result)});
            }
        }
    };

    auto deliver_to_proposer = [&](const InFlight& m) {
        TrialProposer& prop = proposers[m.proposer];
        const std::string who = prop.leader.self_id;
        if (const auto* p1b = std::get_if<Phase1bMessage>(&m.msg)) {
            ValueEditor editor = [&](const std::optional<RegisterValue>& current) {
                return std::optional<std::string>(trial_payload(current, who));
            };
            Phase2Start result = leader_on_phase1b(prop.leader, *p1b, editor);
            prop.leader = result.state;
            if (result.status == Phase2Status::Proposed) broadcast(m.proposer, *result.message);
        } else if (const auto* p2b = std::get_if<Phase2bMessage>(&m.msg)) {
            auto [learner, value] = learner_learn(prop.learner, *p2b);
            prop.learner = learner;
            if (value) {
                learn(value->cas_version, value->payload);
                if (p2b->ballot == prop.leader.ballot &&
                    prop.leader.phase == LeaderPhase::Proposed) {
                    prop.committed++;
                    prop.leader.phase = LeaderPhase::Idle;
                    if (prop.committed >= ops_per_proposer) prop.done = true;
                }
            }
        } else if (const auto* nak = std::get_if<NakMessage>(&m.msg)) {
            if (!prop.done && nak->rejected_ballot == prop.leader.ballot &&
                prop.leader.phase != LeaderPhase::Idle && prop.restarts < 200) {
                prop.restarts++;
                start_round(m.proposer, *nak);
            }
        }
    };

    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int step = 0; step < 4000 && !violation; ++step) {
        // Maybe kick an idle proposer.
        bool any_idle = false;
        for (std::size_t p = 0; p < num_proposers; ++p) {
            if (!proposers[p].done && proposers[p].leader.phase == LeaderPhase::Idle) {
                any_idle = true;
            }
        }
        if (any_idle && (pool.empty() || u(rng) < 0.25)) {
            std::vector<std::size_t> idle;
            for (std::size_t p = 0; p < num_proposers; ++p) {
                if (!proposers[p].done && proposers[p].leader.phase == LeaderPhase::Idle) {
                    idle.push_back(p);
                }
            }
            start_round(idle[rng() % idle.size()], std::nullopt);
            continue;
        }
        if (pool.empty()) break;

        // Random delivery order; occasional drops and duplicates.
        const std::size_t pick = rng() % pool.size();
        InFlight m = pool[pick];
        const double roll = u(rng);
        if (roll < 0.08) {  // drop
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
            continue;
        }
        if (roll >= 0.92) {
            // duplicate: deliver now, keep the copy for a later redelivery
        } else {
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        if (m.to_acceptor) {
            deliver_to_acceptor(m);
        } else {
            deliver_to_proposer(m);
        }
        // Stuck proposers occasionally time out and retry at a higher ballot.
        if (u(rng) < 0.01) {
            const std::size_t p = rng() % num_proposers;
            if (!proposers[p].done && proposers[p].leader.phase != LeaderPhase::Idle) {
                proposers[p].restarts++;
                if (proposers[p].restarts < 200) start_round(p, std::nullopt);
            }
        }
    }
    if (violation) return violation;

    // Linearizability against the sequential CAS-register oracle: the editor
    // writes parent_version+1 into the payload, so every committed value's
    // payload must carry exactly its own version — any commit against a
    // non-latest parent would show a gap.
    for (const auto& [version, payload] : learned) {
        const std::string prefix = payload.substr(0, payload.find(':'));
        if (prefix != std::to_string(version)) {
            std::ostringstream os;
            os << "non-linearizable commit at cas_version " << version << ": payload \"" << payload
               << "\"";
            return os.str();
        }
    }
    return std::nullopt;
}

CheckResult check_agreement(std::uint64_t seed, int trials, bool inject_acceptor_bug) {
    const AcceptorPhase2aRule rule =
        inject_acceptor_bug ? buggy_phase2a_rule() : correct_phase2a_rule();
    CheckResult result;
    result.name = inject_acceptor_bug ? "agreement-trials (with injected acceptor bug)"
                                      : "agreement-trials";
    for (int i = 0; i < trials; ++i) {
        if (auto violation = agreement_trial(seed + static_cast<std::uint64_t>(i), rule)) {
            result.passed = false;
            result.detail = "trial seed " + std::to_string(seed + static_cast<std::uint64_t>(i)) +
                            ": " + *violation;
            return result;
        }
    }
    result.detail = std::to_string(trials) + " randomized interleaving trials clean";
    return result;
}

CheckResult check_store_linearizability(std::uint64_t seed) {
    CheckResult result;
    result.name = "store-linearizability";

    InMemoryStore store;
    const std::string key = "k";
    const int threads = 4;
    const int attempts = 400;
    std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>> transitions(
        static_cast<std::size_t>(threads));

    std::vector<std::thread> workers;
    for (int t = 0; t < threads; ++t) {
        workers.emplace_back([&, t] {
            std::mt19937_64 rng(seed + static_cast<std::uint64_t>(t));
            for (int i = 0; i < attempts; ++i) {
                ReadResult r = store.read(key);
                const auto& doc = std::get<std::optional<StoredDocument>>(r);
                const std::uint64_t version = doc ? doc->store_version : 0;
                std::optional<std::uint64_t> expected;
                if (version > 0) expected = version;
                if (rng() % 8 == 0) expected = version + 1;  // deliberately stale
                CasResult c = store.cas(key, expected,
                                        std::to_string(t) + ":" + std::to_string(i));
                if (auto* ok = std::get_if<CasOk>(&c)) {
                    transitions[static_cast<std::size_t>(t)].push_back(
                        {expected.value_or(0), ok->new_version});
                }
            }
        });
    }
    for (auto& w : workers) w.join();

    std::map<std::uint64_t, int> from_counts;
    std::size_t successes = 0;
    for (const auto& per_thread : transitions) {
        for (const auto& [from, to] : per_thread) {
            successes++;
            if (to != from + 1) {
                result.passed = false;
                result.detail = "cas advanced version " + std::to_string(from) + " -> " +
                                std::to_string(to);
                return result;
            }
            if (++from_counts[from] > 1) {
                result.passed = false;
                result.detail = "two successful cas from version " + std::to_string(from);
                return result;
            }
        }
    }
    ReadResult r = store.read(key);
    const auto& doc = std::get<std::optional<StoredDocument>>(r);
    const std::uint64_t final_version = doc ? doc->store_version : 0;
    if (final_version != successes) {
        result.passed = false;
        result.detail = "final version " + std::to_string(final_version) + " != " +
                        std::to_string(successes) + " successes";
        return result;
    }
    result.detail = std::to_string(successes) + " successful cas ops form a single chain";
    return result;
}

CheckResult check_online_stats_oracle(std::uint64_t seed, int streams) {
    CheckResult result;
    result.name = "online-stats-oracle";
    std::mt19937_64 rng(seed);
    for (int s = 0; s < streams; ++s) {
        const std::size_t n = 1 + rng() % 500;
        std::uniform_real_distribution<double> pick(0.0, 1e6);
        std::vector<double> samples(n);
        SchedulerStats stats;
        stats.alpha = 1.0;  // uniform weighting: must match the batch values
        for (auto& x : samples) {
            x = std::floor(pick(rng));
            stats = record_phase2_duration(stats, static_cast<Duration>(x));
        }
        double mean = 0.0;
        for (double x : samples) mean += x;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double x : samples) var += (x - mean) * (x - mean);
        var /= static_cast<double>(n);  // population variance
        const double sigma = std::sqrt(var);

        auto rel = [](double a, double b) {
            const double scale = std::max({std::abs(a), std::abs(b), 1.0});
            return std::abs(a - b) / scale;
        };
        if (rel(stats.ema_mean, mean) > 1e-9 || rel(stats.stddev(), sigma) > 1e-9) {
            result.passed = false;
            result.detail = "stream " + std::to_string(s) + ": online (" +
                            std::to_string(stats.ema_mean) + ", " + std::to_string(stats.stddev()) +
                            ") vs batch (" + std::to_string(mean) + ", " + std::to_string(sigma) +
                            ")";
            return result;
        }
    }
    result.detail = std::to_string(streams) + " streams match batch mean/sigma within 1e-9";
    return result;
}

CheckResult check_failover_transitions(std::uint64_t seed) {
    CheckResult result;
    result.name = "failover-transition-fuzz";
    std::mt19937_64 rng(seed);
    const std::vector<RegionConfig> regions{{"ra", 1}, {"rb", 2}, {"rc", 3}};
    FailoverParams params;

    for (int trial = 0; trial < 2000; ++trial) {
        FailoverManagerState state = initial_state(regions, 1 + rng() % 2);
        SimTime now = 0;
        // Random walk of reports with random staleness and health.
        for (int step = 0; step < 30; ++step) {
            now += static_cast<SimTime>(rng() % static_cast<std::uint64_t>(seconds(40)));
            PartitionReport report;
            report.region = regions[rng() % regions.size()].id;
            report.healthy = rng() % 8 != 0;
            report.committed_lsn = rng() % 100;
            report.epoch_seen = state.epoch;
            report.report_time = now;
            const std::uint64_t prev_epoch = state.epoch;
            FailoverManagerState next = transition(state, report, {}, now, params);
            if (auto violation = check_state_invariants(next)) {
                result.passed = false;
                result.detail = "trial " + std::to_string(trial) + " step " +
                                std::to_string(step) + ": " + *violation;
                return result;
            }
            if (next.epoch != prev_epoch && next.epoch != prev_epoch + 1) {
                result.passed = false;
                result.detail = "epoch jumped from " + std::to_string(prev_epoch) + " to " +
                                std::to_string(next.epoch);
                return result;
            }
            if (next.graceful) {
                // A graceful target must outrank the current write region.
                auto rank = [&](const std::string& r) {
                    return std::find(next.priority_list.begin(), next.priority_list.end(), r) -
                           next.priority_list.begin();
                };
                if (rank(next.graceful->target) >= rank(next.write_region)) {
                    result.passed = false;
                    result.detail = "graceful failover toward a lower-priority region";
                    return result;
                }
            }
            state = next;
        }

        // Revocation property: dropping below the durability floor is denied.
        if (!state.active_leases.empty()) {
            std::vector<std::string> leased(state.active_leases.begin(),
                                            state.active_leases.end());
            const std::string victim = leased[rng() % leased.size()];
            RevocationResult rev = request_lease_revocation(state, victim);
            const std::uint64_t remaining = state.active_leases.size();  // +1 write, -1 revoked
            if (remaining < state.min_durability && rev.permitted) {
                result.passed = false;
                result.detail = "revocation permitted below the durability floor";
                return result;
            }
            if (rev.permitted && rev.state.active_leases.count(victim)) {
                result.passed = false;
                result.detail = "revocation permitted but lease still present";
                return result;
            }
        }
    }
    result.detail = "2000 randomized transition walks clean";
    return result;
}

std::vector<CheckResult> run_all_checks(std::uint64_t seed, bool inject_acceptor_bug) {
    std::vector<CheckResult> results;
    results.push_back(check_agreement(seed, 500, inject_acceptor_bug));
    results.push_back(check_store_linearizability(seed));
    results.push_back(check_online_stats_oracle(seed, 200));
    results.push_back(check_failover_transitions(seed));
    return results;
}

}  // namespace failover
