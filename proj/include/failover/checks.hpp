// Property suite shared by the CLI `check` command and the test binaries:
// randomized consensus agreement trials, store linearizability hammering,
// the online-statistics oracle, and failover state-machine enumeration.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "failover/core.hpp"

namespace failover {

struct CheckResult {
    std::string name;
    bool passed = true;
    std::string detail;  // counterexample trace on failure
};

// Acceptor Phase2a rule, parameterized so a deliberately broken rule can be
// injected to prove the agreement trial has teeth.
using AcceptorPhase2aRule =
    std::function<std::pair<AcceptorState, std::variant<Phase2bMessage, NakMessage>>(
        const AcceptorState&, const Phase2aMessage&)>;

AcceptorPhase2aRule correct_phase2a_rule();
// Ignores the proposer-id tie-break: two proposers in the same round can both
// get their values accepted, which breaks agreement.
AcceptorPhase2aRule buggy_phase2a_rule();

// One randomized interleaving trial: 3 acceptors, 2-3 proposers running a
// CAS counter, messages reordered/duplicated/dropped. Returns a violation
// description, or nullopt when the committed chain is a linearizable CAS
// history with a single value per version.
std::optional<std::string> agreement_trial(std::uint64_t seed, const AcceptorPhase2aRule& rule);

CheckResult check_agreement(std::uint64_t seed, int trials, bool inject_acceptor_bug);
CheckResult check_store_linearizability(std::uint64_t seed);
CheckResult check_online_stats_oracle(std::uint64_t seed, int streams);
CheckResult check_failover_transitions(std::uint64_t seed);

std::vector<CheckResult> run_all_checks(std::uint64_t seed, bool inject_acceptor_bug);

}  // namespace failover
