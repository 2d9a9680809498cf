// Log-free CAS Paxos roles: Leader, Acceptor, Learner.
//
// All three are pure state machines: immutable state in, new state plus
// outbound message out. Transport, persistence, and timing live elsewhere.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

namespace failover {

// Ballot ordered by (round, proposer_id) lexicographically.
struct BallotNumber {
    std::uint64_t round = 0;
    std::string proposer_id;

    friend auto operator<=>(const BallotNumber& a, const BallotNumber& b) {
        return std::tie(a.round, a.proposer_id) <=> std::tie(b.round, b.proposer_id);
    }
    friend bool operator==(const BallotNumber&, const BallotNumber&) = default;
};

// The replicated register content. The payload is an opaque serialized
// document; cas_version advances by exactly one per committed edit.
struct RegisterValue {
    std::string payload;
    std::uint64_t cas_version = 0;

    friend bool operator==(const RegisterValue&, const RegisterValue&) = default;
};

struct AcceptorState {
    std::optional<BallotNumber> promised_ballot;
    std::optional<BallotNumber> accepted_ballot;
    std::optional<RegisterValue> accepted_value;

    friend bool operator==(const AcceptorState&, const AcceptorState&) = default;
};

struct Phase1aMessage {
    BallotNumber ballot;
    friend bool operator==(const Phase1aMessage&, const Phase1aMessage&) = default;
};

struct Phase1bMessage {
    BallotNumber ballot;
    std::string acceptor_id;
    std::optional<BallotNumber> accepted_ballot;
    std::optional<RegisterValue> accepted_value;
    friend bool operator==(const Phase1bMessage&, const Phase1bMessage&) = default;
};

struct Phase2aMessage {
    BallotNumber ballot;
    RegisterValue value;
    friend bool operator==(const Phase2aMessage&, const Phase2aMessage&) = default;
};

struct Phase2bMessage {
    BallotNumber ballot;
    std::string acceptor_id;
    RegisterValue value;
    friend bool operator==(const Phase2bMessage&, const Phase2bMessage&) = default;
};

struct NakMessage {
    BallotNumber rejected_ballot;
    BallotNumber promised_ballot;
    friend bool operator==(const NakMessage&, const NakMessage&) = default;
};

using PaxosMessage =
    std::variant<Phase1aMessage, Phase1bMessage, Phase2aMessage, Phase2bMessage, NakMessage>;

// Counts distinct acceptor ids toward a fixed threshold.
class QuorumChecker {
  public:
    explicit QuorumChecker(std::size_t threshold) : threshold_(threshold) {}

    // Returns true once the threshold is met (including on this add).
    bool add(const std::string& acceptor_id) {
        seen_.insert(acceptor_id);
        return complete();
    }
    bool complete() const { return seen_.size() >= threshold_; }
    std::size_t count() const { return seen_.size(); }

  private:
    std::size_t threshold_;
    std::set<std::string> seen_;
};

inline std::size_t majority_of(std::size_t n) { return n / 2 + 1; }

// --- Acceptor ---------------------------------------------------------------

using Phase1bResult = std::variant<Phase1bMessage, NakMessage>;
using Phase2bResult = std::variant<Phase2bMessage, NakMessage>;

// Promise the ballot if it is higher than anything promised so far.
inline std::pair<AcceptorState, Phase1bResult>
acceptor_on_phase1a(const AcceptorState& state, const Phase1aMessage& msg,
                    const std::string& acceptor_id) {
    if (state.promised_ballot && !(msg.ballot > *state.promised_ballot)) {
        return {state, NakMessage{msg.ballot, *state.promised_ballot}};
    }
    AcceptorState next = state;
    next.promised_ballot = msg.ballot;
    return {next, Phase1bMessage{msg.ballot, acceptor_id, state.accepted_ballot,
                                 state.accepted_value}};
}

// Accept the value if the ballot is at least the promise.
inline std::pair<AcceptorState, Phase2bResult>
acceptor_on_phase2a(const AcceptorState& state, const Phase2aMessage& msg,
                    const std::string& acceptor_id) {
    if (state.promised_ballot && msg.ballot < *state.promised_ballot) {
        return {state, NakMessage{msg.ballot, *state.promised_ballot}};
    }
    AcceptorState next = state;
    next.promised_ballot = msg.ballot;
    next.accepted_ballot = msg.ballot;
    next.accepted_value = msg.value;
    return {next, Phase2bMessage{msg.ballot, acceptor_id, msg.value}};
}

// --- Leader ------------------------------------------------------------------

// An editor maps the current register value (absent for an empty register)
// to the next payload, or declines (no proposal is issued for the round).
using ValueEditor = std::function<std::optional<std::string>(const std::optional<RegisterValue>&)>;

enum class LeaderPhase { Idle, CollectingPhase1b, Proposed };

struct LeaderState {
    std::string self_id;
    std::size_t quorum_threshold = 0;
    LeaderPhase phase = LeaderPhase::Idle;
    BallotNumber ballot;            // current ballot once phase 1 has started
    std::uint64_t highest_round = 0; // highest round this leader ever used
    // Phase1b responses for the current ballot, keyed by acceptor.
    std::map<std::string, Phase1bMessage> phase1b_responses;
    std::uint64_t stale_messages = 0;
};

struct Phase1Start {
    LeaderState state;
    Phase1aMessage message;
};

// Pick a ballot above everything this leader used and above any nak's promise.
inline Phase1Start leader_start_phase1(const LeaderState& state,
                                       const std::optional<NakMessage>& nak = {}) {
    LeaderState next = state;
    std::uint64_t round = state.highest_round + 1;
    if (nak && nak->promised_ballot.round + 1 > round) {
        round = nak->promised_ballot.round + 1;
    }
    next.highest_round = round;
    next.ballot = BallotNumber{round, state.self_id};
    next.phase = LeaderPhase::CollectingPhase1b;
    next.phase1b_responses.clear();
    return {next, Phase1aMessage{next.ballot}};
}

enum class Phase2Status { Pending, Proposed, Declined, StaleMessage };

struct Phase2Start {
    LeaderState state;
    Phase2Status status = Phase2Status::Pending;
    std::optional<Phase2aMessage> message;
};

// Collect Phase1b responses; on quorum, run the editor over the
// highest-ballot accepted value and propose its output.
inline Phase2Start leader_on_phase1b(const LeaderState& state, const Phase1bMessage& msg,
                                     const ValueEditor& editor) {
    LeaderState next = state;
    if (state.phase != LeaderPhase::CollectingPhase1b || msg.ballot != state.ballot) {
        next.stale_messages++;
        return {next, Phase2Status::StaleMessage, {}};
    }
    next.phase1b_responses.emplace(msg.acceptor_id, msg);
    if (next.phase1b_responses.size() < next.quorum_threshold) {
        return {next, Phase2Status::Pending, {}};
    }
    // Highest-ballot accepted value among the quorum responses.
    std::optional<RegisterValue> current;
    std::optional<BallotNumber> best_ballot;
    for (const auto& [id, resp] : next.phase1b_responses) {
        if (resp.accepted_ballot && (!best_ballot || *resp.accepted_ballot > *best_ballot)) {
            best_ballot = resp.accepted_ballot;
            current = resp.accepted_value;
        }
    }
    std::optional<std::string> edited = editor(current);
    if (!edited) {
        next.phase = LeaderPhase::Idle;
        return {next, Phase2Status::Declined, {}};
    }
    RegisterValue proposal{*edited, (current ? current->cas_version : 0) + 1};
    next.phase = LeaderPhase::Proposed;
    return {next, Phase2Status::Proposed, Phase2aMessage{next.ballot, proposal}};
}

// --- Learner -----------------------------------------------------------------

struct LearnerState {
    std::size_t quorum_threshold = 0;
    // Votes per (ballot, value) pair.
    std::map<std::pair<BallotNumber, std::uint64_t>,
             std::pair<RegisterValue, std::set<std::string>>>
        votes;
};

// Learns a value once a quorum of distinct acceptors voted the same
// (ballot, value). Phase2b messages at different ballots never combine.
inline std::pair<LearnerState, std::optional<RegisterValue>>
learner_learn(const LearnerState& state, const Phase2bMessage& msg) {
    LearnerState next = state;
    auto key = std::make_pair(msg.ballot, msg.value.cas_version);
    auto& slot = next.votes[key];
    slot.first = msg.value;
    slot.second.insert(msg.acceptor_id);
    if (slot.second.size() >= next.quorum_threshold) {
        return {next, msg.value};
    }
    return {next, std::nullopt};
}

}  // namespace failover
