// Versioned JSON serialization for the consensus types. Canonical
// (sorted-key) dumps, so equal values serialize to identical bytes.
#pragma once

#include <stdexcept>
#include <string>

#include "failover/core.hpp"
#include "json.hpp"

namespace failover {

inline constexpr int kWireVersion = 1;

using json = nlohmann::json;

inline void to_json(json& j, const BallotNumber& b) {
    j = json{{"round", b.round}, {"proposer", b.proposer_id}};
}
inline void from_json(const json& j, BallotNumber& b) {
    j.at("round").get_to(b.round);
    j.at("proposer").get_to(b.proposer_id);
}

inline void to_json(json& j, const RegisterValue& v) {
    j = json{{"payload", v.payload}, {"cas_version", v.cas_version}};
}
inline void from_json(const json& j, RegisterValue& v) {
    j.at("payload").get_to(v.payload);
    j.at("cas_version").get_to(v.cas_version);
}

inline void to_json(json& j, const AcceptorState& s) {
    j = json{{"v", kWireVersion}};
    if (s.promised_ballot) j["promised"] = *s.promised_ballot;
    if (s.accepted_ballot) j["accepted_ballot"] = *s.accepted_ballot;
    if (s.accepted_value) j["accepted_value"] = *s.accepted_value;
}
inline void from_json(const json& j, AcceptorState& s) {
    s = AcceptorState{};
    if (j.contains("promised")) s.promised_ballot = j.at("promised").get<BallotNumber>();
    if (j.contains("accepted_ballot"))
        s.accepted_ballot = j.at("accepted_ballot").get<BallotNumber>();
    if (j.contains("accepted_value"))
        s.accepted_value = j.at("accepted_value").get<RegisterValue>();
}

inline void to_json(json& j, const Phase1aMessage& m) {
    j = json{{"v", kWireVersion}, {"kind", "phase1a"}, {"ballot", m.ballot}};
}
inline void from_json(const json& j, Phase1aMessage& m) { j.at("ballot").get_to(m.ballot); }

inline void to_json(json& j, const Phase1bMessage& m) {
    j = json{{"v", kWireVersion},
             {"kind", "phase1b"},
             {"ballot", m.ballot},
             {"acceptor", m.acceptor_id}};
    if (m.accepted_ballot) j["accepted_ballot"] = *m.accepted_ballot;
    if (m.accepted_value) j["accepted_value"] = *m.accepted_value;
}
inline void from_json(const json& j, Phase1bMessage& m) {
    m = Phase1bMessage{};
    j.at("ballot").get_to(m.ballot);
    j.at("acceptor").get_to(m.acceptor_id);
    if (j.contains("accepted_ballot"))
        m.accepted_ballot = j.at("accepted_ballot").get<BallotNumber>();
    if (j.contains("accepted_value"))
        m.accepted_value = j.at("accepted_value").get<RegisterValue>();
}

inline void to_json(json& j, const Phase2aMessage& m) {
    j = json{{"v", kWireVersion}, {"kind", "phase2a"}, {"ballot", m.ballot}, {"value", m.value}};
}
inline void from_json(const json& j, Phase2aMessage& m) {
    j.at("ballot").get_to(m.ballot);
    j.at("value").get_to(m.value);
}

inline void to_json(json& j, const Phase2bMessage& m) {
    j = json{{"v", kWireVersion},
             {"kind", "phase2b"},
             {"ballot", m.ballot},
             {"acceptor", m.acceptor_id},
             {"value", m.value}};
}
inline void from_json(const json& j, Phase2bMessage& m) {
    j.at("ballot").get_to(m.ballot);
    j.at("acceptor").get_to(m.acceptor_id);
    j.at("value").get_to(m.value);
}

inline void to_json(json& j, const NakMessage& m) {
    j = json{{"v", kWireVersion},
             {"kind", "nak"},
             {"rejected", m.rejected_ballot},
             {"promised", m.promised_ballot}};
}
inline void from_json(const json& j, NakMessage& m) {
    j.at("rejected").get_to(m.rejected_ballot);
    j.at("promised").get_to(m.promised_ballot);
}

inline std::string serialize_message(const PaxosMessage& msg) {
    return std::visit([](const auto& m) { return json(m).dump(); }, msg);
}

inline PaxosMessage deserialize_message(const std::string& bytes) {
    json j = json::parse(bytes);
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "phase1a") return j.get<Phase1aMessage>();
    if (kind == "phase1b") return j.get<Phase1bMessage>();
    if (kind == "phase2a") return j.get<Phase2aMessage>();
    if (kind == "phase2b") return j.get<Phase2bMessage>();
    if (kind == "nak") return j.get<NakMessage>();
    throw std::invalid_argument("unknown message kind: " + kind);
}

inline std::string serialize_acceptor_state(const AcceptorState& s) { return json(s).dump(); }

inline AcceptorState deserialize_acceptor_state(const std::string& bytes) {
    return json::parse(bytes).get<AcceptorState>();
}

}  // namespace failover
