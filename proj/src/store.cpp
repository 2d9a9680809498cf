#include "failover/store.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "failover/wire.hpp"

namespace failover {

namespace fs = std::filesystem;

FileStore::FileStore(fs::path directory) : directory_(std::move(directory)) {
    fs::create_directories(directory_);
}

fs::path FileStore::path_for(const std::string& key) const {
    std::string name;
    name.reserve(key.size());
    for (char c : key) name += (c == '/' || c == '\\') ? '_' : c;
    return directory_ / name;
}

ReadResult FileStore::read(const std::string& key) {
    std::lock_guard lock(mutex_);
    if (!available_) return StoreUnavailable{};
    const fs::path path = path_for(key);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::optional<StoredDocument>{};
    char header[8];
    in.read(header, 8);
    if (in.gcount() != 8) throw std::runtime_error("corrupt store file: " + path.string());
    std::uint64_t version = 0;
    for (int i = 7; i >= 0; --i) version = (version << 8) | static_cast<unsigned char>(header[i]);
    std::string body{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return std::optional<StoredDocument>{StoredDocument{key, body, version}};
}

CasResult FileStore::cas(const std::string& key, std::optional<std::uint64_t> expected_version,
                         const std::string& new_body) {
    std::lock_guard lock(mutex_);
    if (!available_) return StoreUnavailable{};
    const fs::path path = path_for(key);
    std::uint64_t current = 0;
    {
        std::ifstream in(path, std::ios::binary);
        if (in) {
            char header[8];
            in.read(header, 8);
            if (in.gcount() != 8) throw std::runtime_error("corrupt store file: " + path.string());
            for (int i = 7; i >= 0; --i)
                current = (current << 8) | static_cast<unsigned char>(header[i]);
        }
    }
    if (current != expected_version.value_or(0)) return CasVersionMismatch{current};
    const std::uint64_t next = current + 1;
    char header[8];
    for (int i = 0; i < 8; ++i) header[i] = static_cast<char>((next >> (8 * i)) & 0xff);
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(header, 8);
        out.write(new_body.data(), static_cast<std::streamsize>(new_body.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
    return CasOk{next};
}

PersistResult persist_acceptor_message(StoreBackend& store, const std::string& key,
                                       const std::string& acceptor_id, const PaxosMessage& msg) {
    for (;;) {
        ReadResult read = store.read(key);
        if (std::holds_alternative<StoreUnavailable>(read)) return StoreUnavailable{};
        const auto& doc = std::get<std::optional<StoredDocument>>(read);
        AcceptorState state =
            doc ? deserialize_acceptor_state(doc->body) : AcceptorState{};
        std::optional<std::uint64_t> expected =
            doc ? std::optional<std::uint64_t>{doc->store_version} : std::nullopt;

        AcceptorState next_state;
        PersistResult response;
        if (const auto* p1a = std::get_if<Phase1aMessage>(&msg)) {
            auto [ns, resp] = acceptor_on_phase1a(state, *p1a, acceptor_id);
            next_state = ns;
            std::visit([&](auto r) { response = r; }, resp);
        } else if (const auto* p2a = std::get_if<Phase2aMessage>(&msg)) {
            auto [ns, resp] = acceptor_on_phase2a(state, *p2a, acceptor_id);
            next_state = ns;
            std::visit([&](auto r) { response = r; }, resp);
        } else {
            throw std::invalid_argument("persist_acceptor_message: not a phase1a/phase2a message");
        }

        if (next_state == state) return response;  // Nak or replay: nothing to persist

        CasResult cas = store.cas(key, expected, serialize_acceptor_state(next_state));
        if (std::holds_alternative<CasOk>(cas)) return response;
        if (std::holds_alternative<StoreUnavailable>(cas)) return StoreUnavailable{};
        // lost the race: re-read and re-apply
    }
}

}  // namespace failover
