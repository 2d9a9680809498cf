// Versioned document store with per-key compare-and-swap, plus the
// read/apply/cas retry loop that persists acceptor state transitions.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>

#include "failover/core.hpp"

namespace failover {

struct StoredDocument {
    std::string key;
    std::string body;
    std::uint64_t store_version = 0;
};

struct StoreEndpoint {
    std::string store_id;
    std::string region;
};

struct CasOk {
    std::uint64_t new_version;
};
struct CasVersionMismatch {
    std::uint64_t current_version;
};
struct StoreUnavailable {};

using CasResult = std::variant<CasOk, CasVersionMismatch, StoreUnavailable>;
using ReadResult = std::variant<std::optional<StoredDocument>, StoreUnavailable>;

class StoreBackend {
  public:
    virtual ~StoreBackend() = default;
    virtual ReadResult read(const std::string& key) = 0;
    // expected_version absent means "create if absent"; on success the new
    // version is expected+1 (or 1 on create).
    virtual CasResult cas(const std::string& key, std::optional<std::uint64_t> expected_version,
                          const std::string& new_body) = 0;
};

class InMemoryStore final : public StoreBackend {
  public:
    ReadResult read(const std::string& key) override {
        std::lock_guard lock(mutex_);
        if (!available_) return StoreUnavailable{};
        auto it = docs_.find(key);
        if (it == docs_.end()) return std::optional<StoredDocument>{};
        return std::optional<StoredDocument>{it->second};
    }

    CasResult cas(const std::string& key, std::optional<std::uint64_t> expected_version,
                  const std::string& new_body) override {
        std::lock_guard lock(mutex_);
        if (!available_) return StoreUnavailable{};
        auto it = docs_.find(key);
        const std::uint64_t current = it == docs_.end() ? 0 : it->second.store_version;
        const std::uint64_t expected = expected_version.value_or(0);
        if (current != expected) return CasVersionMismatch{current};
        StoredDocument doc{key, new_body, current + 1};
        docs_[key] = doc;
        return CasOk{doc.store_version};
    }

    void set_available(bool available) {
        std::lock_guard lock(mutex_);
        available_ = available;
    }

  private:
    std::mutex mutex_;
    bool available_ = true;
    std::map<std::string, StoredDocument> docs_;
};

// One file per key; body prefixed by an 8-byte little-endian store_version.
// Writes go through a temp file and rename, so a crash leaves either the
// old or the new document, never a torn one.
class FileStore final : public StoreBackend {
  public:
    explicit FileStore(std::filesystem::path directory);

    ReadResult read(const std::string& key) override;
    CasResult cas(const std::string& key, std::optional<std::uint64_t> expected_version,
                  const std::string& new_body) override;

    void set_available(bool available) { available_ = available; }

  private:
    std::filesystem::path path_for(const std::string& key) const;

    std::filesystem::path directory_;
    std::mutex mutex_;
    bool available_ = true;
};

using PersistResult = std::variant<Phase1bMessage, Phase2bMessage, NakMessage, StoreUnavailable>;

// Read acceptor state, apply the acceptor state machine, CAS the result
// back; on a version mismatch re-read and re-apply. Writes are skipped
// when the transition leaves the state unchanged (the Nak path).
PersistResult persist_acceptor_message(StoreBackend& store, const std::string& key,
                                       const std::string& acceptor_id, const PaxosMessage& msg);

inline std::string acceptor_state_key(const std::string& partition_set_id,
                                      const std::string& store_id) {
    return partition_set_id + "/" + store_id;
}

}  // namespace failover
