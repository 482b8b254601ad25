#pragma once

// Capacity-bounded cache of compressed latent entries. The eviction unit is
// one (prompt, step) pair; the diff blob and masks of a prompt are shared by
// its live steps and freed only when the last one goes. Replacement policy
// is pluggable: FIFO, LRU, LCBFU (frequency x benefit), or LRBU
// (frequency x benefit per byte, decayed by time since last access).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lcache/codec.hpp"
#include "lcache/core.hpp"
#include "lcache/vindex.hpp"

namespace lcache {

enum class Policy : std::uint8_t { Fifo = 0, Lru = 1, Lcbfu = 2, Lrbu = 3 };

Policy parse_policy(const std::string& name);  // "fifo" | "lru" | "lcbfu" | "lrbu"
std::string policy_name(Policy policy);

struct StepEntry {
    PromptId prompt;
    StepId step;
    std::uint64_t f = 0;            // requests served from this entry
    std::uint64_t last_access = 0;  // logical time (request sequence number)
    std::uint64_t inserted_at = 0;
    std::uint64_t inserted_seq = 0; // unique, strictly increasing
    std::uint64_t capacity = 0;     // attributed bytes: private + blob share
};

// (f+1) * step / (capacity * max(now - last_access, 1)). The +1 keeps
// never-reused entries ordered by the remaining factors instead of
// collapsing them all to priority zero.
double lrbu_priority(const StepEntry& e, std::uint64_t now);

// (f+1) * step, same frequency convention.
double lcbfu_priority(const StepEntry& e);

struct SnapshotData;

class CacheStore {
public:
    CacheStore(std::uint64_t capacity_limit, Policy policy);

    struct GetResult {
        LatentState latent;
        StepId actual;
    };

    // Evicts until the new steps fit, then inserts. Refuses (OversizedEntry,
    // no evictions) when the new steps alone exceed the capacity limit.
    // Returns the entries evicted to make room.
    std::vector<StepEntry> insert_steps(PromptId prompt, const CompressedEntry& entry,
                                        const std::vector<StepId>& steps, std::uint64_t now);

    // Serves the largest cached step <= desired, bumping that entry's
    // frequency and recency. nullopt when no such step survives.
    std::optional<GetResult> get_step(PromptId prompt, StepId desired, std::uint64_t now);

    // Removes and returns the minimum-priority entry under the active policy.
    StepEntry evict_one(std::uint64_t now);

    // Targeted removal (operational/test hook). False when absent.
    bool evict_step(PromptId prompt, StepId step);

    std::vector<StepId> cached_steps(PromptId prompt) const;
    const MaskSet* masks(PromptId prompt) const;          // nullptr when absent
    const CompressedEntry* entry_data(PromptId prompt) const;
    bool contains(PromptId prompt) const;

    std::uint64_t used() const { return used_; }
    std::uint64_t capacity_limit() const { return capacity_limit_; }
    Policy policy() const { return policy_; }
    std::size_t prompt_count() const { return prompts_.size(); }
    std::size_t step_count() const;

    // Invoked with the prompt id when its last step is evicted, so the
    // caller can drop the prompt from the similarity index.
    void set_eviction_callback(std::function<void(PromptId)> cb) { on_prompt_gone_ = std::move(cb); }

    // All step entries with refreshed attributed capacity, in (prompt, step)
    // order. Test and snapshot plumbing.
    std::vector<StepEntry> entries_snapshot() const;

    // Recomputes byte usage from live data; equals used() at all times.
    std::uint64_t recompute_used() const;

private:
    struct LiveStep {
        StepEntry entry;
        std::uint64_t private_bytes = 0;
    };

    struct PromptRecord {
        CompressedEntry entry;            // live step records only
        std::map<int, LiveStep> live;     // step value -> bookkeeping
        std::uint64_t shared_bytes = 0;
    };

    void remove_step(PromptRecord& rec, std::uint64_t prompt_id, int step_value);
    const LiveStep* min_priority_step(std::uint64_t now, std::uint64_t* attributed) const;

    std::uint64_t capacity_limit_ = 0;
    Policy policy_ = Policy::Lrbu;
    std::uint64_t used_ = 0;
    std::uint64_t next_seq_ = 0;
    std::map<std::uint64_t, PromptRecord> prompts_;
    std::function<void(PromptId)> on_prompt_gone_;

    friend void save_snapshot(const CacheStore&, const SimilarityIndex&,
                              const std::filesystem::path&);
    friend SnapshotData load_snapshot(const std::filesystem::path&);
};

// Versioned binary snapshot of the store plus the three index tables.
// Little-endian, magic "FLXC", per-prompt CRC32. The eviction callback is
// not part of the snapshot and must be re-attached after loading.
struct SnapshotData {
    CacheStore store;
    SimilarityIndex index;
};

void save_snapshot(const CacheStore& store, const SimilarityIndex& index,
                   const std::filesystem::path& path);
SnapshotData load_snapshot(const std::filesystem::path& path);

}  // namespace lcache
