#pragma once

// Exact top-1 cosine-similarity index with three tables (whole prompt,
// object, background). Entries for a prompt are inserted into and removed
// from all three tables atomically; lookups are exhaustive scans, which stay
// in the millisecond range at the scales this simulator targets and keep
// every result deterministic.

#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <vector>

#include "lcache/core.hpp"

namespace lcache {

struct QueryResult {
    PromptId prompt;
    double score;
};

class SimilarityIndex {
public:
    SimilarityIndex() = default;
    explicit SimilarityIndex(int dim) : dim_(dim) {}

    SimilarityIndex(const SimilarityIndex& other);
    SimilarityIndex& operator=(const SimilarityIndex& other);

    // Inserts into all three tables; duplicate prompt ids are an error.
    void insert(const Embedding& whole, const Embedding& object, const Embedding& background,
                PromptId prompt);

    // Highest-similarity entry, ties broken toward the smaller prompt id;
    // nullopt when the table is empty.
    std::optional<QueryResult> query_top1(EmbeddingKind kind, const Embedding& query) const;

    // Removes from all three tables; unknown prompt ids are an error.
    void remove(PromptId prompt);

    bool contains(PromptId prompt) const;
    std::size_t size() const;
    int dim() const { return dim_; }

    // Entries of one table in ascending prompt-id order (snapshot + tests).
    std::vector<std::pair<PromptId, std::vector<float>>> entries(EmbeddingKind kind) const;

private:
    // Flat layout per table, kept sorted by prompt id so scans and snapshots
    // are canonical.
    struct Table {
        std::vector<std::uint64_t> ids;
        std::vector<float> values;  // ids.size() * dim floats
    };

    std::size_t find_slot(const Table& t, std::uint64_t id) const;

    int dim_ = 0;  // fixed by the first insert when constructed empty
    Table tables_[3];
    mutable std::shared_mutex mu_;
};

}  // namespace lcache
