#include "lcache/vindex.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace lcache {

SimilarityIndex::SimilarityIndex(const SimilarityIndex& other) {
    std::shared_lock lock(other.mu_);
    dim_ = other.dim_;
    for (int t = 0; t < 3; ++t) tables_[t] = other.tables_[t];
}

SimilarityIndex& SimilarityIndex::operator=(const SimilarityIndex& other) {
    if (this == &other) return *this;
    std::shared_lock rlock(other.mu_);
    std::unique_lock wlock(mu_);
    dim_ = other.dim_;
    for (int t = 0; t < 3; ++t) tables_[t] = other.tables_[t];
    return *this;
}

std::size_t SimilarityIndex::find_slot(const Table& t, std::uint64_t id) const {
    return std::lower_bound(t.ids.begin(), t.ids.end(), id) - t.ids.begin();
}

void SimilarityIndex::insert(const Embedding& whole, const Embedding& object,
                             const Embedding& background, PromptId prompt) {
    std::unique_lock lock(mu_);
    if (dim_ == 0) dim_ = whole.dim();
    const Embedding* embs[3] = {&whole, &object, &background};
    for (const Embedding* e : embs) {
        if (e->dim() != dim_)
            throw std::invalid_argument("SimilarityIndex: embedding dimension mismatch");
    }
    const std::size_t slot = find_slot(tables_[0], prompt.value);
    if (slot < tables_[0].ids.size() && tables_[0].ids[slot] == prompt.value)
        throw std::invalid_argument("SimilarityIndex: duplicate prompt id");

    for (int t = 0; t < 3; ++t) {
        Table& tab = tables_[t];
        tab.ids.insert(tab.ids.begin() + slot, prompt.value);
        const auto& vals = embs[t]->values();
        tab.values.insert(tab.values.begin() + slot * dim_, vals.begin(), vals.end());
    }
}

std::optional<QueryResult> SimilarityIndex::query_top1(EmbeddingKind kind,
                                                       const Embedding& query) const {
    std::shared_lock lock(mu_);
    const Table& tab = tables_[static_cast<int>(kind)];
    if (tab.ids.empty()) return std::nullopt;
    if (query.dim() != dim_)
        throw std::invalid_argument("SimilarityIndex: query dimension mismatch");

    // Stored embeddings and queries are unit-norm, so the dot product is the
    // cosine score. Ascending id order plus a strict comparison yields the
    // smaller prompt id on ties.
    const float* q = query.values().data();
    double best = -2.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < tab.ids.size(); ++i) {
        const float* v = tab.values.data() + i * dim_;
        double dot = 0.0;
        for (int d = 0; d < dim_; ++d) dot += static_cast<double>(q[d]) * v[d];
        if (dot > best) {
            best = dot;
            best_i = i;
        }
    }
    return QueryResult{PromptId{tab.ids[best_i]}, best};
}

void SimilarityIndex::remove(PromptId prompt) {
    std::unique_lock lock(mu_);
    const std::size_t slot = find_slot(tables_[0], prompt.value);
    if (slot >= tables_[0].ids.size() || tables_[0].ids[slot] != prompt.value)
        throw std::invalid_argument("SimilarityIndex: unknown prompt id");
    for (int t = 0; t < 3; ++t) {
        Table& tab = tables_[t];
        tab.ids.erase(tab.ids.begin() + slot);
        tab.values.erase(tab.values.begin() + slot * dim_,
                         tab.values.begin() + (slot + 1) * dim_);
    }
}

bool SimilarityIndex::contains(PromptId prompt) const {
    std::shared_lock lock(mu_);
    const std::size_t slot = find_slot(tables_[0], prompt.value);
    return slot < tables_[0].ids.size() && tables_[0].ids[slot] == prompt.value;
}

std::size_t SimilarityIndex::size() const {
    std::shared_lock lock(mu_);
    return tables_[0].ids.size();
}

std::vector<std::pair<PromptId, std::vector<float>>> SimilarityIndex::entries(
    EmbeddingKind kind) const {
    std::shared_lock lock(mu_);
    const Table& tab = tables_[static_cast<int>(kind)];
    std::vector<std::pair<PromptId, std::vector<float>>> out;
    out.reserve(tab.ids.size());
    for (std::size_t i = 0; i < tab.ids.size(); ++i) {
        out.emplace_back(PromptId{tab.ids[i]},
                         std::vector<float>(tab.values.begin() + i * dim_,
                                            tab.values.begin() + (i + 1) * dim_));
    }
    return out;
}

}  // namespace lcache
