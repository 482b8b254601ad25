#include "lcache/store.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "lcache/errors.hpp"
#include "lcache/serialize.hpp"

namespace lcache {

Policy parse_policy(const std::string& name) {
    if (name == "fifo") return Policy::Fifo;
    if (name == "lru") return Policy::Lru;
    if (name == "lcbfu") return Policy::Lcbfu;
    if (name == "lrbu") return Policy::Lrbu;
    throw std::invalid_argument("unknown policy: " + name);
}

std::string policy_name(Policy policy) {
    switch (policy) {
        case Policy::Fifo: return "fifo";
        case Policy::Lru: return "lru";
        case Policy::Lcbfu: return "lcbfu";
        case Policy::Lrbu: return "lrbu";
    }
    throw std::logic_error("invalid policy value");
}

double lrbu_priority(const StepEntry& e, std::uint64_t now) {
    if (now < e.last_access) throw std::invalid_argument("lrbu_priority: now precedes last access");
    if (e.capacity == 0) throw std::invalid_argument("lrbu_priority: zero capacity");
    const double duration = static_cast<double>(std::max<std::uint64_t>(now - e.last_access, 1));
    return (static_cast<double>(e.f + 1) * e.step.value()) /
           (static_cast<double>(e.capacity) * duration);
}

double lcbfu_priority(const StepEntry& e) {
    return static_cast<double>(e.f + 1) * e.step.value();
}

CacheStore::CacheStore(std::uint64_t capacity_limit, Policy policy)
    : capacity_limit_(capacity_limit), policy_(policy) {}

std::size_t CacheStore::step_count() const {
    std::size_t n = 0;
    for (const auto& [id, rec] : prompts_) n += rec.live.size();
    return n;
}

std::vector<StepEntry> CacheStore::insert_steps(PromptId prompt, const CompressedEntry& entry,
                                                const std::vector<StepId>& steps,
                                                std::uint64_t now) {
    if (steps.empty()) throw std::invalid_argument("insert_steps: empty step list");
    if (!(entry.prompt == prompt))
        throw std::invalid_argument("insert_steps: prompt does not match entry");
    if (prompts_.contains(prompt.value))
        throw std::invalid_argument("insert_steps: prompt already cached");
    for (StepId s : steps) {
        if (!s.is_cacheable())
            throw std::invalid_argument("insert_steps: step not cacheable");
        if (!entry.has_step(s))
            throw std::invalid_argument("insert_steps: step missing from entry");
    }

    // Keep only the records being inserted.
    PromptRecord rec{entry, {}, 0};
    std::erase_if(rec.entry.steps, [&](const CompressedEntry::StepRecord& r) {
        return std::find(steps.begin(), steps.end(), r.step) == steps.end();
    });
    rec.shared_bytes = entry_shared_bytes(rec.entry);

    std::uint64_t standalone = rec.shared_bytes;
    for (const auto& r : rec.entry.steps) standalone += step_private_bytes(rec.entry, r.step);
    if (standalone > capacity_limit_) throw OversizedEntry(standalone, capacity_limit_);

    std::vector<StepEntry> evicted;
    while (used_ + standalone > capacity_limit_) evicted.push_back(evict_one(now));

    for (const auto& r : rec.entry.steps) {
        LiveStep ls;
        ls.private_bytes = step_private_bytes(rec.entry, r.step);
        ls.entry = StepEntry{prompt, r.step, 0, now, now, next_seq_++, ls.private_bytes};
        rec.live.emplace(r.step.value(), std::move(ls));
    }
    used_ += standalone;
    prompts_.emplace(prompt.value, std::move(rec));
    return evicted;
}

std::optional<CacheStore::GetResult> CacheStore::get_step(PromptId prompt, StepId desired,
                                                          std::uint64_t now) {
    if (!desired.is_cacheable())
        throw std::invalid_argument("get_step: desired step not cacheable");
    auto it = prompts_.find(prompt.value);
    if (it == prompts_.end()) return std::nullopt;

    // Largest live step <= desired; earlier steps stand in for evicted ones.
    auto& live = it->second.live;
    auto pos = live.upper_bound(desired.value());
    if (pos == live.begin()) return std::nullopt;
    --pos;

    LiveStep& ls = pos->second;
    LatentState latent = decompress_step(it->second.entry, ls.entry.step);
    ls.entry.f += 1;
    ls.entry.last_access = now;
    return GetResult{std::move(latent), ls.entry.step};
}

const CacheStore::LiveStep* CacheStore::min_priority_step(std::uint64_t now,
                                                          std::uint64_t* attributed) const {
    const LiveStep* best = nullptr;
    std::uint64_t best_cap = 0;
    double best_key = 0.0;
    for (const auto& [id, rec] : prompts_) {
        for (const auto& [sv, ls] : rec.live) {
            // Attributed capacity: private bytes plus an equal share of the
            // prompt's shared blob, refreshed against the current refcount.
            const std::uint64_t cap = ls.private_bytes + rec.shared_bytes / rec.live.size();
            double key = 0.0;
            switch (policy_) {
                case Policy::Fifo: key = static_cast<double>(ls.entry.inserted_seq); break;
                case Policy::Lru: key = static_cast<double>(ls.entry.last_access); break;
                case Policy::Lcbfu: key = lcbfu_priority(ls.entry); break;
                case Policy::Lrbu: {
                    StepEntry e = ls.entry;
                    e.capacity = cap;
                    key = lrbu_priority(e, now);
                    break;
                }
            }
            if (best == nullptr || key < best_key ||
                (key == best_key && ls.entry.inserted_seq < best->entry.inserted_seq)) {
                best = &ls;
                best_key = key;
                best_cap = cap;
            }
        }
    }
    if (attributed) *attributed = best_cap;
    return best;
}

StepEntry CacheStore::evict_one(std::uint64_t now) {
    if (prompts_.empty()) throw std::logic_error("evict_one: store is empty");
    std::uint64_t attributed = 0;
    const LiveStep* victim = min_priority_step(now, &attributed);
    StepEntry out = victim->entry;
    out.capacity = attributed;

    auto it = prompts_.find(out.prompt.value);
    remove_step(it->second, out.prompt.value, out.step.value());
    return out;
}

bool CacheStore::evict_step(PromptId prompt, StepId step) {
    auto it = prompts_.find(prompt.value);
    if (it == prompts_.end() || !it->second.live.contains(step.value())) return false;
    remove_step(it->second, prompt.value, step.value());
    return true;
}

void CacheStore::remove_step(PromptRecord& rec, std::uint64_t prompt_id, int step_value) {
    used_ -= rec.live.at(step_value).private_bytes;
    rec.live.erase(step_value);
    std::erase_if(rec.entry.steps,
                  [&](const CompressedEntry::StepRecord& r) { return r.step.value() == step_value; });
    if (rec.live.empty()) {
        used_ -= rec.shared_bytes;
        prompts_.erase(prompt_id);
        if (on_prompt_gone_) on_prompt_gone_(PromptId{prompt_id});
    }
}

std::vector<StepId> CacheStore::cached_steps(PromptId prompt) const {
    std::vector<StepId> out;
    auto it = prompts_.find(prompt.value);
    if (it == prompts_.end()) return out;
    for (const auto& [sv, ls] : it->second.live) out.push_back(StepId(sv));
    return out;
}

const MaskSet* CacheStore::masks(PromptId prompt) const {
    auto it = prompts_.find(prompt.value);
    return it == prompts_.end() ? nullptr : &it->second.entry.masks;
}

const CompressedEntry* CacheStore::entry_data(PromptId prompt) const {
    auto it = prompts_.find(prompt.value);
    return it == prompts_.end() ? nullptr : &it->second.entry;
}

bool CacheStore::contains(PromptId prompt) const { return prompts_.contains(prompt.value); }

std::vector<StepEntry> CacheStore::entries_snapshot() const {
    std::vector<StepEntry> out;
    for (const auto& [id, rec] : prompts_) {
        for (const auto& [sv, ls] : rec.live) {
            StepEntry e = ls.entry;
            e.capacity = ls.private_bytes + rec.shared_bytes / rec.live.size();
            out.push_back(e);
        }
    }
    return out;
}

std::uint64_t CacheStore::recompute_used() const {
    std::uint64_t n = 0;
    for (const auto& [id, rec] : prompts_) {
        n += entry_shared_bytes(rec.entry);
        for (const auto& r : rec.entry.steps) n += step_private_bytes(rec.entry, r.step);
    }
    return n;
}

namespace {

constexpr char kMagic[4] = {'F', 'L', 'X', 'C'};
constexpr std::uint16_t kVersion = 1;

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    return static_cast<std::uint32_t>(
        ::crc32(0ul, reinterpret_cast<const Bytef*>(bytes.data()),
                static_cast<uInt>(bytes.size())));
}

}  // namespace

void save_snapshot(const CacheStore& store, const SimilarityIndex& index,
                   const std::filesystem::path& path) {
    ByteWriter w;
    w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
    w.u16(kVersion);
    w.u8(static_cast<std::uint8_t>(store.policy_));
    w.u64(store.capacity_limit_);
    w.u64(store.next_seq_);

    w.u16(static_cast<std::uint16_t>(index.dim()));
    for (EmbeddingKind kind :
         {EmbeddingKind::Whole, EmbeddingKind::Object, EmbeddingKind::Background}) {
        auto entries = index.entries(kind);
        w.u32(static_cast<std::uint32_t>(entries.size()));
        for (const auto& [id, vals] : entries) {
            w.u64(id.value);
            w.f32_array(vals);
        }
    }

    w.u32(static_cast<std::uint32_t>(store.prompts_.size()));
    for (const auto& [id, rec] : store.prompts_) {
        ByteWriter body;
        serialize_entry(rec.entry, body);
        body.u8(static_cast<std::uint8_t>(rec.live.size()));
        for (const auto& [sv, ls] : rec.live) {
            body.u8(static_cast<std::uint8_t>(sv));
            body.u64(ls.entry.f);
            body.u64(ls.entry.last_access);
            body.u64(ls.entry.inserted_at);
            body.u64(ls.entry.inserted_seq);
        }
        w.u32(static_cast<std::uint32_t>(body.size()));
        w.bytes(body.data());
        w.u32(crc_of(body.data()));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open snapshot for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(w.data().data()),
              static_cast<std::streamsize>(w.size()));
    if (!out) throw std::runtime_error("snapshot write failed: " + path.string());
}

SnapshotData load_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open snapshot: " + path.string());
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    ByteReader r(raw);

    auto magic = r.bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) throw SnapshotError("bad magic", 0);
    const std::uint16_t version = r.u16();
    if (version != kVersion)
        throw SnapshotError("unsupported version " + std::to_string(version), r.pos() - 2);
    const auto policy_raw = r.u8();
    if (policy_raw > 3) throw SnapshotError("invalid policy byte", r.pos() - 1);
    const std::uint64_t capacity = r.u64();
    const std::uint64_t next_seq = r.u64();

    const int dim = r.u16();
    SnapshotData data{CacheStore(capacity, static_cast<Policy>(policy_raw)),
                      SimilarityIndex(dim)};
    data.store.next_seq_ = next_seq;

    // The three tables hold the same prompt ids; rows are zipped back into
    // atomic inserts.
    std::array<std::vector<std::pair<std::uint64_t, std::vector<float>>>, 3> tables;
    for (int t = 0; t < 3; ++t) {
        const std::uint32_t count = r.u32();
        tables[t].reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint64_t id = r.u64();
            std::vector<float> vals(dim);
            r.f32_array(vals);
            tables[t].emplace_back(id, std::move(vals));
        }
    }
    if (tables[0].size() != tables[1].size() || tables[0].size() != tables[2].size())
        throw SnapshotError("index tables disagree on entry count", r.pos());
    for (std::size_t i = 0; i < tables[0].size(); ++i) {
        if (tables[0][i].first != tables[1][i].first || tables[0][i].first != tables[2][i].first)
            throw SnapshotError("index tables disagree on prompt ids", r.pos());
        data.index.insert(
            Embedding::from_unit(std::move(tables[0][i].second), EmbeddingKind::Whole),
            Embedding::from_unit(std::move(tables[1][i].second), EmbeddingKind::Object),
            Embedding::from_unit(std::move(tables[2][i].second), EmbeddingKind::Background),
            PromptId{tables[0][i].first});
    }

    const std::uint32_t n_prompts = r.u32();
    for (std::uint32_t i = 0; i < n_prompts; ++i) {
        const std::size_t record_pos = r.pos();
        const std::uint32_t body_len = r.u32();
        std::vector<std::uint8_t> body = r.bytes(body_len);
        const std::uint32_t crc_stored = r.u32();
        if (crc_of(body) != crc_stored)
            throw SnapshotError("checksum mismatch in prompt record", record_pos);

        ByteReader br(body);
        CompressedEntry entry = deserialize_entry(br);
        CacheStore::PromptRecord rec{std::move(entry), {}, 0};
        rec.shared_bytes = entry_shared_bytes(rec.entry);
        const int n_live = br.u8();
        for (int s = 0; s < n_live; ++s) {
            const int sv = br.u8();
            StepEntry e;
            e.prompt = rec.entry.prompt;
            e.step = StepId(sv);
            e.f = br.u64();
            e.last_access = br.u64();
            e.inserted_at = br.u64();
            e.inserted_seq = br.u64();
            if (!rec.entry.has_step(e.step))
                throw SnapshotError("live step missing from entry data", record_pos);
            CacheStore::LiveStep ls;
            ls.private_bytes = step_private_bytes(rec.entry, e.step);
            e.capacity = ls.private_bytes;
            ls.entry = e;
            rec.live.emplace(sv, std::move(ls));
        }
        if (!br.at_end()) throw SnapshotError("trailing bytes in prompt record", record_pos);
        if (rec.live.empty()) throw SnapshotError("prompt record with no live steps", record_pos);

        std::uint64_t bytes = rec.shared_bytes;
        for (const auto& [sv, ls] : rec.live) bytes += ls.private_bytes;
        data.store.used_ += bytes;
        data.store.prompts_.emplace(rec.entry.prompt.value, std::move(rec));
    }
    if (!r.at_end()) throw SnapshotError("trailing bytes after last record", r.pos());
    return data;
}

}  // namespace lcache
