#include "lcache/codec.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "lcache/errors.hpp"

namespace lcache {

namespace {

// Similarity that tolerates zero vectors; used only when scoring candidate
// bases, where a degenerate reconstruction must rank poorly, not throw.
double safe_similarity(std::span<const float> a, std::span<const float> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

bool all_zero(std::span<const float> v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; });
}

std::vector<float> frame_diff(const Frame& frame, const Frame& first) {
    std::vector<float> d(frame.values().size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = frame.values()[i] - first.values()[i];
    return d;
}

// True when adding the stored diff back onto the first frame reproduces the
// key frame exactly; float subtraction does not guarantee this.
bool reconstructs_exactly(const Frame& first, std::span<const float> diff, const Frame& key) {
    for (std::size_t i = 0; i < diff.size(); ++i) {
        if (first.values()[i] + diff[i] != key.values()[i]) return false;
    }
    return true;
}

struct StepDiffs {
    std::map<int, std::vector<float>> by_index;  // key index > 0 -> diff
};

CompressedEntry build_entry(const std::vector<IntraCompressed>& steps,
                            const std::vector<StepDiffs>& diffs, std::size_t base_idx,
                            const std::vector<int>& common, MaskSet masks, PromptId prompt) {
    const IntraCompressed& base = steps[base_idx];
    CompressedEntry entry{prompt,
                          base.step,
                          base.keyframes.front().second.dims(),
                          base.frame_count(),
                          {},
                          DiffSet{base.keyframes.front().second.dims(), {}},
                          std::move(masks)};

    // Base diffs: common indices whose base differential is nonzero.
    for (int m : common) {
        if (m == 0) continue;
        const auto& d = diffs[base_idx].by_index.at(m);
        if (!all_zero(d)) entry.base_diffs.diffs.emplace(m, d);
    }

    for (std::size_t si = 0; si < steps.size(); ++si) {
        const IntraCompressed& ic = steps[si];
        CompressedEntry::StepRecord rec{ic.step, ic.keyframes.front().second, ic.map, {}, {}};

        for (const auto& [m, key] : ic.keyframes) {
            if (m == 0) continue;
            const bool is_common = std::binary_search(common.begin(), common.end(), m);
            if (!is_common) {
                rec.extra_frames.emplace(m, key);
                continue;
            }
            auto bd = entry.base_diffs.diffs.find(m);
            if (bd == entry.base_diffs.diffs.end()) {
                // Base diff is zero here. Steps whose own diff is nonzero
                // cannot use the scale path and keep the frame verbatim.
                if (!all_zero(diffs[si].by_index.at(m))) rec.extra_frames.emplace(m, key);
                continue;
            }
            if (si == base_idx) {
                // The base reconstructs with alpha = 1 from its own diff;
                // verify the float round trip and fall back to verbatim
                // storage for the rare frame where it is not exact.
                if (!reconstructs_exactly(rec.first_frame, bd->second, key))
                    rec.extra_frames.emplace(m, key);
            } else {
                const float alpha = solve_alpha(diffs[si].by_index.at(m), bd->second);
                if (!std::isfinite(alpha)) {
                    rec.extra_frames.emplace(m, key);
                    rec.alphas.emplace(m, 0.0f);
                } else {
                    rec.alphas.emplace(m, alpha);
                }
            }
        }
        entry.steps.push_back(std::move(rec));
    }
    return entry;
}

}  // namespace

std::vector<int> KeyFrameMap::key_indices() const {
    std::vector<int> keys;
    for (int j = 0; j < frame_count(); ++j)
        if (mapping[j] == j) keys.push_back(j);
    return keys;
}

const Frame& IntraCompressed::keyframe_at(int index) const {
    auto it = std::lower_bound(keyframes.begin(), keyframes.end(), index,
                               [](const auto& kv, int idx) { return kv.first < idx; });
    if (it == keyframes.end() || it->first != index)
        throw std::logic_error("IntraCompressed: no key frame at index " + std::to_string(index));
    return it->second;
}

const CompressedEntry::StepRecord& CompressedEntry::record(StepId step) const {
    for (const auto& rec : steps)
        if (rec.step == step) return rec;
    throw StepNotCached("step " + std::to_string(step.value()) + " not in entry");
}

bool CompressedEntry::has_step(StepId step) const {
    return std::any_of(steps.begin(), steps.end(),
                       [&](const auto& r) { return r.step == step; });
}

KeyFrameMap select_keyframes(const LatentState& latent, double threshold) {
    if (threshold <= 0.0 || threshold > 1.0)
        throw std::invalid_argument("select_keyframes: threshold must be in (0, 1]");
    const int f = latent.frame_count();
    KeyFrameMap map;
    map.mapping.resize(f);
    map.mapping[0] = 0;

    std::vector<int> keys{0};
    for (int j = 1; j < f; ++j) {
        int best = -1;
        double best_sim = 0.0;
        for (int k : keys) {
            const double sim = frame_similarity(latent.frames()[j], latent.frames()[k]);
            if (sim >= threshold && (best < 0 || sim > best_sim)) {
                best = k;
                best_sim = sim;
            }
        }
        if (best < 0) {
            map.mapping[j] = j;
            keys.push_back(j);
        } else {
            map.mapping[j] = best;
        }
    }
    return map;
}

IntraCompressed intra_compress(const LatentState& latent, double threshold) {
    KeyFrameMap map = select_keyframes(latent, threshold);
    std::vector<std::pair<int, Frame>> keyframes;
    for (int k : map.key_indices()) keyframes.emplace_back(k, latent.frames()[k]);
    return IntraCompressed{latent.step(), std::move(keyframes), std::move(map)};
}

LatentState intra_decompress(const IntraCompressed& c) {
    std::vector<Frame> frames;
    frames.reserve(c.frame_count());
    for (int j = 0; j < c.frame_count(); ++j) frames.push_back(c.keyframe_at(c.map.mapping[j]));
    return LatentState(c.step, std::move(frames));
}

float solve_alpha(std::span<const float> diff_s, std::span<const float> diff_base) {
    if (diff_s.size() != diff_base.size())
        throw std::invalid_argument("solve_alpha: shape mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < diff_base.size(); ++i) {
        num += static_cast<double>(diff_s[i]) * diff_base[i];
        den += static_cast<double>(diff_base[i]) * diff_base[i];
    }
    if (den == 0.0) throw DegenerateBase("solve_alpha: base differential is identically zero");
    return static_cast<float>(num / den);
}

CompressedEntry inter_compress(const std::vector<IntraCompressed>& steps, MaskSet masks,
                               PromptId prompt) {
    if (steps.empty()) throw std::invalid_argument("inter_compress: empty step list");

    std::vector<IntraCompressed> ordered = steps;
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.step < b.step; });
    const int f = ordered.front().frame_count();
    const FrameDims dims = ordered.front().keyframes.front().second.dims();
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        if (ordered[i].frame_count() != f ||
            !(ordered[i].keyframes.front().second.dims() == dims))
            throw std::invalid_argument("inter_compress: steps must share shape");
        if (i > 0 && ordered[i].step == ordered[i - 1].step)
            throw std::invalid_argument("inter_compress: duplicate step");
    }
    if (masks.frame_count() != f || masks.object_masks().front().height() != dims.h ||
        masks.object_masks().front().width() != dims.w)
        throw std::invalid_argument("inter_compress: mask shape mismatch");

    // Common key indices: present as a key frame in every step.
    std::vector<int> common = ordered.front().map.key_indices();
    for (std::size_t i = 1; i < ordered.size(); ++i) {
        std::vector<int> keys = ordered[i].map.key_indices();
        std::vector<int> merged;
        std::set_intersection(common.begin(), common.end(), keys.begin(), keys.end(),
                              std::back_inserter(merged));
        common = std::move(merged);
    }

    std::vector<StepDiffs> diffs(ordered.size());
    for (std::size_t si = 0; si < ordered.size(); ++si) {
        const Frame& first = ordered[si].keyframes.front().second;
        for (const auto& [m, key] : ordered[si].keyframes) {
            if (m == 0) continue;
            diffs[si].by_index.emplace(m, frame_diff(key, first));
        }
    }

    if (ordered.size() == 1)
        return build_entry(ordered, diffs, 0, common, std::move(masks), prompt);

    // References the candidates are scored against: the intra-compressed
    // originals, fully expanded.
    std::vector<LatentState> refs;
    refs.reserve(ordered.size());
    for (const auto& ic : ordered) refs.push_back(intra_decompress(ic));

    double best_score = -2.0;
    std::optional<CompressedEntry> best_entry;
    for (std::size_t b = 0; b < ordered.size(); ++b) {
        CompressedEntry trial = build_entry(ordered, diffs, b, common, masks, prompt);
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t si = 0; si < ordered.size(); ++si) {
            LatentState recon = decompress_step(trial, ordered[si].step);
            for (int j = 0; j < f; ++j) {
                sum += safe_similarity(recon.frames()[j].values(), refs[si].frames()[j].values());
                ++count;
            }
        }
        const double score = sum / static_cast<double>(count);
        if (score > best_score) {
            best_score = score;
            best_entry = std::move(trial);
        }
    }
    return std::move(*best_entry);
}

LatentState decompress_step(const CompressedEntry& entry, StepId step) {
    const auto& rec = entry.record(step);
    const std::size_t elems = static_cast<std::size_t>(entry.dims.elems());

    std::map<int, Frame> recon;
    for (int m : rec.map.key_indices()) {
        if (m == 0) {
            recon.emplace(0, rec.first_frame);
            continue;
        }
        auto ex = rec.extra_frames.find(m);
        if (ex != rec.extra_frames.end()) {
            recon.emplace(m, ex->second);
            continue;
        }
        auto bd = entry.base_diffs.diffs.find(m);
        if (bd == entry.base_diffs.diffs.end()) {
            // Zero differential for every step at this index.
            recon.emplace(m, rec.first_frame);
            continue;
        }
        std::vector<float> vals(elems);
        if (step == entry.base_step) {
            for (std::size_t i = 0; i < elems; ++i)
                vals[i] = rec.first_frame.values()[i] + bd->second[i];
        } else {
            const double alpha = rec.alphas.at(m);
            for (std::size_t i = 0; i < elems; ++i)
                vals[i] = static_cast<float>(rec.first_frame.values()[i] +
                                             alpha * bd->second[i]);
        }
        recon.emplace(m, Frame(entry.dims, std::move(vals)));
    }

    std::vector<Frame> frames;
    frames.reserve(rec.map.frame_count());
    for (int j = 0; j < rec.map.frame_count(); ++j) frames.push_back(recon.at(rec.map.mapping[j]));
    return LatentState(step, std::move(frames));
}

namespace {

constexpr std::uint64_t kEntryHeaderBytes = 8 + 1 + 1 + 2 + 4 * 2;

std::uint64_t frame_bytes(const FrameDims& dims) {
    return static_cast<std::uint64_t>(dims.elems()) * 4;
}

std::uint64_t mask_bytes(const FrameDims& dims, int frame_count) {
    return 2ull * frame_count * ((static_cast<std::uint64_t>(dims.pixels()) + 7) / 8);
}

}  // namespace

std::uint64_t entry_shared_bytes(const CompressedEntry& entry) {
    return kEntryHeaderBytes +
           entry.base_diffs.diffs.size() * (2 + frame_bytes(entry.dims)) +
           mask_bytes(entry.dims, entry.frame_count);
}

std::uint64_t step_private_bytes(const CompressedEntry& entry, StepId step) {
    const auto& rec = entry.record(step);
    std::uint64_t n = 1;                                    // step id
    n += frame_bytes(entry.dims);                           // first frame
    n += static_cast<std::uint64_t>(entry.frame_count) * 2; // map
    if (!(rec.step == entry.base_step)) n += rec.alphas.size() * 4;
    n += 2;                                                 // extra count
    n += rec.extra_frames.size() * (2 + frame_bytes(entry.dims));
    return n;
}

std::uint64_t compressed_size(const CompressedEntry& entry) {
    std::uint64_t n = entry_shared_bytes(entry);
    for (const auto& rec : entry.steps) n += step_private_bytes(entry, rec.step);
    return n;
}

std::uint64_t uncompressed_size(const FrameDims& dims, int frame_count, int n_steps) {
    return static_cast<std::uint64_t>(n_steps) * frame_count * frame_bytes(dims);
}

SizeBreakdown size_breakdown(const CompressedEntry& entry) {
    SizeBreakdown b;
    b.header = kEntryHeaderBytes;
    b.base_diffs = entry.base_diffs.diffs.size() * (2 + frame_bytes(entry.dims));
    b.masks = mask_bytes(entry.dims, entry.frame_count);
    for (const auto& rec : entry.steps) {
        b.first_frames += frame_bytes(entry.dims);
        b.maps += static_cast<std::uint64_t>(entry.frame_count) * 2 + 1 + 2;
        if (!(rec.step == entry.base_step)) b.alphas += rec.alphas.size() * 4;
        b.extra_frames += rec.extra_frames.size() * (2 + frame_bytes(entry.dims));
    }
    return b;
}

void serialize_entry(const CompressedEntry& entry, ByteWriter& out) {
    out.u64(entry.prompt.value);
    out.u8(static_cast<std::uint8_t>(entry.base_step.value()));
    out.u8(static_cast<std::uint8_t>(entry.steps.size()));
    out.u16(static_cast<std::uint16_t>(entry.base_diffs.diffs.size()));
    out.u16(static_cast<std::uint16_t>(entry.frame_count));
    out.u16(static_cast<std::uint16_t>(entry.dims.h));
    out.u16(static_cast<std::uint16_t>(entry.dims.w));
    out.u16(static_cast<std::uint16_t>(entry.dims.c));

    for (const auto& rec : entry.steps) {
        out.u8(static_cast<std::uint8_t>(rec.step.value()));
        out.f32_array(rec.first_frame.values());
        for (int m : rec.map.mapping) out.u16(static_cast<std::uint16_t>(m));
        if (!(rec.step == entry.base_step)) {
            for (const auto& [m, alpha] : rec.alphas) {
                (void)m;
                out.f32(alpha);
            }
        }
        out.u16(static_cast<std::uint16_t>(rec.extra_frames.size()));
        for (const auto& [m, frame] : rec.extra_frames) {
            out.u16(static_cast<std::uint16_t>(m));
            out.f32_array(frame.values());
        }
    }

    for (const auto& [m, diff] : entry.base_diffs.diffs) {
        out.u16(static_cast<std::uint16_t>(m));
        out.f32_array(diff);
    }

    for (const auto& bm : entry.masks.object_masks()) out.bytes(bm.packed());
    for (const auto& bm : entry.masks.background_masks()) out.bytes(bm.packed());
}

CompressedEntry deserialize_entry(ByteReader& in) {
    const std::size_t start = in.pos();
    const PromptId prompt{in.u64()};
    const int base_step_val = in.u8();
    const int n_steps = in.u8();
    const int n_common = in.u16();
    const int frame_count = in.u16();
    FrameDims dims{in.u16(), in.u16(), in.u16()};
    if (n_steps < 1 || frame_count < 1 || dims.h < 1 || dims.w < 1 || dims.c < 1)
        throw SnapshotError("invalid entry header", start);

    const std::size_t elems = static_cast<std::size_t>(dims.elems());
    CompressedEntry entry{prompt, StepId(base_step_val), dims, frame_count, {},
                          DiffSet{dims, {}},
                          MaskSet({Bitmap(dims.h, dims.w)}, {Bitmap(dims.h, dims.w)})};

    // Alphas are read before the base diffs exist; indices are patched in
    // after the diff section since both sides use ascending index order.
    std::vector<std::vector<float>> raw_alphas(n_steps);
    for (int s = 0; s < n_steps; ++s) {
        const std::size_t step_pos = in.pos();
        StepId step(in.u8());
        std::vector<float> first(elems);
        in.f32_array(first);
        KeyFrameMap map;
        map.mapping.resize(frame_count);
        for (int j = 0; j < frame_count; ++j) {
            map.mapping[j] = in.u16();
            if (map.mapping[j] >= frame_count)
                throw SnapshotError("key frame map index out of range", step_pos);
        }
        CompressedEntry::StepRecord rec{step, Frame(dims, std::move(first)), std::move(map), {}, {}};
        if (!(step == entry.base_step)) {
            raw_alphas[s].resize(n_common);
            for (int i = 0; i < n_common; ++i) raw_alphas[s][i] = in.f32();
        }
        const int n_extra = in.u16();
        for (int e = 0; e < n_extra; ++e) {
            const int m = in.u16();
            if (m >= frame_count) throw SnapshotError("extra frame index out of range", step_pos);
            std::vector<float> vals(elems);
            in.f32_array(vals);
            rec.extra_frames.emplace(m, Frame(dims, std::move(vals)));
        }
        if (s > 0 && !(entry.steps.back().step < rec.step))
            throw SnapshotError("steps out of order", step_pos);
        entry.steps.push_back(std::move(rec));
    }

    std::vector<int> common_indices;
    for (int i = 0; i < n_common; ++i) {
        const std::size_t diff_pos = in.pos();
        const int m = in.u16();
        if (m < 1 || m >= frame_count) throw SnapshotError("diff index out of range", diff_pos);
        std::vector<float> diff(elems);
        in.f32_array(diff);
        entry.base_diffs.diffs.emplace(m, std::move(diff));
        common_indices.push_back(m);
    }
    if (!std::is_sorted(common_indices.begin(), common_indices.end()))
        throw SnapshotError("diff indices out of order", in.pos());

    for (int s = 0; s < n_steps; ++s) {
        if (entry.steps[s].step == entry.base_step) continue;
        for (int i = 0; i < n_common; ++i)
            entry.steps[s].alphas.emplace(common_indices[i], raw_alphas[s][i]);
    }

    const std::size_t mask_sz = (static_cast<std::size_t>(dims.pixels()) + 7) / 8;
    std::vector<Bitmap> object_masks, background_masks;
    for (int j = 0; j < frame_count; ++j)
        object_masks.emplace_back(dims.h, dims.w, in.bytes(mask_sz));
    for (int j = 0; j < frame_count; ++j)
        background_masks.emplace_back(dims.h, dims.w, in.bytes(mask_sz));
    entry.masks = MaskSet(std::move(object_masks), std::move(background_masks));

    // The base step's own record may be absent: steps are evicted
    // independently while the shared diffs stay behind.
    return entry;
}

}  // namespace lcache
