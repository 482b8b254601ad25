#pragma once

// Two-stage latent compression. Intra-step: deduplicate near-identical
// frames, keeping only key frames plus a frame->keyframe map. Inter-step:
// store the differentials (key frame minus first frame) of one base step and
// reconstruct every other step's common key frames as
// first_frame + alpha * base_diff, with alpha fitted by least squares.
// Key frames a base diff cannot represent are kept verbatim as extra frames.

#include <cstdint>
#include <map>
#include <vector>

#include "lcache/core.hpp"
#include "lcache/serialize.hpp"

namespace lcache {

// mapping[j] == j marks a key frame; otherwise mapping[j] is the index of an
// earlier key frame whose similarity to frame j is at least the threshold.
struct KeyFrameMap {
    std::vector<int> mapping;

    int frame_count() const { return static_cast<int>(mapping.size()); }
    bool is_key(int j) const { return mapping[j] == j; }
    std::vector<int> key_indices() const;

    bool operator==(const KeyFrameMap&) const = default;
};

struct IntraCompressed {
    StepId step;
    std::vector<std::pair<int, Frame>> keyframes;  // ascending frame index
    KeyFrameMap map;

    int frame_count() const { return map.frame_count(); }
    const Frame& keyframe_at(int index) const;
};

// Differentials of one step's key frames against its first frame, keyed by
// frame index. Index 0 is omitted (identically zero).
struct DiffSet {
    FrameDims dims;
    std::map<int, std::vector<float>> diffs;
};

// Per-prompt compressed record covering one or more cached steps.
struct CompressedEntry {
    struct StepRecord {
        StepId step;
        Frame first_frame;
        KeyFrameMap map;
        std::map<int, float> alphas;       // common key index -> scale vs base diff
        std::map<int, Frame> extra_frames; // key frames stored verbatim
    };

    PromptId prompt;
    StepId base_step;
    FrameDims dims;
    int frame_count = 0;
    std::vector<StepRecord> steps;  // ascending by step
    DiffSet base_diffs;             // common key indices with a usable base diff
    MaskSet masks;

    const StepRecord& record(StepId step) const;  // throws StepNotCached
    bool has_step(StepId step) const;
};

KeyFrameMap select_keyframes(const LatentState& latent, double threshold);

IntraCompressed intra_compress(const LatentState& latent, double threshold);

LatentState intra_decompress(const IntraCompressed& c);

// Least-squares scale between two equally-shaped differentials:
// sum(diff_s * diff_base) / sum(diff_base^2), accumulated in double.
// Throws DegenerateBase when diff_base is identically zero.
float solve_alpha(std::span<const float> diff_s, std::span<const float> diff_base);

// Chooses the base step whose diffs reconstruct all steps with the highest
// mean per-frame similarity (ties to the earliest step), then assembles the
// entry. Accepts one step as a degenerate case (that step becomes the base).
CompressedEntry inter_compress(const std::vector<IntraCompressed>& steps, MaskSet masks,
                               PromptId prompt);

LatentState decompress_step(const CompressedEntry& entry, StepId step);

// Exact serialized byte count of the entry (matches serialize_entry).
std::uint64_t compressed_size(const CompressedEntry& entry);

// Byte count of the raw, uncompressed equivalent of n_steps latent states.
std::uint64_t uncompressed_size(const FrameDims& dims, int frame_count, int n_steps);

// Canonical wire format used by compressed_size, the snapshot file, and the
// byte accounting in the cache store.
void serialize_entry(const CompressedEntry& entry, ByteWriter& out);
CompressedEntry deserialize_entry(ByteReader& in);

// Size accounting split used by the store: shared bytes are counted once per
// prompt (header, base diffs, masks); private bytes once per live step.
std::uint64_t entry_shared_bytes(const CompressedEntry& entry);
std::uint64_t step_private_bytes(const CompressedEntry& entry, StepId step);

struct SizeBreakdown {
    std::uint64_t header = 0;
    std::uint64_t first_frames = 0;
    std::uint64_t maps = 0;
    std::uint64_t alphas = 0;
    std::uint64_t extra_frames = 0;
    std::uint64_t base_diffs = 0;
    std::uint64_t masks = 0;

    std::uint64_t total() const {
        return header + first_frames + maps + alphas + extra_frames + base_diffs + masks;
    }
};

SizeBreakdown size_breakdown(const CompressedEntry& entry);

}  // namespace lcache
