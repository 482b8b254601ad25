#pragma once

// Synthetic workload and latent generation. Traces draw (object, background)
// template pairs from a Zipf distribution whose rank order is reshuffled
// every decay_half_life requests to model popularity drift. Latents are
// built with controllable per-step frame redundancy, a per-step differential
// scale schedule, and relative Gaussian noise on the differentials, so the
// codec's two compression mechanisms are exercised by construction.
// Everything is bit-deterministic under (spec, seed).

#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "lcache/core.hpp"
#include "lcache/defaults.hpp"

namespace lcache {

struct TraceSpec {
    std::uint64_t n_requests = 1000;
    int n_objects = 50;
    int n_backgrounds = 40;
    double zipf_s = 1.0;
    std::uint64_t decay_half_life = 0;  // 0 = popularity never drifts
    int embed_dim = defaults::kEmbedDim;
    std::uint64_t seed = 0;
};

struct LatentSpec {
    int frames = defaults::kFrames;
    FrameDims dims{};
    std::array<double, 5> redundancy_by_step = defaults::kRedundancyByStep;
    std::array<double, 5> alpha_schedule = defaults::kAlphaSchedule;
    double noise_sigma = defaults::kDiffNoiseSigma;
    std::uint64_t seed = 0;
};

// Number of non-key frames the generator produces for a redundancy fraction:
// round(r * (frames - 1)); frame 0 is always a key frame.
int redundant_frame_count(double redundancy, int frames);

// Deterministic unit vector: the normalized sum of per-token pseudorandom
// unit vectors. Shared tokens raise the similarity of the results.
Embedding synth_embedding(const std::set<std::string>& tokens, int dim, std::uint64_t seed,
                          EmbeddingKind kind);

// All five cacheable steps plus rectangular object masks.
PromptLatents synth_latents(std::uint64_t prompt_seed, const LatentSpec& spec);

struct TraceRecord {
    PromptId id;
    std::uint64_t arrival = 0;
    std::set<std::string> object_tokens;
    std::set<std::string> background_tokens;
    std::set<std::string> whole_tokens;  // object + background
    std::uint64_t latent_seed = 0;
};

struct Trace {
    TraceSpec spec;
    LatentSpec latents;
    std::vector<TraceRecord> records;
};

Trace gen_trace(const TraceSpec& spec, const LatentSpec& latents);

// JSONL: one header line, then one record per line. Round trips losslessly;
// parse errors carry the 1-based line number.
void write_trace(const Trace& trace, const std::filesystem::path& path);
Trace read_trace(const std::filesystem::path& path);

// Lazily generates and memoizes per-prompt latents (keyed by latent seed).
class SyntheticLatentProvider {
public:
    explicit SyntheticLatentProvider(LatentSpec spec, std::size_t memo_capacity = 32);

    std::shared_ptr<const PromptLatents> get(std::uint64_t latent_seed);
    const LatentSpec& spec() const { return spec_; }

private:
    LatentSpec spec_;
    std::size_t cap_;
    std::list<std::uint64_t> order_;  // most recent at front
    std::unordered_map<std::uint64_t,
                       std::pair<std::shared_ptr<const PromptLatents>, std::list<std::uint64_t>::iterator>>
        memo_;
};

}  // namespace lcache
