#pragma once

// Domain types for latent-state caching: frames, latent states, embeddings,
// segmentation masks, and the cosine-similarity primitives everything else
// builds on. All types are immutable after construction and all operations
// are pure.

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lcache/defaults.hpp"

namespace lcache {

struct FrameDims {
    int h = defaults::kHeight;
    int w = defaults::kWidth;
    int c = defaults::kChannels;

    int pixels() const { return h * w; }
    int elems() const { return h * w * c; }
    bool operator==(const FrameDims&) const = default;
};

// One latent frame: h*w*c finite 32-bit floats, channel-minor layout.
class Frame {
public:
    Frame(FrameDims dims, std::vector<float> data);
    explicit Frame(FrameDims dims);  // zero-filled

    const FrameDims& dims() const { return dims_; }
    std::span<const float> values() const { return data_; }
    float at(int h, int w, int c) const { return data_[(h * dims_.w + w) * dims_.c + c]; }

    bool operator==(const Frame&) const = default;

private:
    FrameDims dims_;
    std::vector<float> data_;
};

// Denoising step index, 1..=50. Steps {5,10,15,20,25} are cacheable.
class StepId {
public:
    explicit StepId(int value);

    int value() const { return value_; }
    bool is_cacheable() const;
    static const std::array<int, 5>& cacheable();

    auto operator<=>(const StepId&) const = default;

private:
    int value_;
};

// F frames of identical shape at one denoising step.
class LatentState {
public:
    LatentState(StepId step, std::vector<Frame> frames);

    StepId step() const { return step_; }
    const std::vector<Frame>& frames() const { return frames_; }
    int frame_count() const { return static_cast<int>(frames_.size()); }
    const FrameDims& dims() const { return frames_.front().dims(); }

private:
    StepId step_;
    std::vector<Frame> frames_;
};

enum class EmbeddingKind : std::uint8_t { Whole = 0, Object = 1, Background = 2 };

// Unit-norm similarity vector. Normalized at construction; a zero or
// non-finite input is an error.
class Embedding {
public:
    Embedding(std::vector<float> values, EmbeddingKind kind);

    // Accepts an already unit-norm vector without renormalizing, so values
    // restored from a snapshot keep their exact bits. Errors if the norm is
    // off by more than 1e-6.
    static Embedding from_unit(std::vector<float> values, EmbeddingKind kind);

    std::span<const float> values() const { return values_; }
    int dim() const { return static_cast<int>(values_.size()); }
    EmbeddingKind kind() const { return kind_; }

    bool operator==(const Embedding&) const = default;

private:
    struct TrustedTag {};
    Embedding(std::vector<float> values, EmbeddingKind kind, TrustedTag)
        : values_(std::move(values)), kind_(kind) {}

    std::vector<float> values_;
    EmbeddingKind kind_;
};

// Packed h*w bitmap, one bit per latent pixel, LSB-first within each byte.
class Bitmap {
public:
    Bitmap(int h, int w);  // all bits clear
    Bitmap(int h, int w, std::vector<std::uint8_t> packed);

    int height() const { return h_; }
    int width() const { return w_; }
    int bit_count() const { return h_ * w_; }
    std::size_t byte_count() const { return bits_.size(); }

    bool test(int pixel) const { return (bits_[pixel >> 3] >> (pixel & 7)) & 1; }
    void set(int pixel, bool value = true);

    const std::vector<std::uint8_t>& packed() const { return bits_; }
    bool operator==(const Bitmap&) const = default;

private:
    int h_, w_;
    std::vector<std::uint8_t> bits_;
};

// Object/background membership masks, one bitmap pair per frame.
class MaskSet {
public:
    MaskSet(std::vector<Bitmap> object_masks, std::vector<Bitmap> background_masks);

    int frame_count() const { return static_cast<int>(object_masks_.size()); }
    const std::vector<Bitmap>& object_masks() const { return object_masks_; }
    const std::vector<Bitmap>& background_masks() const { return background_masks_; }

    bool operator==(const MaskSet&) const = default;

private:
    std::vector<Bitmap> object_masks_;
    std::vector<Bitmap> background_masks_;
};

struct PromptId {
    std::uint64_t value = 0;
    auto operator<=>(const PromptId&) const = default;
};

// A prompt's cacheable latent states (ascending step) plus its masks.
struct PromptLatents {
    std::vector<LatentState> states;
    MaskSet masks;
};

// dot(a,b) / (|a|*|b|), accumulated in double. Errors on length mismatch,
// empty input, or a zero-norm operand.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Cosine similarity over the flattened frame contents.
double frame_similarity(const Frame& a, const Frame& b);

}  // namespace lcache

template <>
struct std::hash<lcache::PromptId> {
    std::size_t operator()(const lcache::PromptId& p) const noexcept {
        return std::hash<std::uint64_t>{}(p.value);
    }
};
