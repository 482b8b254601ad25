#include "lcache/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lcache {

namespace {

void check_finite(std::span<const float> vals, const char* what) {
    for (float v : vals) {
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite element");
    }
}

}  // namespace

Frame::Frame(FrameDims dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
    if (dims_.h <= 0 || dims_.w <= 0 || dims_.c <= 0)
        throw std::invalid_argument("Frame: dimensions must be positive");
    if (static_cast<int>(data_.size()) != dims_.elems())
        throw std::invalid_argument("Frame: data size does not match dimensions");
    check_finite(data_, "Frame");
}

Frame::Frame(FrameDims dims) : Frame(dims, std::vector<float>(dims.elems(), 0.0f)) {}

StepId::StepId(int value) : value_(value) {
    if (value < 1 || value > defaults::kTotalSteps)
        throw std::invalid_argument("StepId: value out of range 1..50");
}

bool StepId::is_cacheable() const {
    const auto& s = defaults::kCachedSteps;
    return std::find(s.begin(), s.end(), value_) != s.end();
}

const std::array<int, 5>& StepId::cacheable() { return defaults::kCachedSteps; }

LatentState::LatentState(StepId step, std::vector<Frame> frames)
    : step_(step), frames_(std::move(frames)) {
    if (frames_.empty()) throw std::invalid_argument("LatentState: needs at least one frame");
    for (const auto& f : frames_) {
        if (!(f.dims() == frames_.front().dims()))
            throw std::invalid_argument("LatentState: all frames must share dimensions");
    }
}

Embedding::Embedding(std::vector<float> values, EmbeddingKind kind)
    : values_(std::move(values)), kind_(kind) {
    if (values_.empty()) throw std::invalid_argument("Embedding: empty vector");
    check_finite(values_, "Embedding");
    double sq = 0.0;
    for (float v : values_) sq += static_cast<double>(v) * v;
    if (sq == 0.0) throw std::invalid_argument("Embedding: zero norm");
    const double inv = 1.0 / std::sqrt(sq);
    for (float& v : values_) v = static_cast<float>(v * inv);
}

Embedding Embedding::from_unit(std::vector<float> values, EmbeddingKind kind) {
    if (values.empty()) throw std::invalid_argument("Embedding: empty vector");
    check_finite(values, "Embedding");
    double sq = 0.0;
    for (float v : values) sq += static_cast<double>(v) * v;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6)
        throw std::invalid_argument("Embedding: vector is not unit norm");
    return Embedding(std::move(values), kind, TrustedTag{});
}

Bitmap::Bitmap(int h, int w) : h_(h), w_(w), bits_((static_cast<std::size_t>(h) * w + 7) / 8, 0) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("Bitmap: dimensions must be positive");
}

Bitmap::Bitmap(int h, int w, std::vector<std::uint8_t> packed) : h_(h), w_(w), bits_(std::move(packed)) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("Bitmap: dimensions must be positive");
    if (bits_.size() != (static_cast<std::size_t>(h) * w + 7) / 8)
        throw std::invalid_argument("Bitmap: packed size does not match dimensions");
}

void Bitmap::set(int pixel, bool value) {
    if (value)
        bits_[pixel >> 3] |= static_cast<std::uint8_t>(1u << (pixel & 7));
    else
        bits_[pixel >> 3] &= static_cast<std::uint8_t>(~(1u << (pixel & 7)));
}

MaskSet::MaskSet(std::vector<Bitmap> object_masks, std::vector<Bitmap> background_masks)
    : object_masks_(std::move(object_masks)), background_masks_(std::move(background_masks)) {
    if (object_masks_.empty() || object_masks_.size() != background_masks_.size())
        throw std::invalid_argument("MaskSet: need one object/background bitmap pair per frame");
    for (std::size_t i = 0; i < object_masks_.size(); ++i) {
        if (object_masks_[i].height() != object_masks_[0].height() ||
            object_masks_[i].width() != object_masks_[0].width() ||
            background_masks_[i].height() != object_masks_[0].height() ||
            background_masks_[i].width() != object_masks_[0].width())
            throw std::invalid_argument("MaskSet: bitmap dimensions must match");
    }
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
    if (a.empty()) throw std::invalid_argument("cosine_similarity: empty vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero-norm operand");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double frame_similarity(const Frame& a, const Frame& b) {
    if (!(a.dims() == b.dims())) throw std::invalid_argument("frame_similarity: shape mismatch");
    return cosine_similarity(a.values(), b.values());
}

}  // namespace lcache
