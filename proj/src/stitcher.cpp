#include "lcache/stitcher.hpp"

#include <stdexcept>

namespace lcache {

LatentState stitch(const StitchInput& input) {
    const LatentState& obj = input.object_latent;
    const LatentState& bg = input.background_latent;
    if (!(obj.step() == bg.step())) throw std::invalid_argument("stitch: step mismatch");
    if (obj.frame_count() != bg.frame_count() || !(obj.dims() == bg.dims()))
        throw std::invalid_argument("stitch: latent shape mismatch");
    const FrameDims dims = obj.dims();
    const int f = obj.frame_count();
    if (input.object_masks.frame_count() != f || input.background_masks.frame_count() != f)
        throw std::invalid_argument("stitch: mask frame count mismatch");
    if (input.object_masks.object_masks()[0].height() != dims.h ||
        input.object_masks.object_masks()[0].width() != dims.w ||
        input.background_masks.object_masks()[0].height() != dims.h ||
        input.background_masks.object_masks()[0].width() != dims.w)
        throw std::invalid_argument("stitch: mask shape mismatch");

    std::vector<Frame> frames;
    frames.reserve(f);
    for (int j = 0; j < f; ++j) {
        const Bitmap& obj_mask = input.object_masks.object_masks()[j];
        const Bitmap& stale_mask = input.background_masks.object_masks()[j];
        std::span<const float> ov = obj.frames()[j].values();
        std::span<const float> bv = bg.frames()[j].values();
        std::vector<float> out(ov.size());
        for (int p = 0; p < dims.pixels(); ++p) {
            const bool from_object = obj_mask.test(p) || stale_mask.test(p);
            const std::span<const float> src = from_object ? ov : bv;
            for (int c = 0; c < dims.c; ++c) out[p * dims.c + c] = src[p * dims.c + c];
        }
        frames.emplace_back(dims, std::move(out));
    }
    return LatentState(obj.step(), std::move(frames));
}

}  // namespace lcache
