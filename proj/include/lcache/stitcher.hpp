#pragma once

// Combines an object-source latent with a background-source latent into one
// latent using the two prompts' segmentation masks. Replacement is per pixel
// and hard: every output pixel comes verbatim from exactly one source.

#include "lcache/core.hpp"

namespace lcache {

struct StitchInput {
    LatentState object_latent;
    MaskSet object_masks;      // masks of the object-source prompt
    LatentState background_latent;
    MaskSet background_masks;  // masks of the background-source prompt
};

// Per frame, per pixel:
//   object-source object mask set        -> object latent pixel
//   else background-source object mask   -> object latent pixel (covers the
//                                           stale object left in the
//                                           background source)
//   else                                 -> background latent pixel
LatentState stitch(const StitchInput& input);

}  // namespace lcache
