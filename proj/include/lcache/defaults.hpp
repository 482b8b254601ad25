#pragma once

// Central defaults for the serving model and codec. Latency and pricing
// values are measured/plausible figures for a 50-step text-to-video model on
// a single A100-class cloud instance; all of them are overridable from the
// CLI and config file.

#include <array>

namespace lcache::defaults {

// Similarity gates.
inline constexpr double kHitThreshold = 0.65;       // minimum score to reuse a cached latent
inline constexpr double kCompressThreshold = 0.99;  // intra-step frame dedup threshold

// Denoising schedule.
inline constexpr int kTotalSteps = 50;
inline constexpr std::array<int, 5> kCachedSteps{5, 10, 15, 20, 25};

// Latency model (seconds). 242 s end-to-end for 50 steps -> 4.84 s/step.
inline constexpr double kSecondsPerStep = 4.84;
inline constexpr double kLookupSeconds = 0.14;   // vector index query
inline constexpr double kExtractSeconds = 3.6;   // object/background text extraction
inline constexpr double kStitchSeconds = 0.0;    // latent stitching, negligible on CPU

// Score -> resume-step bin edges over [kHitThreshold, 1]; equal width.
inline constexpr std::array<double, 4> kStepBinEdges{0.72, 0.79, 0.86, 0.93};

// Pricing. GPU instance rate in dollars/hour; storage rate has no sensible
// universal default and must be supplied for cost reports that include it.
inline constexpr double kGpuDollarsPerHour = 3.67;

// Latent geometry: 64 frames at 8x-downscaled 320x512, 4 channels.
inline constexpr int kFrames = 64;
inline constexpr int kHeight = 40;
inline constexpr int kWidth = 64;
inline constexpr int kChannels = 4;
inline constexpr int kEmbedDim = 512;

// Synthetic latent knobs: redundant-frame fraction declines with step; the
// inter-step differential scale declines relative to the first cached step.
inline constexpr std::array<double, 5> kRedundancyByStep{0.9, 0.8, 0.6, 0.4, 0.25};
inline constexpr std::array<double, 5> kAlphaSchedule{1.0, 0.9, 0.8, 0.7, 0.6};
inline constexpr double kDiffNoiseSigma = 0.01;

}  // namespace lcache::defaults
