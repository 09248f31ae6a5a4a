#pragma once

#include <array>

namespace avatar::config {

// Ray sampling.
inline constexpr int kTrainingSamplesPerRay = 64;
inline constexpr int kInteractiveSamplesPerRay = 20;
inline constexpr int kRayBatch = 4096;

// UTTS shell thickness: 4 cm while the template is coarse, 2 cm after refinement.
inline constexpr double kDmaxInitial = 0.04;
inline constexpr double kDmaxRefined = 0.02;
inline constexpr std::array<double, 2> kDmaxSchedule{kDmaxInitial, kDmaxRefined};

// Motion input.
inline constexpr int kMotionTextureResolution = 256;
inline constexpr int kMotionWindow = 3;
inline constexpr double kMotionFps = 25.0;

// Seam sampling around UV cuts.
inline constexpr double kSeamEpsilon = 0.01;
inline constexpr double kSeamHeight = 0.05;

// Loss weights per training stage, in the order the terms are listed:
// stage 1 (col, mask, eik, seam), stage 2 (sdf, reg, zero, normal, area),
// stage 3 (col, mask, eik, seam, lappyr, perc). The perceptual slot is kept
// for completeness but no perceptual term is computed.
inline constexpr std::array<double, 4> kStage1Weights{1.0, 0.1, 0.1, 1.0};
inline constexpr std::array<double, 5> kStage2Weights{1.0, 0.15, 0.005, 0.005, 5.0};
inline constexpr std::array<double, 6> kStage3Weights{1.0, 0.1, 0.1, 1.0, 1.0, 0.5};

// Real-time mesh optimization.
inline constexpr int kEmbossIterations = 2;
inline constexpr int kOptimizeIterations = 200;
inline constexpr double kOptimizeStep = 1e-3;
inline constexpr int kLineSearchHalvings = 10;

// Interactive service.
inline constexpr int kServeImageSize = 256;

}  // namespace avatar::config
