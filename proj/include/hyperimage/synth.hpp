#pragma once

#include <cstdint>
#include <vector>

#include "hyperimage/image.hpp"
#include "hyperimage/rng.hpp"

namespace hyperimage {

// 128x128 gray benchmark images: constant background with one to five
// two-shade 16x16 artifact patches whose pixels are scrambled. The score has
// a closed form, so every generated sample carries its own oracle.
constexpr std::size_t kSynthImageSize = 128;
constexpr std::size_t kSynthPatchSize = 16;

struct ArtifactPatchMeta {
    std::size_t top = 0, left = 0;      // patch fully inside the image
    double dark = 0.0;                  // in [0, 0.5)
    double bright = 0.5;                // in [0.5, 1]
    double bright_fraction = 0.0;       // in [0, 1]
    std::uint64_t pixel_perm_seed = 0;  // scrambling permutation
};

struct SyntheticSample {
    Image image;  // 128x128, 1 channel
    double background = 0.0;
    std::vector<ArtifactPatchMeta> patches;  // 1..5, pairwise non-overlapping
    double score = 5.0;                      // 5 - sqrt(sum alpha_i^2)
};

// distance from a corner-placed patch center to the image center; the
// position penalty of a corner patch is exactly zero
double synth_dist_norm();

// alpha_i = mean |s0 - p| over the patch's 256 pixels
//         + (1 - ||center_i - image_center|| / dist_norm)
double synth_alpha(const ArtifactPatchMeta& meta, double background);

double synth_score(const std::vector<ArtifactPatchMeta>& patches, double background);

// re-evaluates the score from the rendered pixels instead of the shade
// metadata; agreement within 1e-9 is the generator's oracle check
double recompute_score(const SyntheticSample& sample);

// Free placement: patch positions uniform over all in-bounds origins,
// rejection-sampled until pairwise non-overlapping (the whole sample restarts
// after 1000 failed tries).
SyntheticSample generate_sample(Rng& rng);

// Positional set: one background and one set of patch contents, re-placed per
// sample; only the position penalty varies. Placements snap to the
// non-overlapping 32-pixel grid lattice so patch-pooling baselines see the
// same patch multiset in every sample; cell (0,0) puts a patch center exactly
// at the corner-distance norm, making the minimum penalty exactly zero.
std::vector<SyntheticSample> generate_positional_set(Rng& rng, std::size_t eta, std::size_t count);

// label for a sub-crop: 5 - sqrt(sum alpha_i^2) over artifact patches whose
// centers fall inside the crop; artifact-free crops score 5
double crop_label(const SyntheticSample& sample, std::size_t top, std::size_t left, std::size_t size);

}  // namespace hyperimage
