#pragma once

#include <cstdint>
#include <vector>

#include "hyperimage/image.hpp"
#include "hyperimage/rng.hpp"

namespace hyperimage {

// Self-generated corpora for the forgery and image-quality pipelines. Real
// benchmark datasets are licensed and ingested through manifests instead;
// these procedural stand-ins exercise the same code paths end to end.

// textured scene: smooth color gradient, soft shapes, light pixel noise
Image procedural_scene(std::size_t h, std::size_t w, std::size_t channels, std::uint64_t seed);

struct CopyMoveSample {
    Image authentic;
    Image tampered;         // authentic plus a translated, blurred paste
    std::size_t top = 0;    // pasted-region bounding box
    std::size_t left = 0;
    std::size_t size = 0;   // square region edge
};

// Copy-move forgery: a square region copied from one spot of the same image,
// pasted elsewhere and blurred to soften the seams. Placement retries until
// the pasted content differs from what it covers over most of the region.
CopyMoveSample make_copy_move_sample(std::size_t h, std::size_t w, std::uint64_t seed);

struct IqaFixtureImage {
    Image reference;
    Image distorted;
    double score = 9.0;       // synthetic opinion score in [0, 9], 9 pristine
    bool localized = false;   // noise confined to the top-left quadrant
    double noise_sigma = 0.0;
};

// Gaussian-noise distortions at the given sigmas, each in a uniform and a
// quadrant-localized variant. Images are 128x128 RGB so a 32-pixel patch grid
// tiles them exactly and the distorted quadrant aligns with whole patches.
std::vector<IqaFixtureImage> make_iqa_fixture(std::size_t n_references,
                                              const std::vector<double>& sigmas, std::uint64_t seed);

}  // namespace hyperimage
