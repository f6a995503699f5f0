#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hyperimage/image.hpp"
#include "hyperimage/tensor.hpp"

namespace hyperimage {

// Fixed-count patch grid over one image. Origins are clamped so every patch
// lies fully inside the image; the grid shape (n_py, n_px) never changes.
struct GridGeometry {
    std::size_t patch = 0;                 // square patch edge
    std::size_t n_py = 0, n_px = 0;        // grid counts
    std::size_t s_y = 0, s_x = 0;          // strides
    std::vector<std::size_t> origin_y;     // length n_py
    std::vector<std::size_t> origin_x;     // length n_px
};

// Patch counts for the dataset's maximum dimensions: ceil(dim / patch).
std::pair<std::size_t, std::size_t> grid_counts(std::size_t max_h, std::size_t max_w, std::size_t patch);

// Run-time strides for an actual image so the full grid still fits:
// s = rnd((dim - patch) / (n - 1)), round-half-up, clamped to >= 1.
std::pair<std::size_t, std::size_t> compute_strides(std::size_t img_h, std::size_t img_w,
                                                    std::size_t patch, std::size_t n_py,
                                                    std::size_t n_px);

GridGeometry make_grid(std::size_t img_h, std::size_t img_w, std::size_t patch, std::size_t n_py,
                       std::size_t n_px);

// row-major (u, v) patch order
std::vector<Image> extract_grid(const Image& img, const GridGeometry& geom);

// U x V x D grid of patch feature vectors.
struct HyperImage {
    std::size_t u = 0, v = 0, d = 0;
    RealTensor grid;  // shape {u, v, d}
};

using FeatureFn = std::function<RealTensor(const Image&)>;

HyperImage assemble_hyper_image(const std::vector<Image>& patches, std::size_t n_py, std::size_t n_px,
                                const FeatureFn& feature_fn);

// Selective patch training: keep distorted patches whose SSIM against the
// aligned reference patch is below tau, keep all reference patches, then
// equalize the two counts by seeded uniform subsampling of the larger side.
struct PatchSelection {
    std::vector<std::size_t> distorted;  // flat grid indices
    std::vector<std::size_t> reference;
    bool fallback = false;  // no patch fell below tau; lowest-SSIM patch kept
};

PatchSelection select_distorted_patches(const Image& reference, const Image& distorted,
                                        const GridGeometry& geom, double tau, std::uint64_t seed);

// cache file: "HYPI" magic, u32 version/U/V/D, then float32 grid data, all
// little-endian
void save_hyper_image(const HyperImage& h, const std::string& path);
HyperImage load_hyper_image(const std::string& path);

}  // namespace hyperimage
