#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "hyperimage/tensor.hpp"

namespace hyperimage {

// Raster image, row-major h*w*c, gray (c=1) or RGB (c=3). Raw pixel values
// live in [0,1]; contrast-normalized output is signed and exempt.
struct Image {
    std::size_t h = 0, w = 0, c = 1;
    std::vector<double> px;

    Image() = default;
    Image(std::size_t h_, std::size_t w_, std::size_t c_ = 1, double fill = 0.0)
        : h(h_), w(w_), c(c_), px(h_ * w_ * c_, fill) {}

    double& at(std::size_t y, std::size_t x, std::size_t ch = 0) { return px[(y * w + x) * c + ch]; }
    double at(std::size_t y, std::size_t x, std::size_t ch = 0) const { return px[(y * w + x) * c + ch]; }
};

using PixelCoord = std::pair<int, int>;  // (row, col)

// Closed boundary traced in order; consecutive points are 8-connected.
struct Contour {
    std::vector<PixelCoord> points;
    std::size_t length() const { return points.size(); }
};

// ---- I/O: binary PGM (P5) / PPM (P6), 8-bit, values mapped by /255 ----
Image load_pnm(const std::string& path);
void save_pnm(const Image& img, const std::string& path);

RealTensor image_to_tensor(const Image& img);           // [h,w,c]
Image tensor_to_image(const RealTensor& t);

Image luminance(const Image& img);                      // 0.299R + 0.587G + 0.114B
Image hflip(const Image& img);
Image gaussian_blur(const Image& img, double sigma, int radius);

// Local contrast normalization: subtract a Gaussian-weighted 7x7 local mean
// and divide by the local deviation plus eps. Borders use mirror extension.
Image lcn(const Image& img, double eps = 1.0 / 255.0);

// Mean local SSIM, uniform window, stride 1, C1=(0.01)^2, C2=(0.03)^2 on unit
// dynamic range. RGB inputs are compared on luminance.
double ssim(const Image& a, const Image& b, std::size_t window = 8);

// Shrink by a single factor min(max_h/h, max_w/w) when the image exceeds the
// bounds; otherwise returned unchanged. Aspect ratio preserved up to integer
// rounding of the output extents.
Image isotropic_rescale(const Image& img, std::size_t max_h, std::size_t max_w);

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w);

// Difference-mask contour extraction: binarize the per-pixel max-channel
// absolute difference, close then open with a disc, trace outer boundaries of
// the surviving components (Moore neighborhood), drop areas below min_area.
std::vector<Contour> tamper_contour(const Image& authentic, const Image& tampered,
                                    double threshold = 0.08, int morph_radius = 2,
                                    std::size_t min_area = 25);

// k points at equal arc-length spacing, starting from the contour's
// row-major-first point.
std::vector<PixelCoord> sample_contour(const Contour& contour, std::size_t k = 15);

// size x size crop centered on the given point, the window clamped to lie
// fully inside the image.
Image crop_patch_centered(const Image& img, PixelCoord center, std::size_t size = 64);

Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t height, std::size_t width);

}  // namespace hyperimage
