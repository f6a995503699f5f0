#include "hyperimage/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hyperimage {

namespace {

void add_noise(Image& img, Rng& rng, double sigma, std::size_t y0, std::size_t x0, std::size_t y1,
               std::size_t x1) {
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x)
            for (std::size_t ch = 0; ch < img.c; ++ch)
                img.at(y, x, ch) = std::clamp(img.at(y, x, ch) + sigma * rng.normal(), 0.0, 1.0);
}

}  // namespace

Image procedural_scene(std::size_t h, std::size_t w, std::size_t channels, std::uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, channels);

    // bilinear gradient between four random corner colors
    std::vector<double> corners(4 * channels);
    for (double& v : corners) v = rng.uniform01();
    for (std::size_t y = 0; y < h; ++y) {
        const double fy = static_cast<double>(y) / static_cast<double>(h - 1);
        for (std::size_t x = 0; x < w; ++x) {
            const double fx = static_cast<double>(x) / static_cast<double>(w - 1);
            for (std::size_t ch = 0; ch < channels; ++ch) {
                const double top = corners[ch] * (1 - fx) + corners[channels + ch] * fx;
                const double bot = corners[2 * channels + ch] * (1 - fx) + corners[3 * channels + ch] * fx;
                img.at(y, x, ch) = top * (1 - fy) + bot * fy;
            }
        }
    }

    // soft shapes give local structure for patches to latch onto
    const std::size_t n_shapes = 6 + rng.uniform_int(0, 6);
    for (std::size_t s = 0; s < n_shapes; ++s) {
        const bool ellipse = rng.coin();
        const std::size_t cy = rng.uniform_int(0, h - 1);
        const std::size_t cx = rng.uniform_int(0, w - 1);
        const double ry = 4.0 + rng.uniform(0.0, static_cast<double>(h) / 5.0);
        const double rx = 4.0 + rng.uniform(0.0, static_cast<double>(w) / 5.0);
        std::vector<double> color(channels);
        for (double& v : color) v = rng.uniform01();
        const double blend = rng.uniform(0.5, 0.95);
        const long y_lo = std::max(0l, static_cast<long>(cy) - static_cast<long>(ry));
        const long y_hi = std::min(static_cast<long>(h), static_cast<long>(cy) + static_cast<long>(ry) + 1);
        const long x_lo = std::max(0l, static_cast<long>(cx) - static_cast<long>(rx));
        const long x_hi = std::min(static_cast<long>(w), static_cast<long>(cx) + static_cast<long>(rx) + 1);
        for (long y = y_lo; y < y_hi; ++y)
            for (long x = x_lo; x < x_hi; ++x) {
                const double dy = (static_cast<double>(y) - static_cast<double>(cy)) / ry;
                const double dx = (static_cast<double>(x) - static_cast<double>(cx)) / rx;
                const bool inside = ellipse ? (dy * dy + dx * dx <= 1.0)
                                            : (std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0);
                if (!inside) continue;
                for (std::size_t ch = 0; ch < channels; ++ch) {
                    double& px = img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), ch);
                    px = px * (1.0 - blend) + color[ch] * blend;
                }
            }
    }

    add_noise(img, rng, 0.02, 0, 0, h, w);
    return img;
}

CopyMoveSample make_copy_move_sample(std::size_t h, std::size_t w, std::uint64_t seed) {
    if (h < 72 || w < 72) throw std::runtime_error("make_copy_move_sample: image too small");
    const Image base = procedural_scene(h, w, 3, hash_combine(seed, 1));

    Rng rng(hash_combine(seed, 2));
    CopyMoveSample best;
    double best_quality = -1.0;

    for (int attempt = 0; attempt < 60; ++attempt) {
        const std::size_t size = 24 + rng.uniform_int(0, 24);
        const std::size_t src_y = rng.uniform_int(0, h - size);
        const std::size_t src_x = rng.uniform_int(0, w - size);
        const std::size_t dst_y = rng.uniform_int(0, h - size);
        const std::size_t dst_x = rng.uniform_int(0, w - size);
        // source and destination must not overlap
        const bool apart_y = (src_y >= dst_y ? src_y - dst_y : dst_y - src_y) >= size;
        const bool apart_x = (src_x >= dst_x ? src_x - dst_x : dst_x - src_x) >= size;
        if (!apart_y && !apart_x) continue;

        Image tampered = base;
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x)
                for (std::size_t ch = 0; ch < 3; ++ch)
                    tampered.at(dst_y + y, dst_x + x, ch) = base.at(src_y + y, src_x + x, ch);

        // blur the pasted region to soften the seams; only pixels inside the
        // region are rewritten, so the difference stays confined to it
        {
            const std::size_t margin = 4;
            const std::size_t cy0 = dst_y >= margin ? dst_y - margin : 0;
            const std::size_t cx0 = dst_x >= margin ? dst_x - margin : 0;
            const std::size_t cy1 = std::min(h, dst_y + size + margin);
            const std::size_t cx1 = std::min(w, dst_x + size + margin);
            Image window = crop(tampered, cy0, cx0, cy1 - cy0, cx1 - cx0);
            Image blurred = gaussian_blur(window, 1.2, 2);
            for (std::size_t y = 0; y < size; ++y)
                for (std::size_t x = 0; x < size; ++x)
                    for (std::size_t ch = 0; ch < 3; ++ch)
                        tampered.at(dst_y + y, dst_x + x, ch) =
                            blurred.at(dst_y + y - cy0, dst_x + x - cx0, ch);
        }

        // a paste that blends into its surroundings is unusable; demand a
        // visible difference over most of the region and a tight extent
        std::size_t hot = 0;
        std::size_t min_y = h, min_x = w, max_y = 0, max_x = 0;
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                double d = 0.0;
                for (std::size_t ch = 0; ch < 3; ++ch)
                    d = std::max(d, std::abs(tampered.at(dst_y + y, dst_x + x, ch) -
                                             base.at(dst_y + y, dst_x + x, ch)));
                if (d > 0.1) {
                    ++hot;
                    min_y = std::min(min_y, dst_y + y);
                    max_y = std::max(max_y, dst_y + y);
                    min_x = std::min(min_x, dst_x + x);
                    max_x = std::max(max_x, dst_x + x);
                }
            }
        const double coverage = static_cast<double>(hot) / static_cast<double>(size * size);
        double extent = 0.0;
        if (hot > 0) {
            const double span_y = static_cast<double>(max_y - min_y + 1) / static_cast<double>(size);
            const double span_x = static_cast<double>(max_x - min_x + 1) / static_cast<double>(size);
            extent = span_y * span_x;
        }
        const double quality = coverage * extent;
        if (quality > best_quality) {
            best_quality = quality;
            best.authentic = base;
            best.tampered = std::move(tampered);
            best.top = dst_y;
            best.left = dst_x;
            best.size = size;
        }
        if (coverage >= 0.7 && extent >= 0.85) break;
    }
    return best;
}

std::vector<IqaFixtureImage> make_iqa_fixture(std::size_t n_references,
                                              const std::vector<double>& sigmas, std::uint64_t seed) {
    if (sigmas.empty()) throw std::runtime_error("make_iqa_fixture: no noise levels");
    const double sigma_max = *std::max_element(sigmas.begin(), sigmas.end());

    std::vector<IqaFixtureImage> out;
    for (std::size_t i = 0; i < n_references; ++i) {
        const Image ref = procedural_scene(128, 128, 3, hash_combine(seed, 100 + i));
        for (std::size_t li = 0; li < sigmas.size(); ++li) {
            const double sigma = sigmas[li];
            for (const bool localized : {false, true}) {
                IqaFixtureImage fx;
                fx.reference = ref;
                fx.distorted = ref;
                fx.localized = localized;
                fx.noise_sigma = sigma;
                Rng rng(hash_combine(seed, 9000 + i * 64 + li * 2 + (localized ? 1 : 0)));
                if (localized) {
                    add_noise(fx.distorted, rng, sigma, 0, 0, 64, 64);
                } else {
                    add_noise(fx.distorted, rng, sigma, 0, 0, 128, 128);
                }
                const double impact = (sigma / sigma_max) * (localized ? 0.5 : 1.0);
                fx.score = std::clamp(9.0 - 8.0 * impact, 0.0, 9.0);
                out.push_back(std::move(fx));
            }
        }
    }
    return out;
}

}  // namespace hyperimage
