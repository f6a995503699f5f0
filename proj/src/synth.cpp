#include "hyperimage/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hyperimage {

namespace {

constexpr std::size_t kPixels = kSynthPatchSize * kSynthPatchSize;  // 256
constexpr double kHalf = (kSynthPatchSize - 1) / 2.0;               // 7.5
constexpr double kImageCenter = (kSynthImageSize - 1) / 2.0;        // 63.5
constexpr std::size_t kMaxOrigin = kSynthImageSize - kSynthPatchSize;

bool overlaps(const ArtifactPatchMeta& a, const ArtifactPatchMeta& b) {
    const auto near = [](std::size_t p, std::size_t q) {
        return (p > q ? p - q : q - p) < kSynthPatchSize;
    };
    return near(a.top, b.top) && near(a.left, b.left);
}

std::size_t bright_count(const ArtifactPatchMeta& meta) {
    return static_cast<std::size_t>(std::lround(meta.bright_fraction * static_cast<double>(kPixels)));
}

void render_patch(Image& img, const ArtifactPatchMeta& meta) {
    std::vector<std::size_t> perm(kPixels);
    std::iota(perm.begin(), perm.end(), 0);
    Rng prng(meta.pixel_perm_seed);
    prng.shuffle(perm);
    const std::size_t nb = bright_count(meta);
    std::vector<double> vals(kPixels, meta.dark);
    for (std::size_t i = 0; i < nb; ++i) vals[perm[i]] = meta.bright;
    for (std::size_t j = 0; j < kSynthPatchSize; ++j)
        for (std::size_t k = 0; k < kSynthPatchSize; ++k)
            img.at(meta.top + j, meta.left + k) = vals[j * kSynthPatchSize + k];
}

double position_penalty(const ArtifactPatchMeta& meta) {
    const double cy = static_cast<double>(meta.top) + kHalf;
    const double cx = static_cast<double>(meta.left) + kHalf;
    const double dist = std::hypot(cy - kImageCenter, cx - kImageCenter);
    return 1.0 - dist / synth_dist_norm();
}

ArtifactPatchMeta draw_content(Rng& rng) {
    ArtifactPatchMeta meta;
    meta.dark = 0.5 * rng.uniform01();
    meta.bright = 0.5 + 0.5 * rng.uniform01();
    meta.bright_fraction = rng.uniform01();
    meta.pixel_perm_seed = rng.next_u64();
    return meta;
}

Image render_sample(double background, const std::vector<ArtifactPatchMeta>& patches) {
    Image img(kSynthImageSize, kSynthImageSize, 1, background);
    for (const auto& p : patches) render_patch(img, p);
    return img;
}

}  // namespace

double synth_dist_norm() {
    const double d = kHalf - kImageCenter;  // corner patch center offset per axis
    return std::sqrt(2.0 * d * d);
}

double synth_alpha(const ArtifactPatchMeta& meta, double background) {
    const std::size_t nb = bright_count(meta);
    const double dissimilarity =
        (static_cast<double>(nb) * std::abs(background - meta.bright) +
         static_cast<double>(kPixels - nb) * std::abs(background - meta.dark)) /
        static_cast<double>(kPixels);
    return dissimilarity + position_penalty(meta);
}

double synth_score(const std::vector<ArtifactPatchMeta>& patches, double background) {
    double sum_sq = 0.0;
    for (const auto& p : patches) {
        const double a = synth_alpha(p, background);
        sum_sq += a * a;
    }
    return 5.0 - std::sqrt(sum_sq);
}

double recompute_score(const SyntheticSample& sample) {
    double sum_sq = 0.0;
    for (const auto& p : sample.patches) {
        double diss = 0.0;
        for (std::size_t j = 0; j < kSynthPatchSize; ++j)
            for (std::size_t k = 0; k < kSynthPatchSize; ++k)
                diss += std::abs(sample.background - sample.image.at(p.top + j, p.left + k));
        const double a = diss / static_cast<double>(kPixels) + position_penalty(p);
        sum_sq += a * a;
    }
    return 5.0 - std::sqrt(sum_sq);
}

SyntheticSample generate_sample(Rng& rng) {
    for (;;) {
        SyntheticSample s;
        s.background = rng.uniform01();
        const std::size_t eta = rng.uniform_int(1, 5);
        for (std::size_t i = 0; i < eta; ++i) s.patches.push_back(draw_content(rng));

        bool placed_all = true;
        for (std::size_t i = 0; i < eta && placed_all; ++i) {
            bool placed = false;
            for (int attempt = 0; attempt < 1000; ++attempt) {
                s.patches[i].top = rng.uniform_int(0, kMaxOrigin);
                s.patches[i].left = rng.uniform_int(0, kMaxOrigin);
                bool clash = false;
                for (std::size_t j = 0; j < i; ++j)
                    if (overlaps(s.patches[i], s.patches[j])) {
                        clash = true;
                        break;
                    }
                if (!clash) {
                    placed = true;
                    break;
                }
            }
            placed_all = placed;
        }
        if (!placed_all) continue;  // restart with fresh draws

        s.image = render_sample(s.background, s.patches);
        s.score = synth_score(s.patches, s.background);
        return s;
    }
}

std::vector<SyntheticSample> generate_positional_set(Rng& rng, std::size_t eta, std::size_t count) {
    if (eta < 1 || eta > 5) throw std::runtime_error("generate_positional_set: eta must lie in [1,5]");

    const double background = rng.uniform01();
    std::vector<ArtifactPatchMeta> contents;
    for (std::size_t i = 0; i < eta; ++i) contents.push_back(draw_content(rng));

    constexpr std::size_t kCell = 32;  // the non-overlapping patch-grid lattice
    constexpr std::size_t kCellsPerAxis = kSynthImageSize / kCell;

    std::vector<SyntheticSample> set;
    set.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        SyntheticSample s;
        s.background = background;
        s.patches = contents;
        std::vector<std::size_t> taken;
        for (auto& p : s.patches) {
            for (;;) {
                const std::size_t cy = rng.uniform_int(0, kCellsPerAxis - 1);
                const std::size_t cx = rng.uniform_int(0, kCellsPerAxis - 1);
                const std::size_t cell = cy * kCellsPerAxis + cx;
                if (std::find(taken.begin(), taken.end(), cell) == taken.end()) {
                    taken.push_back(cell);
                    p.top = cy * kCell;
                    p.left = cx * kCell;
                    break;
                }
            }
        }
        s.image = render_sample(background, s.patches);
        s.score = synth_score(s.patches, background);
        set.push_back(std::move(s));
    }
    return set;
}

double crop_label(const SyntheticSample& sample, std::size_t top, std::size_t left, std::size_t size) {
    if (top + size > kSynthImageSize || left + size > kSynthImageSize)
        throw std::runtime_error("crop_label: crop out of bounds");
    double sum_sq = 0.0;
    for (const auto& p : sample.patches) {
        const double cy = static_cast<double>(p.top) + kHalf;
        const double cx = static_cast<double>(p.left) + kHalf;
        const bool inside = cy >= static_cast<double>(top) && cy < static_cast<double>(top + size) &&
                            cx >= static_cast<double>(left) && cx < static_cast<double>(left + size);
        if (!inside) continue;
        const double a = synth_alpha(p, sample.background);
        sum_sq += a * a;
    }
    return 5.0 - std::sqrt(sum_sq);
}

}  // namespace hyperimage
