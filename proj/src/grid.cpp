#include "hyperimage/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "hyperimage/rng.hpp"

namespace hyperimage {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) fail("hyper-image cache: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

std::pair<std::size_t, std::size_t> grid_counts(std::size_t max_h, std::size_t max_w, std::size_t patch) {
    if (patch == 0) fail("grid_counts: patch size must be positive");
    if (max_h < patch || max_w < patch) fail("grid_counts: image smaller than the patch");
    return {(max_h + patch - 1) / patch, (max_w + patch - 1) / patch};
}

std::pair<std::size_t, std::size_t> compute_strides(std::size_t img_h, std::size_t img_w,
                                                    std::size_t patch, std::size_t n_py,
                                                    std::size_t n_px) {
    if (n_py < 2 || n_px < 2) fail("compute_strides: grid counts must be at least 2 per axis");
    if (img_h < patch || img_w < patch) fail("compute_strides: image smaller than the patch");
    const std::size_t s_y = std::max<std::size_t>(
        1, round_half_up(static_cast<double>(img_h - patch) / static_cast<double>(n_py - 1)));
    const std::size_t s_x = std::max<std::size_t>(
        1, round_half_up(static_cast<double>(img_w - patch) / static_cast<double>(n_px - 1)));
    return {s_y, s_x};
}

GridGeometry make_grid(std::size_t img_h, std::size_t img_w, std::size_t patch, std::size_t n_py,
                       std::size_t n_px) {
    if (n_py == 0 || n_px == 0) fail("make_grid: grid counts must be positive");
    if (img_h < patch || img_w < patch) fail("make_grid: image smaller than the patch");

    GridGeometry g;
    g.patch = patch;
    g.n_py = n_py;
    g.n_px = n_px;
    auto stride_for = [&](std::size_t extent, std::size_t n) -> std::size_t {
        if (n < 2) return 1;  // single row/column, origin clamps to 0
        return std::max<std::size_t>(
            1, round_half_up(static_cast<double>(extent - patch) / static_cast<double>(n - 1)));
    };
    g.s_y = stride_for(img_h, n_py);
    g.s_x = stride_for(img_w, n_px);

    g.origin_y.resize(n_py);
    for (std::size_t u = 0; u < n_py; ++u) g.origin_y[u] = std::min(u * g.s_y, img_h - patch);
    g.origin_x.resize(n_px);
    for (std::size_t v = 0; v < n_px; ++v) g.origin_x[v] = std::min(v * g.s_x, img_w - patch);
    return g;
}

std::vector<Image> extract_grid(const Image& img, const GridGeometry& geom) {
    for (std::size_t o : geom.origin_y)
        if (o + geom.patch > img.h) fail("extract_grid: geometry does not fit the image");
    for (std::size_t o : geom.origin_x)
        if (o + geom.patch > img.w) fail("extract_grid: geometry does not fit the image");

    std::vector<Image> patches;
    patches.reserve(geom.n_py * geom.n_px);
    for (std::size_t u = 0; u < geom.n_py; ++u)
        for (std::size_t v = 0; v < geom.n_px; ++v)
            patches.push_back(crop(img, geom.origin_y[u], geom.origin_x[v], geom.patch, geom.patch));
    return patches;
}

HyperImage assemble_hyper_image(const std::vector<Image>& patches, std::size_t n_py, std::size_t n_px,
                                const FeatureFn& feature_fn) {
    if (patches.size() != n_py * n_px) fail("assemble_hyper_image: patch count does not match the grid");
    HyperImage h;
    h.u = n_py;
    h.v = n_px;

    for (std::size_t i = 0; i < patches.size(); ++i) {
        RealTensor feat = feature_fn(patches[i]);
        if (i == 0) {
            h.d = feat.numel();
            h.grid = RealTensor({h.u, h.v, h.d});
        } else if (feat.numel() != h.d) {
            fail("assemble_hyper_image: inconsistent feature dimension");
        }
        std::copy(feat.data.begin(), feat.data.end(), h.grid.data.begin() + static_cast<long>(i * h.d));
    }
    return h;
}

PatchSelection select_distorted_patches(const Image& reference, const Image& distorted,
                                        const GridGeometry& geom, double tau, std::uint64_t seed) {
    if (reference.h != distorted.h || reference.w != distorted.w || reference.c != distorted.c)
        fail("select_distorted_patches: shape mismatch");

    const std::vector<Image> ref_patches = extract_grid(reference, geom);
    const std::vector<Image> dist_patches = extract_grid(distorted, geom);

    PatchSelection sel;
    double lowest = 2.0;
    std::size_t lowest_idx = 0;
    for (std::size_t i = 0; i < ref_patches.size(); ++i) {
        const double s = ssim(ref_patches[i], dist_patches[i]);
        if (s < lowest) {
            lowest = s;
            lowest_idx = i;
        }
        if (s < tau) sel.distorted.push_back(i);
    }
    if (sel.distorted.empty()) {
        sel.distorted.push_back(lowest_idx);
        sel.fallback = true;
    }

    sel.reference.resize(ref_patches.size());
    for (std::size_t i = 0; i < sel.reference.size(); ++i) sel.reference[i] = i;

    // balance counts by subsampling the larger side
    Rng rng(seed);
    auto subsample = [&rng](std::vector<std::size_t>& v, std::size_t target) {
        rng.shuffle(v);
        v.resize(target);
        std::sort(v.begin(), v.end());
    };
    if (sel.reference.size() > sel.distorted.size()) subsample(sel.reference, sel.distorted.size());
    else if (sel.distorted.size() > sel.reference.size()) subsample(sel.distorted, sel.reference.size());
    return sel;
}

void save_hyper_image(const HyperImage& h, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("hyper-image cache: cannot write " + path);
    out.write("HYPI", 4);
    write_u32(out, 1u);
    write_u32(out, static_cast<std::uint32_t>(h.u));
    write_u32(out, static_cast<std::uint32_t>(h.v));
    write_u32(out, static_cast<std::uint32_t>(h.d));
    std::vector<unsigned char> buf(h.grid.numel() * 4);
    for (std::size_t i = 0; i < h.grid.numel(); ++i) {
        const float f = static_cast<float>(h.grid[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        buf[i * 4] = static_cast<unsigned char>(bits);
        buf[i * 4 + 1] = static_cast<unsigned char>(bits >> 8);
        buf[i * 4 + 2] = static_cast<unsigned char>(bits >> 16);
        buf[i * 4 + 3] = static_cast<unsigned char>(bits >> 24);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) fail("hyper-image cache: write failed for " + path);
}

HyperImage load_hyper_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("hyper-image cache: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::strncmp(magic, "HYPI", 4) != 0) fail("hyper-image cache: bad magic in " + path);
    const std::uint32_t version = read_u32(in);
    if (version != 1) fail("hyper-image cache: unsupported version " + std::to_string(version));
    HyperImage h;
    h.u = read_u32(in);
    h.v = read_u32(in);
    h.d = read_u32(in);
    h.grid = RealTensor({h.u, h.v, h.d});
    std::vector<unsigned char> buf(h.grid.numel() * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) fail("hyper-image cache: truncated data in " + path);
    for (std::size_t i = 0; i < h.grid.numel(); ++i) {
        const std::uint32_t bits = static_cast<std::uint32_t>(buf[i * 4]) |
                                   (static_cast<std::uint32_t>(buf[i * 4 + 1]) << 8) |
                                   (static_cast<std::uint32_t>(buf[i * 4 + 2]) << 16) |
                                   (static_cast<std::uint32_t>(buf[i * 4 + 3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        h.grid[i] = static_cast<double>(f);
    }
    return h;
}

}  // namespace hyperimage
