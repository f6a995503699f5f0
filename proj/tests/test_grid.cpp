#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hyperimage/grid.hpp"
#include "hyperimage/rng.hpp"

using namespace hyperimage;

namespace {

Image noise_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    Image img(h, w, 1);
    Rng rng(seed);
    for (double& v : img.px) v = rng.uniform01();
    return img;
}

}  // namespace

TEST_CASE("grid_counts ceil arithmetic") {
    CHECK(grid_counts(128, 128, 16) == std::pair<std::size_t, std::size_t>{8, 8});
    CHECK(grid_counts(384, 512, 32) == std::pair<std::size_t, std::size_t>{12, 16});
    CHECK(grid_counts(32, 100, 32).first == 1);
    CHECK_THROWS(grid_counts(16, 128, 32));
}

TEST_CASE("compute_strides reproduces the fixed-grid arithmetic") {
    // the 23x31 feature-grid row: strides (16,16)
    auto [sy, sx] = compute_strides(384, 512, 32, 23, 31);
    CHECK(sy == 16);
    CHECK(sx == 16);

    CHECK(compute_strides(128, 128, 32, 10, 10).second == 11);  // rnd(96/9)
    CHECK(compute_strides(100, 100, 32, 2, 2).first == 68);     // two flush patches
    CHECK_THROWS(compute_strides(128, 128, 32, 1, 10));
}

TEST_CASE("extract_grid origins clamp the overshooting tail") {
    Image img = noise_image(128, 128, 3);
    GridGeometry g = make_grid(128, 128, 32, 10, 10);
    CHECK(g.s_y == 11);
    const std::vector<std::size_t> want = {0, 11, 22, 33, 44, 55, 66, 77, 88, 96};
    CHECK(g.origin_y == want);
    CHECK(g.origin_x == want);

    auto patches = extract_grid(img, g);
    REQUIRE(patches.size() == 100);
    // row-major order: patch (u,v) starts at (origin_y[u], origin_x[v])
    CHECK(patches[0].at(0, 0) == img.at(0, 0));
    CHECK(patches[9].at(0, 0) == img.at(0, 96));
    CHECK(patches[99].at(31, 31) == img.at(127, 127));
}

TEST_CASE("non-overlapping stride partitions the image") {
    Image img = noise_image(128, 128, 4);
    GridGeometry g = make_grid(128, 128, 32, 4, 4);
    CHECK(g.s_y == 32);
    auto patches = extract_grid(img, g);
    double total = 0.0;
    for (const auto& p : patches)
        for (double v : p.px) total += v;
    double expect = 0.0;
    for (double v : img.px) expect += v;
    CHECK(total == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("degenerate single-patch grid clamps to the top-left") {
    Image img = noise_image(40, 40, 5);
    GridGeometry g = make_grid(40, 40, 32, 1, 1);
    auto patches = extract_grid(img, g);
    REQUIRE(patches.size() == 1);
    CHECK(patches[0].at(0, 0) == img.at(0, 0));
}

TEST_CASE("randomized geometries always produce full in-bounds grids") {
    Rng rng(2024);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t sz = 8 + rng.uniform_int(0, 56);
        const std::size_t h = sz + rng.uniform_int(0, 10 * sz);
        const std::size_t w = sz + rng.uniform_int(0, 10 * sz);
        auto [n_py, n_px] = grid_counts(h, w, sz);
        GridGeometry g = make_grid(h, w, sz, n_py, n_px);
        CHECK(g.origin_y.size() == n_py);
        CHECK(g.origin_x.size() == n_px);
        CHECK(std::is_sorted(g.origin_y.begin(), g.origin_y.end()));
        CHECK(std::is_sorted(g.origin_x.begin(), g.origin_x.end()));
        CHECK(g.origin_y.back() + sz <= h);
        CHECK(g.origin_x.back() + sz <= w);
        // the uncovered tail beyond the last patch stays below one patch
        CHECK(h - (g.origin_y.back() + sz) < sz);
        CHECK(w - (g.origin_x.back() + sz) < sz);
    }
}

TEST_CASE("assemble_hyper_image fills slices in grid order") {
    Image img = noise_image(128, 128, 6);
    GridGeometry g = make_grid(128, 128, 32, 10, 10);
    auto patches = extract_grid(img, g);

    // mean-pixel "feature" plus a constant channel
    FeatureFn fn = [](const Image& p) {
        RealTensor f({2});
        double m = 0.0;
        for (double v : p.px) m += v;
        f[0] = m / static_cast<double>(p.px.size());
        f[1] = 1.0;
        return f;
    };
    HyperImage h = assemble_hyper_image(patches, 10, 10, fn);
    CHECK(h.u == 10);
    CHECK(h.v == 10);
    CHECK(h.d == 2);
    CHECK(h.grid.shape == std::vector<std::size_t>{10, 10, 2});

    // locality: perturbing one patch changes exactly one slice
    auto perturbed = patches;
    for (double& v : perturbed[37].px) v = std::min(1.0, v + 0.25);
    HyperImage h2 = assemble_hyper_image(perturbed, 10, 10, fn);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < 100; ++i)
        if (h.grid[i * 2] != h2.grid[i * 2]) ++changed;
    CHECK(changed == 1);
    CHECK(h.grid[37 * 2] != h2.grid[37 * 2]);

    // constant feature function gives identical slices
    FeatureFn cfn = [](const Image&) {
        RealTensor f({3});
        f.data = {0.5, 1.5, 2.5};
        return f;
    };
    HyperImage hc = assemble_hyper_image(patches, 10, 10, cfn);
    for (std::size_t i = 0; i < 100; ++i)
        for (std::size_t d = 0; d < 3; ++d) CHECK(hc.grid[i * 3 + d] == hc.grid[d]);

    // inconsistent feature width is an error
    std::size_t call = 0;
    FeatureFn bad = [&call](const Image&) {
        return RealTensor({call++ == 0 ? 2ul : 3ul});
    };
    CHECK_THROWS(assemble_hyper_image(patches, 10, 10, bad));
}

TEST_CASE("selective patch training") {
    const std::size_t N = 128;
    Image ref = noise_image(N, N, 7);
    // smooth the noise so in-quadrant SSIM drops are unambiguous
    GridGeometry g = make_grid(N, N, 32, 4, 4);

    SUBCASE("identical pair falls back to the single lowest-ssim patch") {
        PatchSelection sel = select_distorted_patches(ref, ref, g, 0.95, 11);
        CHECK(sel.fallback);
        CHECK(sel.distorted.size() == 1);
        CHECK(sel.reference.size() == 1);
    }

    SUBCASE("uniform noise selects every patch") {
        Rng rng(8);
        Image dist = ref;
        for (double& v : dist.px) v = std::clamp(v + rng.uniform(-0.3, 0.3), 0.0, 1.0);
        PatchSelection sel = select_distorted_patches(ref, dist, g, 0.95, 11);
        CHECK_FALSE(sel.fallback);
        CHECK(sel.distorted.size() == 16);
        CHECK(sel.reference.size() == 16);
    }

    SUBCASE("quadrant-localized noise selects only that quadrant") {
        Rng rng(9);
        Image dist = ref;
        for (std::size_t y = 0; y < 64; ++y)
            for (std::size_t x = 0; x < 64; ++x)
                dist.at(y, x) = std::clamp(dist.at(y, x) + rng.uniform(-0.3, 0.3), 0.0, 1.0);
        PatchSelection sel = select_distorted_patches(ref, dist, g, 0.95, 11);
        CHECK_FALSE(sel.fallback);
        // quadrant patches are flat indices {0,1,4,5} on the 4x4 grid
        for (std::size_t idx : sel.distorted) CHECK((idx == 0 || idx == 1 || idx == 4 || idx == 5));
        CHECK(sel.distorted.size() == sel.reference.size());
    }

    SUBCASE("balanced counts and seeded determinism") {
        Rng rng(10);
        Image dist = ref;
        for (std::size_t y = 0; y < 32; ++y)
            for (std::size_t x = 0; x < 128; ++x)
                dist.at(y, x) = std::clamp(dist.at(y, x) + rng.uniform(-0.4, 0.4), 0.0, 1.0);
        PatchSelection a = select_distorted_patches(ref, dist, g, 0.95, 42);
        PatchSelection b = select_distorted_patches(ref, dist, g, 0.95, 42);
        CHECK(a.distorted == b.distorted);
        CHECK(a.reference == b.reference);
        CHECK(a.distorted.size() == a.reference.size());
    }
}

TEST_CASE("hyper-image cache round trip") {
    Rng rng(12);
    HyperImage h;
    h.u = 3;
    h.v = 4;
    h.d = 5;
    h.grid = RealTensor({3, 4, 5});
    for (double& v : h.grid.data) v = rng.uniform(-10.0, 10.0);

    const std::string path = "/tmp/hyperimage_cache_test.hyp";
    save_hyper_image(h, path);
    HyperImage back = load_hyper_image(path);
    CHECK(back.u == 3);
    CHECK(back.v == 4);
    CHECK(back.d == 5);
    for (std::size_t i = 0; i < h.grid.numel(); ++i) {
        const float f = static_cast<float>(h.grid[i]);
        CHECK(back.grid[i] == static_cast<double>(f));
    }

    // corrupting the magic is rejected
    {
        std::FILE* fp = std::fopen(path.c_str(), "r+b");
        REQUIRE(fp);
        std::fputc('X', fp);
        std::fclose(fp);
    }
    CHECK_THROWS(load_hyper_image(path));
    std::remove(path.c_str());
}
