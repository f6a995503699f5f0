#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "hyperimage/image.hpp"
#include "hyperimage/rng.hpp"

using namespace hyperimage;

namespace {

Image noise_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
    Image img(h, w, c);
    Rng rng(seed);
    for (double& v : img.px) v = rng.uniform01();
    return img;
}

// Independent SSIM oracle: two-pass means, explicit covariance accumulation.
double ssim_oracle(const Image& a, const Image& b, std::size_t win) {
    const Image ya = luminance(a), yb = luminance(b);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y + win <= ya.h; ++y)
        for (std::size_t x = 0; x + win <= ya.w; ++x) {
            double ma = 0.0, mb = 0.0;
            for (std::size_t i = 0; i < win; ++i)
                for (std::size_t j = 0; j < win; ++j) {
                    ma += ya.at(y + i, x + j);
                    mb += yb.at(y + i, x + j);
                }
            ma /= static_cast<double>(win * win);
            mb /= static_cast<double>(win * win);
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (std::size_t i = 0; i < win; ++i)
                for (std::size_t j = 0; j < win; ++j) {
                    const double da = ya.at(y + i, x + j) - ma;
                    const double db = yb.at(y + i, x + j) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= static_cast<double>(win * win);
            vb /= static_cast<double>(win * win);
            cov /= static_cast<double>(win * win);
            const double c1 = 1e-4, c2 = 9e-4;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

}  // namespace

TEST_CASE("lcn of a constant image is zero") {
    Image img(16, 16, 1, 0.37);
    Image out = lcn(img);
    for (double v : out.px) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("lcn of an affine ramp is zero with zero local windowed mean") {
    Image img(20, 20, 1);
    for (std::size_t y = 0; y < 20; ++y)
        for (std::size_t x = 0; x < 20; ++x) img.at(y, x) = 0.1 + 0.02 * static_cast<double>(x);
    Image out = lcn(img);
    // the Gaussian-weighted mean recomputed on the output stays ~0 on pixels
    // whose whole windowed neighborhood avoids the mirrored border
    const double sigma = 7.0 / 6.0;
    for (std::size_t y = 6; y < 14; ++y)
        for (std::size_t x = 6; x < 14; ++x) {
            double mu = 0.0, wsum = 0.0;
            for (int ky = -3; ky <= 3; ++ky)
                for (int kx = -3; kx <= 3; ++kx) {
                    const double wgt = std::exp(-0.5 * (ky * ky + kx * kx) / (sigma * sigma));
                    mu += wgt * out.at(y + static_cast<std::size_t>(ky), x + static_cast<std::size_t>(kx));
                    wsum += wgt;
                }
            CHECK(std::abs(mu / wsum) < 1e-6);
        }
}

TEST_CASE("lcn step edge spikes at the edge and vanishes away from it") {
    Image img(16, 32, 1);
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 32; ++x) img.at(y, x) = x < 16 ? 0.0 : 1.0;
    Image out = lcn(img, 1.0 / 255.0);
    // a standardized two-level step peaks at sqrt(p/(1-p)) where p ~ 0.328 is
    // the across-edge window weight at distance one: ~0.692 for these weights
    double peak = 0.0;
    for (std::size_t x = 13; x < 19; ++x) peak = std::max(peak, std::abs(out.at(8, x)));
    CHECK(peak > 0.65);
    CHECK(peak < 0.75);
    // window half-width is 3, so 4+ pixels from the edge the response is flat
    for (std::size_t x = 0; x < 12; ++x) CHECK(std::abs(out.at(8, x)) < 1e-9);
    for (std::size_t x = 20; x < 32; ++x) CHECK(std::abs(out.at(8, x)) < 1e-9);
}

TEST_CASE("lcn is invariant to positive affine pixel maps when eps is zero") {
    Image img = noise_image(14, 14, 1, 99);
    Image mapped = img;
    for (double& v : mapped.px) v = 1.7 * v + 0.4;
    Image a = lcn(img, 0.0);
    Image b = lcn(mapped, 0.0);
    for (std::size_t i = 0; i < a.px.size(); ++i) CHECK(a.px[i] == doctest::Approx(b.px[i]).epsilon(1e-9));
}

TEST_CASE("lcn rejects images smaller than the window") {
    Image img(6, 6, 1, 0.5);
    CHECK_THROWS(lcn(img));
}

TEST_CASE("ssim basics") {
    Image a = noise_image(24, 24, 1, 7);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    Image z(12, 12, 1, 0.0), o(12, 12, 1, 1.0);
    const double c1 = 1e-4;
    CHECK(ssim(z, o) == doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-9));
    CHECK(ssim(z, o) == doctest::Approx(9.999e-5).epsilon(1e-4));

    Image b = noise_image(24, 24, 1, 8);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));

    Image c = a;
    CHECK_THROWS(ssim(a, Image(10, 10, 1)));
}

TEST_CASE("ssim matches an independently coded oracle and penalizes noise") {
    Rng rng(123);
    Image a = noise_image(32, 32, 1, 11);
    Image noisy = a;
    for (double& v : noisy.px) v = std::clamp(v + rng.uniform(-0.35, 0.35), 0.0, 1.0);
    CHECK(ssim(a, noisy) == doctest::Approx(ssim_oracle(a, noisy, 8)).epsilon(1e-12));
    CHECK(ssim(a, noisy) < 0.9);

    Image r = noise_image(20, 28, 3, 13);
    Image s = noise_image(20, 28, 3, 14);
    CHECK(ssim(r, s) == doctest::Approx(ssim_oracle(r, s, 8)).epsilon(1e-12));
}

TEST_CASE("isotropic rescale") {
    Image a = noise_image(384, 512, 1, 5);
    Image same = isotropic_rescale(a, 384, 512);
    CHECK(same.h == 384);
    CHECK(same.w == 512);
    CHECK(same.px == a.px);

    Image big = noise_image(768, 1024, 1, 6);
    Image halved = isotropic_rescale(big, 384, 512);
    CHECK(halved.h == 384);
    CHECK(halved.w == 512);

    Image tall = noise_image(768, 512, 1, 7);
    Image scaled = isotropic_rescale(tall, 384, 512);
    CHECK(scaled.h == 384);
    CHECK(scaled.w == 256);
}

TEST_CASE("tamper contour on synthetic fixtures") {
    Image base = noise_image(96, 96, 1, 21);

    SUBCASE("identical pair gives no contours") {
        CHECK(tamper_contour(base, base).empty());
    }

    SUBCASE("single pasted square yields one contour with the expected perimeter") {
        Image tampered = base;
        for (std::size_t y = 20; y < 60; ++y)
            for (std::size_t x = 30; x < 70; ++x)
                tampered.at(y, x) = std::clamp(base.at(y, x) + 0.5, 0.0, 1.0);
        // guarantee every pasted pixel differs by more than the threshold
        for (std::size_t y = 20; y < 60; ++y)
            for (std::size_t x = 30; x < 70; ++x)
                if (std::abs(tampered.at(y, x) - base.at(y, x)) < 0.2) tampered.at(y, x) = base.at(y, x) - 0.5;
        auto contours = tamper_contour(base, tampered, 0.1, 2);
        REQUIRE(contours.size() == 1);
        const double perimeter = static_cast<double>(contours[0].length());
        CHECK(perimeter > 160.0 - 2 * 8);
        CHECK(perimeter < 160.0 + 2 * 8);
        // every traced point hugs the pasted square
        for (const auto& [y, x] : contours[0].points) {
            CHECK(y >= 17);
            CHECK(y <= 62);
            CHECK(x >= 27);
            CHECK(x <= 72);
        }
    }

    SUBCASE("two disjoint regions yield two contours") {
        Image tampered = base;
        auto paste = [&](std::size_t y0, std::size_t x0) {
            for (std::size_t y = y0; y < y0 + 12; ++y)
                for (std::size_t x = x0; x < x0 + 12; ++x)
                    tampered.at(y, x) = base.at(y, x) > 0.5 ? base.at(y, x) - 0.4 : base.at(y, x) + 0.4;
        };
        paste(8, 8);
        paste(60, 64);
        auto contours = tamper_contour(base, tampered, 0.1, 2);
        CHECK(contours.size() == 2);
    }

    SUBCASE("components below the area floor are discarded") {
        Image tampered = base;
        tampered.at(40, 40) = std::clamp(base.at(40, 40) + 0.5, 0.0, 1.0);
        CHECK(tamper_contour(base, tampered, 0.1, 0).empty());
    }
}

TEST_CASE("sample_contour spacing and determinism") {
    // synthetic ring of 150 traced points
    Contour ring;
    for (int i = 0; i < 150; ++i) ring.points.push_back({100 + i, 200});
    // make the row-major-first point unambiguous
    ring.points[0] = {0, 0};

    auto pts = sample_contour(ring, 15);
    REQUIRE(pts.size() == 15);
    for (std::size_t i = 0; i < 15; ++i) CHECK(pts[i] == ring.points[i * 10]);

    auto all = sample_contour(ring, ring.length());
    CHECK(all.size() == ring.length());
    std::set<PixelCoord> got(all.begin(), all.end());
    CHECK(got.size() == ring.length());

    CHECK(sample_contour(ring, 15) == pts);

    Contour tiny;
    tiny.points = {{0, 0}, {0, 1}};
    CHECK_THROWS(sample_contour(tiny, 15));
}

TEST_CASE("sampled points lie on the contour") {
    Image base(64, 64, 1, 0.2);
    Image tampered = base;
    for (std::size_t y = 16; y < 44; ++y)
        for (std::size_t x = 12; x < 52; ++x) tampered.at(y, x) = 0.9;
    auto contours = tamper_contour(base, tampered, 0.1, 2);
    REQUIRE(contours.size() == 1);
    std::set<PixelCoord> on(contours[0].points.begin(), contours[0].points.end());
    for (const auto& p : sample_contour(contours[0], 15)) CHECK(on.count(p) == 1);
}

TEST_CASE("crop_patch_centered clamps to the image") {
    Image img = noise_image(128, 128, 1, 31);

    Image mid = crop_patch_centered(img, {64, 64}, 64);
    CHECK(mid.h == 64);
    CHECK(mid.at(0, 0) == img.at(32, 32));
    CHECK(mid.at(63, 63) == img.at(95, 95));

    Image corner = crop_patch_centered(img, {0, 0}, 64);
    CHECK(corner.at(0, 0) == img.at(0, 0));
    CHECK(corner.at(63, 63) == img.at(63, 63));

    Image a = crop_patch_centered(img, {60, 60}, 32);
    Image b = crop_patch_centered(img, {60, 61}, 32);
    CHECK(a.at(5, 6) == b.at(5, 5));

    CHECK_THROWS(crop_patch_centered(Image(16, 16, 1), {0, 0}, 64));
}

TEST_CASE("pnm round trip for gray and rgb") {
    const std::string gpath = "/tmp/hyperimage_test_gray.pgm";
    const std::string cpath = "/tmp/hyperimage_test_rgb.ppm";
    Image g = noise_image(9, 13, 1, 41);
    Image c = noise_image(7, 11, 3, 42);
    save_pnm(g, gpath);
    save_pnm(c, cpath);
    Image g2 = load_pnm(gpath);
    Image c2 = load_pnm(cpath);
    REQUIRE(g2.h == g.h);
    REQUIRE(c2.c == 3);
    // 8-bit quantization bound
    for (std::size_t i = 0; i < g.px.size(); ++i) CHECK(std::abs(g2.px[i] - g.px[i]) <= 0.5 / 255.0 + 1e-12);
    for (std::size_t i = 0; i < c.px.size(); ++i) CHECK(std::abs(c2.px[i] - c.px[i]) <= 0.5 / 255.0 + 1e-12);
    std::remove(gpath.c_str());
    std::remove(cpath.c_str());
}

TEST_CASE("hflip and luminance") {
    Image img = noise_image(6, 9, 3, 55);
    Image f = hflip(img);
    CHECK(f.at(2, 0, 1) == img.at(2, 8, 1));
    Image ff = hflip(f);
    CHECK(ff.px == img.px);

    Image y = luminance(img);
    CHECK(y.c == 1);
    CHECK(y.at(1, 1) ==
          doctest::Approx(0.299 * img.at(1, 1, 0) + 0.587 * img.at(1, 1, 1) + 0.114 * img.at(1, 1, 2)));
}
