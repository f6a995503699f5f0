#include "hyperimage/image.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <stdexcept>

namespace hyperimage {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

int read_pnm_value(std::istream& in) {
    // skips whitespace and '#' comments
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = in.get();
    }
    if (ch == EOF) fail("pnm: truncated header");
    int value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        ch = in.get();
    }
    return value;
}

// mirror extension including the edge pixel: -1 -> 0, -2 -> 1, n -> n-1
std::size_t mirror(long i, std::size_t n) {
    const long ln = static_cast<long>(n);
    if (i < 0) i = -i - 1;
    if (i >= ln) i = 2 * ln - i - 1;
    return static_cast<std::size_t>(i);
}

}  // namespace

Image load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("pnm: cannot open " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || (m1 != '5' && m1 != '6')) fail("pnm: " + path + " is not binary PGM/PPM");
    const std::size_t channels = (m1 == '5') ? 1 : 3;
    const std::size_t w = static_cast<std::size_t>(read_pnm_value(in));
    const std::size_t h = static_cast<std::size_t>(read_pnm_value(in));
    const int maxval = read_pnm_value(in);
    if (maxval != 255) fail("pnm: only 8-bit images supported, got maxval " + std::to_string(maxval));
    if (h == 0 || w == 0) fail("pnm: empty image " + path);
    std::vector<unsigned char> raw(h * w * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) fail("pnm: truncated pixel data in " + path);
    Image img(h, w, channels);
    for (std::size_t i = 0; i < raw.size(); ++i) img.px[i] = raw[i] / 255.0;
    return img;
}

void save_pnm(const Image& img, const std::string& path) {
    if (img.c != 1 && img.c != 3) fail("pnm: image must have 1 or 3 channels");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("pnm: cannot write " + path);
    out << (img.c == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> raw(img.px.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = std::clamp(img.px[i], 0.0, 1.0);
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) fail("pnm: write failed for " + path);
}

RealTensor image_to_tensor(const Image& img) {
    RealTensor t({img.h, img.w, img.c});
    t.data = img.px;
    return t;
}

Image tensor_to_image(const RealTensor& t) {
    if (t.rank() != 3 && t.rank() != 2) fail("tensor_to_image: expected rank 2 or 3");
    Image img(t.shape[0], t.shape[1], t.rank() == 3 ? t.shape[2] : 1);
    img.px = t.data;
    return img;
}

Image luminance(const Image& img) {
    if (img.c == 1) return img;
    if (img.c != 3) fail("luminance: expected 1 or 3 channels");
    Image out(img.h, img.w, 1);
    for (std::size_t i = 0; i < img.h * img.w; ++i)
        out.px[i] = 0.299 * img.px[i * 3] + 0.587 * img.px[i * 3 + 1] + 0.114 * img.px[i * 3 + 2];
    return out;
}

Image hflip(const Image& img) {
    Image out(img.h, img.w, img.c);
    for (std::size_t y = 0; y < img.h; ++y)
        for (std::size_t x = 0; x < img.w; ++x)
            for (std::size_t ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(y, img.w - 1 - x, ch);
    return out;
}

Image gaussian_blur(const Image& img, double sigma, int radius) {
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[static_cast<std::size_t>(i + radius)];
    }
    for (double& v : k) v /= sum;

    Image tmp(img.h, img.w, img.c);
    for (std::size_t y = 0; y < img.h; ++y)
        for (std::size_t x = 0; x < img.w; ++x)
            for (std::size_t ch = 0; ch < img.c; ++ch) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] *
                           img.at(y, mirror(static_cast<long>(x) + i, img.w), ch);
                tmp.at(y, x, ch) = acc;
            }
    Image out(img.h, img.w, img.c);
    for (std::size_t y = 0; y < img.h; ++y)
        for (std::size_t x = 0; x < img.w; ++x)
            for (std::size_t ch = 0; ch < img.c; ++ch) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] *
                           tmp.at(mirror(static_cast<long>(y) + i, img.h), x, ch);
                out.at(y, x, ch) = acc;
            }
    return out;
}

// ---------------------------------------------------------------------------
// local contrast normalization
// ---------------------------------------------------------------------------

Image lcn(const Image& img, double eps) {
    if (img.h < 7 || img.w < 7) fail("lcn: image smaller than the 7x7 window");

    // circular symmetric Gaussian over k,l in [-3,3]; the 7-tap window spans
    // +-3 sigma, so sigma = 7/6; normalized to unit sum
    static const std::vector<double> weights = [] {
        const double sigma = 7.0 / 6.0;
        std::vector<double> w(49);
        double sum = 0.0;
        for (int ky = -3; ky <= 3; ++ky)
            for (int kx = -3; kx <= 3; ++kx) {
                const double v = std::exp(-0.5 * (ky * ky + kx * kx) / (sigma * sigma));
                w[static_cast<std::size_t>((ky + 3) * 7 + (kx + 3))] = v;
                sum += v;
            }
        for (double& v : w) v /= sum;
        return w;
    }();

    Image out(img.h, img.w, img.c);
    for (std::size_t ch = 0; ch < img.c; ++ch) {
        for (std::size_t y = 0; y < img.h; ++y) {
            for (std::size_t x = 0; x < img.w; ++x) {
                double mu = 0.0;
                for (int ky = -3; ky <= 3; ++ky)
                    for (int kx = -3; kx <= 3; ++kx)
                        mu += weights[static_cast<std::size_t>((ky + 3) * 7 + (kx + 3))] *
                              img.at(mirror(static_cast<long>(y) + ky, img.h),
                                     mirror(static_cast<long>(x) + kx, img.w), ch);
                double var = 0.0;
                for (int ky = -3; ky <= 3; ++ky)
                    for (int kx = -3; kx <= 3; ++kx) {
                        const double d = img.at(mirror(static_cast<long>(y) + ky, img.h),
                                                mirror(static_cast<long>(x) + kx, img.w), ch) - mu;
                        var += weights[static_cast<std::size_t>((ky + 3) * 7 + (kx + 3))] * d * d;
                    }
                out.at(y, x, ch) = (img.at(y, x, ch) - mu) / (std::sqrt(var) + eps);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

double ssim(const Image& a, const Image& b, std::size_t window) {
    if (a.h != b.h || a.w != b.w || a.c != b.c) fail("ssim: shape mismatch");
    const Image ya = luminance(a);
    const Image yb = luminance(b);
    if (ya.h < window || ya.w < window) fail("ssim: image smaller than the window");

    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const double n = static_cast<double>(window * window);

    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y + window <= ya.h; ++y) {
        for (std::size_t x = 0; x + window <= ya.w; ++x) {
            double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
            for (std::size_t ky = 0; ky < window; ++ky)
                for (std::size_t kx = 0; kx < window; ++kx) {
                    const double va = ya.at(y + ky, x + kx);
                    const double vb = yb.at(y + ky, x + kx);
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            const double ma = sa / n, mb = sb / n;
            const double va = saa / n - ma * ma;
            const double vb = sbb / n - mb * mb;
            const double cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// resizing
// ---------------------------------------------------------------------------

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) fail("resize: output extents must be positive");
    if (out_h == img.h && out_w == img.w) return img;
    Image out(out_h, out_w, img.c);
    const double sy = static_cast<double>(img.h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(img.w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, img.h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, img.w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < img.c; ++ch) {
                const double top = img.at(y0, x0, ch) * (1.0 - wx) + img.at(y0, x1, ch) * wx;
                const double bot = img.at(y1, x0, ch) * (1.0 - wx) + img.at(y1, x1, ch) * wx;
                out.at(y, x, ch) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Image isotropic_rescale(const Image& img, std::size_t max_h, std::size_t max_w) {
    if (max_h == 0 || max_w == 0) fail("isotropic_rescale: bounds must be positive");
    if (img.h <= max_h && img.w <= max_w) return img;
    const double f = std::min(static_cast<double>(max_h) / static_cast<double>(img.h),
                              static_cast<double>(max_w) / static_cast<double>(img.w));
    const std::size_t oh = std::min<std::size_t>(max_h, std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(img.h * f))));
    const std::size_t ow = std::min<std::size_t>(max_w, std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(img.w * f))));
    return resize_bilinear(img, oh, ow);
}

// ---------------------------------------------------------------------------
// cropping
// ---------------------------------------------------------------------------

Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
    if (top + height > img.h || left + width > img.w) fail("crop: window out of bounds");
    Image out(height, width, img.c);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(top + y, left + x, ch);
    return out;
}

Image crop_patch_centered(const Image& img, PixelCoord center, std::size_t size) {
    if (img.h < size || img.w < size) fail("crop_patch_centered: image smaller than the patch");
    const long half = static_cast<long>(size) / 2;
    const long top = std::clamp(static_cast<long>(center.first) - half, 0l,
                                static_cast<long>(img.h - size));
    const long left = std::clamp(static_cast<long>(center.second) - half, 0l,
                                 static_cast<long>(img.w - size));
    return crop(img, static_cast<std::size_t>(top), static_cast<std::size_t>(left), size, size);
}

// ---------------------------------------------------------------------------
// tamper contour extraction
// ---------------------------------------------------------------------------

namespace {

using Mask = std::vector<std::uint8_t>;

Mask morph(const Mask& m, std::size_t h, std::size_t w, const std::vector<PixelCoord>& disc, bool dilate) {
    Mask out(h * w, dilate ? 0 : 1);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            bool hit = false;
            for (const auto& [dy, dx] : disc) {
                const long yy = static_cast<long>(y) + dy;
                const long xx = static_cast<long>(x) + dx;
                const bool v = yy >= 0 && yy < static_cast<long>(h) && xx >= 0 && xx < static_cast<long>(w) &&
                               m[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)] != 0;
                if (dilate ? v : !v) {
                    hit = true;
                    break;
                }
            }
            out[y * w + x] = dilate ? (hit ? 1 : 0) : (hit ? 0 : 1);
        }
    return out;
}

// Moore-neighbor boundary trace with Jacob's stopping criterion. `inside`
// restricts foreground to one labelled component.
Contour trace_boundary(const std::vector<int>& labels, std::size_t h, std::size_t w, int id,
                       PixelCoord start) {
    static const int dy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
    static const int dx[8] = {0, 1, 1, 1, 0, -1, -1, -1};  // clockwise from north

    auto fg = [&](long y, long x) {
        return y >= 0 && y < static_cast<long>(h) && x >= 0 && x < static_cast<long>(w) &&
               labels[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] == id;
    };

    Contour contour;
    contour.points.push_back(start);

    // entered the start pixel scanning row-major, i.e. from the west
    int enter_dir = 6;
    PixelCoord cur = start;
    const PixelCoord first = start;
    int first_exit = -1;

    const std::size_t guard = 4 * h * w + 8;
    for (std::size_t step = 0; step < guard; ++step) {
        // scan clockwise starting just after the direction we entered from
        int found = -1;
        for (int i = 1; i <= 8; ++i) {
            const int d = (enter_dir + i) % 8;
            if (fg(cur.first + dy[d], cur.second + dx[d])) {
                found = d;
                break;
            }
        }
        if (found < 0) break;  // isolated pixel
        if (cur == first) {
            if (first_exit < 0) {
                first_exit = found;
            } else if (found == first_exit) {
                break;  // leaving the start the same way again closes the cycle
            }
        }
        cur = {cur.first + dy[found], cur.second + dx[found]};
        contour.points.push_back(cur);
        enter_dir = (found + 4) % 8;  // direction pointing back where we came from
    }
    if (contour.points.size() > 1 && contour.points.back() == first) contour.points.pop_back();
    return contour;
}

}  // namespace

std::vector<Contour> tamper_contour(const Image& authentic, const Image& tampered, double threshold,
                                    int morph_radius, std::size_t min_area) {
    if (authentic.h != tampered.h || authentic.w != tampered.w || authentic.c != tampered.c)
        fail("tamper_contour: shape mismatch");
    const std::size_t h = authentic.h, w = authentic.w;

    Mask mask(h * w, 0);
    for (std::size_t i = 0; i < h * w; ++i) {
        double d = 0.0;
        for (std::size_t ch = 0; ch < authentic.c; ++ch)
            d = std::max(d, std::abs(authentic.px[i * authentic.c + ch] - tampered.px[i * tampered.c + ch]));
        mask[i] = d > threshold ? 1 : 0;
    }

    if (morph_radius > 0) {
        std::vector<PixelCoord> disc;
        for (int dy = -morph_radius; dy <= morph_radius; ++dy)
            for (int dx = -morph_radius; dx <= morph_radius; ++dx)
                if (dy * dy + dx * dx <= morph_radius * morph_radius) disc.push_back({dy, dx});
        // closing then opening
        mask = morph(morph(mask, h, w, disc, true), h, w, disc, false);
        mask = morph(morph(mask, h, w, disc, false), h, w, disc, true);
    }

    // 8-connected component labelling
    std::vector<int> labels(h * w, 0);
    int next_id = 0;
    std::vector<std::size_t> areas{0};  // areas[id]
    std::vector<PixelCoord> firsts{{0, 0}};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (mask[y * w + x] == 0 || labels[y * w + x] != 0) continue;
            const int id = ++next_id;
            std::size_t area = 0;
            std::deque<PixelCoord> queue{{static_cast<int>(y), static_cast<int>(x)}};
            labels[y * w + x] = id;
            while (!queue.empty()) {
                const auto [cy, cx] = queue.front();
                queue.pop_front();
                ++area;
                for (int ddy = -1; ddy <= 1; ++ddy)
                    for (int ddx = -1; ddx <= 1; ++ddx) {
                        const long ny = cy + ddy, nx = cx + ddx;
                        if (ny < 0 || ny >= static_cast<long>(h) || nx < 0 || nx >= static_cast<long>(w)) continue;
                        const std::size_t ni = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
                        if (mask[ni] != 0 && labels[ni] == 0) {
                            labels[ni] = id;
                            queue.push_back({static_cast<int>(ny), static_cast<int>(nx)});
                        }
                    }
            }
            areas.push_back(area);
            firsts.push_back({static_cast<int>(y), static_cast<int>(x)});
        }
    }

    std::vector<Contour> contours;
    for (int id = 1; id <= next_id; ++id) {
        if (areas[static_cast<std::size_t>(id)] < min_area) continue;
        contours.push_back(trace_boundary(labels, h, w, id, firsts[static_cast<std::size_t>(id)]));
    }
    return contours;
}

std::vector<PixelCoord> sample_contour(const Contour& contour, std::size_t k) {
    const std::size_t n = contour.length();
    if (n < k) fail("sample_contour: contour shorter than the requested sample count");
    if (k == 0) fail("sample_contour: k must be positive");

    // rotate so traversal starts at the row-major-first point
    std::size_t first = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (contour.points[i] < contour.points[first]) first = i;

    std::vector<PixelCoord> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t step = i * n / k;
        out.push_back(contour.points[(first + step) % n]);
    }
    return out;
}

}  // namespace hyperimage
