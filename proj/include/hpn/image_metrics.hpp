#pragma once

// PSNR with peak 1 and SSIM with an 11x11 Gaussian window (sigma 1.5,
// k1 = 0.01, k2 = 0.03), valid region only, per channel then averaged.

#include <cmath>
#include <limits>
#include <vector>

#include "hpn/error.hpp"
#include "hpn/render.hpp"

namespace hpn {

inline void require_same_size(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw ValidationError("image sizes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                              " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
}

inline double mse(const Image& a, const Image& b) {
    require_same_size(a, b);
    double s = 0;
    for (std::size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = a.rgb[i] - b.rgb[i];
        s += d * d;
    }
    return s / static_cast<double>(a.rgb.size());
}

/// +infinity when the images are identical.
inline double psnr(const Image& a, const Image& b) {
    const double e = mse(a, b);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / e);
}

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 1.0;
};

inline std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        k[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

namespace detail {

// valid-region separable filter of a w x h plane
inline std::vector<double> filter_valid(const std::vector<double>& in, int w, int h, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> rows(std::size_t(ow) * h), out(std::size_t(ow) * oh);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += k[std::size_t(i)] * in[std::size_t(y) * w + x + i];
            rows[std::size_t(y) * ow + x] = s;
        }
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += k[std::size_t(i)] * rows[std::size_t(y + i) * ow + x];
            out[std::size_t(y) * ow + x] = s;
        }
    return out;
}

}  // namespace detail

inline double ssim(const Image& a, const Image& b, const SsimOptions& o = {}) {
    require_same_size(a, b);
    if (a.width < o.window || a.height < o.window)
        throw ValidationError("ssim needs images of at least " + std::to_string(o.window) + " pixels per side");
    const auto k = gaussian_kernel(o.window, o.sigma);
    const double c1 = (o.k1 * o.peak) * (o.k1 * o.peak), c2 = (o.k2 * o.peak) * (o.k2 * o.peak);
    const int w = a.width, h = a.height;
    const std::size_t n = a.pixel_count();

    double total = 0;
    for (int ch = 0; ch < 3; ++ch) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = a.rgb[3 * i + ch];
            y[i] = b.rgb[3 * i + ch];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = detail::filter_valid(x, w, h, k), my = detail::filter_valid(y, w, h, k);
        const auto sxx = detail::filter_valid(xx, w, h, k), syy = detail::filter_valid(yy, w, h, k),
                   sxy = detail::filter_valid(xy, w, h, k);
        double sum = 0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
            sum += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
                   ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += sum / static_cast<double>(mx.size());
    }
    return total / 3.0;
}

}  // namespace hpn
