// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/image.hpp"

#include <algorithm>
#include <cmath>

namespace dge {

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width < 1 || height < 1 || channels < 1) throw ValidationError("image: dimensions must be positive");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

bool Image::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Image::sample(double px, double py, int c) const {
    const double fx = std::clamp(px - 0.5, 0.0, static_cast<double>(width_ - 1));
    const double fy = std::clamp(py - 0.5, 0.0, static_cast<double>(height_ - 1));
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const int x1 = std::min(x0 + 1, width_ - 1);
    const int y1 = std::min(y0 + 1, height_ - 1);
    const double tx = fx - x0;
    const double ty = fy - y0;
    const double top = at(x0, y0, c) * (1.0 - tx) + at(x1, y0, c) * tx;
    const double bottom = at(x0, y1, c) * (1.0 - tx) + at(x1, y1, c) * tx;
    return top * (1.0 - ty) + bottom * ty;
}

double mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ValidationError("mse: image shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.values()[i] - b.values()[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(m));
}

}  // namespace dge
