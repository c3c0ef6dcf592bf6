// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dge/error.hpp"

namespace dge {

/// Row-major interleaved image of doubles: index (y * width + x) * channels + c.
class Image {
  public:
    Image() = default;
    Image(int width, int height, int channels, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Image& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }
    bool all_finite() const;

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integer + 0.5), clamped at the borders.
    double sample(double px, double py, int c = 0) const;

    friend bool operator==(const Image&, const Image&) = default;

  private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Mean squared error over all values; shapes must match.
double mse(const Image& a, const Image& b);

/// 10 log10(1 / MSE) for [0,1] images, capped at kPsnrCap for identical
/// inputs so reports stay finite.
inline constexpr double kPsnrCap = 100.0;
double psnr(const Image& a, const Image& b);

}  // namespace dge
