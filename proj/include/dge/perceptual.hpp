// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dge/image.hpp"

namespace dge {

/// Multi-scale structural dissimilarity: the mean over three dyadic scales
/// (2x2 box downsampling) of 1 - mean SSIM. SSIM uses an 11-tap Gaussian
/// window with sigma 1.5, renormalized where it leaves the image, and the
/// usual constants C1 = 0.01^2, C2 = 0.03^2 for unit dynamic range.
/// Symmetric, zero iff the images are identical. Both sides of every scale
/// must be at least 4 pixels at full resolution.
double perceptual_proxy(const Image& a, const Image& b);

/// The proxy and its gradient with respect to `a` (written to `grad_a`,
/// shaped like `a`). The gradient is exactly zero when a == b.
double perceptual_proxy_grad(const Image& a, const Image& b, Image* grad_a);

}  // namespace dge
