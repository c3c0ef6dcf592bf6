// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dge/field.hpp"
#include "dge/image.hpp"
#include "dge/mveditor.hpp"
#include "dge/renderer.hpp"

namespace dge {

/// Per-class Adam step sizes. `mean` is relative to the scene extent: the
/// larger of 1.1x the camera-center spread and the spread of the means, each
/// measured as the largest distance from its centroid.
struct LearningRates {
    double mean = 1.6e-4;
    double opacity = 0.05;
    double scale = 5e-3;
    double rotation = 1e-3;
    double sh = 2.5e-3;
};

struct LossWeights {
    double l1 = 1.0;
    double perceptual = 0.5;
};

/// Refinement schedule: after the initial fit, `rounds` times re-render every
/// view, re-edit at `strength` and fit for `every` iterations.
struct Refinement {
    int every = 500;
    int rounds = 0;
    double strength = 0.3;
};

struct GaussianMask {
    std::vector<bool> selected;

    std::size_t count() const;
    void validate(std::size_t primitive_count) const;
    nlohmann::json to_json() const;
    static GaussianMask from_json(const nlohmann::json& j);
};

struct FitConfig {
    int iterations = 1000;
    LearningRates lr{};
    LossWeights weights{};
    Refinement refinement{};
    std::optional<GaussianMask> mask;
    double target_psnr = 30.0;   ///< for iterations_to_target
    int eval_every = 10;         ///< all-view PSNR evaluation cadence
    double scale_floor = 1e-4;   ///< scales are clamped to at least this
    std::uint64_t seed = 0;      ///< view visiting order
    int checkpoint_every = 0;    ///< 0 disables PLY checkpoints
    std::string checkpoint_dir;
    RenderConfig render{};
    /// Not serialized: called after every optimizer step with the 1-based
    /// step count and the updated mixture.
    std::function<void(int, const GaussianMixture&)> observer;

    void validate() const;
    nlohmann::json to_json() const;
    static FitConfig from_json(const nlohmann::json& j);
};

struct FitEvaluation {
    int iteration = 0;
    double psnr = 0.0;
};

struct FitReport {
    std::vector<double> losses;           ///< one per optimizer step
    std::vector<double> psnr;             ///< final, per view
    std::vector<FitEvaluation> evaluations;  ///< aggregate PSNR every eval_every steps
    std::optional<int> iterations_to_target;
    double duration_ms = 0.0;

    nlohmann::json to_json() const;
};

/// 10 log10(1 / mean MSE) over all views, capped like psnr().
double aggregate_psnr(std::span<const Image> a, std::span<const Image> b);

/// Adam on w1 * L1 + w2 * perceptual_proxy over the target views, one view
/// per step in a seeded per-epoch permutation. After each step opacities are
/// clamped to >= 0, scales to >= scale_floor and quaternions renormalized.
/// PSNR is measured against `reference` when given (same order as the
/// targets), otherwise against the targets. With cfg.mask this is
/// partial_fit. Throws RuntimeFailure on divergence.
std::pair<GaussianMixture, FitReport> fit(const GaussianMixture& mix, const ViewSequence& targets,
                                          const FitConfig& cfg, const std::vector<Image>* reference = nullptr);

/// Only Gaussians selected by cfg.mask move; the rest stay bit-identical.
/// The pixel loss is weighted by 1 - coverage of the unselected Gaussians,
/// i.e. render_mask(selected) plus the uncovered background, evaluated on
/// the input mixture.
std::pair<GaussianMixture, FitReport> partial_fit(const GaussianMixture& mix, const ViewSequence& targets,
                                                  const FitConfig& cfg, const std::vector<Image>* reference = nullptr);

/// Majority vote of 2D masks: a view votes for Gaussian i when its mean
/// projects inside the image onto a pixel where i's compositing weight is at
/// least `visibility_floor`; i is selected when the share of voting views
/// whose mask is >= 0.5 at that pixel reaches `threshold`.
GaussianMask unproject_masks(const GaussianMixture& mix, std::span<const Camera> cameras,
                             std::span<const Image> masks, double threshold = 0.5,
                             double visibility_floor = 0.01, const RenderConfig& cfg = {});

/// Render every view of `mix` with its depth, sorted into trajectory order.
ViewSequence render_sequence(const GaussianMixture& mix, std::span<const Camera> cameras, const RenderConfig& cfg);

/// Initial fit on an edit_sequence of the input renders at strength 1, then
/// cfg.refinement.rounds rounds of re-render, re-edit at the refinement
/// strength and fit for refinement.every iterations. Reports concatenate.
/// Here and in idu_baseline `reference` follows the order of `cameras`.
std::pair<GaussianMixture, FitReport> refine_loop(const GaussianMixture& mix, const Editor& editor,
                                                  const EditSpec& spec, std::span<const Camera> cameras,
                                                  const FitConfig& cfg, const EditOptions& edit = {},
                                                  const std::vector<Image>* reference = nullptr);

inline constexpr int kIduPeriod = 10;

/// Iterative dataset update: the target pool starts as the current renders;
/// every kIduPeriod steps one view (round robin) is re-rendered, edited on
/// its own and replaced in the pool. Optimizer and losses match fit.
/// `final_pool`, when given, receives the pool after the last step.
std::pair<GaussianMixture, FitReport> idu_baseline(const GaussianMixture& mix, const Editor& editor,
                                                   const EditSpec& spec, std::span<const Camera> cameras,
                                                   const FitConfig& cfg, const std::vector<Image>* reference = nullptr,
                                                   std::vector<Image>* final_pool = nullptr);

}  // namespace dge
