// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dge/editors.hpp"
#include "dge/field.hpp"
#include "dge/fitter.hpp"
#include "dge/geometry.hpp"
#include "dge/mveditor.hpp"

namespace dge {

enum class SceneLayout { orbit_sphere, box_grid, two_cluster, from_ply };

std::string to_string(SceneLayout layout);
SceneLayout scene_layout_from_string(const std::string& name);

/// Synthetic scene description. camera_count 0 draws T from [20, 30].
struct SceneSpec {
    SceneLayout layout = SceneLayout::orbit_sphere;
    int gaussian_count = 300;
    int camera_count = 0;
    double radius = 4.0;         ///< orbit radius
    double elevation = 20.0;     ///< degrees, mean orbit elevation
    double arc = 360.0;          ///< degrees of azimuth covered by the orbit
    int image_size = 64;
    double focal = 0.0;          ///< pixels; 0 selects 1.5 * image_size
    int sh_degree = 0;
    std::uint64_t seed = 0;
    std::string ply_path;        ///< from-ply only
    bool uniform = false;        ///< one gray color everywhere (no texture)

    /// Largest distance of a generated mean from the origin.
    static constexpr double kExtent = 1.2;
    /// Two-cluster centers.
    static constexpr double kClusterOffset = 0.6;
    /// Color of uniform scenes.
    static constexpr double kUniformGray = 0.6;

    void validate() const;
    nlohmann::json to_json() const;
    static SceneSpec from_json(const nlohmann::json& j);
};

struct Scene {
    GaussianMixture mixture;
    std::vector<Camera> cameras;  ///< shuffled orbit
};

/// Deterministic in spec.seed. Cameras look at the origin from an orbit of
/// the given radius and are shuffled before return.
Scene generate_scene(const SceneSpec& spec);

struct ConsistencyOptions {
    int sample_stride = 2;        ///< sample every n-th pixel in x and y
    int neighbors = 3;            ///< nearest other views by forward angle
    double depth_tolerance = 0.02;  ///< relative depth agreement for occlusion
    double min_coverage = 0.99;   ///< confident-depth threshold
};

struct ConsistencyResult {
    double error = 0.0;          ///< mean absolute color difference
    std::size_t samples = 0;     ///< reprojected pixel pairs that were compared
};

/// Cross-view reprojection error of `images`. Pixels with coverage at least
/// min_coverage are unprojected with `depths`, reprojected into the nearest
/// other views, kept when the target view's depth agrees within the
/// relative tolerance, and compared by bilinear color lookup.
ConsistencyResult reprojection_consistency(std::span<const Image> images, std::span<const Image> depths,
                                           std::span<const Image> coverage, std::span<const Camera> cameras,
                                           const ConsistencyOptions& opts = {});

/// Depth and coverage renders of a mixture for reprojection_consistency.
struct DepthSet {
    std::vector<Image> depths;
    std::vector<Image> coverage;
};
DepthSet render_depth_set(const GaussianMixture& mix, std::span<const Camera> cameras, const RenderConfig& cfg);

enum class Method { direct, independent, idu };
std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct ExperimentConfig {
    std::vector<Method> methods{Method::direct, Method::independent, Method::idu};
    MockEditorConfig editor{};
    EditOptions edit{};
    FitConfig fit{};
    ConsistencyOptions consistency{};
    std::uint64_t seed = 0;  ///< shared by every method
};

struct ExperimentResult {
    Method method = Method::direct;
    std::optional<double> consistency_error;  ///< of the 2D targets the method fitted
    std::vector<double> psnr;                 ///< final renders vs the consistent 3D edit
    std::optional<int> iterations_to_target;
    double duration_ms = 0.0;
    std::uint64_t seed = 0;
    std::string error;                        ///< non-empty when the method failed

    /// The summary.json record; duration_ms is null here so the file is
    /// reproducible (wall-clock goes to timing.json).
    nlohmann::json summary() const;
};

/// Runs each method end to end on the same scene and seed. With a non-empty
/// `out`, writes out/<method>/{edited_XX.png, render_XX.png, summary.json}
/// (T each) and out/timing.json. A failing method records its error and the
/// rest still run.
std::vector<ExperimentResult> run_experiment(const Scene& scene, const EditSpec& spec, const ExperimentConfig& cfg,
                                             const std::filesystem::path& out = {});

}  // namespace dge
