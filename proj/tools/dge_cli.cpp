// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: gen, render, edit, fit, compare.
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dge/editors.hpp"
#include "dge/error.hpp"
#include "dge/fitter.hpp"
#include "dge/harness.hpp"
#include "dge/io.hpp"
#include "dge/renderer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dge;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::string indexed(const std::string& prefix, std::size_t v, const std::string& ext) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%02zu%s", prefix.c_str(), v, ext.c_str());
    return name;
}

/// Writes `image` as PNG for viewing and DGEIMG1 for lossless reuse.
void write_view(const fs::path& dir, const std::string& prefix, std::size_t v, const Image& image) {
    io::write_png(dir / indexed(prefix, v, ".png"), image);
    io::write_dgeimg(dir / indexed(prefix, v, ".dgeimg"), image);
}

/// Target view v from `dir`: the first of edited/view/render with a DGEIMG1
/// file, else a PNG.
Image read_target(const fs::path& dir, std::size_t v) {
    for (const char* prefix : {"edited", "view", "render"}) {
        const fs::path raw = dir / indexed(prefix, v, ".dgeimg");
        if (fs::exists(raw)) return io::read_dgeimg(raw);
    }
    for (const char* prefix : {"edited", "view", "render"}) {
        const fs::path png = dir / indexed(prefix, v, ".png");
        if (fs::exists(png)) return io::read_png(png);
    }
    throw ValidationError("no target image for view " + std::to_string(v) + " in " + dir.string());
}

/// Rejects an output path that cannot be created, before any work.
void check_output_dir(const fs::path& dir) {
    if (fs::exists(dir) && !fs::is_directory(dir)) throw ValidationError(dir.string() + " exists and is not a directory");
}

void check_output_file(const fs::path& file) {
    if (fs::exists(file) && fs::is_directory(file)) throw ValidationError(file.string() + " is a directory");
    const fs::path parent = file.parent_path();
    if (!parent.empty() && fs::exists(parent) && !fs::is_directory(parent)) {
        throw ValidationError(parent.string() + " is not a directory");
    }
}

struct SceneInputs {
    std::string scene, cams;
    GaussianMixture mixture;
    std::vector<Camera> cameras;

    void add(CLI::App* app) {
        app->add_option("--scene", scene, "Gaussian mixture (PLY)")->required()->check(CLI::ExistingFile);
        app->add_option("--cams", cams, "camera set (JSON)")->required()->check(CLI::ExistingFile);
    }
    void load() {
        mixture = io::read_ply(scene);
        mixture.validate();
        cameras = io::read_cameras(cams);
        if (cameras.empty()) throw ValidationError("no cameras in " + cams);
    }
};

struct EditorFlags {
    MockEditorConfig editor{};
    double band = 1.5;  // feature strides
    std::size_t key_density = 5;
    bool no_epipolar = false;
    bool no_attention = false;

    void add(CLI::App* app) {
        app->add_option("--key-density", key_density, "one key view per this many frames")->capture_default_str();
        app->add_option("--band", band, "epipolar band half-width in feature strides")->capture_default_str();
        app->add_flag("--no-epipolar", no_epipolar, "match by appearance only");
        app->add_option("--editor-stride", editor.stride, "mock editor feature stride")->capture_default_str();
        app->add_option("--editor-stages", editor.stages, "mock editor stages")->capture_default_str();
        app->add_option("--editor-sharpness", editor.sharpness, "mock editor attention sharpness")
            ->capture_default_str();
        app->add_flag("--no-attention", no_attention, "disable the mock editor's attention stage");
    }
    EditOptions options(std::uint64_t seed) const {
        if (!(band > 0.0)) throw ValidationError("--band must be positive");
        if (key_density < 1) throw ValidationError("--key-density must be >= 1");
        EditOptions o;
        o.key_density = key_density;
        o.match.band = band * editor.stride;
        o.match.epipolar = !no_epipolar;
        o.seed = seed;
        return o;
    }
    MockEditorConfig editor_config() const {
        MockEditorConfig c = editor;
        c.attention = !no_attention;
        return c;
    }
};

EditSpec load_edit_spec(const std::string& path, std::optional<std::uint64_t> seed) {
    EditSpec spec = EditSpec::from_json(io::read_json(path));
    if (seed) spec.seed = *seed;
    spec.normalize();
    return spec;
}

FitConfig load_fit_config(const std::string& path) { return path.empty() ? FitConfig{} : FitConfig::from_json(io::read_json(path)); }

GaussianMask load_mask(const std::string& path, std::size_t count) {
    GaussianMask m = GaussianMask::from_json(io::read_json(path));
    m.validate(count);
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dge: multi-view consistent editing of Gaussian splatting scenes"};
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "random seed (overrides configs)");

    // gen
    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic scene and its cameras");
    std::string gen_spec, gen_out, gen_cams;
    gen->add_option("--spec", gen_spec, "scene spec (JSON); defaults when omitted")->check(CLI::ExistingFile);
    gen->add_option("--out", gen_out, "output mixture (PLY)")->required();
    gen->add_option("--cams", gen_cams, "output cameras (JSON)")->required();
    gen->add_option("--seed", seed, "random seed");

    // render
    CLI::App* render = app.add_subcommand("render", "render every camera");
    SceneInputs render_in;
    render_in.add(render);
    std::string render_out, render_mask_path;
    bool render_depth_flag = false;
    render->add_option("--out", render_out, "output directory")->required();
    render->add_flag("--depth", render_depth_flag, "also write depth maps (DGEIMG1)");
    render->add_option("--mask", render_mask_path, "Gaussian selection (JSON): also write coverage masks")
        ->check(CLI::ExistingFile);
    render->add_option("--seed", seed, "random seed");

    // edit
    CLI::App* edit = app.add_subcommand("edit", "edit the rendered views");
    SceneInputs edit_in;
    edit_in.add(edit);
    EditorFlags edit_flags;
    edit_flags.add(edit);
    std::string edit_spec, edit_out;
    bool independent = false;
    edit->add_option("--spec", edit_spec, "edit spec (JSON)")->required()->check(CLI::ExistingFile);
    edit->add_option("--out", edit_out, "output directory")->required();
    edit->add_flag("--independent", independent, "edit each view on its own");
    edit->add_option("--seed", seed, "random seed");

    // fit
    CLI::App* fitc = app.add_subcommand("fit", "fit the mixture to target views");
    SceneInputs fit_in;
    fit_in.add(fitc);
    std::string fit_targets, fit_config, fit_out, fit_mask;
    fitc->add_option("--targets", fit_targets, "directory of target views")->required()->check(CLI::ExistingDirectory);
    fitc->add_option("--config", fit_config, "fit config (JSON)")->check(CLI::ExistingFile);
    fitc->add_option("--out", fit_out, "output mixture (PLY); the report goes next to it")->required();
    fitc->add_option("--mask", fit_mask, "Gaussian selection (JSON) for partial fitting")->check(CLI::ExistingFile);
    fitc->add_option("--seed", seed, "random seed");

    // compare
    CLI::App* compare = app.add_subcommand("compare", "run several methods on one scene");
    SceneInputs cmp_in;
    cmp_in.add(compare);
    EditorFlags cmp_flags;
    cmp_flags.add(compare);
    std::string cmp_spec, cmp_out, cmp_config, cmp_methods = "direct,independent,idu";
    compare->add_option("--spec", cmp_spec, "edit spec (JSON)")->required()->check(CLI::ExistingFile);
    compare->add_option("--methods", cmp_methods, "comma-separated methods")->capture_default_str();
    compare->add_option("--config", cmp_config, "fit config (JSON)")->check(CLI::ExistingFile);
    compare->add_option("--out", cmp_out, "results directory")->required();
    compare->add_option("--seed", seed, "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (gen->parsed()) {
            SceneSpec spec = gen_spec.empty() ? SceneSpec{} : SceneSpec::from_json(io::read_json(gen_spec));
            if (seed) spec.seed = *seed;
            spec.validate();
            check_output_file(gen_out);
            check_output_file(gen_cams);
            const Scene scene = generate_scene(spec);
            io::write_ply(gen_out, scene.mixture);
            io::write_cameras(gen_cams, scene.cameras);
            std::cout << "wrote " << scene.mixture.size() << " gaussians and " << scene.cameras.size()
                      << " cameras\n";
        } else if (render->parsed()) {
            render_in.load();
            std::optional<GaussianMask> mask;
            if (!render_mask_path.empty()) mask = load_mask(render_mask_path, render_in.mixture.size());
            check_output_dir(render_out);
            const RenderConfig rc;
            std::vector<Image> views, depths, masks;
            for (const auto& cam : render_in.cameras) {
                views.push_back(splat_render(render_in.mixture, cam, rc));
                if (render_depth_flag) depths.push_back(render_depth(render_in.mixture, cam, rc));
                if (mask) masks.push_back(render_mask(render_in.mixture, cam, rc, mask->selected));
            }
            fs::create_directories(render_out);
            for (std::size_t v = 0; v < views.size(); ++v) {
                write_view(render_out, "view", v, views[v]);
                if (render_depth_flag) io::write_dgeimg(fs::path(render_out) / indexed("depth", v, ".dgeimg"), depths[v]);
                if (mask) io::write_png(fs::path(render_out) / indexed("mask", v, ".png"), masks[v]);
            }
            std::cout << "rendered " << views.size() << " views\n";
        } else if (edit->parsed()) {
            edit_in.load();
            const EditSpec spec = load_edit_spec(edit_spec, seed);
            const EditOptions opts = edit_flags.options(seed.value_or(spec.seed));
            const MockEditor editor(edit_flags.editor_config());
            check_output_dir(edit_out);
            const RenderConfig rc;
            const ViewSequence seq = render_sequence(edit_in.mixture, edit_in.cameras, rc);
            const EditResult result =
                independent ? edit_independently(seq, spec, editor) : edit_sequence(seq, spec, editor, opts);
            std::vector<Image> edited(seq.size());
            for (std::size_t t = 0; t < seq.size(); ++t) edited[seq.ids[t]] = result.images[t];
            const DepthSet geo = render_depth_set(edit_in.mixture, edit_in.cameras, rc);
            const double error = reprojection_consistency(edited, geo.depths, geo.coverage, edit_in.cameras).error;
            std::vector<std::size_t> keys;
            for (std::size_t k : result.keys) keys.push_back(seq.ids[k]);
            fs::create_directories(edit_out);
            for (std::size_t v = 0; v < edited.size(); ++v) write_view(edit_out, "edited", v, edited[v]);
            io::write_json(fs::path(edit_out) / "report.json",
                           {{"consistency_error", error},
                            {"key_views", keys},
                            {"fallback_count", result.fallback_count},
                            {"epipole_count", result.epipole_count},
                            {"independent", independent},
                            {"epipolar", !edit_flags.no_epipolar}});
            std::cout << "consistency_error " << error << "\n";
        } else if (fitc->parsed()) {
            fit_in.load();
            FitConfig cfg = load_fit_config(fit_config);
            if (seed) cfg.seed = *seed;
            if (!fit_mask.empty()) cfg.mask = load_mask(fit_mask, fit_in.mixture.size());
            cfg.validate();
            check_output_file(fit_out);
            std::vector<Image> images;
            for (std::size_t v = 0; v < fit_in.cameras.size(); ++v) images.push_back(read_target(fit_targets, v));
            ViewSequence targets;
            targets.cameras = fit_in.cameras;
            targets.images = std::move(images);
            for (std::size_t v = 0; v < targets.cameras.size(); ++v) targets.ids.push_back(v);
            const auto [fitted, report] = fit(fit_in.mixture, targets, cfg);
            io::write_ply(fit_out, fitted);
            fs::path report_path = fit_out;
            report_path.replace_extension(".report.json");
            io::write_json(report_path, report.to_json());
            double mean = 0.0;
            for (double p : report.psnr) mean += p / static_cast<double>(report.psnr.size());
            std::cout << "mean psnr " << mean << "\n";
        } else if (compare->parsed()) {
            cmp_in.load();
            const EditSpec spec = load_edit_spec(cmp_spec, seed);
            ExperimentConfig cfg;
            cfg.seed = seed.value_or(spec.seed);
            cfg.fit = load_fit_config(cmp_config);
            cfg.fit.validate();
            cfg.edit = cmp_flags.options(cfg.seed);
            cfg.editor = cmp_flags.editor_config();
            const MockEditor check_editor(cfg.editor);
            cfg.methods.clear();
            std::stringstream ss(cmp_methods);
            for (std::string m; std::getline(ss, m, ',');) cfg.methods.push_back(method_from_string(m));
            check_output_dir(cmp_out);
            const Scene scene{cmp_in.mixture, cmp_in.cameras};
            const auto results = run_experiment(scene, spec, cfg, cmp_out);
            bool failed = false;
            for (const auto& r : results) {
                std::cout << r.summary().dump() << "\n";
                if (!r.error.empty()) {
                    std::cerr << to_string(r.method) << " failed: " << r.error << "\n";
                    failed = true;
                }
            }
            if (failed) return kExitRuntime;
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
