// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#include "dge/fitter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "dge/io.hpp"
#include "dge/perceptual.hpp"

namespace dge {

using nlohmann::json;

// ------------------------------------------------------------------- mask

std::size_t GaussianMask::count() const { return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true)); }

void GaussianMask::validate(std::size_t primitive_count) const {
    if (selected.size() != primitive_count) {
        throw ValidationError("mask: " + std::to_string(selected.size()) + " entries for " +
                              std::to_string(primitive_count) + " Gaussians");
    }
}

json GaussianMask::to_json() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        if (selected[i]) idx.push_back(i);
    }
    return {{"count", selected.size()}, {"selected", idx}};
}

GaussianMask GaussianMask::from_json(const json& j) {
    try {
        GaussianMask m;
        m.selected.assign(j.at("count").get<std::size_t>(), false);
        for (std::size_t i : j.at("selected").get<std::vector<std::size_t>>()) {
            if (i >= m.selected.size()) throw ValidationError("mask: index " + std::to_string(i) + " out of range");
            m.selected[i] = true;
        }
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("mask: ") + e.what());
    }
}

// ----------------------------------------------------------------- config

void FitConfig::validate() const {
    if (iterations < 1) throw ValidationError("fit config: iterations must be >= 1");
    const double rates[] = {lr.mean, lr.opacity, lr.scale, lr.rotation, lr.sh};
    for (double r : rates) {
        if (!std::isfinite(r) || r < 0.0) throw ValidationError("fit config: learning rates must be finite and >= 0");
    }
    if (!std::isfinite(weights.l1) || !std::isfinite(weights.perceptual) || weights.l1 < 0.0 || weights.perceptual < 0.0) {
        throw ValidationError("fit config: loss weights must be finite and >= 0");
    }
    if (weights.l1 == 0.0 && weights.perceptual == 0.0) throw ValidationError("fit config: loss weights are both zero");
    if (refinement.every < 1) throw ValidationError("fit config: refinement.every must be >= 1");
    if (refinement.rounds < 0) throw ValidationError("fit config: refinement.rounds must be >= 0");
    if (!(refinement.strength >= 0.0) || !std::isfinite(refinement.strength)) {
        throw ValidationError("fit config: refinement.strength must be >= 0");
    }
    if (!std::isfinite(target_psnr)) throw ValidationError("fit config: target_psnr must be finite");
    if (eval_every < 1) throw ValidationError("fit config: eval_every must be >= 1");
    if (!(scale_floor > 0.0) || !std::isfinite(scale_floor)) throw ValidationError("fit config: scale_floor must be > 0");
    if (checkpoint_every < 0) throw ValidationError("fit config: checkpoint_every must be >= 0");
    if (checkpoint_every > 0 && checkpoint_dir.empty()) throw ValidationError("fit config: checkpoint_dir required");
    render.validate();
}

json FitConfig::to_json() const {
    json j = {
        {"iterations", iterations},
        {"learning_rates",
         {{"mean", lr.mean}, {"opacity", lr.opacity}, {"scale", lr.scale}, {"rotation", lr.rotation}, {"sh", lr.sh}}},
        {"loss_weights", {{"l1", weights.l1}, {"perceptual", weights.perceptual}}},
        {"refinement", {{"every", refinement.every}, {"rounds", refinement.rounds}, {"strength", refinement.strength}}},
        {"target_psnr", target_psnr},
        {"eval_every", eval_every},
        {"scale_floor", scale_floor},
        {"seed", seed},
        {"checkpoint_every", checkpoint_every},
        {"checkpoint_dir", checkpoint_dir},
        {"render",
         {{"near", render.near},
          {"far", render.far},
          {"cutoff", render.cutoff},
          {"background", {render.background.x(), render.background.y(), render.background.z()}}}},
    };
    if (mask) j["mask"] = mask->to_json();
    return j;
}

FitConfig FitConfig::from_json(const json& j) {
    static const std::set<std::string> known = {"iterations", "learning_rates", "loss_weights", "refinement",
                                                "target_psnr", "eval_every", "scale_floor", "seed",
                                                "checkpoint_every", "checkpoint_dir", "render", "mask"};
    if (!j.is_object()) throw ValidationError("fit config: expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ValidationError("fit config: unknown field '" + key + "'");
    }
    auto only = [](const json& o, const char* what, std::initializer_list<const char*> keys) {
        if (!o.is_object()) throw ValidationError(std::string("fit config: ") + what + " must be an object");
        for (const auto& [key, _] : o.items()) {
            if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) == keys.end()) {
                throw ValidationError(std::string("fit config: unknown field '") + what + "." + key + "'");
            }
        }
    };
    if (j.contains("learning_rates")) only(j.at("learning_rates"), "learning_rates", {"mean", "opacity", "scale", "rotation", "sh"});
    if (j.contains("loss_weights")) only(j.at("loss_weights"), "loss_weights", {"l1", "perceptual"});
    if (j.contains("refinement")) only(j.at("refinement"), "refinement", {"every", "rounds", "strength"});
    if (j.contains("render")) only(j.at("render"), "render", {"near", "far", "cutoff", "background"});
    FitConfig c;
    try {
        auto num = [](const json& o, const char* key, double& out) {
            if (o.contains(key)) out = o.at(key).get<double>();
        };
        if (j.contains("iterations")) c.iterations = j.at("iterations").get<int>();
        if (j.contains("learning_rates")) {
            const json& l = j.at("learning_rates");
            num(l, "mean", c.lr.mean);
            num(l, "opacity", c.lr.opacity);
            num(l, "scale", c.lr.scale);
            num(l, "rotation", c.lr.rotation);
            num(l, "sh", c.lr.sh);
        }
        if (j.contains("loss_weights")) {
            num(j.at("loss_weights"), "l1", c.weights.l1);
            num(j.at("loss_weights"), "perceptual", c.weights.perceptual);
        }
        if (j.contains("refinement")) {
            const json& r = j.at("refinement");
            if (r.contains("every")) c.refinement.every = r.at("every").get<int>();
            if (r.contains("rounds")) c.refinement.rounds = r.at("rounds").get<int>();
            num(r, "strength", c.refinement.strength);
        }
        num(j, "target_psnr", c.target_psnr);
        if (j.contains("eval_every")) c.eval_every = j.at("eval_every").get<int>();
        num(j, "scale_floor", c.scale_floor);
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("checkpoint_every")) c.checkpoint_every = j.at("checkpoint_every").get<int>();
        if (j.contains("checkpoint_dir")) c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
        if (j.contains("render")) {
            const json& r = j.at("render");
            num(r, "near", c.render.near);
            num(r, "far", c.render.far);
            num(r, "cutoff", c.render.cutoff);
            if (r.contains("background")) {
                const auto bg = r.at("background").get<std::vector<double>>();
                if (bg.size() != 3) throw ValidationError("fit config: render.background needs 3 values");
                c.render.background = Vec3(bg[0], bg[1], bg[2]);
            }
        }
        if (j.contains("mask")) c.mask = GaussianMask::from_json(j.at("mask"));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("fit config: ") + e.what());
    }
    c.validate();
    return c;
}

json FitReport::to_json() const {
    json ev = json::array();
    for (const auto& e : evaluations) ev.push_back({{"iteration", e.iteration}, {"psnr", e.psnr}});
    return {{"losses", losses},
            {"psnr", psnr},
            {"evaluations", ev},
            {"iterations_to_target", iterations_to_target ? json(*iterations_to_target) : json(nullptr)},
            {"duration_ms", duration_ms}};
}

double aggregate_psnr(std::span<const Image> a, std::span<const Image> b) {
    if (a.size() != b.size() || a.empty()) throw ValidationError("aggregate_psnr: image lists differ");
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += mse(a[i], b[i]);
    total /= static_cast<double>(a.size());
    if (total <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(total));
}

// -------------------------------------------------------------- optimizer

namespace {

// Divergence: loss above 10x its initial value. Near-zero initial losses
// (targets equal to the renders) are floored so that ordinary drift on a
// stale target is not mistaken for divergence.
constexpr double kDivergenceFactor = 10.0;
constexpr double kDivergenceFloor = 0.05;

std::size_t params_per_gaussian(const GaussianMixture& mix) { return 11 + mix[0].sh.size(); }

void flatten_gradients(const MixtureGradients& g, std::size_t stride, std::vector<double>& out) {
    const std::size_t n = g.opacity.size();
    out.assign(n * stride, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double* o = out.data() + i * stride;
        o[0] = g.opacity[i];
        for (int k = 0; k < 3; ++k) o[1 + k] = g.mean[i][k];
        for (int k = 0; k < 3; ++k) o[4 + k] = g.scale[i][k];
        for (int k = 0; k < 4; ++k) o[7 + k] = g.orientation[i][k];
        std::copy(g.sh[i].begin(), g.sh[i].end(), o + 11);
    }
}

double& param_slot(GaussianPrimitive& p, std::size_t k) {
    if (k == 0) return p.opacity;
    if (k < 4) return p.mean[static_cast<int>(k - 1)];
    if (k < 7) return p.scale[static_cast<int>(k - 4)];
    if (k < 11) return p.orientation[static_cast<int>(k - 7)];
    return p.sh[k - 11];
}

/// Radius used to scale the mean learning rate: the larger of the camera
/// spread (1.1x, as is customary for splatting fits) and the mean spread.
double scene_extent(const GaussianMixture& mix, std::span<const Camera> cameras) {
    Vec3 cc = Vec3::Zero();
    for (const auto& c : cameras) cc += c.center();
    cc /= static_cast<double>(cameras.size());
    double cam = 0.0;
    for (const auto& c : cameras) cam = std::max(cam, (c.center() - cc).norm());
    Vec3 mc = Vec3::Zero();
    for (const auto& p : mix.primitives()) mc += p.mean;
    mc /= static_cast<double>(mix.size());
    double means = 0.0;
    for (const auto& p : mix.primitives()) means = std::max(means, (p.mean - mc).norm());
    return std::max({1.1 * cam, means, 1e-3});
}

struct Adam {
    static constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-15;
    std::vector<double> m, v, lr;
    int t = 0;

    void step(GaussianMixture& mix, const std::vector<double>& g, const std::vector<bool>* selected) {
        ++t;
        const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
        const std::size_t stride = lr.size();
        for (std::size_t i = 0; i < mix.size(); ++i) {
            if (selected && !(*selected)[i]) continue;
            GaussianPrimitive& p = mix[i];
            for (std::size_t k = 0; k < stride; ++k) {
                const std::size_t idx = i * stride + k;
                const double gi = g[idx];
                m[idx] = b1 * m[idx] + (1.0 - b1) * gi;
                v[idx] = b2 * v[idx] + (1.0 - b2) * gi * gi;
                const double update = lr[k] * (m[idx] / c1) / (std::sqrt(v[idx] / c2) + eps);
                if (update != 0.0) param_slot(p, k) -= update;
            }
        }
    }
};

void enforce_invariants(GaussianMixture& mix, double scale_floor, const std::vector<bool>* selected) {
    for (std::size_t i = 0; i < mix.size(); ++i) {
        if (selected && !(*selected)[i]) continue;
        GaussianPrimitive& p = mix[i];
        p.opacity = std::max(0.0, p.opacity);
        p.scale = p.scale.cwiseMax(scale_floor);
        const double qn = p.orientation.norm();
        if (qn > 0.0 && std::fabs(qn - 1.0) > 1e-12) p.orientation /= qn;
        if (!(qn > 0.0)) p.orientation = Vec4(1.0, 0.0, 0.0, 0.0);
    }
}

struct LossOut {
    double value = 0.0;
    Image adjoint;
};

/// w1 * mean(m |r - t|) + w2 * proxy(m r, m t) with its gradient in r.
LossOut image_loss(const Image& r, const Image& t, const Image* weight, const LossWeights& w) {
    LossOut out;
    out.adjoint = Image(r.width(), r.height(), r.channels());
    const double n = static_cast<double>(r.size());
    const auto& rv = r.values();
    const auto& tv = t.values();
    auto& av = out.adjoint.values();
    auto m_at = [&](std::size_t i) { return weight ? weight->values()[i / static_cast<std::size_t>(r.channels())] : 1.0; };
    if (w.l1 > 0.0) {
        double l1 = 0.0;
        for (std::size_t i = 0; i < rv.size(); ++i) {
            const double d = rv[i] - tv[i];
            const double m = m_at(i);
            l1 += m * std::fabs(d);
            av[i] = d > 0.0 ? w.l1 * m / n : (d < 0.0 ? -w.l1 * m / n : 0.0);
        }
        out.value += w.l1 * l1 / n;
    }
    if (w.perceptual > 0.0) {
        Image mr = r, mt = t;
        if (weight) {
            for (std::size_t i = 0; i < rv.size(); ++i) {
                mr.values()[i] *= m_at(i);
                mt.values()[i] *= m_at(i);
            }
        }
        Image g;
        out.value += w.perceptual * perceptual_proxy_grad(mr, mt, &g);
        for (std::size_t i = 0; i < av.size(); ++i) av[i] += w.perceptual * m_at(i) * g.values()[i];
    }
    return out;
}

using Clock = std::chrono::steady_clock;

/// Called before step `iteration` (0-based); may replace one pool image and
/// returns its index.
using StepHook =
    std::function<std::optional<std::size_t>(int iteration, const GaussianMixture& current, std::vector<Image>& pool)>;

/// The shared optimization loop behind fit, partial_fit and idu_baseline.
std::pair<GaussianMixture, FitReport> optimize(const GaussianMixture& mix, std::span<const Camera> cameras,
                                               std::vector<Image> pool, const FitConfig& cfg,
                                               const std::vector<Image>* reference, const StepHook& hook,
                                               std::vector<Image>* final_pool = nullptr) {
    const auto start = Clock::now();
    cfg.validate();
    mix.validate();
    if (mix.empty()) throw ValidationError("fit: the mixture is empty");
    if (cameras.empty() || pool.size() != cameras.size()) throw ValidationError("fit: one target image per camera required");
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const Intrinsics& k = cameras[v].intrinsics();
        if (pool[v].width() != k.width || pool[v].height() != k.height || pool[v].channels() != 3) {
            throw ValidationError("fit: target " + std::to_string(v) + " does not match its camera");
        }
        if (!pool[v].all_finite()) throw ValidationError("fit: target " + std::to_string(v) + " is not finite");
    }
    if (reference && reference->size() != pool.size()) throw ValidationError("fit: one reference image per target required");
    const std::vector<bool>* selected = nullptr;
    if (cfg.mask) {
        cfg.mask->validate(mix.size());
        selected = &cfg.mask->selected;
    }

    const std::size_t n_views = cameras.size();
    GaussianMixture cur = mix;
    FitReport report;

    // Pixel weights for masked fitting, fixed on the input mixture.
    std::vector<Image> weights;
    if (selected) {
        std::vector<bool> frozen(mix.size());
        for (std::size_t i = 0; i < mix.size(); ++i) frozen[i] = !(*selected)[i];
        for (const auto& cam : cameras) {
            Image w = render_mask(mix, cam, cfg.render, frozen);
            for (double& x : w.values()) x = 1.0 - x;
            weights.push_back(std::move(w));
        }
    }

    const std::size_t stride = params_per_gaussian(cur);
    Adam adam;
    adam.m.assign(cur.size() * stride, 0.0);
    adam.v.assign(cur.size() * stride, 0.0);
    adam.lr.assign(stride, cfg.lr.sh);
    adam.lr[0] = cfg.lr.opacity;
    for (int k = 1; k < 4; ++k) adam.lr[k] = cfg.lr.mean * scene_extent(mix, cameras);
    for (int k = 4; k < 7; ++k) adam.lr[k] = cfg.lr.scale;
    for (int k = 7; k < 11; ++k) adam.lr[k] = cfg.lr.rotation;

    auto evaluate = [&](int iteration, std::vector<Image>* renders) {
        std::vector<Image> local;
        std::vector<Image>& out = renders ? *renders : local;
        out.clear();
        for (const auto& cam : cameras) out.push_back(splat_render(cur, cam, cfg.render));
        const double p = aggregate_psnr(out, reference ? std::span<const Image>(*reference) : std::span<const Image>(pool));
        report.evaluations.push_back({iteration, p});
        if (!report.iterations_to_target && p >= cfg.target_psnr) report.iterations_to_target = iteration;
    };

    // Per-view divergence baselines.
    std::vector<double> initial(n_views);
    {
        std::vector<Image> renders;
        evaluate(0, &renders);
        for (std::size_t v = 0; v < n_views; ++v) {
            initial[v] = image_loss(renders[v], pool[v], selected ? &weights[v] : nullptr, cfg.weights).value;
        }
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(n_views);
    std::vector<double> flat;
    for (int it = 0; it < cfg.iterations; ++it) {
        if (hook) {
            if (const auto replaced = hook(it, cur, pool)) {
                // a new target restarts that view's divergence baseline
                const std::size_t v = *replaced;
                const Image r = splat_render(cur, cameras[v], cfg.render);
                initial[v] = image_loss(r, pool[v], selected ? &weights[v] : nullptr, cfg.weights).value;
            }
        }
        if (it % static_cast<int>(n_views) == 0) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng);
        }
        const std::size_t v = order[static_cast<std::size_t>(it) % n_views];
        const Image rendered = splat_render(cur, cameras[v], cfg.render);
        const LossOut loss = image_loss(rendered, pool[v], selected ? &weights[v] : nullptr, cfg.weights);
        report.losses.push_back(loss.value);
        if (!std::isfinite(loss.value) || loss.value > kDivergenceFactor * std::max(initial[v], kDivergenceFloor)) {
            throw RuntimeFailure("fit diverged at iteration " + std::to_string(it) + " (loss " +
                                 std::to_string(loss.value) + ")");
        }
        const MixtureGradients g = render_with_gradients(cur, cameras[v], cfg.render, loss.adjoint);
        if (!g.all_finite()) throw RuntimeFailure("fit diverged at iteration " + std::to_string(it) + " (gradient)");
        flatten_gradients(g, stride, flat);
        adam.step(cur, flat, selected);
        enforce_invariants(cur, cfg.scale_floor, selected);

        const int done = it + 1;
        if (cfg.observer) cfg.observer(done, cur);
        if (done % cfg.eval_every == 0 || done == cfg.iterations) evaluate(done, nullptr);
        if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "iter_%06d.ply", done);
            std::filesystem::create_directories(cfg.checkpoint_dir);
            io::write_ply(std::filesystem::path(cfg.checkpoint_dir) / name, cur);
        }
    }

    const auto& ref = reference ? *reference : pool;
    for (std::size_t v = 0; v < n_views; ++v) report.psnr.push_back(psnr(splat_render(cur, cameras[v], cfg.render), ref[v]));
    report.duration_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    if (final_pool) *final_pool = std::move(pool);
    return {std::move(cur), std::move(report)};
}

void append(FitReport& into, const FitReport& more, int offset) {
    into.losses.insert(into.losses.end(), more.losses.begin(), more.losses.end());
    for (const auto& e : more.evaluations) {
        if (e.iteration == 0 && !into.evaluations.empty()) continue;  // already recorded as the last entry
        into.evaluations.push_back({e.iteration + offset, e.psnr});
    }
    if (!into.iterations_to_target && more.iterations_to_target) into.iterations_to_target = *more.iterations_to_target + offset;
    into.psnr = more.psnr;
    into.duration_ms += more.duration_ms;
}

std::vector<Image> in_sequence_order(const std::vector<Image>* reference, const ViewSequence& seq) {
    std::vector<Image> out;
    if (!reference) return out;
    if (reference->size() != seq.size()) throw ValidationError("fit: one reference image per camera required");
    for (std::size_t id : seq.ids) out.push_back((*reference)[id]);
    return out;
}

}  // namespace

std::pair<GaussianMixture, FitReport> fit(const GaussianMixture& mix, const ViewSequence& targets, const FitConfig& cfg,
                                          const std::vector<Image>* reference) {
    targets.validate();
    return optimize(mix, targets.cameras, targets.images, cfg, reference, {});
}

std::pair<GaussianMixture, FitReport> partial_fit(const GaussianMixture& mix, const ViewSequence& targets,
                                                  const FitConfig& cfg, const std::vector<Image>* reference) {
    if (!cfg.mask) throw ValidationError("partial_fit: the config carries no mask");
    return fit(mix, targets, cfg, reference);
}

GaussianMask unproject_masks(const GaussianMixture& mix, std::span<const Camera> cameras, std::span<const Image> masks,
                             double threshold, double visibility_floor, const RenderConfig& cfg) {
    if (masks.size() != cameras.size()) throw ValidationError("unproject_masks: one mask per camera required");
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("unproject_masks: threshold must be in (0, 1]");
    if (!(visibility_floor >= 0.0)) throw ValidationError("unproject_masks: visibility floor must be >= 0");
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const Intrinsics& k = cameras[v].intrinsics();
        if (masks[v].width() != k.width || masks[v].height() != k.height) {
            throw ValidationError("unproject_masks: mask " + std::to_string(v) + " does not match its camera");
        }
    }
    std::vector<std::size_t> votes(mix.size(), 0), covered(mix.size(), 0);
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const Camera& cam = cameras[v];
        std::map<std::pair<int, int>, PixelTrace> traces;
        for (std::size_t i = 0; i < mix.size(); ++i) {
            const auto uv = project(cam, mix[i].mean);
            if (!uv || uv->x() < 0.0 || uv->y() < 0.0 || uv->x() >= cam.intrinsics().width ||
                uv->y() >= cam.intrinsics().height) {
                continue;
            }
            const int x = static_cast<int>(uv->x()), y = static_cast<int>(uv->y());
            auto it = traces.find({x, y});
            if (it == traces.end()) it = traces.emplace(std::pair{x, y}, trace_pixel(mix, cam, cfg, x, y)).first;
            double weight = 0.0;
            for (const auto& c : it->second.contributions) {
                if (c.gaussian == i) weight += c.weight;
            }
            if (weight < visibility_floor) continue;
            ++votes[i];
            if (masks[v].at(x, y, 0) >= 0.5) ++covered[i];
        }
    }
    GaussianMask out;
    out.selected.resize(mix.size());
    for (std::size_t i = 0; i < mix.size(); ++i) {
        out.selected[i] = votes[i] > 0 && static_cast<double>(covered[i]) >= threshold * static_cast<double>(votes[i]);
    }
    return out;
}

ViewSequence render_sequence(const GaussianMixture& mix, std::span<const Camera> cameras, const RenderConfig& cfg) {
    std::vector<Image> images, depths;
    for (const auto& cam : cameras) {
        images.push_back(splat_render(mix, cam, cfg));
        depths.push_back(render_depth(mix, cam, cfg));
    }
    return ViewSequence::sorted({cameras.begin(), cameras.end()}, std::move(images), std::move(depths));
}

std::pair<GaussianMixture, FitReport> refine_loop(const GaussianMixture& mix, const Editor& editor, const EditSpec& spec,
                                                  std::span<const Camera> cameras, const FitConfig& cfg,
                                                  const EditOptions& edit, const std::vector<Image>* reference) {
    cfg.validate();
    auto round = [&](const GaussianMixture& current, double strength, int iterations) {
        ViewSequence seq = render_sequence(current, cameras, cfg.render);
        EditOptions opts = edit;
        opts.strength = strength;
        EditResult edited = edit_sequence(seq, spec, editor, opts);
        seq.images = std::move(edited.images);
        const std::vector<Image> ref = in_sequence_order(reference, seq);
        FitConfig c = cfg;
        c.iterations = iterations;
        return fit(current, seq, c, reference ? &ref : nullptr);
    };
    auto [cur, report] = round(mix, 1.0, cfg.iterations);
    int done = cfg.iterations;
    for (int r = 0; r < cfg.refinement.rounds; ++r) {
        auto [next, more] = round(cur, cfg.refinement.strength, cfg.refinement.every);
        append(report, more, done);
        done += cfg.refinement.every;
        cur = std::move(next);
    }
    return {std::move(cur), std::move(report)};
}

std::pair<GaussianMixture, FitReport> idu_baseline(const GaussianMixture& mix, const Editor& editor,
                                                   const EditSpec& spec, std::span<const Camera> cameras,
                                                   const FitConfig& cfg, const std::vector<Image>* reference,
                                                   std::vector<Image>* final_pool) {
    if (cameras.empty()) throw ValidationError("idu: no cameras");
    std::vector<Image> pool;
    for (const auto& cam : cameras) pool.push_back(splat_render(mix, cam, cfg.render));
    std::size_t next = 0;
    const StepHook hook = [&](int it, const GaussianMixture& current,
                              std::vector<Image>& p) -> std::optional<std::size_t> {
        if (it % kIduPeriod != 0) return std::nullopt;
        const std::size_t v = next;
        next = (next + 1) % cameras.size();
        ViewSequence one;
        one.cameras = {cameras[v]};
        one.images = {splat_render(current, cameras[v], cfg.render)};
        one.depths = {render_depth(current, cameras[v], cfg.render)};
        one.ids = {v};
        p[v] = std::move(edit_independently(one, spec, editor).images[0]);
        return v;
    };
    return optimize(mix, cameras, std::move(pool), cfg, reference, hook, final_pool);
}

}  // namespace dge
