#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "dna/config.hpp"
#include "dna/model.hpp"
#include "dna/rng.hpp"
#include "dna/trainer.hpp"

namespace dna {

// Fixed color decorrelation matrix applied across channels.
inline const std::array<std::array<double, 3>, 3>& dream_color_matrix() {
    static const std::array<std::array<double, 3>, 3> a = {{{0.26, 0.09, 0.02},
                                                            {0.27, 0.00, -0.05},
                                                            {0.27, -0.09, 0.03}}};
    return a;
}

// Frequency weights: 1 / max(|f_x|, |f_y|, 1/side) on the FFT grid.
template <typename S>
Tensor<S> dream_frequency_weights(int side) {
    Tensor<S> w(Shape{side, side});
    const double floor_f = 1.0 / static_cast<double>(side);
    for (int y = 0; y < side; ++y) {
        const double fy = std::fabs((y <= side / 2 ? y : y - side) / static_cast<double>(side));
        for (int x = 0; x < side; ++x) {
            const double fx = std::fabs((x <= side / 2 ? x : x - side) / static_cast<double>(side));
            w.value()[static_cast<size_t>(y) * side + x] =
                static_cast<S>(1.0 / std::max({fx, fy, floor_f}));
        }
    }
    return w;
}

// Optimizable Fourier-space image: complex coefficients per color channel.
template <typename S>
struct DreamParams {
    int side = 64;
    std::array<Tensor<S>, 3> theta;  // each {2, side, side}: real and imaginary planes

    static DreamParams init(int side, double init_scale, Rng& rng) {
        DreamParams p;
        p.side = side;
        for (auto& t : p.theta) {
            t = Tensor<S>(Shape{2, side, side});
            for (auto& v : t.value()) v = static_cast<S>(rng.normal() * init_scale);
            t.set_requires_grad(true);
        }
        return p;
    }

    std::vector<NamedParam<S>> named_parameters() {
        return {{"theta.r", &theta[0]}, {"theta.g", &theta[1]}, {"theta.b", &theta[2]}};
    }
};

// sigmoid(IFFT2(sum_c' W A[c][c'] theta_c')) per output channel, stacked to a
// {3, side, side} image in [0, 1].
template <typename S>
Tensor<S> dream_render(const DreamParams<S>& params) {
    const int side = params.side;
    const Tensor<S> w = dream_frequency_weights<S>(side);
    // Same weight on both the real and imaginary plane.
    Tensor<S> w2(Shape{2, side, side});
    std::copy(w.value().begin(), w.value().end(), w2.value().begin());
    std::copy(w.value().begin(), w.value().end(),
              w2.value().begin() + static_cast<std::ptrdiff_t>(w.value().size()));
    const auto& a = dream_color_matrix();
    std::vector<Tensor<S>> channels;
    for (int c = 0; c < 3; ++c) {
        Tensor<S> z = scale(params.theta[0], static_cast<S>(a[static_cast<size_t>(c)][0]));
        z = add(z, scale(params.theta[1], static_cast<S>(a[static_cast<size_t>(c)][1])));
        z = add(z, scale(params.theta[2], static_cast<S>(a[static_cast<size_t>(c)][2])));
        const Tensor<S> pixels = irfft2(mul(z, w2));
        channels.push_back(reshape(sigmoid(pixels), Shape{1, side * side}));
    }
    return reshape(concat_cols(channels), Shape{3, side, side});
}

// Sum of squared differences of neighboring pixels in the horizontal,
// vertical, and both diagonal directions, over all channels.
template <typename S>
Tensor<S> total_variation(const Tensor<S>& image) {
    DNA_CHECK(image.rank() == 3 && image.dim(0) == 3 && image.dim(1) == image.dim(2),
              "total_variation: expects [3, N, N], got " << shape_str(image.shape()));
    const int n = image.dim(1);
    const int64_t plane = static_cast<int64_t>(n) * n;
    struct Dir {
        int dy, dx;
    };
    const Dir dirs[4] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
    Tensor<S> tv = Tensor<S>::scalar(S(0));
    for (const Dir dir : dirs) {
        std::vector<int64_t> at, to;
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < n; ++y) {
                const int yy = y + dir.dy;
                if (yy < 0 || yy >= n) continue;
                for (int x = 0; x < n; ++x) {
                    const int xx = x + dir.dx;
                    if (xx < 0 || xx >= n) continue;
                    at.push_back(c * plane + static_cast<int64_t>(y) * n + x);
                    to.push_back(c * plane + static_cast<int64_t>(yy) * n + xx);
                }
            }
        }
        const Shape shape{static_cast<int>(at.size())};
        const Tensor<S> diff = sub(gather_flat(image, at, shape), gather_flat(image, to, shape));
        tv = add(tv, sum_all(mul(diff, diff)));
    }
    return tv;
}

// Routing objective: step horizon S, token subset T (empty = all), selections
// frozen from a reference forward pass, plus the patches clamped to the
// reference pixels.
struct DreamObjective {
    int steps = -1;  // horizon in routed steps; -1 or > n_routed clamps to all
    int k = 1;
    std::vector<int> token_subset;
    std::vector<int> context_patches;
    std::vector<std::vector<int>> selections;  // [routed step] -> token-major T*k
    bool use_logits = false;
};

// Run the reference example through the model with live top-k routing and
// freeze every decision.
template <typename S>
DreamObjective record_dream_objective(DnaModel<S>& model, const Example& reference,
                                      int horizon_steps, std::vector<int> token_subset = {},
                                      std::vector<int> context_patches = {}) {
    ForwardOptions<S> opts;
    opts.record_trace = true;
    auto fwd = model.forward_sequence(reference, opts);
    DreamObjective obj;
    obj.steps = horizon_steps;
    obj.k = model.config().top_k;
    obj.token_subset = std::move(token_subset);
    obj.context_patches = std::move(context_patches);
    const int n_routed = model.config().n_routed();
    const int tokens = fwd.trace.tokens;
    obj.selections.assign(static_cast<size_t>(n_routed), {});
    for (int s = 0; s < n_routed; ++s) {
        auto& step_sel = obj.selections[static_cast<size_t>(s)];
        step_sel.reserve(static_cast<size_t>(tokens) * obj.k);
        for (int t = 0; t < tokens; ++t) {
            for (int m : fwd.trace.ribbons[static_cast<size_t>(t)][static_cast<size_t>(s)]) {
                step_sel.push_back(m);
            }
        }
    }
    return obj;
}

// Forward the image with the frozen selections and sum the probability mass
// the routers place on them, for tokens in T, over the first S routed steps.
// Differentiable w.r.t. the image.
template <typename S>
Tensor<S> dream_objective(DnaModel<S>& model, const Tensor<S>& image, const DreamObjective& obj) {
    const int n_routed = model.config().n_routed();
    const int horizon = obj.steps < 0 ? n_routed : std::min(obj.steps, n_routed);
    if (horizon == 0) return Tensor<S>::scalar(S(0));
    ForwardOptions<S> opts;
    opts.keep_routings = true;
    opts.forced_selections = &obj.selections;
    auto fwd = model.forward_image(image, opts);
    const int n_modules = model.config().n_modules();
    Tensor<S> total = Tensor<S>::scalar(S(0));
    for (int s = 0; s < horizon; ++s) {
        const auto& routing = fwd.routings[static_cast<size_t>(s)];
        const auto& sel = obj.selections[static_cast<size_t>(s)];
        std::vector<int64_t> idx;
        if (obj.token_subset.empty()) {
            for (int t = 0; t < routing.tokens(); ++t) {
                for (int j = 0; j < obj.k; ++j) {
                    idx.push_back(static_cast<int64_t>(t) * n_modules +
                                  sel[static_cast<size_t>(t) * obj.k + j]);
                }
            }
        } else {
            for (int t : obj.token_subset) {
                DNA_CHECK(t >= 0 && t < routing.tokens(),
                          "dream objective: token " << t << " out of range");
                for (int j = 0; j < obj.k; ++j) {
                    idx.push_back(static_cast<int64_t>(t) * n_modules +
                                  sel[static_cast<size_t>(t) * obj.k + j]);
                }
            }
        }
        const Tensor<S>& source = obj.use_logits ? routing.logits : routing.rho;
        total = add(total, sum_all(gather_flat(source, idx, Shape{static_cast<int>(idx.size())})));
    }
    return total;
}

namespace detail {

inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

// Affine resample (rotation, scale, integer jitter) with bilinear
// interpolation and reflect padding, composed from differentiable gathers.
template <typename S>
Tensor<S> bilinear_warp(const Tensor<S>& image, double angle_rad, double zoom, double shift_y,
                        double shift_x) {
    const int n = image.dim(1);
    const int64_t plane = static_cast<int64_t>(n) * n;
    const double cy = (n - 1) / 2.0, cx = (n - 1) / 2.0;
    const double ca = std::cos(angle_rad), sa = std::sin(angle_rad);
    const size_t count = static_cast<size_t>(3) * n * n;
    std::array<std::vector<int64_t>, 4> idx;
    std::array<Tensor<S>, 4> weights;
    for (auto& v : idx) v.resize(count);
    for (auto& w : weights) w = Tensor<S>(Shape{3, n, n});
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double u = x - cx, v = y - cy;
            const double sx = cx + (ca * u + sa * v) / zoom - shift_x;
            const double sy = cy + (-sa * u + ca * v) / zoom - shift_y;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            const int xs[2] = {reflect_index(x0, n), reflect_index(x0 + 1, n)};
            const int ys[2] = {reflect_index(y0, n), reflect_index(y0 + 1, n)};
            const double ws[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
            for (int c = 0; c < 3; ++c) {
                const size_t out = static_cast<size_t>(c) * plane + static_cast<size_t>(y) * n + x;
                for (int q = 0; q < 4; ++q) {
                    idx[static_cast<size_t>(q)][out] =
                        c * plane + static_cast<int64_t>(ys[q / 2]) * n + xs[q % 2];
                    weights[static_cast<size_t>(q)].value()[out] = static_cast<S>(ws[q]);
                }
            }
        }
    }
    Tensor<S> out;
    for (int q = 0; q < 4; ++q) {
        const Tensor<S> part = mul(gather_flat(image, idx[static_cast<size_t>(q)], image.shape()),
                                   weights[static_cast<size_t>(q)]);
        out = q == 0 ? part : add(out, part);
    }
    return out;
}

}  // namespace detail

template <typename S>
struct DreamResult {
    std::vector<double> image;            // final render, context patches restored
    std::vector<double> objective_trace;  // objective value per step, then final
    double initial_objective = 0.0;       // clean pass at step 0
    double final_objective = 0.0;         // clean pass after the last update
};

// Gradient ascent on the routing objective through the Fourier
// parametrization, with the regularization pipeline: per-pass random affine
// transform, color shift, decaying per-pixel noise, and a total-variation
// penalty. Context patches are overwritten with reference pixels after each
// render.
template <typename S>
DreamResult<S> dream(DnaModel<S>& model, const DreamObjective& obj, const Example& reference,
                     const DreamRunConfig& cfg, uint64_t seed) {
    const DnaConfig& mc = model.config();
    DNA_CHECK(mc.task == TaskKind::VisionClassify, "dream: model task must be vision-classify");
    const int side = mc.image_size;
    DNA_CHECK(is_power_of_two(side), "dream: image side must be a power of two, got " << side);
    Rng rng(seed);
    Rng init_rng = rng.fork(1);
    Rng transform_rng = rng.fork(2);

    // Freeze the model for the run, restoring the caller's flags afterwards.
    std::vector<std::pair<Tensor<S>*, bool>> saved_flags;
    for (auto& p : model.named_parameters()) {
        saved_flags.emplace_back(p.tensor, p.tensor->requires_grad());
        p.tensor->set_requires_grad(false);
    }
    DreamParams<S> params = DreamParams<S>::init(side, cfg.init_scale, init_rng);
    auto theta_params = params.named_parameters();
    AdamW<S> opt(theta_params, {0.9, 0.999, 1e-8, 0.0});

    // Reference image and the patch clamp mask (1 = dreamed, 0 = clamped).
    const int64_t plane = static_cast<int64_t>(side) * side;
    DNA_CHECK(static_cast<int64_t>(reference.pixels.size()) == 3 * plane,
              "dream: reference image has " << reference.pixels.size() << " scalars, expected "
                                            << 3 * plane);
    Tensor<S> ref(Shape{3, side, side});
    for (size_t i = 0; i < reference.pixels.size(); ++i) {
        ref.value()[i] = static_cast<S>(reference.pixels[i]);
    }
    const bool has_context = !obj.context_patches.empty();
    Tensor<S> mask(Shape{3, side, side}, S(1));
    Tensor<S> inv_mask(Shape{3, side, side}, S(0));
    if (has_context) {
        const int grid = side / mc.patch_size;
        for (int p : obj.context_patches) {
            DNA_CHECK(p >= 0 && p < grid * grid, "dream: context patch " << p << " out of range");
            const int py = p / grid, px = p % grid;
            for (int c = 0; c < 3; ++c) {
                for (int dy = 0; dy < mc.patch_size; ++dy) {
                    for (int dx = 0; dx < mc.patch_size; ++dx) {
                        const size_t i = static_cast<size_t>(c) * plane +
                                         static_cast<size_t>(py * mc.patch_size + dy) * side +
                                         (px * mc.patch_size + dx);
                        mask.value()[i] = S(0);
                        inv_mask.value()[i] = S(1);
                    }
                }
            }
        }
    }

    auto merged_image = [&](const DreamParams<S>& p) {
        Tensor<S> img = dream_render(p);
        if (has_context) img = add(mul(img, mask), mul(ref, inv_mask));
        return img;
    };
    auto clean_objective = [&]() {
        const Tensor<S> img = merged_image(params);
        return static_cast<double>(dream_objective(model, img, obj).item());
    };

    DreamResult<S> result;
    result.initial_objective = clean_objective();

    for (int step = 0; step < cfg.steps; ++step) {
        for (auto& p : theta_params) p.tensor->zero_grad();
        Graph<S> graph;
        Tensor<S> img = merged_image(params);
        Tensor<S> transformed = img;
        if (cfg.transforms) {
            const double angle = transform_rng.uniform(-1.0, 1.0) * cfg.rotation_deg *
                                 3.141592653589793 / 180.0;
            const double zoom = 1.0 + transform_rng.uniform(-1.0, 1.0) * cfg.scale_pct / 100.0;
            const double jy = cfg.jitter_px > 0
                                  ? transform_rng.uniform_int(2 * cfg.jitter_px + 1) - cfg.jitter_px
                                  : 0;
            const double jx = cfg.jitter_px > 0
                                  ? transform_rng.uniform_int(2 * cfg.jitter_px + 1) - cfg.jitter_px
                                  : 0;
            transformed = detail::bilinear_warp(transformed, angle, zoom, jy, jx);
        }
        if (cfg.color_shift) {
            // e^sigma_c * Theta_c + eps_c, redrawn every pass, clamped at +/-3
            Tensor<S> mul_c(Shape{3, side, side});
            Tensor<S> add_c(Shape{3, side, side});
            for (int c = 0; c < 3; ++c) {
                const double sigma = std::clamp(transform_rng.normal(), -3.0, 3.0);
                const double eps = std::clamp(transform_rng.normal(), -3.0, 3.0);
                for (int64_t i = 0; i < plane; ++i) {
                    mul_c.value()[static_cast<size_t>(c * plane + i)] =
                        static_cast<S>(std::exp(sigma));
                    add_c.value()[static_cast<size_t>(c * plane + i)] = static_cast<S>(eps);
                }
            }
            transformed = add(mul(transformed, mul_c), add_c);
        }
        if (cfg.noise_start > 0.0) {
            const double variance =
                cfg.noise_start * (1.0 - static_cast<double>(step) / static_cast<double>(cfg.steps));
            if (variance > 0.0) {
                const double stddev = std::sqrt(variance);
                Tensor<S> noise(Shape{3, side, side});
                for (auto& v : noise.value()) {
                    v = static_cast<S>(transform_rng.normal() * stddev);
                }
                transformed = add(transformed, noise);
            }
        }
        Tensor<S> objective = dream_objective(model, transformed, obj);
        const double objective_value = static_cast<double>(objective.item());
        DNA_CHECK(std::isfinite(objective_value),
                  "dream: objective diverged (non-finite) at step " << step);
        result.objective_trace.push_back(objective_value);
        Tensor<S> loss = scale(objective, S(-1));
        if (cfg.tv_coeff > 0.0) {
            loss = add(loss, scale(total_variation(img), static_cast<S>(cfg.tv_coeff)));
        }
        graph.backward(loss);
        opt.step(cfg.lr);
    }

    result.final_objective = clean_objective();
    result.objective_trace.push_back(result.final_objective);

    Tensor<S> final_img = dream_render(params);
    result.image.assign(final_img.value().begin(), final_img.value().end());
    if (has_context) {
        for (size_t i = 0; i < result.image.size(); ++i) {
            if (inv_mask.value()[i] == S(1)) {
                result.image[i] = reference.pixels[i];  // bit-identical context
            }
        }
    }
    for (auto& [tensor, flag] : saved_flags) tensor->set_requires_grad(flag);
    return result;
}

}  // namespace dna
