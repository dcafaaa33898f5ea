#include "dna/verify.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "dna/analytics.hpp"
#include "dna/data.hpp"
#include "dna/dreaming.hpp"
#include "dna/model.hpp"
#include "dna/serialize.hpp"
#include "dna/trainer.hpp"
#include "testing/finite_diff.hpp"
#include "testing/model_reference.hpp"

namespace dna::verify {

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using CriterionFn = std::function<Outcome()>;

// ---------------------------------------------------------------------------
// 1. dense-reduction equivalence
// ---------------------------------------------------------------------------

Outcome dense_reduction() {
    const auto t0 = std::chrono::steady_clock::now();
    DnaConfig cfg;
    cfg.task = TaskKind::CausalLm;
    cfg.d_embed = 16;
    cfg.d_mlp = 32;
    cfg.n_head = 2;
    cfg.n_backbone = 1;
    cfg.s_max = 4;
    cfg.top_k = 1;
    cfg.module_kinds = {ModuleKind::TransformerBlock, ModuleKind::TransformerBlock,
                        ModuleKind::TransformerBlock};
    cfg.vocab_size = 24;
    cfg.context = 12;
    DnaModel<double> model(cfg, 2024);
    ForwardOptions<double> opts;
    opts.frozen = FrozenRouting::StepIndex;

    double worst = 0.0;
    for (uint64_t batch = 0; batch < 20; ++batch) {
        Rng rng(500 + batch);
        Example ex;
        for (int i = 0; i <= cfg.context; ++i) ex.tokens.push_back(rng.uniform_int(cfg.vocab_size));
        auto fwd = model.forward_sequence(ex, opts);
        auto want = testing::dense_reference_logits(model, {0, 1, 2}, ex);
        for (size_t i = 0; i < want.size(); ++i) {
            const double denom = std::max({std::fabs(want[i]), std::fabs(fwd.logits.value()[i]),
                                           1e-12});
            worst = std::max(worst, std::fabs(fwd.logits.value()[i] - want[i]) / denom);
        }
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << "max relative logit error " << worst << " over 20 random batches (tolerance 1e-5, "
       << seconds << " s of a 60 s budget)";
    return {worst < 1e-5 && seconds < 60.0, os.str()};
}

// ---------------------------------------------------------------------------
// 2. identity invariance
// ---------------------------------------------------------------------------

Outcome identity_invariance() {
    DnaConfig cfg;
    cfg.task = TaskKind::CausalLm;
    cfg.d_embed = 16;
    cfg.d_mlp = 32;
    cfg.n_head = 2;
    cfg.n_backbone = 2;
    cfg.s_max = 6;
    cfg.top_k = 2;
    cfg.module_kinds = make_pool(2, 1, 1, 2);
    cfg.vocab_size = 24;
    cfg.context = 12;
    DnaModel<double> routed(cfg, 77);
    DnaConfig bare = cfg;
    bare.s_max = cfg.n_backbone;  // backbone straight into the output node
    DnaModel<double> backbone_only(bare, 77);

    for (uint64_t trial = 0; trial < 5; ++trial) {
        Rng rng(31 + trial);
        Example ex;
        for (int i = 0; i <= cfg.context; ++i) ex.tokens.push_back(rng.uniform_int(cfg.vocab_size));
        ForwardOptions<double> frozen;
        frozen.frozen = FrozenRouting::AllIdentity;
        auto a = routed.forward_sequence(ex, frozen);
        ForwardOptions<double> plain;
        auto b = backbone_only.forward_sequence(ex, plain);
        if (a.logits.value() != b.logits.value()) {
            return {false, "routed all-identity stack is not bitwise equal to backbone+output"};
        }
    }
    return {true, "all-identity routed stack is a bitwise no-op on 5 random sequences"};
}

// ---------------------------------------------------------------------------
// 3. gradient integrity
// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
    DnaConfig cfg;
    cfg.task = TaskKind::CausalLm;
    cfg.d_embed = 8;
    cfg.d_mlp = 16;
    cfg.n_head = 2;
    cfg.n_backbone = 1;
    cfg.s_max = 3;  // 2 routed steps
    cfg.top_k = 2;
    cfg.module_kinds = {ModuleKind::TransformerBlock, ModuleKind::MlpOnly, ModuleKind::Identity};
    cfg.vocab_size = 7;
    cfg.context = 5;
    DnaModel<double> model(cfg, 4242);

    Rng rng(9);
    Example ex;
    for (int i = 0; i <= cfg.context; ++i) ex.tokens.push_back(rng.uniform_int(cfg.vocab_size));
    std::vector<int> targets(ex.tokens.begin() + 1, ex.tokens.end());

    auto loss_value = [&] {
        ForwardOptions<double> opts;
        auto fwd = model.forward_sequence(ex, opts);
        return cross_entropy_logits(fwd.logits, targets).item();
    };
    auto run_grad = [&] {
        model.zero_grad();
        Graph<double> graph;
        ForwardOptions<double> opts;
        auto fwd = model.forward_sequence(ex, opts);
        auto loss = cross_entropy_logits(fwd.logits, targets);
        graph.backward(loss);
    };
    std::vector<std::pair<std::string, Tensor<double>*>> params;
    for (auto& p : model.named_parameters()) params.emplace_back(p.name, p.tensor);
    auto report = testing::check_gradients(loss_value, run_grad, params, 1e-5);

    // router gradients must actually flow
    bool router_grad_nonzero = false;
    for (auto& [name, t] : params) {
        if (name.rfind("router.", 0) == 0) {
            for (const double g : t->grad()) router_grad_nonzero = router_grad_nonzero || g != 0.0;
        }
    }
    std::ostringstream os;
    os << "max relative gradient error " << report.max_rel_err << " (worst " << report.worst_param
       << "), router grads " << (router_grad_nonzero ? "nonzero" : "ZERO")
       << " (tolerance 1e-4, every parameter checked)";
    return {report.max_rel_err < 1e-4 && router_grad_nonzero, os.str()};
}

// ---------------------------------------------------------------------------
// 4. skip-ratio control
// ---------------------------------------------------------------------------

Outcome skip_ratio_control() {
    const auto t0 = std::chrono::steady_clock::now();
    const int n_modules = 8, k = 2, t_count = 256, updates = 2000, n_steps = 2;
    const double r_target = 0.3, u = 0.001;
    const std::vector<int> identity{6, 7};
    Rng rng(2025);
    std::vector<Router<double>> routers;
    for (int s = 0; s < n_steps; ++s) {
        Router<double> router;
        router.step = s;
        router.weight = Tensor<double>(Shape{16, n_modules});
        for (auto& v : router.weight.value()) v = rng.normal() * 0.02;
        routers.push_back(std::move(router));
    }
    BiasController ctrl(n_steps, n_modules, identity, k, r_target, u);

    Rng stream(7);
    auto run_pass = [&](bool update) {
        double identity_selected = 0, total = 0;
        for (int s = 0; s < n_steps; ++s) {
            Tensor<double> h(Shape{t_count, 16});
            for (auto& v : h.value()) v = stream.normal();
            auto routing = route(routers[static_cast<size_t>(s)], h, ctrl, k);
            ctrl.observe(s, routing.selected, k);
            for (int m : routing.selected) {
                total += 1;
                if (m >= 6) identity_selected += 1;
            }
        }
        if (update) ctrl.update();
        return identity_selected / total;
    };

    for (int step = 0; step < updates; ++step) run_pass(true);
    // measurement pass with the converged biases
    const double fraction = run_pass(false);
    const double compute = 1.0 - fraction;  // per-selection average of normalized compute
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << "identity fraction " << fraction << " (target band [0.25, 0.35]), mean normalized "
       << "compute " << compute << " (band [0.65, 0.75]) after 2000 updates, " << seconds
       << " s of a 300 s budget";
    return {fraction >= 0.25 && fraction <= 0.35 && compute >= 0.65 && compute <= 0.75 &&
                seconds < 300.0,
            os.str()};
}

// ---------------------------------------------------------------------------
// 5. random-init path law
// ---------------------------------------------------------------------------

Outcome random_init_path_law() {
    DnaConfig cfg;
    cfg.task = TaskKind::CausalLm;
    cfg.d_embed = 32;
    cfg.d_mlp = 64;
    cfg.n_head = 2;
    cfg.n_backbone = 1;
    cfg.s_max = 9;  // 8 routed steps
    cfg.top_k = 1;
    cfg.module_kinds = make_pool(6, 2, 2, 2);  // 12 modules
    cfg.vocab_size = 96;
    cfg.context = 64;
    DnaModel<float> model(cfg, 31415);

    Rng rng(161803);
    std::vector<SequenceTrace> traces;
    ForwardOptions<float> opts;
    opts.record_trace = true;
    int64_t tokens = 0;
    while (tokens < 100000) {
        Example ex;
        for (int i = 0; i <= cfg.context; ++i) ex.tokens.push_back(rng.uniform_int(cfg.vocab_size));
        auto fwd = model.forward_sequence(ex, opts);
        tokens += fwd.trace.tokens;
        traces.push_back(std::move(fwd.trace));
    }
    auto stats = rank_frequency(traces);
    auto fit = powerlaw_fit(stats, {});
    std::ostringstream os;
    os << "rank-frequency slope " << fit.slope << " over ranks [" << fit.rank_lo << ", "
       << fit.rank_hi << "], r^2 " << fit.r_squared << ", " << stats.distinct()
       << " distinct paths from " << tokens << " tokens (band [-1.3, -0.7])";
    return {fit.slope >= -1.3 && fit.slope <= -0.7, os.str()};
}

// ---------------------------------------------------------------------------
// 6. effective top-k analytics
// ---------------------------------------------------------------------------

Outcome effective_topk_checks() {
    const double one_hot = effective_topk({123, 0, 0, 0, 0}, 1.5);
    std::vector<double> uniform(16, 9.0);
    const double flat = effective_topk(uniform, 1.5);
    bool ok = std::fabs(one_hot - 1.0) < 1e-9 && std::fabs(flat - 4.0) < 1e-9;

    const std::vector<double> counts{8, 4, 2, 1, 0, 3};
    const double base = effective_topk(counts, 1.5);
    for (const double mult : {2.0, 7.0, 1024.0}) {
        std::vector<double> scaled;
        for (const double c : counts) scaled.push_back(c * mult);
        ok = ok && effective_topk(scaled, 1.5) == base;  // exact
    }
    std::ostringstream os;
    os << "one-hot -> " << one_hot << ", uniform(16) -> " << flat
       << ", scale invariance exact: " << (ok ? "yes" : "no");
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 7. sparse-attention correctness
// ---------------------------------------------------------------------------

Outcome sparse_attention() {
    // (a) routed-subset attention equals the dense reference on the subset
    ModuleSpec spec;
    spec.kind = ModuleKind::TransformerBlock;
    spec.d_embed = 16;
    spec.d_mlp = 32;
    spec.n_head = 2;
    spec.causal = true;
    auto params = init_parameters<double>(spec, 55);
    testing::RefBlock blk;
    blk.has_attention = true;
    blk.has_mlp = true;
    blk.d = 16;
    blk.d_mlp = 32;
    blk.n_head = 2;
    blk.attn_ln = params.attn_ln.value();
    blk.wq = params.wq.value();
    blk.wk = params.wk.value();
    blk.wv = params.wv.value();
    blk.wo = params.wo.value();
    blk.mlp_ln = params.mlp_ln.value();
    blk.w1 = params.w1.value();
    blk.w2 = params.w2.value();

    Rng rng(606);
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        const int full = 12;
        Tensor<double> h(Shape{full, 16});
        for (auto& v : h.value()) v = rng.normal();
        std::vector<int> subset;
        for (int i = 0; i < full; ++i) {
            if (rng.uniform() < 0.5) subset.push_back(i);
        }
        if (subset.empty()) subset.push_back(rng.uniform_int(full));
        auto block = gather_rows(h, subset);
        auto got = module_forward(spec, params, block, subset);
        std::vector<double> rows;
        for (int r : subset) {
            for (int c = 0; c < 16; ++c) rows.push_back(h.at(r, c));
        }
        auto want = testing::ref_block_forward(blk, rows, static_cast<int>(subset.size()), subset,
                                               true);
        for (size_t i = 0; i < want.size(); ++i) {
            worst = std::max(worst, std::fabs(got.value()[i] - want[i]));
        }
    }

    // (b) causal perturbation across 100 random routings of the full model
    DnaConfig cfg;
    cfg.task = TaskKind::CausalLm;
    cfg.d_embed = 16;
    cfg.d_mlp = 32;
    cfg.n_head = 2;
    cfg.n_backbone = 1;
    cfg.s_max = 4;
    cfg.top_k = 2;
    cfg.module_kinds = make_pool(2, 1, 1, 1);
    cfg.vocab_size = 30;
    cfg.context = 10;
    DnaModel<double> model(cfg, 99);
    ForwardOptions<double> opts;
    int causal_failures = 0;
    for (uint64_t trial = 0; trial < 100; ++trial) {
        Rng r2(7000 + trial);
        Example ex;
        for (int i = 0; i <= cfg.context; ++i) ex.tokens.push_back(r2.uniform_int(cfg.vocab_size));
        auto base = model.forward_sequence(ex, opts);
        const int j = 1 + r2.uniform_int(cfg.context - 2);
        Example perturbed = ex;
        for (size_t i = static_cast<size_t>(j) + 1; i + 1 < perturbed.tokens.size(); ++i) {
            perturbed.tokens[i] = r2.uniform_int(cfg.vocab_size);
        }
        auto moved = model.forward_sequence(perturbed, opts);
        for (int i = 0; i <= j; ++i) {
            for (int c = 0; c < cfg.vocab_size; ++c) {
                if (std::fabs(base.logits.at(i, c) - moved.logits.at(i, c)) > 1e-12) {
                    ++causal_failures;
                }
            }
        }
    }
    std::ostringstream os;
    os << "max sparse-vs-dense deviation " << worst << " (tolerance 1e-10), causal perturbation "
       << "violations " << causal_failures << "/100 routings";
    return {worst < 1e-10 && causal_failures == 0, os.str()};
}

// ---------------------------------------------------------------------------
// 8. desk-scale learnability
// ---------------------------------------------------------------------------

Outcome learnability() {
    const auto t0 = std::chrono::steady_clock::now();
    // vision: separable shapes
    auto data = make_shapes_dataset(128, 21, {32, 4, 0, 0.05, 9, 9});
    DnaConfig cfg;
    cfg.task = TaskKind::VisionClassify;
    cfg.d_embed = 32;
    cfg.d_mlp = 64;
    cfg.n_head = 2;
    cfg.n_backbone = 1;
    cfg.s_max = 4;
    cfg.top_k = 1;
    cfg.module_kinds = make_pool(2, 0, 1, 1);
    cfg.image_size = 32;
    cfg.patch_size = 8;
    cfg.n_classes = 4;
    DnaModel<float> vision_model(cfg, 1);
    Schedule sched;
    sched.kind = ScheduleKind::WarmupCosine;
    sched.warmup_steps = 50;
    sched.total_steps = 2000;
    sched.lr_peak = 2e-2;
    TrainerConfig tc;
    tc.steps = 2000;
    tc.batch_size = 64;
    tc.seed = 5;
    tc.weight_decay = 0.01;
    train(vision_model, data, sched, tc);
    const double accuracy = vision_accuracy(vision_model, data);
    const double vision_minutes =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

    // language: deterministic periodic stream
    const auto t1 = std::chrono::steady_clock::now();
    DnaConfig lm;
    lm.task = TaskKind::CausalLm;
    lm.d_embed = 32;
    lm.d_mlp = 64;
    lm.n_head = 2;
    lm.n_backbone = 1;
    lm.s_max = 4;
    lm.top_k = 1;
    lm.module_kinds = make_pool(2, 0, 1, 1);
    lm.vocab_size = 64;
    lm.context = 48;
    auto text = make_periodic_dataset(4096, lm.context, 64, 64, 31);
    DnaModel<float> lm_model(lm, 2);
    Schedule lm_sched;
    lm_sched.kind = ScheduleKind::WarmupStableDecay;
    lm_sched.warmup_steps = 50;
    lm_sched.total_steps = 1000;
    lm_sched.lr_peak = 3e-3;
    TrainerConfig ltc;
    ltc.steps = 1000;
    ltc.batch_size = 16;
    ltc.seed = 6;
    auto lm_result = train(lm_model, text, lm_sched, ltc);
    const double lm_minutes =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count() / 60.0;

    std::ostringstream os;
    os << "vision train accuracy " << accuracy << " in 2000 steps (" << vision_minutes
       << " min), char-LM loss " << lm_result.final_loss << " nats in 1000 steps (" << lm_minutes
       << " min); thresholds 0.95 / 0.1 nats / 15 min each";
    return {accuracy >= 0.95 && lm_result.final_loss < 0.1 && vision_minutes < 15.0 &&
                lm_minutes < 15.0,
            os.str()};
}

// ---------------------------------------------------------------------------
// 9. dreaming pipeline
// ---------------------------------------------------------------------------

Outcome dreaming_pipeline() {
    // (a) zero spectrum renders uniform 0.5 gray
    Rng zero_rng(1);
    auto zero_params = DreamParams<double>::init(16, 0.0, zero_rng);
    auto gray = dream_render(zero_params);
    for (const double v : gray.value()) {
        if (v != 0.5) return {false, "render(theta=0) is not uniform 0.5 gray"};
    }

    // (b) render gradient finite differences
    Rng fd_rng(5);
    auto params = DreamParams<double>::init(8, 0.3, fd_rng);
    Tensor<double> probe(Shape{3, 8, 8});
    for (auto& v : probe.value()) v = fd_rng.normal();
    auto loss_value = [&] { return sum_all(mul(dream_render(params), probe)).item(); };
    auto run_grad = [&] {
        for (auto& t : params.theta) t.zero_grad();
        Graph<double> g;
        auto loss = sum_all(mul(dream_render(params), probe));
        g.backward(loss);
    };
    auto report = testing::check_gradients(
        loss_value, run_grad,
        {{"r", &params.theta[0]}, {"g", &params.theta[1]}, {"b", &params.theta[2]}}, 1e-5);
    if (report.max_rel_err >= 1e-3) {
        std::ostringstream os;
        os << "render gradient finite-difference error " << report.max_rel_err
           << " exceeds 1e-3";
        return {false, os.str()};
    }

    // Frozen toy model shared by (c) and (d): briefly trained on shapes with a
    // zeroed positional table so the routers key on patch content, which is
    // what survives the jitter/rotation/scale augmentation.
    DnaConfig cfg;
    cfg.task = TaskKind::VisionClassify;
    cfg.d_embed = 16;
    cfg.d_mlp = 32;
    cfg.n_head = 2;
    cfg.n_backbone = 1;
    cfg.s_max = 4;
    cfg.top_k = 1;
    cfg.module_kinds = make_pool(2, 1, 0, 1);
    cfg.image_size = 32;
    cfg.patch_size = 8;
    cfg.n_classes = 4;
    DnaModel<double> model(cfg, 2718);
    for (auto& v : model.input_node().pos.value()) v = 0.0;
    model.input_node().pos.set_requires_grad(false);
    {
        auto data = make_shapes_dataset(128, 21, {32, 4, 2, 0.08});
        Schedule sched;
        sched.kind = ScheduleKind::WarmupCosine;
        sched.warmup_steps = 30;
        sched.total_steps = 300;
        sched.lr_peak = 1e-2;
        TrainerConfig tc;
        tc.steps = 300;
        tc.batch_size = 32;
        tc.seed = 9;
        tc.weight_decay = 0.01;
        train(model, data, sched, tc);
    }
    const Example ref = make_shapes_dataset(128, 21, {32, 4, 2, 0.08}).vision[3];
    auto obj = record_dream_objective(model, ref, -1);

    // (c) regularization disabled: the clean objective never decreases
    DreamRunConfig clean;
    clean.steps = 256;
    clean.lr = 1e-3;
    clean.tv_coeff = 0.0;
    clean.transforms = false;
    clean.color_shift = false;
    clean.noise_start = 0.0;
    clean.init_scale = 0.01;
    auto ascent = dream(model, obj, ref, clean, 100);
    int decreases = 0;
    for (size_t i = 1; i < ascent.objective_trace.size(); ++i) {
        if (ascent.objective_trace[i] <
            ascent.objective_trace[i - 1] -
                1e-12 * std::max(1.0, std::fabs(ascent.objective_trace[i - 1]))) {
            ++decreases;
        }
    }
    if (decreases > 0 || ascent.final_objective < ascent.initial_objective) {
        std::ostringstream os;
        os << "pure ascent decreased the clean objective " << decreases
           << " times over 256 steps";
        return {false, os.str()};
    }

    // (d) the criterion's regularizer set (TV 0.01, jitter 6, rotation 10 deg,
    // scale 10%, noise 1 -> 0): >= 20% improvement on >= 8/10 seeds. The step
    // count and learning rate come from the implementation's own baseline.
    int improved = 0;
    double worst_ratio = 1e300;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        DreamRunConfig reg;
        reg.steps = 2048;
        reg.lr = 3e-2;
        reg.tv_coeff = 0.01;
        reg.jitter_px = 6;
        reg.rotation_deg = 10.0;
        reg.scale_pct = 10.0;
        reg.noise_start = 1.0;
        reg.color_shift = false;  // not part of this criterion's regularizer list
        reg.init_scale = 0.01;
        auto run = dream(model, obj, ref, reg, 1000 + seed);
        const double ratio = run.final_objective / std::max(run.initial_objective, 1e-12);
        worst_ratio = std::min(worst_ratio, ratio);
        if (ratio >= 1.2) ++improved;
    }
    std::ostringstream os;
    os << "gray render exact, render FD err " << report.max_rel_err << ", 0 ascent decreases, "
       << improved << "/10 regularized seeds improved >= 20% (worst ratio " << worst_ratio << ")";
    return {improved >= 8, os.str()};
}

// ---------------------------------------------------------------------------
// 10. bias decoupling
// ---------------------------------------------------------------------------

Outcome bias_decoupling() {
    DnaConfig cfg;
    cfg.task = TaskKind::VisionClassify;
    cfg.d_embed = 16;
    cfg.d_mlp = 32;
    cfg.n_head = 2;
    cfg.n_backbone = 1;
    cfg.s_max = 4;
    cfg.top_k = 2;
    cfg.module_kinds = make_pool(2, 0, 1, 1);
    cfg.image_size = 32;
    cfg.patch_size = 8;
    cfg.n_classes = 4;
    cfg.skip_target_r = 0.3;
    cfg.skip_update_u = 0.001;
    DnaModel<float> model(cfg, 404);
    auto data = make_shapes_dataset(64, 17, {32, 4, 4, 0.1});
    Schedule sched;
    sched.warmup_steps = 20;
    sched.total_steps = 500;
    sched.lr_peak = 3e-3;
    TrainerConfig tc;
    tc.steps = 500;
    tc.batch_size = 8;
    tc.seed = 11;

    int bias_violations = 0;
    int recombine_mismatches = 0;
    int audited_steps = 0;
    std::vector<std::vector<double>> last_post;
    TrainHooks<float> hooks;
    hooks.audit_every = 50;
    hooks.after_step = [&](const TrainStepInfo<float>& info) {
        if (info.bias_pre != info.bias_post_opt) ++bias_violations;
        if (!last_post.empty() && info.bias_pre != last_post) ++bias_violations;
        last_post = info.bias_post_update;
        if (info.audit == nullptr) return;
        for (const auto& rec : *info.audit) {
            ++audited_steps;
            // rebuild the combine inputs and rerun with biases zeroed
            Tensor<float> h_prev = Tensor<float>::from(
                {static_cast<int>(rec.h_prev.size()) / cfg.d_embed, cfg.d_embed}, rec.h_prev);
            StepRouting<float> routing = rec.routing;
            routing.bias_snapshot.assign(routing.bias_snapshot.size(), 0.0);
            std::vector<ModuleGroupOutput<float>> groups;
            for (const auto& g : rec.groups) {
                ModuleGroupOutput<float> mg;
                mg.module_index = g.module_index;
                mg.is_identity = g.is_identity;
                mg.token_rows = g.rows;
                if (!g.is_identity) {
                    mg.output = Tensor<float>::from(
                        {static_cast<int>(g.rows.size()), cfg.d_embed}, g.output);
                }
                groups.push_back(std::move(mg));
            }
            auto redone = combine_step(h_prev, routing, groups);
            if (redone.value() != rec.h_next) ++recombine_mismatches;
        }
    };
    train(model, data, sched, tc, nullptr, hooks);

    std::ostringstream os;
    os << "bias moved outside bias_update " << bias_violations << " times over 500 steps; "
       << audited_steps << " audited combine_steps recomputed with zeroed biases, "
       << recombine_mismatches << " bitwise mismatches";
    return {bias_violations == 0 && recombine_mismatches == 0 && audited_steps > 0, os.str()};
}

struct Criterion {
    const char* name;
    CriterionFn fn;
};

const std::vector<Criterion>& registry() {
    static const std::vector<Criterion> criteria = {
        {"dense-reduction", dense_reduction},
        {"identity-invariance", identity_invariance},
        {"gradient-integrity", gradient_integrity},
        {"skip-ratio-control", skip_ratio_control},
        {"random-init-path-law", random_init_path_law},
        {"effective-topk", effective_topk_checks},
        {"sparse-attention", sparse_attention},
        {"learnability", learnability},
        {"dreaming-pipeline", dreaming_pipeline},
        {"bias-decoupling", bias_decoupling},
    };
    return criteria;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const std::string& filter, std::ostream* live) {
    std::vector<CriterionResult> results;
    for (const auto& criterion : registry()) {
        if (!filter.empty() && std::string(criterion.name).find(filter) == std::string::npos) {
            continue;
        }
        CriterionResult r;
        r.name = criterion.name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            Outcome outcome = criterion.fn();
            r.pass = outcome.pass;
            r.detail = outcome.detail;
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (live != nullptr) {
            *live << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.seconds << " s)  "
                  << r.detail << "\n"
                  << std::flush;
        }
        results.push_back(std::move(r));
    }
    return results;
}

bool all_passed(const std::vector<CriterionResult>& results) {
    if (results.empty()) return false;
    for (const auto& r : results) {
        if (!r.pass) return false;
    }
    return true;
}

}  // namespace dna::verify
