#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dna/nn.hpp"
#include "dna/routing.hpp"
#include "dna/trace.hpp"

namespace dna {

// Full architecture description: pool composition, backbone depth, step
// budget, top-k, skip-control targets.
struct DnaConfig {
    TaskKind task = TaskKind::VisionClassify;
    int d_embed = 32;
    int d_mlp = 64;
    int n_head = 2;
    int n_backbone = 1;  // dense steps applied to all tokens
    int s_max = 5;       // total steps; routed steps = s_max - n_backbone
    int top_k = 1;
    std::vector<ModuleKind> module_kinds;

    // vision task
    int image_size = 32;
    int patch_size = 8;
    int n_classes = 4;

    // language task
    int vocab_size = 128;
    int context = 128;

    // identity-bias controller (0 speed = off)
    double skip_target_r = 0.0;
    double skip_update_u = 0.0;

    int n_modules() const { return static_cast<int>(module_kinds.size()); }
    int n_routed() const { return s_max - n_backbone; }

    std::vector<int> identity_indices() const {
        std::vector<int> out;
        for (int i = 0; i < n_modules(); ++i) {
            if (module_kinds[static_cast<size_t>(i)] == ModuleKind::Identity) out.push_back(i);
        }
        return out;
    }
    int n_identity() const { return static_cast<int>(identity_indices().size()); }

    ModuleSpec module_spec(int index) const {
        ModuleSpec s;
        s.kind = module_kinds.at(static_cast<size_t>(index));
        s.d_embed = d_embed;
        s.d_mlp = d_mlp;
        s.n_head = n_head;
        s.causal = task == TaskKind::CausalLm;
        return s;
    }

    ModuleSpec backbone_spec() const {
        ModuleSpec s;
        s.kind = ModuleKind::TransformerBlock;
        s.d_embed = d_embed;
        s.d_mlp = d_mlp;
        s.n_head = n_head;
        s.causal = task == TaskKind::CausalLm;
        return s;
    }

    void validate() const {
        DNA_CHECK(n_modules() > 0, "config: module pool is empty");
        DNA_CHECK(n_backbone >= 0 && s_max >= n_backbone,
                  "config: need s_max >= n_backbone, got s_max=" << s_max << " n_backbone="
                                                                 << n_backbone);
        DNA_CHECK(top_k >= 1 && top_k <= n_modules(),
                  "config: top_k " << top_k << " out of range for " << n_modules() << " modules");
        DNA_CHECK(n_identity() < n_modules(), "config: pool cannot be all identity modules");
        for (int i = 0; i < n_modules(); ++i) module_spec(i).validate();
        backbone_spec().validate();
        if (task == TaskKind::VisionClassify) {
            DNA_CHECK(image_size > 0 && patch_size > 0 && image_size % patch_size == 0,
                      "config: image size " << image_size << " not divisible by patch "
                                            << patch_size);
            DNA_CHECK(n_classes > 1, "config: need at least 2 classes");
        } else {
            DNA_CHECK(vocab_size > 1 && context > 1, "config: vocab/context too small");
        }
        DNA_CHECK(skip_target_r >= 0.0 && skip_target_r < 1.0,
                  "config: skip target must be in [0, 1)");
    }
};

// Canonical pool layouts used by configs: the requested kinds followed by
// n_identity identity modules at the tail.
inline std::vector<ModuleKind> make_pool(int n_transformer, int n_attention, int n_mlp,
                                         int n_identity) {
    std::vector<ModuleKind> kinds;
    kinds.insert(kinds.end(), static_cast<size_t>(n_transformer), ModuleKind::TransformerBlock);
    kinds.insert(kinds.end(), static_cast<size_t>(n_attention), ModuleKind::AttentionOnly);
    kinds.insert(kinds.end(), static_cast<size_t>(n_mlp), ModuleKind::MlpOnly);
    kinds.insert(kinds.end(), static_cast<size_t>(n_identity), ModuleKind::Identity);
    return kinds;
}

// One training / tracing example. Exactly one of the two fields is used,
// depending on the task.
struct Example {
    std::vector<double> pixels;  // [channels, H, W] flattened
    int label = 0;
    std::vector<int> tokens;  // context+1 ids; inputs are [0, T), targets [1, T]
};

using Batch = std::vector<Example>;

enum class FrozenRouting { None, StepIndex, AllIdentity, Custom };

template <typename S>
struct CombineAuditRecord {
    int step = 0;
    std::vector<S> h_prev;
    std::vector<S> h_next;
    StepRouting<S> routing;  // rho detached from any graph
    struct Group {
        int module_index;
        bool is_identity;
        std::vector<int> rows;
        std::vector<S> output;
    };
    std::vector<Group> groups;
};

template <typename S>
struct ForwardOptions {
    bool stochastic = false;
    Rng* rng = nullptr;
    bool record_trace = false;
    bool keep_routings = false;  // retain rho tensors (dreaming objective)
    bool observe_bias = false;   // accumulate controller counters
    FrozenRouting frozen = FrozenRouting::None;
    std::function<int(int routed_step)> frozen_selector;  // for FrozenRouting::Custom
    // Pin selections to recorded values ([step] -> token-major flat T*k list)
    // while rho still comes from the live routers. Used by dreaming.
    const std::vector<std::vector<int>>* forced_selections = nullptr;
    std::vector<CombineAuditRecord<S>>* audit = nullptr;
};

template <typename S>
struct SequenceForward {
    Tensor<S> logits;
    SequenceTrace trace;
    std::vector<StepRouting<S>> routings;
};

template <typename S>
struct NamedParam {
    std::string name;
    Tensor<S>* tensor;
};

// The assembled architecture: input node, dense backbone, per-step routers
// over the module pool, output node.
template <typename S>
class DnaModel {
public:
    DnaModel(DnaConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng input_rng(Rng::derive(seed, 1));
        input_.task = cfg_.task;
        input_.d_embed = cfg_.d_embed;
        input_.image_size = cfg_.image_size;
        input_.patch_size = cfg_.patch_size;
        input_.vocab_size = cfg_.vocab_size;
        input_.context = cfg_.context;
        input_.init(input_rng);

        for (int b = 0; b < cfg_.n_backbone; ++b) {
            backbone_.push_back(init_parameters<S>(cfg_.backbone_spec(),
                                                   Rng::derive(seed, 100 + static_cast<uint64_t>(b))));
        }
        for (int m = 0; m < cfg_.n_modules(); ++m) {
            pool_.push_back(init_parameters<S>(cfg_.module_spec(m),
                                               Rng::derive(seed, 200 + static_cast<uint64_t>(m))));
        }
        for (int s = 0; s < cfg_.n_routed(); ++s) {
            Rng r(Rng::derive(seed, 10000 + static_cast<uint64_t>(s)));
            Router<S> router;
            router.step = s;
            router.init(cfg_.d_embed, cfg_.n_modules(), r);
            routers_.push_back(std::move(router));
        }
        Rng out_rng(Rng::derive(seed, 2));
        output_.task = cfg_.task;
        output_.d_embed = cfg_.d_embed;
        output_.n_out = cfg_.task == TaskKind::VisionClassify ? cfg_.n_classes : cfg_.vocab_size;
        output_.init(out_rng);

        bias_ = BiasController(cfg_.n_routed(), cfg_.n_modules(), cfg_.identity_indices(),
                               cfg_.top_k, cfg_.skip_target_r, cfg_.skip_update_u);
    }

    const DnaConfig& config() const { return cfg_; }
    BiasController& bias_controller() { return bias_; }
    const BiasController& bias_controller() const { return bias_; }
    const Router<S>& router(int s) const { return routers_.at(static_cast<size_t>(s)); }
    const ModuleParams<S>& module_params(int m) const { return pool_.at(static_cast<size_t>(m)); }
    InputNode<S>& input_node() { return input_; }
    OutputNode<S>& output_node() { return output_; }

    std::vector<NamedParam<S>> named_parameters() {
        std::vector<NamedParam<S>> out;
        auto push = [&out](std::string name, Tensor<S>& t) {
            out.push_back({std::move(name), &t});
        };
        if (cfg_.task == TaskKind::VisionClassify) {
            push("input.patch_w", input_.patch_w);
        } else {
            push("input.embed", input_.embed);
        }
        push("input.pos", input_.pos);
        for (int b = 0; b < cfg_.n_backbone; ++b) {
            for_each_module_param(cfg_.backbone_spec(), backbone_[static_cast<size_t>(b)],
                                  [&](const char* n, Tensor<S>& t) {
                                      push("backbone." + std::to_string(b) + "." + n, t);
                                  });
        }
        for (int m = 0; m < cfg_.n_modules(); ++m) {
            for_each_module_param(cfg_.module_spec(m), pool_[static_cast<size_t>(m)],
                                  [&](const char* n, Tensor<S>& t) {
                                      push("pool." + std::to_string(m) + "." + n, t);
                                  });
        }
        for (int s = 0; s < cfg_.n_routed(); ++s) {
            push("router." + std::to_string(s) + ".w", routers_[static_cast<size_t>(s)].weight);
        }
        push("output.w_out", output_.w_out);
        return out;
    }

    void zero_grad() {
        for (auto& p : named_parameters()) p.tensor->zero_grad();
    }

    void set_frozen_parameters(bool frozen) {
        for (auto& p : named_parameters()) p.tensor->set_requires_grad(!frozen);
    }

    // Forward one example. Embeds, runs the dense backbone, then for each
    // routed step: route, group tokens by module (ascending module index),
    // run each module on its tokens only, combine. Every decision lands in
    // the trace when recording.
    SequenceForward<S> forward_sequence(const Example& ex, const ForwardOptions<S>& opts,
                                        int64_t seq_id = 0) {
        return forward_from_embed(embed(ex), opts, seq_id);
    }

    // Forward a [channels, H, W] image tensor directly; gradients flow back to
    // the image (dreaming).
    SequenceForward<S> forward_image(const Tensor<S>& image, const ForwardOptions<S>& opts,
                                     int64_t seq_id = 0) {
        DNA_CHECK(cfg_.task == TaskKind::VisionClassify,
                  "forward_image: model task is " << task_name(cfg_.task));
        return forward_from_embed(input_.forward_image(image), opts, seq_id);
    }

private:
    SequenceForward<S> forward_from_embed(Tensor<S> h, const ForwardOptions<S>& opts,
                                          int64_t seq_id) {
        const int t_count = h.rows();
        std::vector<int> all_positions(static_cast<size_t>(t_count));
        std::iota(all_positions.begin(), all_positions.end(), 0);

        for (int b = 0; b < cfg_.n_backbone; ++b) {
            h = module_forward(cfg_.backbone_spec(), backbone_[static_cast<size_t>(b)], h,
                               all_positions);
        }

        SequenceForward<S> result;
        SequenceTrace& trace = result.trace;
        if (opts.record_trace) {
            trace.seq_id = seq_id;
            trace.tokens = t_count;
            trace.k = effective_k(opts);
            trace.n_modules = cfg_.n_modules();
            trace.ribbons.assign(static_cast<size_t>(t_count), {});
            trace.probs.assign(static_cast<size_t>(t_count), {});
            trace.compute.assign(static_cast<size_t>(t_count), 0);
            trace.identity = cfg_.identity_indices();
            for (int m = 0; m < cfg_.n_modules(); ++m) {
                trace.module_params.push_back(module_param_count(cfg_.module_spec(m)));
            }
        }

        for (int s = 0; s < cfg_.n_routed(); ++s) {
            StepRouting<S> routing = route_step(s, h, opts);
            if (opts.observe_bias) bias_.observe(s, routing.selected, routing.k);

            // Group tokens by selected module, ascending module index, tokens
            // in ascending original position.
            std::vector<std::vector<int>> members(static_cast<size_t>(cfg_.n_modules()));
            for (int t = 0; t < t_count; ++t) {
                const int* sel = routing.token_selection(t);
                for (int j = 0; j < routing.k; ++j) {
                    members[static_cast<size_t>(sel[j])].push_back(t);
                }
            }
            std::vector<ModuleGroupOutput<S>> groups;
            for (int m = 0; m < cfg_.n_modules(); ++m) {
                if (members[static_cast<size_t>(m)].empty()) continue;
                ModuleGroupOutput<S> g;
                g.module_index = m;
                g.token_rows = members[static_cast<size_t>(m)];
                g.is_identity = cfg_.module_kinds[static_cast<size_t>(m)] == ModuleKind::Identity;
                if (!g.is_identity) {
                    const Tensor<S> block = gather_rows(h, g.token_rows);
                    g.output = module_forward(cfg_.module_spec(m), pool_[static_cast<size_t>(m)],
                                              block, g.token_rows);
                }
                groups.push_back(std::move(g));
            }
            Tensor<S> h_next = combine_step(h, routing, groups);

            if (opts.audit != nullptr) {
                opts.audit->push_back(make_audit(s, h, h_next, routing, groups));
            }
            if (opts.record_trace) record_step(trace, routing);
            if (opts.keep_routings) result.routings.push_back(routing);
            h = std::move(h_next);
        }

        result.logits = output_.forward(h);
        return result;
    }

public:
    std::vector<SequenceForward<S>> forward_batch(const Batch& batch,
                                                  const ForwardOptions<S>& opts,
                                                  int64_t first_seq_id = 0) {
        std::vector<SequenceForward<S>> out;
        out.reserve(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) {
            out.push_back(forward_sequence(batch[i], opts, first_seq_id + static_cast<int64_t>(i)));
        }
        return out;
    }

private:
    Tensor<S> embed(const Example& ex) {
        if (cfg_.task == TaskKind::VisionClassify) {
            Tensor<S> img;
            img.data_->shape = {input_.channels, cfg_.image_size, cfg_.image_size};
            img.data_->value.reserve(ex.pixels.size());
            for (double v : ex.pixels) img.data_->value.push_back(static_cast<S>(v));
            DNA_CHECK(img.numel() == shape_numel(img.shape()),
                      "forward: image pixel count " << ex.pixels.size() << " does not match config");
            return input_.forward_image(img);
        }
        DNA_CHECK(ex.tokens.size() >= 2, "forward: token sequence needs at least 2 ids");
        std::vector<int> inputs(ex.tokens.begin(), ex.tokens.end() - 1);
        return input_.forward_tokens(inputs);
    }

    int effective_k(const ForwardOptions<S>& opts) const {
        return opts.frozen == FrozenRouting::None ? cfg_.top_k : 1;
    }

    StepRouting<S> route_step(int s, const Tensor<S>& h, const ForwardOptions<S>& opts) {
        if (opts.forced_selections != nullptr) {
            // Live rho from the router, selections pinned to recorded values.
            StepRouting<S> r = route(routers_[static_cast<size_t>(s)], h, bias_, cfg_.top_k,
                                     false, nullptr);
            const auto& forced = opts.forced_selections->at(static_cast<size_t>(s));
            DNA_CHECK(forced.size() == r.selected.size(),
                      "forced routing: step " << s << " has " << forced.size()
                                              << " selections, forward needs " << r.selected.size());
            r.selected = forced;
            for (size_t i = 0; i < r.selected.size(); ++i) {
                DNA_CHECK(r.selected[i] >= 0 && r.selected[i] < r.n_modules,
                          "forced routing: module index " << r.selected[i] << " out of range [0, "
                                                          << r.n_modules << ")");
                const int t = static_cast<int>(i) / r.k;
                r.selected_probs[i] = static_cast<double>(
                    r.rho.value()[static_cast<size_t>(t) * r.n_modules + r.selected[i]]);
            }
            return r;
        }
        if (opts.frozen == FrozenRouting::None) {
            return route(routers_[static_cast<size_t>(s)], h, bias_, cfg_.top_k, opts.stochastic,
                         opts.rng);
        }
        int pick = 0;
        switch (opts.frozen) {
            case FrozenRouting::StepIndex: pick = s; break;
            case FrozenRouting::AllIdentity: {
                const auto ids = cfg_.identity_indices();
                DNA_CHECK(!ids.empty(), "frozen identity routing: pool has no identity module");
                pick = ids.front();
                break;
            }
            case FrozenRouting::Custom:
                DNA_CHECK(opts.frozen_selector != nullptr,
                          "frozen routing: custom selector not provided");
                pick = opts.frozen_selector(s);
                break;
            default: break;
        }
        DNA_CHECK(pick >= 0 && pick < cfg_.n_modules(),
                  "frozen routing: module index " << pick << " out of range");
        // Synthetic one-hot routing: selection fixed, combine weight exactly 1.
        StepRouting<S> r;
        r.step = s;
        r.k = 1;
        r.n_modules = cfg_.n_modules();
        r.bias_snapshot.assign(static_cast<size_t>(cfg_.n_modules()), 0.0);
        r.rho = Tensor<S>(Shape{h.rows(), cfg_.n_modules()});
        for (int t = 0; t < h.rows(); ++t) {
            r.rho.value()[static_cast<size_t>(t) * cfg_.n_modules() + pick] = S(1);
            r.selected.push_back(pick);
            r.selected_probs.push_back(1.0);
        }
        return r;
    }

    void record_step(SequenceTrace& trace, const StepRouting<S>& routing) {
        for (int t = 0; t < trace.tokens; ++t) {
            const int* sel = routing.token_selection(t);
            std::vector<int> tup(sel, sel + routing.k);
            std::vector<double> pr(routing.selected_probs.begin() + static_cast<size_t>(t) * routing.k,
                                   routing.selected_probs.begin() +
                                       static_cast<size_t>(t + 1) * routing.k);
            for (int j = 0; j < routing.k; ++j) {
                if (cfg_.module_kinds[static_cast<size_t>(tup[static_cast<size_t>(j)])] !=
                    ModuleKind::Identity) {
                    trace.compute[static_cast<size_t>(t)] += 1;
                }
            }
            trace.ribbons[static_cast<size_t>(t)].push_back(std::move(tup));
            trace.probs[static_cast<size_t>(t)].push_back(std::move(pr));
        }
        trace.bias.push_back(routing.bias_snapshot);
    }

    CombineAuditRecord<S> make_audit(int s, const Tensor<S>& h_prev, const Tensor<S>& h_next,
                                     const StepRouting<S>& routing,
                                     const std::vector<ModuleGroupOutput<S>>& groups) {
        CombineAuditRecord<S> rec;
        rec.step = s;
        rec.h_prev = h_prev.value();
        rec.h_next = h_next.value();
        rec.routing.step = routing.step;
        rec.routing.k = routing.k;
        rec.routing.n_modules = routing.n_modules;
        rec.routing.rho = routing.rho.clone();
        rec.routing.selected = routing.selected;
        rec.routing.selected_probs = routing.selected_probs;
        rec.routing.bias_snapshot = routing.bias_snapshot;
        for (const auto& g : groups) {
            typename CombineAuditRecord<S>::Group ag;
            ag.module_index = g.module_index;
            ag.is_identity = g.is_identity;
            ag.rows = g.token_rows;
            if (!g.is_identity) ag.output = g.output.value();
            rec.groups.push_back(std::move(ag));
        }
        return rec;
    }

    DnaConfig cfg_;
    InputNode<S> input_;
    std::vector<ModuleParams<S>> backbone_;
    std::vector<ModuleParams<S>> pool_;
    std::vector<Router<S>> routers_;
    OutputNode<S> output_;
    BiasController bias_;
};

// ---------------------------------------------------------------------------
// trace-derived statistics owned by the model layer
// ---------------------------------------------------------------------------

struct ComputeSummary {
    std::vector<double> per_token;  // non-identity selections / (k * routed steps)
    double per_sequence = 0.0;      // mean over tokens
};

// Normalized compute: 1 when a ribbon never selects identity, 0 when it always
// does.
inline ComputeSummary count_compute(const SequenceTrace& trace, const DnaConfig& cfg) {
    ComputeSummary out;
    const int steps = cfg.n_routed();
    const double denom = static_cast<double>(trace.k) * static_cast<double>(steps);
    std::set<int> ids;
    for (int i : cfg.identity_indices()) ids.insert(i);
    double total = 0.0;
    for (const auto& ribbon : trace.ribbons) {
        DNA_CHECK(static_cast<int>(ribbon.size()) == steps,
                  "count_compute: ribbon length " << ribbon.size() << " != routed steps " << steps);
        int used = 0;
        for (const auto& tuple : ribbon) {
            for (int m : tuple) {
                if (!ids.count(m)) ++used;
            }
        }
        const double c = denom > 0.0 ? static_cast<double>(used) / denom : 0.0;
        out.per_token.push_back(c);
        total += c;
    }
    out.per_sequence = trace.ribbons.empty() ? 0.0 : total / static_cast<double>(trace.ribbons.size());
    return out;
}

struct ActiveParamSummary {
    std::vector<int64_t> active;      // selected modules counted with multiplicity
    std::vector<int64_t> non_shared;  // distinct selected modules (reuse counted once)
};

// Per-token active-parameter totals over the routed pool.
inline ActiveParamSummary active_parameter_count(const SequenceTrace& trace,
                                                 const DnaConfig& cfg) {
    ActiveParamSummary out;
    std::vector<int64_t> param_count(static_cast<size_t>(cfg.n_modules()));
    for (int m = 0; m < cfg.n_modules(); ++m) {
        param_count[static_cast<size_t>(m)] = module_param_count(cfg.module_spec(m));
    }
    for (const auto& ribbon : trace.ribbons) {
        int64_t with_multiplicity = 0;
        std::set<int> distinct;
        for (const auto& tuple : ribbon) {
            for (int m : tuple) {
                with_multiplicity += param_count[static_cast<size_t>(m)];
                distinct.insert(m);
            }
        }
        int64_t unioned = 0;
        for (int m : distinct) unioned += param_count[static_cast<size_t>(m)];
        out.active.push_back(with_multiplicity);
        out.non_shared.push_back(unioned);
    }
    return out;
}

}  // namespace dna
