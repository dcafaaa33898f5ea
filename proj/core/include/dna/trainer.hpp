#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "dna/analytics.hpp"
#include "dna/data.hpp"
#include "dna/model.hpp"

namespace dna {

enum class ScheduleKind { WarmupCosine, WarmupStableDecay };

inline const char* schedule_kind_name(ScheduleKind k) {
    return k == ScheduleKind::WarmupCosine ? "warmup-cosine" : "warmup-stable-decay";
}

inline ScheduleKind schedule_kind_from_name(const std::string& name) {
    if (name == "warmup-cosine") return ScheduleKind::WarmupCosine;
    if (name == "warmup-stable-decay") return ScheduleKind::WarmupStableDecay;
    DNA_CHECK(false, "unknown schedule kind '" << name
                     << "' (expected warmup-cosine|warmup-stable-decay)");
    return ScheduleKind::WarmupCosine;
}

// Piecewise learning-rate schedule. warmup-cosine ramps linearly then decays
// on a half cosine to lr_final; warmup-stable-decay holds lr_peak and decays
// linearly to 0.1 * lr_peak over the final fraction of steps.
struct Schedule {
    ScheduleKind kind = ScheduleKind::WarmupCosine;
    int warmup_steps = 0;
    int total_steps = 1;
    double lr_init = 1e-7;
    double lr_peak = 3e-4;
    double lr_final = 1e-6;
    double decay_fraction = 0.2;

    double value(int t) const {
        DNA_CHECK(t >= 0 && t <= total_steps,
                  "schedule: step " << t << " outside [0, " << total_steps << "]");
        if (t < warmup_steps) {
            return lr_init + (lr_peak - lr_init) * static_cast<double>(t) /
                                 static_cast<double>(warmup_steps);
        }
        if (kind == ScheduleKind::WarmupCosine) {
            if (total_steps == warmup_steps) return lr_peak;
            const double progress = static_cast<double>(t - warmup_steps) /
                                    static_cast<double>(total_steps - warmup_steps);
            const double pi = 3.141592653589793238462643383279502884;
            return lr_final + (lr_peak - lr_final) * 0.5 * (1.0 + std::cos(pi * progress));
        }
        const int decay_steps = static_cast<int>(std::lround(decay_fraction * total_steps));
        const int decay_start = total_steps - decay_steps;
        if (t < decay_start || decay_steps == 0) return lr_peak;
        const double progress =
            static_cast<double>(t - decay_start) / static_cast<double>(decay_steps);
        return lr_peak * (1.0 - 0.9 * progress);
    }
};

// Decoupled-weight-decay Adam with bias-corrected moments. Identity biases are
// not parameters and never pass through here.
template <typename S>
class AdamW {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.99;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamW(std::vector<NamedParam<S>> params, Options opts)
        : params_(std::move(params)), opts_(opts) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].tensor->value().size(), S(0));
            v_[i].assign(params_[i].tensor->value().size(), S(0));
        }
    }

    int64_t step_count() const { return t_; }

    void step(double lr) {
        ++t_;
        const S b1 = static_cast<S>(opts_.beta1);
        const S b2 = static_cast<S>(opts_.beta2);
        const S corr1 = S(1) - static_cast<S>(std::pow(opts_.beta1, static_cast<double>(t_)));
        const S corr2 = S(1) - static_cast<S>(std::pow(opts_.beta2, static_cast<double>(t_)));
        const S eps = static_cast<S>(opts_.eps);
        const S slr = static_cast<S>(lr);
        const S decay = static_cast<S>(lr * opts_.weight_decay);
        for (size_t p = 0; p < params_.size(); ++p) {
            auto& value = params_[p].tensor->value();
            auto& grad = params_[p].tensor->grad();
            for (size_t i = 0; i < value.size(); ++i) {
                const S g = grad[i];
                m_[p][i] = b1 * m_[p][i] + (S(1) - b1) * g;
                v_[p][i] = b2 * v_[p][i] + (S(1) - b2) * g * g;
                const S m_hat = m_[p][i] / corr1;
                const S v_hat = v_[p][i] / corr2;
                value[i] -= decay * value[i];
                value[i] -= slr * m_hat / (std::sqrt(v_hat) + eps);
            }
        }
    }

private:
    std::vector<NamedParam<S>> params_;
    Options opts_;
    int64_t t_ = 0;
    std::vector<std::vector<S>> m_;
    std::vector<std::vector<S>> v_;
};

template <typename S>
double clip_global_norm(std::vector<NamedParam<S>>& params, double max_norm) {
    double sq = 0.0;
    for (auto& p : params) {
        for (const S g : p.tensor->grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const S factor = static_cast<S>(max_norm / norm);
        for (auto& p : params) {
            for (S& g : p.tensor->grad()) g *= factor;
        }
    }
    return norm;
}

struct TrainerConfig {
    int steps = 1000;
    int batch_size = 32;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 0.1;
    double clip_norm = 1.0;
    bool stochastic_routing = false;
    int log_every = 10;
    uint64_t seed = 0;
};

template <typename S>
struct TrainStepInfo {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
    double skip_fraction = 0.0;
    std::vector<double> effective_topk_by_step;
    std::vector<std::vector<double>> bias_pre;          // before forward
    std::vector<std::vector<double>> bias_post_opt;     // after the optimizer step
    std::vector<std::vector<double>> bias_post_update;  // after bias_update
    const std::vector<CombineAuditRecord<S>>* audit = nullptr;
};

template <typename S>
struct TrainHooks {
    std::function<void(const TrainStepInfo<S>&)> after_step;
    int audit_every = 0;  // capture combine audits every n-th step (0 = never)
};

struct TrainResult {
    std::vector<double> losses;
    double final_loss = 0.0;
};

template <typename S>
Tensor<S> batch_loss(DnaModel<S>& model, const std::vector<SequenceForward<S>>& fwd,
                     const Batch& batch) {
    Tensor<S> total;
    for (size_t i = 0; i < batch.size(); ++i) {
        std::vector<int> targets;
        if (model.config().task == TaskKind::VisionClassify) {
            targets.push_back(batch[i].label);
        } else {
            targets.assign(batch[i].tokens.begin() + 1, batch[i].tokens.end());
        }
        Tensor<S> li = cross_entropy_logits(fwd[i].logits, targets);
        total = i == 0 ? li : add(total, li);
    }
    return scale(total, S(1) / static_cast<S>(batch.size()));
}

template <typename S>
std::vector<std::vector<double>> bias_snapshot(const DnaModel<S>& model) {
    std::vector<std::vector<double>> out;
    for (int s = 0; s < model.config().n_routed(); ++s) {
        out.push_back(model.bias_controller().bias(s));
    }
    return out;
}

// Cross-entropy training loop: forward, backward, global-norm clip, AdamW,
// then one controller update per step when a skip target is configured.
// Deterministic given (config, seed). Aborts on a non-finite loss.
template <typename S>
TrainResult train(DnaModel<S>& model, const Dataset& data, const Schedule& sched,
                  const TrainerConfig& tc, std::ostream* metrics = nullptr,
                  const TrainHooks<S>& hooks = {}) {
    DNA_CHECK(model.config().task == data.task, "train: dataset task does not match model task");
    Rng root(tc.seed);
    Rng batch_rng = root.fork(1);
    Rng routing_rng = root.fork(2);
    auto params = model.named_parameters();
    AdamW<S> opt(params, {tc.beta1, tc.beta2, tc.eps, tc.weight_decay});

    if (metrics != nullptr) {
        *metrics << "step\tloss\tlr\tskip_fraction";
        for (int s = 0; s < model.config().n_routed(); ++s) *metrics << "\tetk" << s;
        *metrics << "\n";
    }

    TrainResult result;
    const bool controller_on = model.bias_controller().active();
    for (int step = 0; step < tc.steps; ++step) {
        const double lr = sched.value(step);
        Batch batch = sample_batch(data, tc.batch_size, batch_rng);

        TrainStepInfo<S> info;
        info.step = step;
        info.lr = lr;
        info.bias_pre = bias_snapshot(model);

        std::vector<CombineAuditRecord<S>> audits;
        ForwardOptions<S> fopts;
        fopts.stochastic = tc.stochastic_routing;
        fopts.rng = &routing_rng;
        fopts.record_trace = true;
        fopts.observe_bias = true;
        if (hooks.audit_every > 0 && step % hooks.audit_every == 0) fopts.audit = &audits;

        model.zero_grad();
        double loss_value = 0.0;
        std::vector<SequenceTrace> traces;
        {
            Graph<S> graph;
            auto fwd = model.forward_batch(batch, fopts);
            Tensor<S> loss = batch_loss(model, fwd, batch);
            loss_value = static_cast<double>(loss.item());
            DNA_CHECK(std::isfinite(loss_value),
                      "train: loss diverged (non-finite) at step " << step);
            graph.backward(loss);
            for (auto& f : fwd) traces.push_back(std::move(f.trace));
        }
        info.grad_norm = clip_global_norm(params, tc.clip_norm);
        opt.step(lr);
        info.bias_post_opt = bias_snapshot(model);
        if (controller_on) model.bias_controller().update();
        info.bias_post_update = bias_snapshot(model);

        // batch statistics from the step's traces
        int64_t identity_selected = 0, total_selected = 0;
        {
            std::set<int> ids;
            for (int i : model.config().identity_indices()) ids.insert(i);
            for (const auto& t : traces) {
                for (const auto& ribbon : t.ribbons) {
                    for (const auto& tuple : ribbon) {
                        for (int m : tuple) {
                            ++total_selected;
                            if (ids.count(m)) ++identity_selected;
                        }
                    }
                }
            }
        }
        info.loss = loss_value;
        info.skip_fraction = total_selected > 0 ? static_cast<double>(identity_selected) /
                                                      static_cast<double>(total_selected)
                                                : 0.0;
        for (const auto& counts : step_module_counts(traces)) {
            info.effective_topk_by_step.push_back(effective_topk(counts, 1.5));
        }
        info.audit = fopts.audit;

        result.losses.push_back(loss_value);
        if (metrics != nullptr && (step % tc.log_every == 0 || step + 1 == tc.steps)) {
            *metrics << step << "\t" << loss_value << "\t" << lr << "\t" << info.skip_fraction;
            for (const double e : info.effective_topk_by_step) *metrics << "\t" << e;
            *metrics << "\n";
        }
        if (hooks.after_step) hooks.after_step(info);
    }
    result.final_loss = result.losses.empty() ? 0.0 : result.losses.back();
    return result;
}

// Plain evaluation helpers (no recording, deterministic routing).
template <typename S>
double vision_accuracy(DnaModel<S>& model, const Dataset& data, size_t limit = 0) {
    const size_t n = limit > 0 ? std::min(limit, data.size()) : data.size();
    int correct = 0;
    ForwardOptions<S> opts;
    for (size_t i = 0; i < n; ++i) {
        const Example ex = data.get(i);
        auto fwd = model.forward_sequence(ex, opts);
        const auto& row = fwd.logits.value();
        int best = 0;
        for (size_t j = 1; j < row.size(); ++j) {
            if (row[j] > row[static_cast<size_t>(best)]) best = static_cast<int>(j);
        }
        if (best == ex.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

template <typename S>
double lm_mean_loss(DnaModel<S>& model, const Dataset& data, size_t limit = 0) {
    const size_t n = limit > 0 ? std::min(limit, data.size()) : data.size();
    double total = 0.0;
    ForwardOptions<S> opts;
    for (size_t i = 0; i < n; ++i) {
        const Example ex = data.get(i);
        auto fwd = model.forward_sequence(ex, opts);
        std::vector<int> targets(ex.tokens.begin() + 1, ex.tokens.end());
        total += static_cast<double>(cross_entropy_logits(fwd.logits, targets).item());
    }
    return total / static_cast<double>(n);
}

}  // namespace dna
