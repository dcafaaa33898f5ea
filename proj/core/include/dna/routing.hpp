#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "dna/nn.hpp"
#include "dna/rng.hpp"
#include "dna/tensor.hpp"

namespace dna {

// Per-step linear token-choice classifier over the module pool.
template <typename S>
struct Router {
    int step = 0;
    Tensor<S> weight;  // d_embed x n_modules

    void init(int d_embed, int n_modules, Rng& rng) {
        weight = init_weight<S>({d_embed, n_modules}, rng);
    }
};

// One token's routing record at one step.
struct RouteDecision {
    int token = 0;
    int step = 0;
    std::vector<double> probs;          // full simplex over modules
    std::vector<int> selected;          // k distinct indices, ascending
    std::vector<double> biased_scores;  // probs + bias, the selection key
};

// Sign update on identity biases. The controller steers the fraction of
// identity selections toward target_r; biases never receive gradients and
// never enter the combine weights.
class BiasController {
public:
    BiasController() = default;
    BiasController(int n_steps, int n_modules, std::vector<int> identity_indices, int top_k,
                   double target_r, double update_u)
        : n_modules_(n_modules),
          identity_(std::move(identity_indices)),
          top_k_(top_k),
          target_r_(target_r),
          update_u_(update_u),
          bias_(static_cast<size_t>(n_steps), std::vector<double>(static_cast<size_t>(n_modules), 0.0)),
          counts_(static_cast<size_t>(n_steps), std::vector<int64_t>(static_cast<size_t>(n_modules), 0)),
          tokens_(static_cast<size_t>(n_steps), 0) {
        for (int i : identity_) {
            DNA_CHECK(i >= 0 && i < n_modules, "bias controller: identity index " << i
                                               << " out of range [0, " << n_modules << ")");
        }
    }

    bool active() const { return update_u_ != 0.0 && !identity_.empty(); }
    int steps() const { return static_cast<int>(bias_.size()); }
    double target() const { return target_r_; }
    double speed() const { return update_u_; }
    const std::vector<int>& identity_indices() const { return identity_; }

    const std::vector<double>& bias(int step) const {
        return bias_.at(static_cast<size_t>(step));
    }
    const std::vector<int64_t>& counts(int step) const {
        return counts_.at(static_cast<size_t>(step));
    }
    int64_t tokens_seen(int step) const { return tokens_.at(static_cast<size_t>(step)); }

    void set_bias(int step, const std::vector<double>& values) {
        auto& b = bias_.at(static_cast<size_t>(step));
        DNA_CHECK(values.size() == b.size(), "bias controller: snapshot width mismatch");
        std::set<int> ids(identity_.begin(), identity_.end());
        for (size_t i = 0; i < values.size(); ++i) {
            DNA_CHECK(values[i] == 0.0 || ids.count(static_cast<int>(i)),
                      "bias controller: nonzero bias at non-identity index " << i);
        }
        b = values;
    }

    // Accumulate one step's selections (token-major, k entries per token).
    void observe(int step, const std::vector<int>& selected_flat, int k) {
        auto& c = counts_.at(static_cast<size_t>(step));
        for (int m : selected_flat) c.at(static_cast<size_t>(m)) += 1;
        tokens_.at(static_cast<size_t>(step)) += static_cast<int64_t>(selected_flat.size()) / k;
    }

    // b_id += u * sign(r * k * mean_tokens - identity_count), applied to every
    // identity index; Sign(0) is 0. Counters reset afterwards.
    void update() {
        for (int s = 0; s < steps(); ++s) update_step(s);
    }

    void update_step(int step) {
        auto& c = counts_.at(static_cast<size_t>(step));
        const double mean_tokens = static_cast<double>(tokens_.at(static_cast<size_t>(step)));
        double identity_count = 0.0;
        for (int i : identity_) identity_count += static_cast<double>(c[static_cast<size_t>(i)]);
        const double delta = update_delta(update_u_, target_r_, top_k_, mean_tokens, identity_count);
        auto& b = bias_.at(static_cast<size_t>(step));
        for (int i : identity_) b[static_cast<size_t>(i)] += delta;
        std::fill(c.begin(), c.end(), 0);
        tokens_.at(static_cast<size_t>(step)) = 0;
    }

    static double update_delta(double u, double r, int k, double mean_count,
                               double identity_count) {
        const double gap = r * static_cast<double>(k) * mean_count - identity_count;
        if (gap > 0.0) return u;
        if (gap < 0.0) return -u;
        return 0.0;
    }

private:
    int n_modules_ = 0;
    std::vector<int> identity_;
    int top_k_ = 1;
    double target_r_ = 0.0;
    double update_u_ = 0.0;
    std::vector<std::vector<double>> bias_;
    std::vector<std::vector<int64_t>> counts_;
    std::vector<int64_t> tokens_;
};

// All routing decisions of one step for a token block. `rho` stays on the
// graph so gradients reach the router through the combine weights; selections
// and snapshots are plain values.
template <typename S>
struct StepRouting {
    int step = 0;
    int k = 1;
    int n_modules = 0;
    Tensor<S> rho;                       // T x n_modules
    Tensor<S> logits;                    // pre-softmax router scores
    std::vector<int> selected;           // T*k, ascending within each token
    std::vector<double> selected_probs;  // unbiased rho at the selected indices
    std::vector<double> bias_snapshot;   // bias vector used for selection

    int tokens() const { return n_modules == 0 ? 0 : static_cast<int>(selected.size()) / k; }

    const int* token_selection(int t) const { return selected.data() + static_cast<size_t>(t) * k; }

    RouteDecision decision(int t) const {
        RouteDecision d;
        d.token = t;
        d.step = step;
        d.probs.resize(static_cast<size_t>(n_modules));
        d.biased_scores.resize(static_cast<size_t>(n_modules));
        for (int m = 0; m < n_modules; ++m) {
            const double p = static_cast<double>(rho.value()[static_cast<size_t>(t) * n_modules + m]);
            d.probs[static_cast<size_t>(m)] = p;
            d.biased_scores[static_cast<size_t>(m)] = p + bias_snapshot[static_cast<size_t>(m)];
        }
        d.selected.assign(token_selection(t), token_selection(t) + k);
        return d;
    }
};

namespace detail {

// Deterministic: top-k of scores, ties to the lower index. Returned ascending.
inline std::vector<int> top_k_indices(const std::vector<double>& scores, int k) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)]) {
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        }
        return a < b;
    });
    std::vector<int> out(order.begin(), order.begin() + k);
    std::sort(out.begin(), out.end());
    return out;
}

// Stochastic: k draws without replacement, proportional to scores clamped at 0.
inline std::vector<int> sample_k_indices(const std::vector<double>& scores, int k, Rng& rng) {
    std::vector<double> w(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) w[i] = std::max(scores[i], 0.0);
    std::vector<int> out;
    out.reserve(static_cast<size_t>(k));
    for (int j = 0; j < k; ++j) {
        double total = 0.0;
        for (const double v : w) total += v;
        DNA_CHECK(total > 0.0, "stochastic routing: no positive selection mass left");
        double x = rng.uniform() * total;
        int pick = -1;
        for (size_t i = 0; i < w.size(); ++i) {
            if (w[i] <= 0.0) continue;
            x -= w[i];
            if (x <= 0.0) {
                pick = static_cast<int>(i);
                break;
            }
        }
        if (pick < 0) {  // guard against accumulated rounding on the last bin
            for (int i = static_cast<int>(w.size()) - 1; i >= 0; --i) {
                if (w[static_cast<size_t>(i)] > 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        out.push_back(pick);
        w[static_cast<size_t>(pick)] = 0.0;
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

// rho = softmax(h W_R); selection = top-k of (rho + bias) or k proportional
// draws when stochastic. Combine weights are always the unbiased rho values.
template <typename S>
StepRouting<S> route(const Router<S>& router, const Tensor<S>& h_all, const BiasController& bias,
                     int k, bool stochastic = false, Rng* rng = nullptr) {
    const int n_modules = router.weight.cols();
    DNA_CHECK(k >= 1 && k <= n_modules,
              "route: top-k " << k << " out of range for " << n_modules << " modules");
    DNA_CHECK(!stochastic || rng != nullptr, "route: stochastic selection needs a generator");
    StepRouting<S> r;
    r.step = router.step;
    r.k = k;
    r.n_modules = n_modules;
    r.bias_snapshot = bias.steps() > router.step && router.step >= 0
                          ? bias.bias(router.step)
                          : std::vector<double>(static_cast<size_t>(n_modules), 0.0);
    r.logits = matmul(h_all, router.weight);
    r.rho = softmax(r.logits, 1);
    const int t_count = h_all.rows();
    r.selected.reserve(static_cast<size_t>(t_count) * k);
    r.selected_probs.reserve(static_cast<size_t>(t_count) * k);
    std::vector<double> scores(static_cast<size_t>(n_modules));
    for (int t = 0; t < t_count; ++t) {
        const S* row = r.rho.value().data() + static_cast<size_t>(t) * n_modules;
        for (int m = 0; m < n_modules; ++m) {
            scores[static_cast<size_t>(m)] =
                static_cast<double>(row[m]) + r.bias_snapshot[static_cast<size_t>(m)];
        }
        const std::vector<int> sel = stochastic ? detail::sample_k_indices(scores, k, *rng)
                                                : detail::top_k_indices(scores, k);
        for (int m : sel) {
            r.selected.push_back(m);
            r.selected_probs.push_back(static_cast<double>(row[m]));
        }
    }
    return r;
}

// Output block of one module for one step: the tokens it received (ascending
// original positions) and its forward result. Identity groups carry no tensor.
template <typename S>
struct ModuleGroupOutput {
    int module_index = 0;
    bool is_identity = false;
    std::vector<int> token_rows;
    Tensor<S> output;
};

// h^{(s+1)} = h^{(s)} + sum_{i in selected} rho_i * (M_i(h) - h^{(s)}).
// Identity terms vanish exactly and are skipped; when nothing but identity was
// selected the input tensor is returned unchanged (bitwise no-op). Bias never
// appears here.
template <typename S>
Tensor<S> combine_step(const Tensor<S>& h_prev, const StepRouting<S>& routing,
                       const std::vector<ModuleGroupOutput<S>>& outputs) {
    const int t_count = h_prev.rows();
    DNA_CHECK(routing.tokens() == t_count,
              "combine_step: routing covers " << routing.tokens() << " tokens, block has "
                                              << t_count);
    // Every (token, selected module) pair must be covered exactly once.
    std::set<std::pair<int, int>> covered;
    for (const auto& g : outputs) {
        for (int t : g.token_rows) {
            DNA_CHECK(covered.emplace(t, g.module_index).second,
                      "combine_step: duplicate output for token " << t << ", module "
                                                                  << g.module_index);
        }
    }
    for (int t = 0; t < t_count; ++t) {
        const int* sel = routing.token_selection(t);
        for (int j = 0; j < routing.k; ++j) {
            DNA_CHECK(covered.count({t, sel[j]}),
                      "combine_step: missing module output for token " << t << ", module "
                                                                       << sel[j]);
        }
    }
    DNA_CHECK(covered.size() == static_cast<size_t>(t_count) * routing.k,
              "combine_step: " << covered.size() << " module outputs for "
                               << static_cast<size_t>(t_count) * routing.k << " selections");

    Tensor<S> h_next = h_prev;
    bool any = false;
    for (const auto& g : outputs) {
        if (g.is_identity || g.token_rows.empty()) continue;
        DNA_CHECK(g.output.rank() == 2 &&
                      g.output.rows() == static_cast<int>(g.token_rows.size()) &&
                      g.output.cols() == h_prev.cols(),
                  "combine_step: module " << g.module_index << " output shape "
                                          << shape_str(g.output.shape()) << " does not match its "
                                          << g.token_rows.size() << " tokens");
        std::vector<int64_t> prob_idx;
        prob_idx.reserve(g.token_rows.size());
        for (int t : g.token_rows) {
            prob_idx.push_back(static_cast<int64_t>(t) * routing.n_modules + g.module_index);
        }
        const Tensor<S> w =
            gather_flat(routing.rho, prob_idx, Shape{static_cast<int>(g.token_rows.size()), 1});
        const Tensor<S> delta = mul_colvec(sub(g.output, gather_rows(h_prev, g.token_rows)), w);
        h_next = add(h_next, scatter_rows(delta, g.token_rows, t_count));
        any = true;
    }
    return any ? h_next : h_prev;
}

// Per-module selection counts, one row per step. Row sums equal k * tokens.
inline std::vector<std::vector<int64_t>> selection_histogram(
    const std::vector<std::vector<int>>& selected_by_step, int n_modules) {
    std::vector<std::vector<int64_t>> hist(selected_by_step.size(),
                                           std::vector<int64_t>(static_cast<size_t>(n_modules), 0));
    for (size_t s = 0; s < selected_by_step.size(); ++s) {
        for (int m : selected_by_step[s]) {
            DNA_CHECK(m >= 0 && m < n_modules, "selection histogram: module index " << m
                                               << " out of range [0, " << n_modules << ")");
            hist[s][static_cast<size_t>(m)] += 1;
        }
    }
    return hist;
}

}  // namespace dna
