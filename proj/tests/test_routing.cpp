#include <cmath>
#include <set>

#include "dna/routing.hpp"
#include "doctest.h"

using dna::BiasController;
using dna::Rng;
using dna::Router;
using dna::Shape;
using dna::StepRouting;
using dna::Tensor;

namespace {

// Router over a 1-d embedding whose logits are exactly the weight row, so the
// probabilities are a chosen simplex vector.
Router<double> router_with_probs(const std::vector<double>& probs) {
    Router<double> r;
    r.step = 0;
    r.weight = Tensor<double>(Shape{1, static_cast<int>(probs.size())});
    for (size_t i = 0; i < probs.size(); ++i) r.weight.value()[i] = std::log(probs[i]);
    return r;
}

Tensor<double> one_token() {
    return Tensor<double>::from({1, 1}, {1.0});
}

BiasController no_bias(int n_modules) {
    return BiasController(1, n_modules, {}, 1, 0.0, 0.0);
}

}  // namespace

TEST_CASE("uniform logits tie-break to the lowest module index") {
    Router<double> r;
    r.step = 0;
    r.weight = Tensor<double>(Shape{1, 4});  // all-zero weights
    auto bias = no_bias(4);
    auto routing = dna::route(r, one_token(), bias, 1);
    for (int m = 0; m < 4; ++m) {
        CHECK(routing.rho.value()[static_cast<size_t>(m)] == doctest::Approx(0.25));
    }
    CHECK(routing.selected == std::vector<int>{0});
}

TEST_CASE("bias steers selection but never the combine weight") {
    auto r = router_with_probs({0.5, 0.3, 0.2});
    BiasController bias(1, 3, {2}, 1, 0.25, 0.001);
    bias.set_bias(0, {0.0, 0.0, 0.4});
    auto routing = dna::route(r, one_token(), bias, 1);
    CHECK(routing.selected == std::vector<int>{2});  // biased scores .5 .3 .6
    CHECK(routing.selected_probs[0] == doctest::Approx(0.2).epsilon(1e-9));
    auto decision = routing.decision(0);
    CHECK(decision.biased_scores[2] == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(decision.probs[2] == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("top-2 selects the two largest probabilities") {
    auto r = router_with_probs({0.1, 0.6, 0.3});
    auto bias = no_bias(3);
    auto routing = dna::route(r, one_token(), bias, 2);
    CHECK(routing.selected == std::vector<int>{1, 2});
    CHECK(routing.selected_probs[0] == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(routing.selected_probs[1] == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("adding a constant to all logits changes neither rho nor the selection") {
    Router<double> a;
    a.step = 0;
    a.weight = Tensor<double>::from({1, 5}, {0.3, -0.2, 1.1, 0.9, -0.5});
    Router<double> b;
    b.step = 0;
    b.weight = a.weight.clone();
    for (auto& v : b.weight.value()) v += 23.0;
    auto bias = no_bias(5);
    auto ra = dna::route(a, one_token(), bias, 2);
    auto rb = dna::route(b, one_token(), bias, 2);
    CHECK(ra.selected == rb.selected);
    for (int m = 0; m < 5; ++m) {
        CHECK(std::fabs(ra.rho.value()[static_cast<size_t>(m)] -
                        rb.rho.value()[static_cast<size_t>(m)]) < 1e-6);
    }
}

TEST_CASE("stochastic selection draws k distinct modules and excludes clamped mass") {
    auto r = router_with_probs({0.05, 0.05, 0.6, 0.3});
    auto bias = no_bias(4);
    Rng rng(9);
    std::vector<int64_t> counts(4, 0);
    for (int trial = 0; trial < 4000; ++trial) {
        auto routing = dna::route(r, one_token(), bias, 2, true, &rng);
        std::set<int> sel(routing.selected.begin(), routing.selected.end());
        CHECK(sel.size() == 2);
        for (int m : sel) counts[static_cast<size_t>(m)] += 1;
    }
    CHECK(counts[2] > counts[0]);
    CHECK(counts[2] > counts[1]);
    CHECK(counts[3] > counts[0]);
}

TEST_CASE("combine: all-identity step returns the input tensor bitwise") {
    auto h = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
    StepRouting<double> routing;
    routing.step = 0;
    routing.k = 1;
    routing.n_modules = 2;
    routing.rho = Tensor<double>::from({2, 2}, {0.7, 0.3, 0.4, 0.6});
    routing.selected = {1, 1};
    routing.selected_probs = {0.3, 0.6};
    routing.bias_snapshot = {0.0, 0.0};
    dna::ModuleGroupOutput<double> g;
    g.module_index = 1;
    g.is_identity = true;
    g.token_rows = {0, 1};
    auto out = dna::combine_step(h, routing, {g});
    CHECK(out.data_ == h.data_);
}

TEST_CASE("combine: saturated router reproduces the module output") {
    auto h = Tensor<double>::from({1, 2}, {0.5, -1.0});
    StepRouting<double> routing;
    routing.k = 1;
    routing.n_modules = 2;
    routing.rho = Tensor<double>::from({1, 2}, {1.0, 0.0});
    routing.selected = {0};
    routing.selected_probs = {1.0};
    routing.bias_snapshot = {0.0, 0.0};
    dna::ModuleGroupOutput<double> g;
    g.module_index = 0;
    g.token_rows = {0};
    g.output = Tensor<double>::from({1, 2}, {2.5, 3.5});
    auto out = dna::combine_step(h, routing, {g});
    CHECK(out.value()[0] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(out.value()[1] == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("combine: scalar toy case evaluates the formula directly") {
    // h=1.0, rho=(0.6, 0.4), M_a=3.0, M_b=-1.0 -> 1 + 0.6*2 + 0.4*(-2) = 1.4
    auto h = Tensor<double>::from({1, 1}, {1.0});
    StepRouting<double> routing;
    routing.k = 2;
    routing.n_modules = 2;
    routing.rho = Tensor<double>::from({1, 2}, {0.6, 0.4});
    routing.selected = {0, 1};
    routing.selected_probs = {0.6, 0.4};
    routing.bias_snapshot = {0.0, 0.0};
    dna::ModuleGroupOutput<double> ga, gb;
    ga.module_index = 0;
    ga.token_rows = {0};
    ga.output = Tensor<double>::from({1, 1}, {3.0});
    gb.module_index = 1;
    gb.token_rows = {0};
    gb.output = Tensor<double>::from({1, 1}, {-1.0});
    auto out = dna::combine_step(h, routing, {ga, gb});
    CHECK(out.item() == doctest::Approx(1.4).epsilon(1e-12));
}

TEST_CASE("combine: missing module output is an internal consistency error") {
    auto h = Tensor<double>::from({1, 1}, {1.0});
    StepRouting<double> routing;
    routing.k = 2;
    routing.n_modules = 2;
    routing.rho = Tensor<double>::from({1, 2}, {0.6, 0.4});
    routing.selected = {0, 1};
    routing.selected_probs = {0.6, 0.4};
    routing.bias_snapshot = {0.0, 0.0};
    dna::ModuleGroupOutput<double> ga;
    ga.module_index = 0;
    ga.token_rows = {0};
    ga.output = Tensor<double>::from({1, 1}, {3.0});
    CHECK_THROWS_AS(dna::combine_step(h, routing, {ga}), dna::Error);
}

TEST_CASE("bias update sign rule") {
    // identity traffic exactly r*k*mean -> unchanged (Sign(0) = 0)
    CHECK(BiasController::update_delta(0.001, 0.25, 2, 100.0, 50.0) == 0.0);
    // 30 < 50 -> up
    CHECK(BiasController::update_delta(0.001, 0.25, 2, 100.0, 30.0) == doctest::Approx(0.001));
    // 80 > 50 -> down
    CHECK(BiasController::update_delta(0.001, 0.25, 2, 100.0, 80.0) == doctest::Approx(-0.001));
}

TEST_CASE("bias controller accumulates, updates identity entries only, and resets") {
    BiasController ctrl(2, 4, {3}, 2, 0.25, 0.001);
    // step 0: 100 tokens, identity selected 30 times
    std::vector<int> selections;
    for (int t = 0; t < 100; ++t) {
        selections.push_back(t < 30 ? 3 : 0);
        selections.push_back(1);
    }
    ctrl.observe(0, selections, 2);
    CHECK(ctrl.tokens_seen(0) == 100);
    CHECK(ctrl.counts(0)[3] == 30);
    ctrl.update();
    CHECK(ctrl.bias(0)[3] == doctest::Approx(0.001));
    CHECK(ctrl.bias(0)[0] == 0.0);
    CHECK(ctrl.bias(0)[1] == 0.0);
    CHECK(ctrl.counts(0)[3] == 0);  // counters reset
    CHECK(ctrl.tokens_seen(0) == 0);
    // idle steps see Sign of (0 - 0) = 0 and stay put
    CHECK(ctrl.bias(1)[3] == 0.0);
}

TEST_CASE("selection histogram: one-hot, conservation, and a binomial bound") {
    auto hist1 = dna::selection_histogram({{2}}, 4);
    CHECK(hist1[0] == std::vector<int64_t>{0, 0, 1, 0});

    // uniform random router over 8 modules, 1e5 tokens
    Rng rng(123);
    std::vector<int> sel;
    sel.reserve(100000);
    for (int i = 0; i < 100000; ++i) sel.push_back(rng.uniform_int(8));
    auto hist = dna::selection_histogram({sel}, 8);
    int64_t row_sum = 0;
    const double sigma = std::sqrt(100000.0 * (1.0 / 8) * (7.0 / 8));
    for (int m = 0; m < 8; ++m) {
        row_sum += hist[0][static_cast<size_t>(m)];
        CHECK(std::fabs(static_cast<double>(hist[0][static_cast<size_t>(m)]) - 12500.0) <
              3.0 * sigma);
    }
    CHECK(row_sum == 100000);  // k * token count
}

TEST_CASE("combine weights are independent of bias (recompute with bias zeroed)") {
    Rng rng(5);
    auto h = Tensor<double>(Shape{6, 4});
    for (auto& v : h.value()) v = rng.normal();
    Router<double> r;
    r.step = 0;
    r.weight = Tensor<double>(Shape{4, 3});
    for (auto& v : r.weight.value()) v = rng.normal();
    BiasController biased(1, 3, {2}, 2, 0.3, 0.001);
    biased.set_bias(0, {0.0, 0.0, 0.2});
    auto routing = dna::route(r, h, biased, 2);

    // same selections, bias zeroed: h_next must be bit-identical
    auto zeroed = routing;
    zeroed.bias_snapshot = {0.0, 0.0, 0.0};
    std::vector<dna::ModuleGroupOutput<double>> groups;
    for (int m = 0; m < 3; ++m) {
        dna::ModuleGroupOutput<double> g;
        g.module_index = m;
        g.is_identity = m == 2;
        for (int t = 0; t < 6; ++t) {
            const int* sel = routing.token_selection(t);
            for (int j = 0; j < 2; ++j) {
                if (sel[j] == m) g.token_rows.push_back(t);
            }
        }
        if (g.token_rows.empty()) continue;
        if (!g.is_identity) {
            auto block = dna::gather_rows(h, g.token_rows);
            g.output = dna::scale(block, 1.5);  // arbitrary deterministic module stand-in
        }
        groups.push_back(std::move(g));
    }
    auto a = dna::combine_step(h, routing, groups);
    auto b = dna::combine_step(h, zeroed, groups);
    CHECK(a.value() == b.value());
}

TEST_CASE("skip-ratio control converges on a frozen random stream") {
    // controller active, top-2 over 8 modules with 2 identity slots, r=0.25
    const int n_modules = 8, k = 2, t_count = 256, updates = 2000;
    const double r_target = 0.25, u = 0.001;
    Rng rng(77);
    auto h = Tensor<double>(Shape{t_count, 8});
    for (auto& v : h.value()) v = rng.normal();
    Router<double> router;
    router.step = 0;
    router.weight = Tensor<double>(Shape{8, n_modules});
    for (auto& v : router.weight.value()) v = rng.normal() * 0.02;
    BiasController ctrl(1, n_modules, {6, 7}, k, r_target, u);

    int in_band_tail = 0, tail = 0;
    for (int step = 0; step < updates; ++step) {
        auto routing = dna::route(router, h, ctrl, k);
        ctrl.observe(0, routing.selected, k);
        double identity = 0;
        for (int m : routing.selected) {
            if (m >= 6) identity += 1;
        }
        const double fraction = identity / static_cast<double>(routing.selected.size());
        ctrl.update();
        if (step >= updates * 4 / 5) {
            ++tail;
            if (fraction >= r_target - 0.05 && fraction <= r_target + 0.05) ++in_band_tail;
        }
    }
    CHECK(tail > 0);
    CHECK(in_band_tail == tail);  // stays inside the band for the last 20%
}

TEST_CASE("combine places every token's update at its own row") {
    // 6 tokens alternate between two modules; module 0 doubles its rows,
    // module 1 negates them. Expected per token, by hand:
    //   even: h + 0.7 * (2h - h) = 1.7 h     odd: h + 0.3 * (-h - h) = 0.4 h
    Rng rng(31);
    Tensor<double> h(Shape{6, 3});
    for (auto& v : h.value()) v = rng.normal();
    StepRouting<double> routing;
    routing.k = 1;
    routing.n_modules = 2;
    routing.rho = Tensor<double>(Shape{6, 2});
    routing.bias_snapshot = {0.0, 0.0};
    for (int t = 0; t < 6; ++t) {
        routing.rho.value()[static_cast<size_t>(t) * 2 + 0] = 0.7;
        routing.rho.value()[static_cast<size_t>(t) * 2 + 1] = 0.3;
        routing.selected.push_back(t % 2);
        routing.selected_probs.push_back(t % 2 == 0 ? 0.7 : 0.3);
    }
    dna::ModuleGroupOutput<double> g0, g1;
    g0.module_index = 0;
    g0.token_rows = {0, 2, 4};
    g0.output = dna::scale(dna::gather_rows(h, g0.token_rows), 2.0);
    g1.module_index = 1;
    g1.token_rows = {1, 3, 5};
    g1.output = dna::scale(dna::gather_rows(h, g1.token_rows), -1.0);
    auto out = dna::combine_step(h, routing, {g0, g1});
    for (int t = 0; t < 6; ++t) {
        const double factor = t % 2 == 0 ? 1.7 : 0.4;
        for (int c = 0; c < 3; ++c) {
            CHECK(out.at(t, c) == doctest::Approx(factor * h.at(t, c)).epsilon(1e-12));
        }
    }
}

TEST_CASE("combine rejects outputs for pairs that were never selected") {
    auto h = Tensor<double>::from({1, 1}, {1.0});
    StepRouting<double> routing;
    routing.k = 1;
    routing.n_modules = 2;
    routing.rho = Tensor<double>::from({1, 2}, {0.6, 0.4});
    routing.selected = {0};
    routing.selected_probs = {0.6};
    routing.bias_snapshot = {0.0, 0.0};
    dna::ModuleGroupOutput<double> ga, gb;
    ga.module_index = 0;
    ga.token_rows = {0};
    ga.output = Tensor<double>::from({1, 1}, {3.0});
    gb.module_index = 1;  // token 0 never selected module 1
    gb.token_rows = {0};
    gb.output = Tensor<double>::from({1, 1}, {9.0});
    CHECK_THROWS_AS(dna::combine_step(h, routing, {ga, gb}), dna::Error);
}
