#include <cmath>
#include <set>

#include "dna/analytics.hpp"
#include "dna/rng.hpp"
#include "doctest.h"

using dna::AnalyticsConfig;
using dna::Rng;
using dna::SequenceTrace;

namespace {

// Trace whose tokens take the listed "paths" (single-step, module = path id).
SequenceTrace trace_from_path_ids(const std::vector<int>& ids, int n_paths) {
    SequenceTrace t;
    t.tokens = static_cast<int>(ids.size());
    t.k = 1;
    t.n_modules = n_paths;
    for (int id : ids) t.ribbons.push_back({{id}});
    return t;
}

// Known-exponent generator: samples ranks from p(r) proportional to r^-s by
// CDF inversion.
std::vector<int> zipf_sample(double s, int support, int n, uint64_t seed) {
    std::vector<double> cdf(static_cast<size_t>(support));
    double total = 0.0;
    for (int r = 1; r <= support; ++r) {
        total += std::pow(static_cast<double>(r), -s);
        cdf[static_cast<size_t>(r - 1)] = total;
    }
    Rng rng(seed);
    std::vector<int> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform() * total;
        int lo = 0, hi = support - 1;
        while (lo < hi) {
            const int mid = (lo + hi) / 2;
            if (cdf[static_cast<size_t>(mid)] >= x) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        out.push_back(lo);
    }
    return out;
}

}  // namespace

TEST_CASE("rank_frequency exact counting and ordering") {
    auto one = trace_from_path_ids({3}, 5);
    auto stats = dna::rank_frequency({one});
    REQUIRE(stats.ranked.size() == 1);
    CHECK(stats.ranked[0].second == 1);
    CHECK(stats.total_tokens == 1);

    auto two = trace_from_path_ids({2, 2}, 5);
    stats = dna::rank_frequency({two});
    REQUIRE(stats.ranked.size() == 1);
    CHECK(stats.ranked[0].second == 2);

    // permutation invariance over trace order
    auto a = trace_from_path_ids({0, 1, 1, 2}, 4);
    auto b = trace_from_path_ids({2, 1, 0, 1}, 4);
    CHECK(dna::rank_frequency({a}).ranked == dna::rank_frequency({b}).ranked);

    CHECK_THROWS_AS(dna::rank_frequency({}), dna::Error);
}

TEST_CASE("power-law fit recovers exact synthetic laws") {
    std::vector<double> inv_r, inv_r2;
    for (int r = 1; r <= 100; ++r) {
        inv_r.push_back(1000.0 / r);
        inv_r2.push_back(500.0 / (static_cast<double>(r) * r));
    }
    auto fit1 = dna::powerlaw_fit_counts(inv_r, 0.0, 1.0);
    CHECK(std::fabs(fit1.slope + 1.0) < 1e-6);
    CHECK(fit1.r_squared == doctest::Approx(1.0));
    auto fit2 = dna::powerlaw_fit_counts(inv_r2, 0.0, 1.0);
    CHECK(std::fabs(fit2.slope + 2.0) < 1e-6);
}

TEST_CASE("power-law fit needs enough support") {
    std::vector<double> counts{10, 5, 3};
    CHECK_THROWS_AS(dna::powerlaw_fit_counts(counts, 0.0, 1.0), dna::Error);
}

TEST_CASE("zipf samples recover their exponent within 0.1") {
    {
        auto ids = zipf_sample(1.0, 300, 10000, 7);
        auto stats = dna::rank_frequency({trace_from_path_ids(ids, 300)});
        auto fit = dna::powerlaw_fit(stats, {});
        CHECK(std::fabs(fit.slope + 1.0) < 0.1);
    }
    {
        auto ids = zipf_sample(1.2, 500, 100000, 11);
        auto stats = dna::rank_frequency({trace_from_path_ids(ids, 500)});
        auto fit = dna::powerlaw_fit(stats, {});
        CHECK(std::fabs(fit.slope + 1.2) < 0.1);
    }
}

TEST_CASE("effective top-k endpoints, direct formula, bounds, scale invariance") {
    // one-hot counts -> 1.0 exactly
    CHECK(dna::effective_topk({42, 0, 0, 0}, 1.5) == doctest::Approx(1.0).epsilon(1e-12));
    // uniform over 16 -> 16^0.5 = 4.0
    std::vector<double> uniform(16, 7.0);
    CHECK(std::fabs(dna::effective_topk(uniform, 1.5) - 4.0) < 1e-9);

    // direct 64-bit evaluation for [4,2,1,1]
    const std::vector<double> counts{4, 2, 1, 1};
    double num = 0, den = 0;
    for (const double c : counts) {
        num += std::pow(c, 3.0);
        den += c * c;
    }
    const double want = std::pow(den, 1.5) / num;
    CHECK(dna::effective_topk(counts, 1.5) == doctest::Approx(want).epsilon(1e-12));

    // exact scale invariance with integer-exact multipliers
    for (const double mult : {2.0, 10.0, 7.0}) {
        std::vector<double> scaled;
        for (const double c : counts) scaled.push_back(c * mult);
        CHECK(dna::effective_topk(scaled, 1.5) == dna::effective_topk(counts, 1.5));
    }

    // bounds: 1 <= etk <= n^(alpha-1)
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> c(static_cast<size_t>(2 + rng.uniform_int(12)));
        for (auto& v : c) v = static_cast<double>(rng.uniform_int(100));
        c[0] += 1;  // at least one nonzero
        const double etk = dna::effective_topk(c, 1.5);
        CHECK(etk >= 1.0 - 1e-12);
        CHECK(etk <= std::pow(static_cast<double>(c.size()), 0.5) + 1e-12);
    }

    CHECK_THROWS_AS(dna::effective_topk({0, 0}, 1.5), dna::Error);
    CHECK_THROWS_AS(dna::effective_topk({1, 2}, 1.0), dna::Error);
}

TEST_CASE("module reuse per ribbon") {
    const std::set<int> identity{9};
    // all distinct -> 0
    CHECK(dna::ribbon_reuse({{0}, {1}, {2}}, identity) == 0.0);
    // same module at every of 10 steps -> 1 - 1/10
    std::vector<std::vector<int>> same(10, {4});
    CHECK(dna::ribbon_reuse(same, identity) == doctest::Approx(0.9));
    // all identity -> defined as 0
    std::vector<std::vector<int>> ids(5, {9});
    CHECK(dna::ribbon_reuse(ids, identity) == 0.0);

    // parameter-weighted variant matches a direct union computation
    const std::vector<int64_t> params{100, 50, 10, 0};
    const double got = dna::ribbon_reuse_param_weighted({{0}, {0}, {1}}, {3}, params);
    CHECK(got == doctest::Approx(1.0 - 150.0 / 250.0));
}

TEST_CASE("pearson correlation") {
    std::vector<double> xs;
    Rng rng(5);
    for (int i = 0; i < 100; ++i) xs.push_back(rng.normal());
    std::vector<double> neg;
    for (const double v : xs) neg.push_back(-v);
    CHECK(dna::pearson(xs, xs) == doctest::Approx(1.0));
    CHECK(dna::pearson(xs, neg) == doctest::Approx(-1.0));

    std::vector<double> a, b;
    Rng rng2(9);
    for (int i = 0; i < 10000; ++i) {
        a.push_back(rng2.uniform());
        b.push_back(rng2.uniform());
    }
    CHECK(std::fabs(dna::pearson(a, b)) < 0.05);

    std::vector<double> flat(10, 3.0);
    CHECK_THROWS_AS(dna::pearson(flat, xs), dna::Error);
}

TEST_CASE("flow export: deterministic path and conservation") {
    // one path through modules 2 -> 0 -> 1, taken by every one of 7 tokens
    SequenceTrace t;
    t.tokens = 7;
    t.k = 1;
    t.n_modules = 3;
    for (int i = 0; i < 7; ++i) t.ribbons.push_back({{2}, {0}, {1}});
    auto flow = dna::flow_export({t});
    CHECK(flow.freq[0][2] == 7);
    CHECK(flow.freq[1][0] == 7);
    CHECK(flow.freq[2][1] == 7);
    CHECK(flow.transitions[0][2][0] == 7);
    CHECK(flow.transitions[1][0][1] == 7);
    int64_t others = 0;
    for (const auto& step : flow.transitions) {
        for (const auto& row : step) {
            for (const int64_t v : row) others += v;
        }
    }
    CHECK(others == 14);  // nothing else

    // conservation: per-step frequencies sum to k * token count
    for (const auto& step : flow.freq) {
        int64_t sum = 0;
        for (const int64_t v : step) sum += v;
        CHECK(sum == 7);
    }
}

TEST_CASE("flow export: uniform random selections stay within the binomial bound") {
    Rng rng(17);
    SequenceTrace t;
    t.tokens = 100000;
    t.k = 1;
    t.n_modules = 8;
    for (int i = 0; i < t.tokens; ++i) t.ribbons.push_back({{rng.uniform_int(8)}});
    auto flow = dna::flow_export({t});
    const double sigma = std::sqrt(100000.0 * (1.0 / 8) * (7.0 / 8));
    for (int m = 0; m < 8; ++m) {
        CHECK(std::fabs(static_cast<double>(flow.freq[0][static_cast<size_t>(m)]) - 12500.0) <
              3 * sigma);
    }
}
