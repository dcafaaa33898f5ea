#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "dna/check.hpp"
#include "dna/trace.hpp"

namespace dna {

struct AnalyticsConfig {
    double alpha = 1.5;          // IPR exponent, must be > 1
    double fit_lo_quantile = 0.05;  // power-law fit range, by cumulative mass
    double fit_hi_quantile = 0.95;
};

// Canonical form: each k-tuple already sorted ascending; steps joined by '|',
// indices inside a tuple by ','.
std::string ribbon_key(const std::vector<std::vector<int>>& ribbon);

struct PathStats {
    std::vector<std::pair<std::string, int64_t>> ranked;  // by descending count, ties lexicographic
    int64_t total_tokens = 0;

    size_t distinct() const { return ranked.size(); }
};

// Exact ribbon/path counts over every token of every sequence. Rank 1 is the
// most frequent. Errors on an empty trace set or mismatched ribbon lengths.
PathStats rank_frequency(const std::vector<SequenceTrace>& traces);

struct PowerLawFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    int rank_lo = 1;
    int rank_hi = 1;
    int n_points = 0;
};

// Least squares on (log rank, log count) over the quantile range of cumulative
// mass. Needs at least 10 distinct paths in range.
PowerLawFit powerlaw_fit(const PathStats& stats, const AnalyticsConfig& cfg = {});
PowerLawFit powerlaw_fit_counts(const std::vector<double>& counts_desc, double lo_quantile,
                                double hi_quantile);

// Effective top-k of a per-module count distribution: 1/IPR_alpha with
// IPR = sum(c^2a) / (sum(c^2))^a. 1 for one-hot counts, n_modules^(alpha-1)
// for uniform counts; exactly scale-invariant.
double effective_topk(const std::vector<double>& counts, double alpha);

// 1 - distinct/selections over a token's non-identity selections; an
// all-identity ribbon counts as 0. The parameter-weighted variant weighs each
// selection by its module's parameter count.
double ribbon_reuse(const std::vector<std::vector<int>>& ribbon, const std::set<int>& identity);
double ribbon_reuse_param_weighted(const std::vector<std::vector<int>>& ribbon,
                                   const std::set<int>& identity,
                                   const std::vector<int64_t>& module_params);

struct ReuseSummary {
    double by_count = 0.0;   // mean per-token reuse within the sequence
    double by_params = 0.0;  // parameter-weighted variant
};
ReuseSummary sequence_reuse(const SequenceTrace& trace);

// Pearson correlation; errors when either side has zero variance.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct FlowSummary {
    int n_modules = 0;
    int k = 1;
    std::vector<std::vector<int64_t>> freq;  // [step][module] visit counts
    // [step][from][to]: selections at step s vs s+1, all k*k pairs per token
    std::vector<std::vector<std::vector<int64_t>>> transitions;
    int64_t tokens = 0;
};
FlowSummary flow_export(const std::vector<SequenceTrace>& traces);

// Per-step selection counts from traces, the input to effective_topk.
std::vector<std::vector<double>> step_module_counts(const std::vector<SequenceTrace>& traces);

}  // namespace dna
