#include "dna/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dna/check.hpp"

namespace dna {

std::string ribbon_key(const std::vector<std::vector<int>>& ribbon) {
    std::string key;
    for (size_t s = 0; s < ribbon.size(); ++s) {
        if (s) key += '|';
        for (size_t j = 0; j < ribbon[s].size(); ++j) {
            if (j) key += ',';
            key += std::to_string(ribbon[s][j]);
        }
    }
    return key;
}

PathStats rank_frequency(const std::vector<SequenceTrace>& traces) {
    DNA_CHECK(!traces.empty(), "rank_frequency: empty trace set");
    std::map<std::string, int64_t> counts;
    int64_t total = 0;
    int steps = -1;
    for (const auto& t : traces) {
        for (const auto& ribbon : t.ribbons) {
            if (steps < 0) steps = static_cast<int>(ribbon.size());
            DNA_CHECK(static_cast<int>(ribbon.size()) == steps,
                      "rank_frequency: ribbons of different length (" << ribbon.size() << " vs "
                                                                      << steps << ")");
            counts[ribbon_key(ribbon)] += 1;
            ++total;
        }
    }
    DNA_CHECK(total > 0, "rank_frequency: traces contain no tokens");
    PathStats stats;
    stats.total_tokens = total;
    stats.ranked.assign(counts.begin(), counts.end());
    std::sort(stats.ranked.begin(), stats.ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return stats;
}

namespace {

PowerLawFit least_squares_loglog(const std::vector<double>& counts, int rank_lo, int rank_hi) {
    PowerLawFit fit;
    fit.rank_lo = rank_lo;
    fit.rank_hi = rank_hi;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    int n = 0;
    for (int r = rank_lo; r <= rank_hi; ++r) {
        const double c = counts[static_cast<size_t>(r - 1)];
        if (c <= 0.0) continue;
        const double x = std::log(static_cast<double>(r));
        const double y = std::log(c);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        ++n;
    }
    DNA_CHECK(n >= 10, "powerlaw_fit: insufficient support, only " << n
                       << " distinct paths in fit range (need >= 10)");
    const double dn = static_cast<double>(n);
    const double denom = dn * sxx - sx * sx;
    DNA_CHECK(denom != 0.0, "powerlaw_fit: degenerate rank range");
    fit.slope = (dn * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / dn;
    const double sst = syy - sy * sy / dn;
    double ssr = 0.0;
    for (int r = rank_lo; r <= rank_hi; ++r) {
        const double c = counts[static_cast<size_t>(r - 1)];
        if (c <= 0.0) continue;
        const double x = std::log(static_cast<double>(r));
        const double e = std::log(c) - (fit.intercept + fit.slope * x);
        ssr += e * e;
    }
    fit.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
    fit.n_points = n;
    return fit;
}

}  // namespace

PowerLawFit powerlaw_fit_counts(const std::vector<double>& counts_desc, double lo_quantile,
                                double hi_quantile) {
    DNA_CHECK(!counts_desc.empty(), "powerlaw_fit: no counts");
    DNA_CHECK(0.0 <= lo_quantile && lo_quantile < hi_quantile && hi_quantile <= 1.0,
              "powerlaw_fit: bad quantile range [" << lo_quantile << ", " << hi_quantile << "]");
    double total = 0.0;
    for (const double c : counts_desc) total += c;
    DNA_CHECK(total > 0.0, "powerlaw_fit: zero total mass");
    int rank_lo = 1;
    int rank_hi = static_cast<int>(counts_desc.size());
    double cum = 0.0;
    for (size_t i = 0; i < counts_desc.size(); ++i) {
        cum += counts_desc[i];
        if (cum >= lo_quantile * total) {
            rank_lo = static_cast<int>(i) + 1;
            break;
        }
    }
    cum = 0.0;
    for (size_t i = 0; i < counts_desc.size(); ++i) {
        cum += counts_desc[i];
        if (cum >= hi_quantile * total) {
            rank_hi = static_cast<int>(i) + 1;
            break;
        }
    }
    DNA_CHECK(rank_lo <= rank_hi, "powerlaw_fit: empty fit range");
    return least_squares_loglog(counts_desc, rank_lo, rank_hi);
}

PowerLawFit powerlaw_fit(const PathStats& stats, const AnalyticsConfig& cfg) {
    std::vector<double> counts;
    counts.reserve(stats.ranked.size());
    for (const auto& [key, c] : stats.ranked) counts.push_back(static_cast<double>(c));
    return powerlaw_fit_counts(counts, cfg.fit_lo_quantile, cfg.fit_hi_quantile);
}

double effective_topk(const std::vector<double>& counts, double alpha) {
    DNA_CHECK(alpha > 1.0, "effective_topk: alpha must exceed 1, got " << alpha);
    double mx = 0.0;
    for (const double c : counts) {
        DNA_CHECK(c >= 0.0, "effective_topk: negative count " << c);
        mx = std::max(mx, c);
    }
    DNA_CHECK(mx > 0.0, "effective_topk: all counts are zero");
    // Normalizing by the max keeps c^(2*alpha) in range; the ratio is exactly
    // scale-invariant.
    double num = 0.0, den = 0.0;
    for (const double c : counts) {
        const double x = c / mx;
        num += std::pow(x, 2.0 * alpha);
        den += x * x;
    }
    const double ipr = num / std::pow(den, alpha);
    return 1.0 / ipr;
}

double ribbon_reuse(const std::vector<std::vector<int>>& ribbon, const std::set<int>& identity) {
    int selections = 0;
    std::set<int> distinct;
    for (const auto& tuple : ribbon) {
        for (int m : tuple) {
            if (identity.count(m)) continue;
            ++selections;
            distinct.insert(m);
        }
    }
    if (selections == 0) return 0.0;
    return 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(selections);
}

double ribbon_reuse_param_weighted(const std::vector<std::vector<int>>& ribbon,
                                   const std::set<int>& identity,
                                   const std::vector<int64_t>& module_params) {
    int64_t multiset = 0;
    std::set<int> distinct;
    for (const auto& tuple : ribbon) {
        for (int m : tuple) {
            if (identity.count(m)) continue;
            multiset += module_params.at(static_cast<size_t>(m));
            distinct.insert(m);
        }
    }
    if (multiset == 0) return 0.0;
    int64_t unioned = 0;
    for (int m : distinct) unioned += module_params.at(static_cast<size_t>(m));
    return 1.0 - static_cast<double>(unioned) / static_cast<double>(multiset);
}

ReuseSummary sequence_reuse(const SequenceTrace& trace) {
    ReuseSummary out;
    if (trace.ribbons.empty()) return out;
    const std::set<int> identity(trace.identity.begin(), trace.identity.end());
    for (const auto& ribbon : trace.ribbons) {
        out.by_count += ribbon_reuse(ribbon, identity);
        out.by_params += ribbon_reuse_param_weighted(ribbon, identity, trace.module_params);
    }
    out.by_count /= static_cast<double>(trace.ribbons.size());
    out.by_params /= static_cast<double>(trace.ribbons.size());
    return out;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    DNA_CHECK(xs.size() == ys.size() && xs.size() >= 2,
              "pearson: needs two equal-length samples of size >= 2, got " << xs.size() << " and "
                                                                           << ys.size());
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    DNA_CHECK(sxx > 0.0 && syy > 0.0, "pearson: undefined correlation, zero variance input");
    return sxy / std::sqrt(sxx * syy);
}

FlowSummary flow_export(const std::vector<SequenceTrace>& traces) {
    DNA_CHECK(!traces.empty(), "flow_export: empty trace set");
    FlowSummary flow;
    flow.n_modules = traces.front().n_modules;
    flow.k = traces.front().k;
    const int steps = traces.front().n_steps();
    flow.freq.assign(static_cast<size_t>(steps),
                     std::vector<int64_t>(static_cast<size_t>(flow.n_modules), 0));
    if (steps > 1) {
        flow.transitions.assign(
            static_cast<size_t>(steps - 1),
            std::vector<std::vector<int64_t>>(static_cast<size_t>(flow.n_modules),
                                              std::vector<int64_t>(static_cast<size_t>(flow.n_modules), 0)));
    }
    for (const auto& t : traces) {
        DNA_CHECK(t.n_modules == flow.n_modules && t.n_steps() == steps,
                  "flow_export: traces disagree on pool size or step count");
        for (const auto& ribbon : t.ribbons) {
            ++flow.tokens;
            for (int s = 0; s < steps; ++s) {
                for (int m : ribbon[static_cast<size_t>(s)]) {
                    flow.freq[static_cast<size_t>(s)][static_cast<size_t>(m)] += 1;
                }
                if (s + 1 < steps) {
                    for (int from : ribbon[static_cast<size_t>(s)]) {
                        for (int to : ribbon[static_cast<size_t>(s + 1)]) {
                            flow.transitions[static_cast<size_t>(s)][static_cast<size_t>(from)]
                                            [static_cast<size_t>(to)] += 1;
                        }
                    }
                }
            }
        }
    }
    return flow;
}

std::vector<std::vector<double>> step_module_counts(const std::vector<SequenceTrace>& traces) {
    const FlowSummary flow = flow_export(traces);
    std::vector<std::vector<double>> counts(flow.freq.size());
    for (size_t s = 0; s < flow.freq.size(); ++s) {
        counts[s].assign(flow.freq[s].begin(), flow.freq[s].end());
    }
    return counts;
}

}  // namespace dna
