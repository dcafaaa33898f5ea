#pragma once

// Straightforward Pre-LN transformer reference in plain double loops. This is
// the independent oracle the routed implementation is checked against; it must
// not call any dna tensor op.

#include <cmath>
#include <vector>

namespace dna::testing {

struct RefBlock {
    bool has_attention = false;
    bool has_mlp = false;
    int d = 0;
    int d_mlp = 0;
    int n_head = 1;
    std::vector<double> attn_ln, wq, wk, wv, wo;  // gains length d, weights d*d row-major
    std::vector<double> mlp_ln, w1, w2;           // w1 d*d_mlp, w2 d_mlp*d
};

inline std::vector<double> ref_matmul(const std::vector<double>& a, int m, int k,
                                      const std::vector<double>& b, int n) {
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            const double aik = a[static_cast<size_t>(i) * k + kk];
            for (int j = 0; j < n; ++j) {
                out[static_cast<size_t>(i) * n + j] += aik * b[static_cast<size_t>(kk) * n + j];
            }
        }
    }
    return out;
}

inline std::vector<double> ref_layer_norm(const std::vector<double>& x, int n, int d,
                                          const std::vector<double>& gain, double eps = 1e-5) {
    std::vector<double> out(x.size());
    for (int r = 0; r < n; ++r) {
        const double* row = x.data() + static_cast<size_t>(r) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += row[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j) {
            out[static_cast<size_t>(r) * d + j] = (row[j] - mean) * inv * gain[static_cast<size_t>(j)];
        }
    }
    return out;
}

inline double ref_gelu(double v) {
    return v * 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
}

// Attention over the given rows; entry j is attendable from i when
// positions[j] <= positions[i] (or always, when causal is false).
inline std::vector<double> ref_attention(const RefBlock& blk, const std::vector<double>& x_norm,
                                         int n, const std::vector<int>& positions, bool causal) {
    const int d = blk.d;
    const int head_dim = d / blk.n_head;
    const std::vector<double> q = ref_matmul(x_norm, n, d, blk.wq, d);
    const std::vector<double> k = ref_matmul(x_norm, n, d, blk.wk, d);
    const std::vector<double> v = ref_matmul(x_norm, n, d, blk.wv, d);
    std::vector<double> ctx(static_cast<size_t>(n) * d, 0.0);
    for (int h = 0; h < blk.n_head; ++h) {
        const int c0 = h * head_dim;
        for (int i = 0; i < n; ++i) {
            std::vector<double> scores(static_cast<size_t>(n), -1e300);
            double mx = -1e300;
            for (int j = 0; j < n; ++j) {
                if (causal && positions[static_cast<size_t>(j)] > positions[static_cast<size_t>(i)])
                    continue;
                double s = 0.0;
                for (int c = 0; c < head_dim; ++c) {
                    s += q[static_cast<size_t>(i) * d + c0 + c] * k[static_cast<size_t>(j) * d + c0 + c];
                }
                s /= std::sqrt(static_cast<double>(head_dim));
                scores[static_cast<size_t>(j)] = s;
                mx = std::max(mx, s);
            }
            double denom = 0.0;
            for (int j = 0; j < n; ++j) {
                if (scores[static_cast<size_t>(j)] <= -1e299) continue;
                denom += std::exp(scores[static_cast<size_t>(j)] - mx);
            }
            for (int j = 0; j < n; ++j) {
                if (scores[static_cast<size_t>(j)] <= -1e299) continue;
                const double w = std::exp(scores[static_cast<size_t>(j)] - mx) / denom;
                for (int c = 0; c < head_dim; ++c) {
                    ctx[static_cast<size_t>(i) * d + c0 + c] +=
                        w * v[static_cast<size_t>(j) * d + c0 + c];
                }
            }
        }
    }
    return ref_matmul(ctx, n, d, blk.wo, d);
}

inline std::vector<double> ref_block_forward(const RefBlock& blk, std::vector<double> h, int n,
                                             const std::vector<int>& positions, bool causal) {
    const int d = blk.d;
    if (blk.has_attention) {
        const std::vector<double> a =
            ref_attention(blk, ref_layer_norm(h, n, d, blk.attn_ln), n, positions, causal);
        for (size_t i = 0; i < h.size(); ++i) h[i] += a[i];
    }
    if (blk.has_mlp) {
        const std::vector<double> x_norm = ref_layer_norm(h, n, d, blk.mlp_ln);
        std::vector<double> hidden = ref_matmul(x_norm, n, d, blk.w1, blk.d_mlp);
        for (auto& v : hidden) v = ref_gelu(v);
        const std::vector<double> out = ref_matmul(hidden, n, blk.d_mlp, blk.w2, d);
        for (size_t i = 0; i < h.size(); ++i) h[i] += out[i];
    }
    return h;
}

}  // namespace dna::testing
