#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dna/rng.hpp"
#include "dna/tensor.hpp"

namespace dna {

enum class ModuleKind { TransformerBlock, AttentionOnly, MlpOnly, Identity };

inline const char* module_kind_name(ModuleKind k) {
    switch (k) {
        case ModuleKind::TransformerBlock: return "transformer";
        case ModuleKind::AttentionOnly: return "attention";
        case ModuleKind::MlpOnly: return "mlp";
        case ModuleKind::Identity: return "identity";
    }
    return "?";
}

inline ModuleKind module_kind_from_name(const std::string& name) {
    if (name == "transformer") return ModuleKind::TransformerBlock;
    if (name == "attention") return ModuleKind::AttentionOnly;
    if (name == "mlp") return ModuleKind::MlpOnly;
    if (name == "identity") return ModuleKind::Identity;
    DNA_CHECK(false, "unknown module kind '" << name
                     << "' (expected transformer|attention|mlp|identity)");
    return ModuleKind::Identity;
}

inline bool kind_has_attention(ModuleKind k) {
    return k == ModuleKind::TransformerBlock || k == ModuleKind::AttentionOnly;
}
inline bool kind_has_mlp(ModuleKind k) {
    return k == ModuleKind::TransformerBlock || k == ModuleKind::MlpOnly;
}

struct ModuleSpec {
    ModuleKind kind = ModuleKind::Identity;
    int d_embed = 0;
    int d_mlp = 0;
    int n_head = 1;
    bool causal = false;

    void validate() const {
        if (kind == ModuleKind::Identity) return;
        DNA_CHECK(d_embed > 0, "module spec: d_embed must be positive");
        if (kind_has_attention(kind)) {
            DNA_CHECK(n_head > 0 && d_embed % n_head == 0,
                      "module spec: d_embed " << d_embed << " not divisible by n_head " << n_head);
        }
        if (kind_has_mlp(kind)) {
            DNA_CHECK(d_mlp > 0, "module spec: d_mlp must be positive");
        }
    }
};

// Weights for one pool module. Identity carries none. No bias vectors anywhere;
// layer-norm gains start at 1, weight matrices at truncated normal(0, 0.02).
template <typename S>
struct ModuleParams {
    Tensor<S> attn_ln, wq, wk, wv, wo;  // attention sublayer
    Tensor<S> mlp_ln, w1, w2;           // mlp sublayer
};

constexpr double kInitStd = 0.02;
constexpr double kInitClipSigmas = 2.0;
constexpr double kLayerNormEps = 1e-5;

template <typename S>
Tensor<S> init_weight(Shape shape, Rng& rng) {
    Tensor<S> t(std::move(shape));
    for (auto& v : t.value()) {
        v = static_cast<S>(rng.trunc_normal(kInitStd, kInitClipSigmas));
    }
    t.set_requires_grad(true);
    return t;
}

template <typename S>
Tensor<S> init_gain(int d) {
    Tensor<S> t(Shape{d}, S(1));
    t.set_requires_grad(true);
    return t;
}

template <typename S>
ModuleParams<S> init_parameters(const ModuleSpec& spec, uint64_t seed) {
    spec.validate();
    ModuleParams<S> p;
    if (spec.kind == ModuleKind::Identity) return p;
    Rng rng(seed);
    const int d = spec.d_embed;
    if (kind_has_attention(spec.kind)) {
        p.attn_ln = init_gain<S>(d);
        p.wq = init_weight<S>({d, d}, rng);
        p.wk = init_weight<S>({d, d}, rng);
        p.wv = init_weight<S>({d, d}, rng);
        p.wo = init_weight<S>({d, d}, rng);
    }
    if (kind_has_mlp(spec.kind)) {
        p.mlp_ln = init_gain<S>(d);
        p.w1 = init_weight<S>({d, spec.d_mlp}, rng);
        p.w2 = init_weight<S>({spec.d_mlp, d}, rng);
    }
    return p;
}

template <typename S, typename Fn>
void for_each_module_param(const ModuleSpec& spec, ModuleParams<S>& p, Fn&& fn) {
    if (kind_has_attention(spec.kind)) {
        fn("attn_ln", p.attn_ln);
        fn("wq", p.wq);
        fn("wk", p.wk);
        fn("wv", p.wv);
        fn("wo", p.wo);
    }
    if (kind_has_mlp(spec.kind)) {
        fn("mlp_ln", p.mlp_ln);
        fn("w1", p.w1);
        fn("w2", p.w2);
    }
}

inline int64_t module_param_count(const ModuleSpec& spec) {
    int64_t n = 0;
    const int64_t d = spec.d_embed;
    if (kind_has_attention(spec.kind)) n += 4 * d * d + d;
    if (kind_has_mlp(spec.kind)) n += 2 * d * spec.d_mlp + d;
    return n;
}

namespace detail {

// Additive causal mask built from original token positions: entry (i, j) is 0
// when position j may be attended from position i, else a value whose exp
// underflows to exactly zero.
template <typename S>
Tensor<S> causal_mask(const std::vector<int>& positions) {
    const int n = static_cast<int>(positions.size());
    Tensor<S> mask(Shape{n, n});
    const S neg = static_cast<S>(-1e9);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (positions[j] > positions[i]) {
                mask.value()[static_cast<size_t>(i) * n + j] = neg;
            }
        }
    }
    return mask;
}

template <typename S>
Tensor<S> attention_sublayer(const ModuleSpec& spec, const ModuleParams<S>& p,
                             const Tensor<S>& x, const std::vector<int>& positions) {
    const int d = spec.d_embed;
    const int head_dim = d / spec.n_head;
    const Tensor<S> x_norm = layer_norm(x, p.attn_ln, static_cast<S>(kLayerNormEps));
    const Tensor<S> q = matmul(x_norm, p.wq);
    const Tensor<S> k = matmul(x_norm, p.wk);
    const Tensor<S> v = matmul(x_norm, p.wv);
    Tensor<S> mask;
    if (spec.causal) mask = causal_mask<S>(positions);
    std::vector<Tensor<S>> heads;
    heads.reserve(static_cast<size_t>(spec.n_head));
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(head_dim));
    for (int h = 0; h < spec.n_head; ++h) {
        const int c0 = h * head_dim, c1 = c0 + head_dim;
        Tensor<S> scores = scale(matmul(slice_cols(q, c0, c1), transpose(slice_cols(k, c0, c1))),
                                 inv_sqrt);
        if (spec.causal) scores = add(scores, mask);
        const Tensor<S> weights = softmax(scores, 1);
        heads.push_back(matmul(weights, slice_cols(v, c0, c1)));
    }
    return matmul(concat_cols(heads), p.wo);
}

template <typename S>
Tensor<S> mlp_sublayer(const ModuleSpec& spec, const ModuleParams<S>& p, const Tensor<S>& x) {
    const Tensor<S> x_norm = layer_norm(x, p.mlp_ln, static_cast<S>(kLayerNormEps));
    return matmul(gelu(matmul(x_norm, p.w1)), p.w2);
}

}  // namespace detail

// Pre-LN residual forward over exactly the tokens routed to this module, in
// ascending original-position order. Attention is computed only among these
// tokens; the causal mask uses the original positions. Identity returns its
// input unchanged.
template <typename S>
Tensor<S> module_forward(const ModuleSpec& spec, const ModuleParams<S>& p, const Tensor<S>& h,
                         const std::vector<int>& positions) {
    if (spec.kind == ModuleKind::Identity) return h;
    if (h.numel() == 0) return h;
    DNA_CHECK(h.rank() == 2 && h.cols() == spec.d_embed,
              "module_forward: token block " << shape_str(h.shape()) << " does not match d_embed "
                                             << spec.d_embed);
    DNA_CHECK(static_cast<int>(positions.size()) == h.rows(),
              "module_forward: " << positions.size() << " positions for " << h.rows() << " tokens");
    for (size_t i = 1; i < positions.size(); ++i) {
        DNA_CHECK(positions[i - 1] < positions[i],
                  "module_forward: token positions must be strictly ascending");
    }
    Tensor<S> out = h;
    if (kind_has_attention(spec.kind)) {
        out = add(out, detail::attention_sublayer(spec, p, out, positions));
    }
    if (kind_has_mlp(spec.kind)) {
        out = add(out, detail::mlp_sublayer(spec, p, out));
    }
    return out;
}

// ---------------------------------------------------------------------------
// input / output nodes
// ---------------------------------------------------------------------------

enum class TaskKind { VisionClassify, CausalLm };

inline const char* task_name(TaskKind t) {
    return t == TaskKind::VisionClassify ? "vision-classify" : "causal-lm";
}

inline TaskKind task_from_name(const std::string& name) {
    if (name == "vision-classify") return TaskKind::VisionClassify;
    if (name == "causal-lm") return TaskKind::CausalLm;
    DNA_CHECK(false, "unknown task '" << name << "' (expected vision-classify|causal-lm)");
    return TaskKind::VisionClassify;
}

// Embedding front end: patchify (unfold + linear) for vision, token embedding
// for language. Learned absolute positional embeddings are added here and
// nowhere else.
template <typename S>
struct InputNode {
    TaskKind task = TaskKind::VisionClassify;
    int d_embed = 0;
    // vision
    int image_size = 0;
    int patch_size = 0;
    int channels = 3;
    // language
    int vocab_size = 0;
    int context = 0;

    Tensor<S> patch_w;  // (patch*patch*channels) x d_embed
    Tensor<S> embed;    // vocab x d_embed
    Tensor<S> pos;      // max tokens x d_embed

    int token_count() const {
        if (task == TaskKind::VisionClassify) {
            const int side = image_size / patch_size;
            return side * side;
        }
        return context;
    }

    void init(Rng& rng) {
        if (task == TaskKind::VisionClassify) {
            DNA_CHECK(image_size > 0 && patch_size > 0 && image_size % patch_size == 0,
                      "input node: image size " << image_size << " not divisible by patch "
                                                << patch_size);
            patch_w = init_weight<S>({patch_size * patch_size * channels, d_embed}, rng);
        } else {
            DNA_CHECK(vocab_size > 0 && context > 0, "input node: vocab/context must be positive");
            embed = init_weight<S>({vocab_size, d_embed}, rng);
        }
        pos = init_weight<S>({token_count(), d_embed}, rng);
    }

    // image: flat [channels, H, W] tensor. Output: tokens x d_embed.
    Tensor<S> forward_image(const Tensor<S>& image) const {
        DNA_CHECK(image.numel() == static_cast<int64_t>(channels) * image_size * image_size,
                  "input node: image has " << image.numel() << " scalars, expected "
                                           << channels * image_size * image_size);
        const int side = image_size / patch_size;
        const int per_patch = patch_size * patch_size * channels;
        std::vector<int64_t> idx;
        idx.reserve(static_cast<size_t>(side) * side * per_patch);
        for (int py = 0; py < side; ++py) {
            for (int px = 0; px < side; ++px) {
                for (int c = 0; c < channels; ++c) {
                    for (int dy = 0; dy < patch_size; ++dy) {
                        for (int dx = 0; dx < patch_size; ++dx) {
                            const int64_t y = static_cast<int64_t>(py) * patch_size + dy;
                            const int64_t x = static_cast<int64_t>(px) * patch_size + dx;
                            idx.push_back((static_cast<int64_t>(c) * image_size + y) * image_size +
                                          x);
                        }
                    }
                }
            }
        }
        const Tensor<S> patches = gather_flat(image, idx, Shape{side * side, per_patch});
        return add(matmul(patches, patch_w), pos);
    }

    Tensor<S> forward_tokens(const std::vector<int>& ids) const {
        const int t = static_cast<int>(ids.size());
        DNA_CHECK(t > 0 && t <= context,
                  "input node: sequence length " << t << " exceeds context " << context);
        std::vector<int> rows(static_cast<size_t>(t));
        for (int i = 0; i < t; ++i) rows[static_cast<size_t>(i)] = i;
        return add(gather_rows(embed, ids), gather_rows(pos, rows));
    }
};

// Readout: global average pooling + linear classifier for vision (no class
// token), plain unembedding for language.
template <typename S>
struct OutputNode {
    TaskKind task = TaskKind::VisionClassify;
    int d_embed = 0;
    int n_out = 0;  // classes or vocab

    Tensor<S> w_out;  // d_embed x n_out

    void init(Rng& rng) {
        DNA_CHECK(n_out > 0, "output node: class/vocab count must be positive");
        w_out = init_weight<S>({d_embed, n_out}, rng);
    }

    Tensor<S> forward(const Tensor<S>& h) const {
        if (task == TaskKind::VisionClassify) {
            return matmul(mean_axis(h, 0), w_out);
        }
        return matmul(h, w_out);
    }
};

}  // namespace dna
