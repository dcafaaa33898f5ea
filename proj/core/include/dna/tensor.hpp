#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "dna/check.hpp"
#include "dna/fft.hpp"

namespace dna {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) {
        DNA_CHECK(d >= 0, "negative dimension in shape " << shape_str(shape));
        n *= d;
    }
    return n;
}

template <typename S>
struct TensorData {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;        // allocated lazily, mirrors value
    bool requires_grad = false; // leaf opted into gradient tracking
    bool is_node = false;       // produced by a recorded op

    bool tracked() const { return requires_grad || is_node; }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    }
};

// Dense row-major tensor with optional reverse-mode gradient buffer. Copies
// share storage; clone() detaches. Training uses Tensor<float>, all gradient
// and oracle checks run on Tensor<double>.
template <typename S>
class Tensor {
public:
    using Scalar = S;

    Tensor() : data_(std::make_shared<TensorData<S>>()) {}

    explicit Tensor(Shape shape, S fill = S(0)) : data_(std::make_shared<TensorData<S>>()) {
        data_->shape = std::move(shape);
        data_->value.assign(static_cast<size_t>(shape_numel(data_->shape)), fill);
    }

    static Tensor scalar(S v) {
        Tensor t(Shape{1});
        t.data_->value[0] = v;
        return t;
    }

    static Tensor from(Shape shape, std::vector<S> values) {
        Tensor t;
        DNA_CHECK(shape_numel(shape) == static_cast<int64_t>(values.size()),
                  "tensor init: shape " << shape_str(shape) << " wants " << shape_numel(shape)
                                        << " scalars, got " << values.size());
        t.data_->shape = std::move(shape);
        t.data_->value = std::move(values);
        return t;
    }

    const Shape& shape() const { return data_->shape; }
    int rank() const { return static_cast<int>(data_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_->value.size()); }
    int dim(int i) const { return data_->shape.at(static_cast<size_t>(i)); }

    int rows() const {
        DNA_CHECK(rank() == 2, "rows(): tensor is not 2-D, shape " << shape_str(shape()));
        return data_->shape[0];
    }
    int cols() const {
        DNA_CHECK(rank() == 2, "cols(): tensor is not 2-D, shape " << shape_str(shape()));
        return data_->shape[1];
    }

    std::vector<S>& value() { return data_->value; }
    const std::vector<S>& value() const { return data_->value; }
    std::vector<S>& grad() {
        data_->ensure_grad();
        return data_->grad;
    }
    const std::vector<S>& grad() const {
        data_->ensure_grad();
        return data_->grad;
    }

    S& at(int r, int c) { return data_->value[static_cast<size_t>(r) * cols() + c]; }
    S at(int r, int c) const { return data_->value[static_cast<size_t>(r) * cols() + c]; }

    S item() const {
        DNA_CHECK(numel() == 1, "item(): tensor has " << numel() << " elements");
        return data_->value[0];
    }

    bool tracked() const { return data_->tracked(); }
    bool requires_grad() const { return data_->requires_grad; }
    void set_requires_grad(bool on) { data_->requires_grad = on; }
    void zero_grad() {
        data_->grad.assign(data_->value.size(), S(0));
    }

    // Value copy detached from any graph.
    Tensor clone() const {
        Tensor t;
        t.data_->shape = data_->shape;
        t.data_->value = data_->value;
        return t;
    }

    std::shared_ptr<TensorData<S>> data_;
};

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
    Tensor<To> out;
    out.data_->shape = t.shape();
    out.data_->value.resize(t.value().size());
    for (size_t i = 0; i < t.value().size(); ++i) {
        out.data_->value[i] = static_cast<To>(t.value()[i]);
    }
    return out;
}

// Dynamically recorded tape. Constructing a Graph makes it current for the
// thread; ops append backward closures while one is active. Reverse tape order
// is a valid topological order, so backward() is a single reverse sweep.
template <typename S>
class Graph {
public:
    Graph() {
        prev_ = current_;
        current_ = this;
    }
    ~Graph() { current_ = prev_; }
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    static Graph* current() { return current_; }

    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
    size_t size() const { return ops_.size(); }

    void backward(Tensor<S>& root) {
        DNA_CHECK(root.numel() == 1,
                  "backward: root must be scalar, shape " << shape_str(root.shape()));
        root.data_->ensure_grad();
        root.data_->grad[0] += S(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    static thread_local Graph* current_;
    Graph* prev_ = nullptr;
    std::vector<std::function<void()>> ops_;
};

template <typename S>
thread_local Graph<S>* Graph<S>::current_ = nullptr;

namespace detail {

template <typename S>
bool wants_grad(const std::shared_ptr<TensorData<S>>& d) {
    return d->tracked();
}

template <typename S>
bool record_if_tracked(Tensor<S>& out, bool any_input_tracked, std::function<void()> fn) {
    auto* g = Graph<S>::current();
    if (g == nullptr || !any_input_tracked) return false;
    out.data_->is_node = true;
    out.data_->ensure_grad();  // backward closures read it unconditionally
    g->record(std::move(fn));
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    DNA_CHECK(a.shape() == b.shape(),
              op << ": shapes differ: " << shape_str(a.shape()) << " vs " << shape_str(b.shape()));
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape(a, b, "add");
    Tensor<S> out(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + b.value()[i];
    detail::record_if_tracked(out, a.tracked() || b.tracked(),
                              [ad = a.data_, bd = b.data_, od = out.data_] {
        const size_t n = od->value.size();
        if (detail::wants_grad(ad)) {
            ad->ensure_grad();
            for (size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i];
        }
        if (detail::wants_grad(bd)) {
            bd->ensure_grad();
            for (size_t i = 0; i < n; ++i) bd->grad[i] += od->grad[i];
        }
    });
    return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape(a, b, "sub");
    Tensor<S> out(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] - b.value()[i];
    detail::record_if_tracked(out, a.tracked() || b.tracked(),
                              [ad = a.data_, bd = b.data_, od = out.data_] {
        const size_t n = od->value.size();
        if (detail::wants_grad(ad)) {
            ad->ensure_grad();
            for (size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i];
        }
        if (detail::wants_grad(bd)) {
            bd->ensure_grad();
            for (size_t i = 0; i < n; ++i) bd->grad[i] -= od->grad[i];
        }
    });
    return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape(a, b, "mul");
    Tensor<S> out(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] * b.value()[i];
    detail::record_if_tracked(out, a.tracked() || b.tracked(),
                              [ad = a.data_, bd = b.data_, od = out.data_] {
        const size_t n = od->value.size();
        if (detail::wants_grad(ad)) {
            ad->ensure_grad();
            for (size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] * bd->value[i];
        }
        if (detail::wants_grad(bd)) {
            bd->ensure_grad();
            for (size_t i = 0; i < n; ++i) bd->grad[i] += od->grad[i] * ad->value[i];
        }
    });
    return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
    Tensor<S> out(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] * c;
    detail::record_if_tracked(out, a.tracked(), [ad = a.data_, od = out.data_, c] {
        if (!detail::wants_grad(ad)) return;
        ad->ensure_grad();
        for (size_t i = 0; i < od->value.size(); ++i) ad->grad[i] += od->grad[i] * c;
    });
    return out;
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
    Tensor<S> out(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + c;
    detail::record_if_tracked(out, a.tracked(), [ad = a.data_, od = out.data_] {
        if (!detail::wants_grad(ad)) return;
        ad->ensure_grad();
        for (size_t i = 0; i < od->value.size(); ++i) ad->grad[i] += od->grad[i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    DNA_CHECK(a.rank() == 2 && b.rank() == 2,
              "matmul: expects 2-D operands, got " << shape_str(a.shape()) << " x "
                                                   << shape_str(b.shape()));
    DNA_CHECK(a.cols() == b.rows(),
              "matmul: inner dimensions disagree: " << shape_str(a.shape()) << " x "
                                                    << shape_str(b.shape()));
    const int m = a.rows(), kk = a.cols(), n = b.cols();
    Tensor<S> out(Shape{m, n});
    const S* av = a.value().data();
    const S* bv = b.value().data();
    S* ov = out.value().data();
    for (int i = 0; i < m; ++i) {
        for (int k = 0; k < kk; ++k) {
            const S aik = av[static_cast<size_t>(i) * kk + k];
            const S* brow = bv + static_cast<size_t>(k) * n;
            S* orow = ov + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    detail::record_if_tracked(out, a.tracked() || b.tracked(),
                              [ad = a.data_, bd = b.data_, od = out.data_, m, kk, n] {
        const S* go = od->grad.data();
        if (detail::wants_grad(ad)) {
            ad->ensure_grad();
            // dA += gO * B^T
            for (int i = 0; i < m; ++i) {
                for (int k = 0; k < kk; ++k) {
                    S acc = 0;
                    const S* grow = go + static_cast<size_t>(i) * n;
                    const S* brow = bd->value.data() + static_cast<size_t>(k) * n;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ad->grad[static_cast<size_t>(i) * kk + k] += acc;
                }
            }
        }
        if (detail::wants_grad(bd)) {
            bd->ensure_grad();
            // dB += A^T * gO
            for (int k = 0; k < kk; ++k) {
                for (int i = 0; i < m; ++i) {
                    const S aik = ad->value[static_cast<size_t>(i) * kk + k];
                    const S* grow = go + static_cast<size_t>(i) * n;
                    S* brow = bd->grad.data() + static_cast<size_t>(k) * n;
                    for (int j = 0; j < n; ++j) brow[j] += aik * grow[j];
                }
            }
        }
    });
    return out;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
    DNA_CHECK(a.rank() == 2, "transpose: expects 2-D, got " << shape_str(a.shape()));
    const int m = a.rows(), n = a.cols();
    Tensor<S> out(Shape{n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out.value()[static_cast<size_t>(j) * m + i] = a.value()[static_cast<size_t>(i) * n + j];
    detail::record_if_tracked(out, a.tracked(), [ad = a.data_, od = out.data_, m, n] {
        if (!detail::wants_grad(ad)) return;
        ad->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                ad->grad[static_cast<size_t>(i) * n + j] += od->grad[static_cast<size_t>(j) * m + i];
    });
    return out;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape new_shape) {
    DNA_CHECK(shape_numel(new_shape) == a.numel(),
              "reshape: cannot view " << shape_str(a.shape()) << " as " << shape_str(new_shape));
    Tensor<S> out;
    out.data_->shape = std::move(new_shape);
    out.data_->value = a.value();
    detail::record_if_tracked(out, a.tracked(), [ad = a.data_, od = out.data_] {
        if (!detail::wants_grad(ad)) return;
        ad->ensure_grad();
        for (size_t i = 0; i < od->value.size(); ++i) ad->grad[i] += od->grad[i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// nonlinearities and norms
// ---------------------------------------------------------------------------

// Row-wise for 2-D (axis must name the reduced axis), plain for 1-D.
// Subtracts the per-slice maximum before exponentiation.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
    DNA_CHECK(x.rank() == 1 || x.rank() == 2,
              "softmax: expects 1-D or 2-D, got " << shape_str(x.shape()));
    if (x.rank() == 1) {
        DNA_CHECK(axis == 0, "softmax: axis " << axis << " invalid for 1-D input");
    } else {
        DNA_CHECK(axis == 0 || axis == 1, "softmax: axis " << axis << " invalid for 2-D input");
        if (axis == 0) return transpose(softmax(transpose(x), 1));
    }
    const int n_rows = x.rank() == 1 ? 1 : x.rows();
    const int n_cols = x.rank() == 1 ? static_cast<int>(x.numel()) : x.cols();
    Tensor<S> out(x.shape());
    for (int r = 0; r < n_rows; ++r) {
        const S* xv = x.value().data() + static_cast<size_t>(r) * n_cols;
        S* ov = out.value().data() + static_cast<size_t>(r) * n_cols;
        S mx = xv[0];
        for (int j = 1; j < n_cols; ++j) mx = std::max(mx, xv[j]);
        S denom = 0;
        for (int j = 0; j < n_cols; ++j) {
            ov[j] = std::exp(xv[j] - mx);
            denom += ov[j];
        }
        const S inv = S(1) / denom;
        for (int j = 0; j < n_cols; ++j) ov[j] *= inv;
    }
    detail::record_if_tracked(out, x.tracked(), [xd = x.data_, od = out.data_, n_rows, n_cols] {
        if (!detail::wants_grad(xd)) return;
        xd->ensure_grad();
        for (int r = 0; r < n_rows; ++r) {
            const S* p = od->value.data() + static_cast<size_t>(r) * n_cols;
            const S* g = od->grad.data() + static_cast<size_t>(r) * n_cols;
            S dot = 0;
            for (int j = 0; j < n_cols; ++j) dot += p[j] * g[j];
            S* gx = xd->grad.data() + static_cast<size_t>(r) * n_cols;
            for (int j = 0; j < n_cols; ++j) gx[j] += p[j] * (g[j] - dot);
        }
    });
    return out;
}

// Per-row layer norm with learned gain, no bias: y = gain * (x - mean) / sqrt(var + eps).
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, S eps = static_cast<S>(1e-5)) {
    DNA_CHECK(x.rank() == 2, "layer_norm: expects 2-D input, got " << shape_str(x.shape()));
    DNA_CHECK(gain.numel() == x.cols(),
              "layer_norm: gain size " << gain.numel() << " != width " << x.cols());
    const int n_rows = x.rows(), d = x.cols();
    Tensor<S> out(x.shape());
    // Saved for backward: per-row inverse sigma and normalized values.
    auto inv_sigma = std::make_shared<std::vector<S>>(n_rows);
    auto x_hat = std::make_shared<std::vector<S>>(x.value().size());
    for (int r = 0; r < n_rows; ++r) {
        const S* xv = x.value().data() + static_cast<size_t>(r) * d;
        S mean = 0;
        for (int j = 0; j < d; ++j) mean += xv[j];
        mean /= static_cast<S>(d);
        S var = 0;
        for (int j = 0; j < d; ++j) {
            const S c = xv[j] - mean;
            var += c * c;
        }
        var /= static_cast<S>(d);
        const S is = S(1) / std::sqrt(var + eps);
        (*inv_sigma)[r] = is;
        S* ov = out.value().data() + static_cast<size_t>(r) * d;
        S* xh = x_hat->data() + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j) {
            xh[j] = (xv[j] - mean) * is;
            ov[j] = xh[j] * gain.value()[j];
        }
    }
    detail::record_if_tracked(out, x.tracked() || gain.tracked(),
                              [xd = x.data_, gd = gain.data_, od = out.data_, inv_sigma, x_hat,
                               n_rows, d] {
        if (detail::wants_grad(gd)) {
            gd->ensure_grad();
            for (int r = 0; r < n_rows; ++r) {
                const S* go = od->grad.data() + static_cast<size_t>(r) * d;
                const S* xh = x_hat->data() + static_cast<size_t>(r) * d;
                for (int j = 0; j < d; ++j) gd->grad[j] += go[j] * xh[j];
            }
        }
        if (detail::wants_grad(xd)) {
            xd->ensure_grad();
            for (int r = 0; r < n_rows; ++r) {
                const S* go = od->grad.data() + static_cast<size_t>(r) * d;
                const S* xh = x_hat->data() + static_cast<size_t>(r) * d;
                S mean_gy = 0, mean_gy_xh = 0;
                for (int j = 0; j < d; ++j) {
                    const S gy = go[j] * gd->value[j];
                    mean_gy += gy;
                    mean_gy_xh += gy * xh[j];
                }
                mean_gy /= static_cast<S>(d);
                mean_gy_xh /= static_cast<S>(d);
                S* gx = xd->grad.data() + static_cast<size_t>(r) * d;
                const S is = (*inv_sigma)[r];
                for (int j = 0; j < d; ++j) {
                    const S gy = go[j] * gd->value[j];
                    gx[j] += (gy - mean_gy - xh[j] * mean_gy_xh) * is;
                }
            }
        }
    });
    return out;
}

// Exact GELU: x * Phi(x).
template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    Tensor<S> out(x.shape());
    const S inv_sqrt2 = static_cast<S>(0.7071067811865475244008443621048490393L);
    const S inv_sqrt2pi = static_cast<S>(0.3989422804014326779399460599343818685L);
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
        const S v = x.value()[i];
        out.value()[i] = v * S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
    }
    detail::record_if_tracked(out, x.tracked(),
                              [xd = x.data_, od = out.data_, inv_sqrt2, inv_sqrt2pi] {
        if (!detail::wants_grad(xd)) return;
        xd->ensure_grad();
        for (size_t i = 0; i < od->value.size(); ++i) {
            const S v = xd->value[i];
            const S phi = S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
            const S pdf = inv_sqrt2pi * std::exp(S(-0.5) * v * v);
            xd->grad[i] += od->grad[i] * (phi + v * pdf);
        }
    });
    return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    Tensor<S> out(x.shape());
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
        const S v = x.value()[i];
        out.value()[i] = v >= 0 ? S(1) / (S(1) + std::exp(-v))
                                : std::exp(v) / (S(1) + std::exp(v));
    }
    detail::record_if_tracked(out, x.tracked(), [xd = x.data_, od = out.data_] {
        if (!detail::wants_grad(xd)) return;
        xd->ensure_grad();
        for (size_t i = 0; i < od->value.size(); ++i) {
            const S y = od->value[i];
            xd->grad[i] += od->grad[i] * y * (S(1) - y);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// gather / scatter / slicing
// ---------------------------------------------------------------------------

// Rows of a 2-D tensor by index; also serves as embedding lookup.
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& x, const std::vector<int>& rows) {
    DNA_CHECK(x.rank() == 2, "gather_rows: expects 2-D, got " << shape_str(x.shape()));
    const int n = x.rows(), d = x.cols();
    Tensor<S> out(Shape{static_cast<int>(rows.size()), d});
    for (size_t r = 0; r < rows.size(); ++r) {
        DNA_CHECK(rows[r] >= 0 && rows[r] < n,
                  "gather_rows: index " << rows[r] << " out of range [0, " << n << ")");
        std::copy_n(x.value().data() + static_cast<size_t>(rows[r]) * d, d,
                    out.value().data() + r * d);
    }
    detail::record_if_tracked(out, x.tracked(), [xd = x.data_, od = out.data_, rows, d] {
        if (!detail::wants_grad(xd)) return;
        xd->ensure_grad();
        for (size_t r = 0; r < rows.size(); ++r) {
            const S* g = od->grad.data() + r * d;
            S* gx = xd->grad.data() + static_cast<size_t>(rows[r]) * d;
            for (int j = 0; j < d; ++j) gx[j] += g[j];
        }
    });
    return out;
}

// Rows of x placed (accumulating) into a zero tensor with out_rows rows.
template <typename S>
Tensor<S> scatter_rows(const Tensor<S>& x, const std::vector<int>& rows, int out_rows) {
    DNA_CHECK(x.rank() == 2, "scatter_rows: expects 2-D, got " << shape_str(x.shape()));
    DNA_CHECK(static_cast<int>(rows.size()) == x.rows(),
              "scatter_rows: " << rows.size() << " indices for " << x.rows() << " rows");
    const int d = x.cols();
    Tensor<S> out(Shape{out_rows, d});
    for (size_t r = 0; r < rows.size(); ++r) {
        DNA_CHECK(rows[r] >= 0 && rows[r] < out_rows,
                  "scatter_rows: index " << rows[r] << " out of range [0, " << out_rows << ")");
        const S* src = x.value().data() + r * d;
        S* dst = out.value().data() + static_cast<size_t>(rows[r]) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
    detail::record_if_tracked(out, x.tracked(), [xd = x.data_, od = out.data_, rows, d] {
        if (!detail::wants_grad(xd)) return;
        xd->ensure_grad();
        for (size_t r = 0; r < rows.size(); ++r) {
            const S* g = od->grad.data() + static_cast<size_t>(rows[r]) * d;
            S* gx = xd->grad.data() + r * d;
            for (int j = 0; j < d; ++j) gx[j] += g[j];
        }
    });
    return out;
}

// Arbitrary elements by flat index, reshaped to out_shape. Used for patch
// extraction, shifted views, and picking recorded routing probabilities.
template <typename S>
Tensor<S> gather_flat(const Tensor<S>& x, const std::vector<int64_t>& idx, Shape out_shape) {
    DNA_CHECK(shape_numel(out_shape) == static_cast<int64_t>(idx.size()),
              "gather_flat: " << idx.size() << " indices vs shape " << shape_str(out_shape));
    Tensor<S> out(std::move(out_shape));
    const int64_t n = x.numel();
    for (size_t i = 0; i < idx.size(); ++i) {
        DNA_CHECK(idx[i] >= 0 && idx[i] < n,
                  "gather_flat: index " << idx[i] << " out of range [0, " << n << ")");
        out.value()[i] = x.value()[static_cast<size_t>(idx[i])];
    }
    detail::record_if_tracked(out, x.tracked(), [xd = x.data_, od = out.data_, idx] {
        if (!detail::wants_grad(xd)) return;
        xd->ensure_grad();
        for (size_t i = 0; i < idx.size(); ++i) {
            xd->grad[static_cast<size_t>(idx[i])] += od->grad[i];
        }
    });
    return out;
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, int c0, int c1) {
    DNA_CHECK(x.rank() == 2, "slice_cols: expects 2-D, got " << shape_str(x.shape()));
    DNA_CHECK(0 <= c0 && c0 < c1 && c1 <= x.cols(),
              "slice_cols: range [" << c0 << ", " << c1 << ") invalid for width " << x.cols());
    const int n = x.rows(), d = x.cols(), w = c1 - c0;
    Tensor<S> out(Shape{n, w});
    for (int r = 0; r < n; ++r) {
        std::copy_n(x.value().data() + static_cast<size_t>(r) * d + c0, w,
                    out.value().data() + static_cast<size_t>(r) * w);
    }
    detail::record_if_tracked(out, x.tracked(), [xd = x.data_, od = out.data_, n, d, w, c0] {
        if (!detail::wants_grad(xd)) return;
        xd->ensure_grad();
        for (int r = 0; r < n; ++r) {
            const S* g = od->grad.data() + static_cast<size_t>(r) * w;
            S* gx = xd->grad.data() + static_cast<size_t>(r) * d + c0;
            for (int j = 0; j < w; ++j) gx[j] += g[j];
        }
    });
    return out;
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& xs) {
    DNA_CHECK(!xs.empty(), "concat_cols: empty input list");
    const int n = xs[0].rows();
    int total = 0;
    bool any_tracked = false;
    for (const auto& x : xs) {
        DNA_CHECK(x.rank() == 2 && x.rows() == n,
                  "concat_cols: row counts differ: " << shape_str(x.shape()));
        total += x.cols();
        any_tracked = any_tracked || x.tracked();
    }
    Tensor<S> out(Shape{n, total});
    int off = 0;
    for (const auto& x : xs) {
        const int w = x.cols();
        for (int r = 0; r < n; ++r) {
            std::copy_n(x.value().data() + static_cast<size_t>(r) * w, w,
                        out.value().data() + static_cast<size_t>(r) * total + off);
        }
        off += w;
    }
    std::vector<std::shared_ptr<TensorData<S>>> parts;
    parts.reserve(xs.size());
    for (const auto& x : xs) parts.push_back(x.data_);
    detail::record_if_tracked(out, any_tracked, [parts, od = out.data_, n, total] {
        int off = 0;
        for (const auto& pd : parts) {
            const int w = pd->shape[1];
            if (detail::wants_grad(pd)) {
                pd->ensure_grad();
                for (int r = 0; r < n; ++r) {
                    const S* g = od->grad.data() + static_cast<size_t>(r) * total + off;
                    S* gx = pd->grad.data() + static_cast<size_t>(r) * w;
                    for (int j = 0; j < w; ++j) gx[j] += g[j];
                }
            }
            off += w;
        }
    });
    return out;
}

// Row-scale: a[n x d] * w[n x 1] broadcast across columns.
template <typename S>
Tensor<S> mul_colvec(const Tensor<S>& a, const Tensor<S>& w) {
    DNA_CHECK(a.rank() == 2, "mul_colvec: expects 2-D, got " << shape_str(a.shape()));
    DNA_CHECK(w.numel() == a.rows(),
              "mul_colvec: weight length " << w.numel() << " != rows " << a.rows());
    const int n = a.rows(), d = a.cols();
    Tensor<S> out(a.shape());
    for (int r = 0; r < n; ++r) {
        const S wr = w.value()[static_cast<size_t>(r)];
        const S* av = a.value().data() + static_cast<size_t>(r) * d;
        S* ov = out.value().data() + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j) ov[j] = av[j] * wr;
    }
    detail::record_if_tracked(out, a.tracked() || w.tracked(),
                              [ad = a.data_, wd = w.data_, od = out.data_, n, d] {
        if (detail::wants_grad(ad)) {
            ad->ensure_grad();
            for (int r = 0; r < n; ++r) {
                const S wr = wd->value[static_cast<size_t>(r)];
                const S* g = od->grad.data() + static_cast<size_t>(r) * d;
                S* gx = ad->grad.data() + static_cast<size_t>(r) * d;
                for (int j = 0; j < d; ++j) gx[j] += g[j] * wr;
            }
        }
        if (detail::wants_grad(wd)) {
            wd->ensure_grad();
            for (int r = 0; r < n; ++r) {
                const S* g = od->grad.data() + static_cast<size_t>(r) * d;
                const S* av = ad->value.data() + static_cast<size_t>(r) * d;
                S acc = 0;
                for (int j = 0; j < d; ++j) acc += g[j] * av[j];
                wd->grad[static_cast<size_t>(r)] += acc;
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

// Mean over one axis of a 2-D tensor. axis=0 averages rows away -> [1, d].
template <typename S>
Tensor<S> mean_axis(const Tensor<S>& x, int axis) {
    DNA_CHECK(x.rank() == 2, "mean_axis: expects 2-D, got " << shape_str(x.shape()));
    DNA_CHECK(axis == 0 || axis == 1, "mean_axis: axis " << axis << " invalid");
    const int n = x.rows(), d = x.cols();
    if (axis == 1) return transpose(mean_axis(transpose(x), 0));
    Tensor<S> out(Shape{1, d});
    const S inv = S(1) / static_cast<S>(n);
    for (int r = 0; r < n; ++r) {
        const S* xv = x.value().data() + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j) out.value()[j] += xv[j] * inv;
    }
    detail::record_if_tracked(out, x.tracked(), [xd = x.data_, od = out.data_, n, d, inv] {
        if (!detail::wants_grad(xd)) return;
        xd->ensure_grad();
        for (int r = 0; r < n; ++r) {
            S* gx = xd->grad.data() + static_cast<size_t>(r) * d;
            for (int j = 0; j < d; ++j) gx[j] += od->grad[j] * inv;
        }
    });
    return out;
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
    Tensor<S> out(Shape{1});
    S acc = 0;
    for (const S v : x.value()) acc += v;
    out.value()[0] = acc;
    detail::record_if_tracked(out, x.tracked(), [xd = x.data_, od = out.data_] {
        if (!detail::wants_grad(xd)) return;
        xd->ensure_grad();
        const S g = od->grad[0];
        for (size_t i = 0; i < xd->grad.size(); ++i) xd->grad[i] += g;
    });
    return out;
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
    return scale(sum_all(x), S(1) / static_cast<S>(x.numel()));
}

// Mean negative log-likelihood over rows, fused with a stable log-softmax.
template <typename S>
Tensor<S> cross_entropy_logits(const Tensor<S>& logits, const std::vector<int>& targets) {
    DNA_CHECK(logits.rank() == 2,
              "cross_entropy: expects 2-D logits, got " << shape_str(logits.shape()));
    const int n = logits.rows(), c = logits.cols();
    DNA_CHECK(static_cast<int>(targets.size()) == n,
              "cross_entropy: " << targets.size() << " targets for " << n << " rows");
    Tensor<S> out(Shape{1});
    auto probs = std::make_shared<std::vector<S>>(logits.value().size());
    S loss = 0;
    for (int r = 0; r < n; ++r) {
        DNA_CHECK(targets[r] >= 0 && targets[r] < c,
                  "cross_entropy: target " << targets[r] << " out of range [0, " << c << ")");
        const S* xv = logits.value().data() + static_cast<size_t>(r) * c;
        S mx = xv[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, xv[j]);
        S denom = 0;
        S* pv = probs->data() + static_cast<size_t>(r) * c;
        for (int j = 0; j < c; ++j) {
            pv[j] = std::exp(xv[j] - mx);
            denom += pv[j];
        }
        const S inv = S(1) / denom;
        for (int j = 0; j < c; ++j) pv[j] *= inv;
        loss += -(xv[targets[r]] - mx - std::log(denom));
    }
    out.value()[0] = loss / static_cast<S>(n);
    detail::record_if_tracked(out, logits.tracked(),
                              [xd = logits.data_, od = out.data_, probs, targets, n, c] {
        if (!detail::wants_grad(xd)) return;
        xd->ensure_grad();
        const S g = od->grad[0] / static_cast<S>(n);
        for (int r = 0; r < n; ++r) {
            const S* pv = probs->data() + static_cast<size_t>(r) * c;
            S* gx = xd->grad.data() + static_cast<size_t>(r) * c;
            for (int j = 0; j < c; ++j) gx[j] += g * pv[j];
            gx[targets[r]] -= g;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Fourier-coefficient image synthesis
// ---------------------------------------------------------------------------

// Real part of the inverse 2-D FFT of a complex spectrum given as a {2, N, N}
// tensor (plane 0 real, plane 1 imaginary). Backward applies the exact adjoint
// via a forward FFT, so gradients w.r.t. the coefficients are exact even
// though the transform internals are not themselves tracked.
template <typename S>
Tensor<S> irfft2(const Tensor<S>& spec) {
    DNA_CHECK(spec.rank() == 3 && spec.dim(0) == 2 && spec.dim(1) == spec.dim(2),
              "irfft2: expects shape [2, N, N], got " << shape_str(spec.shape()));
    const int n = spec.dim(1);
    DNA_CHECK(is_power_of_two(n), "irfft2: side must be a power of two, got " << n);
    const size_t plane = static_cast<size_t>(n) * n;
    std::vector<std::complex<S>> grid(plane);
    for (size_t i = 0; i < plane; ++i) {
        grid[i] = std::complex<S>(spec.value()[i], spec.value()[plane + i]);
    }
    fft2_inplace(grid, n, /*inverse=*/true);
    Tensor<S> out(Shape{n, n});
    for (size_t i = 0; i < plane; ++i) out.value()[i] = grid[i].real();
    detail::record_if_tracked(out, spec.tracked(), [sd = spec.data_, od = out.data_, n, plane] {
        if (!detail::wants_grad(sd)) return;
        sd->ensure_grad();
        std::vector<std::complex<S>> g(plane);
        for (size_t i = 0; i < plane; ++i) g[i] = std::complex<S>(od->grad[i], S(0));
        fft2_inplace(g, n, /*inverse=*/false);
        const S norm = S(1) / static_cast<S>(plane);
        for (size_t i = 0; i < plane; ++i) {
            sd->grad[i] += g[i].real() * norm;
            sd->grad[plane + i] += g[i].imag() * norm;
        }
    });
    return out;
}

}  // namespace dna
