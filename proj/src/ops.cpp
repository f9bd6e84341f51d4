#include "cgen/ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace cgen::ad {

namespace {

// Records `rule` when a tape is active and any input carries grad; only then
// does the output itself become differentiable.
template <typename T>
void maybe_record(std::initializer_list<Tensor<T>> inputs, Tensor<T>& out,
                  std::function<void()> rule) {
    Tape<T>* tape = active_tape<T>();
    if (!tape) return;
    bool needs = false;
    for (const auto& t : inputs) needs = needs || t.requires_grad();
    if (!needs) return;
    out.set_requires_grad(true);
    std::vector<Tensor<T>> touched(inputs.begin(), inputs.end());
    touched.push_back(out);
    tape->record(std::move(rule), std::move(touched));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!same_shape(a.shape(), b.shape())) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " do not match");
    }
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                             std::to_string(rank) + ", got " + shape_str(t.shape()));
    }
}

// Extents of one conv2d application. For conv_transpose2d the same record is
// used with (H, W) naming the *output* plane and (OH, OW) the input plane.
struct ConvDims {
    std::size_t B, C, H, W;    // image-side plane
    std::size_t F, KH, KW;     // filters and kernel extents
    std::size_t S, P;          // stride, padding
    std::size_t OH, OW;        // filter-side plane
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p,
                                   const char* op, const char* axis) {
    const std::size_t padded = in + 2 * p;
    if (padded < k || (padded - k) % s != 0) {
        throw ConfigError(std::string(op) + ": extent " + std::to_string(in) + " with kernel " +
                          std::to_string(k) + ", stride " + std::to_string(s) + ", padding " +
                          std::to_string(p) + " gives no integral output " + axis);
    }
    return (padded - k) / s + 1;
}

// out[b,f,oh,ow] = Σ_{c,kh,kw} in[b,c,oh·s+kh−p, ow·s+kw−p] · k[f,c,kh,kw]
template <typename T>
void conv_fwd_kernel(const T* in, const T* k, const ConvDims& d, T* out) {
    for (std::size_t b = 0; b < d.B; ++b)
        for (std::size_t f = 0; f < d.F; ++f)
            for (std::size_t oh = 0; oh < d.OH; ++oh)
                for (std::size_t ow = 0; ow < d.OW; ++ow) {
                    T acc = 0;
                    for (std::size_t c = 0; c < d.C; ++c)
                        for (std::size_t kh = 0; kh < d.KH; ++kh) {
                            const long long ih =
                                static_cast<long long>(oh * d.S + kh) - static_cast<long long>(d.P);
                            if (ih < 0 || ih >= static_cast<long long>(d.H)) continue;
                            for (std::size_t kw = 0; kw < d.KW; ++kw) {
                                const long long iw = static_cast<long long>(ow * d.S + kw) -
                                                     static_cast<long long>(d.P);
                                if (iw < 0 || iw >= static_cast<long long>(d.W)) continue;
                                acc += in[((b * d.C + c) * d.H + ih) * d.W + iw] *
                                       k[((f * d.C + c) * d.KH + kh) * d.KW + kw];
                            }
                        }
                    out[((b * d.F + f) * d.OH + oh) * d.OW + ow] = acc;
                }
}

// gin[b,c,ih,iw] = Σ_{f,kh,kw : oh=(ih+p−kh)/s integral} gout[b,f,oh,ow] · k[f,c,kh,kw]
// Doubling as the forward of conv_transpose2d (gout := its input).
template <typename T>
void conv_input_grad_kernel(const T* gout, const T* k, const ConvDims& d, T* gin) {
    for (std::size_t b = 0; b < d.B; ++b)
        for (std::size_t c = 0; c < d.C; ++c)
            for (std::size_t ih = 0; ih < d.H; ++ih)
                for (std::size_t iw = 0; iw < d.W; ++iw) {
                    T acc = 0;
                    for (std::size_t kh = 0; kh < d.KH; ++kh) {
                        const long long hnum = static_cast<long long>(ih + d.P) -
                                               static_cast<long long>(kh);
                        if (hnum < 0 || hnum % static_cast<long long>(d.S) != 0) continue;
                        const long long oh = hnum / static_cast<long long>(d.S);
                        if (oh >= static_cast<long long>(d.OH)) continue;
                        for (std::size_t kw = 0; kw < d.KW; ++kw) {
                            const long long wnum = static_cast<long long>(iw + d.P) -
                                                   static_cast<long long>(kw);
                            if (wnum < 0 || wnum % static_cast<long long>(d.S) != 0) continue;
                            const long long ow = wnum / static_cast<long long>(d.S);
                            if (ow >= static_cast<long long>(d.OW)) continue;
                            for (std::size_t f = 0; f < d.F; ++f) {
                                acc += gout[((b * d.F + f) * d.OH + oh) * d.OW + ow] *
                                       k[((f * d.C + c) * d.KH + kh) * d.KW + kw];
                            }
                        }
                    }
                    gin[((b * d.C + c) * d.H + ih) * d.W + iw] = acc;
                }
}

// gk[f,c,kh,kw] = Σ_{b,oh,ow} in[b,c,oh·s+kh−p, ow·s+kw−p] · gout[b,f,oh,ow]
template <typename T>
void conv_kernel_grad_kernel(const T* in, const T* gout, const ConvDims& d, T* gk) {
    for (std::size_t f = 0; f < d.F; ++f)
        for (std::size_t c = 0; c < d.C; ++c)
            for (std::size_t kh = 0; kh < d.KH; ++kh)
                for (std::size_t kw = 0; kw < d.KW; ++kw) {
                    T acc = 0;
                    for (std::size_t b = 0; b < d.B; ++b)
                        for (std::size_t oh = 0; oh < d.OH; ++oh) {
                            const long long ih =
                                static_cast<long long>(oh * d.S + kh) - static_cast<long long>(d.P);
                            if (ih < 0 || ih >= static_cast<long long>(d.H)) continue;
                            for (std::size_t ow = 0; ow < d.OW; ++ow) {
                                const long long iw = static_cast<long long>(ow * d.S + kw) -
                                                     static_cast<long long>(d.P);
                                if (iw < 0 || iw >= static_cast<long long>(d.W)) continue;
                                acc += in[((b * d.C + c) * d.H + ih) * d.W + iw] *
                                       gout[((b * d.F + f) * d.OH + oh) * d.OW + ow];
                            }
                        }
                    gk[((f * d.C + c) * d.KH + kh) * d.KW + kw] = acc;
                }
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_elementwise(const Tensor<T>& x, const char* op, Fwd fwd, Bwd dfd_out_in) {
    auto out = Tensor<T>::zeros(x.shape());
    auto xd = x.data();
    auto od = out.data();
    for (std::size_t i = 0; i < xd.size(); ++i) od[i] = fwd(xd[i]);
    out.ensure_finite(op);
    maybe_record({x}, out, [x, out, dfd_out_in]() {
        auto g = out.grad();
        if (g.empty()) return;
        std::vector<T> gx(g.size());
        auto xd = x.data();
        auto od = out.data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * dfd_out_in(od[i], xd[i]);
        x.accum_grad(gx);
    });
    return out;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank(a, 2, "matmul", "left operand");
    require_rank(b, 2, "matmul", "right operand");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: inner extents of " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " do not agree");
    }
    const std::size_t r = a.dim(0), k = a.dim(1), c = b.dim(1);
    auto out = Tensor<T>::zeros({r, c});
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const T aij = ad[i * k + j];
            for (std::size_t l = 0; l < c; ++l) od[i * c + l] += aij * bd[j * c + l];
        }
    out.ensure_finite("matmul");
    maybe_record({a, b}, out, [a, b, out, r, k, c]() {
        auto g = out.grad();
        if (g.empty()) return;
        auto ad = a.data();
        auto bd = b.data();
        if (a.requires_grad()) {
            std::vector<T> ga(r * k, T(0));
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t l = 0; l < c; ++l) {
                    const T gil = g[i * c + l];
                    for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += gil * bd[j * c + l];
                }
            a.accum_grad(ga);
        }
        if (b.requires_grad()) {
            std::vector<T> gb(k * c, T(0));
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < k; ++j) {
                    const T aij = ad[i * k + j];
                    for (std::size_t l = 0; l < c; ++l) gb[j * c + l] += aij * g[i * c + l];
                }
            b.accum_grad(gb);
        }
    });
    return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                 std::size_t padding) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(kernel, 4, "conv2d", "kernel");
    if (stride == 0) throw ConfigError("conv2d: stride must be positive");
    if (input.dim(1) != kernel.dim(1)) {
        throw DimensionError("conv2d: input channels of " + shape_str(input.shape()) +
                             " do not match kernel " + shape_str(kernel.shape()));
    }
    ConvDims d;
    d.B = input.dim(0);
    d.C = input.dim(1);
    d.H = input.dim(2);
    d.W = input.dim(3);
    d.F = kernel.dim(0);
    d.KH = kernel.dim(2);
    d.KW = kernel.dim(3);
    d.S = stride;
    d.P = padding;
    d.OH = conv_out_extent(d.H, d.KH, stride, padding, "conv2d", "height");
    d.OW = conv_out_extent(d.W, d.KW, stride, padding, "conv2d", "width");

    auto out = Tensor<T>::zeros({d.B, d.F, d.OH, d.OW});
    conv_fwd_kernel(input.data().data(), kernel.data().data(), d, out.data().data());
    out.ensure_finite("conv2d");
    maybe_record({input, kernel}, out, [input, kernel, out, d]() {
        auto g = out.grad();
        if (g.empty()) return;
        if (input.requires_grad()) {
            std::vector<T> gin(input.numel());
            conv_input_grad_kernel(g.data(), kernel.data().data(), d, gin.data());
            input.accum_grad(gin);
        }
        if (kernel.requires_grad()) {
            std::vector<T> gk(kernel.numel());
            conv_kernel_grad_kernel(input.data().data(), g.data(), d, gk.data());
            kernel.accum_grad(gk);
        }
    });
    return out;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                           std::size_t padding) {
    require_rank(input, 4, "conv_transpose2d", "input");
    require_rank(kernel, 4, "conv_transpose2d", "kernel");
    if (stride == 0) throw ConfigError("conv_transpose2d: stride must be positive");
    if (input.dim(1) != kernel.dim(0)) {
        throw DimensionError("conv_transpose2d: input channels of " + shape_str(input.shape()) +
                             " do not match kernel " + shape_str(kernel.shape()));
    }
    // The input sits on the filter-side plane of the equivalent conv2d.
    ConvDims d;
    d.B = input.dim(0);
    d.F = input.dim(1);
    d.OH = input.dim(2);
    d.OW = input.dim(3);
    d.C = kernel.dim(1);
    d.KH = kernel.dim(2);
    d.KW = kernel.dim(3);
    d.S = stride;
    d.P = padding;
    const long long h = static_cast<long long>((d.OH - 1) * stride + d.KH) -
                        2 * static_cast<long long>(padding);
    const long long w = static_cast<long long>((d.OW - 1) * stride + d.KW) -
                        2 * static_cast<long long>(padding);
    if (h < 1 || w < 1) {
        throw ConfigError("conv_transpose2d: output extent would be non-positive for input " +
                          shape_str(input.shape()) + ", kernel " + shape_str(kernel.shape()));
    }
    d.H = static_cast<std::size_t>(h);
    d.W = static_cast<std::size_t>(w);

    auto out = Tensor<T>::zeros({d.B, d.C, d.H, d.W});
    conv_input_grad_kernel(input.data().data(), kernel.data().data(), d, out.data().data());
    out.ensure_finite("conv_transpose2d");
    maybe_record({input, kernel}, out, [input, kernel, out, d]() {
        auto g = out.grad();
        if (g.empty()) return;
        if (input.requires_grad()) {
            std::vector<T> gin(input.numel());
            conv_fwd_kernel(g.data(), kernel.data().data(), d, gin.data());
            input.accum_grad(gin);
        }
        if (kernel.requires_grad()) {
            std::vector<T> gk(kernel.numel());
            conv_kernel_grad_kernel(g.data(), input.data().data(), d, gk.data());
            kernel.accum_grad(gk);
        }
    });
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary_elementwise(
        x, "relu", [](T v) { return v > T(0) ? v : T(0); },
        [](T, T in) { return in > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary_elementwise(
        x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); },
        [](T o, T) { return o * (T(1) - o); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return unary_elementwise(
        x, "tanh", [](T v) { return std::tanh(v); }, [](T o, T) { return T(1) - o * o; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary_elementwise(
        x, "exp", [](T v) { return std::exp(v); }, [](T o, T) { return o; });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    auto out = Tensor<T>::zeros(a.shape());
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
    out.ensure_finite("add");
    maybe_record({a, b}, out, [a, b, out]() {
        auto g = out.grad();
        if (g.empty()) return;
        if (a.requires_grad()) a.accum_grad(g);
        if (b.requires_grad()) b.accum_grad(g);
    });
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    auto out = Tensor<T>::zeros(a.shape());
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] - bd[i];
    out.ensure_finite("sub");
    maybe_record({a, b}, out, [a, b, out]() {
        auto g = out.grad();
        if (g.empty()) return;
        if (a.requires_grad()) a.accum_grad(g);
        if (b.requires_grad()) {
            std::vector<T> gb(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i];
            b.accum_grad(gb);
        }
    });
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    auto out = Tensor<T>::zeros(a.shape());
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
    out.ensure_finite("mul");
    maybe_record({a, b}, out, [a, b, out]() {
        auto g = out.grad();
        if (g.empty()) return;
        auto ad = a.data();
        auto bd = b.data();
        std::vector<T> buf(g.size());
        if (a.requires_grad()) {
            for (std::size_t i = 0; i < g.size(); ++i) buf[i] = g[i] * bd[i];
            a.accum_grad(buf);
        }
        if (b.requires_grad()) {
            for (std::size_t i = 0; i < g.size(); ++i) buf[i] = g[i] * ad[i];
            b.accum_grad(buf);
        }
    });
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    return unary_elementwise(
        x, "scale", [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& m, const Tensor<T>& v) {
    require_rank(m, 2, "add_rowvec", "matrix");
    require_rank(v, 1, "add_rowvec", "vector");
    if (m.dim(1) != v.dim(0)) {
        throw DimensionError("add_rowvec: row width of " + shape_str(m.shape()) +
                             " does not match vector " + shape_str(v.shape()));
    }
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    auto out = Tensor<T>::zeros(m.shape());
    auto md = m.data();
    auto vd = v.data();
    auto od = out.data();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) od[i * cols + j] = md[i * cols + j] + vd[j];
    out.ensure_finite("add_rowvec");
    maybe_record({m, v}, out, [m, v, out, rows, cols]() {
        auto g = out.grad();
        if (g.empty()) return;
        if (m.requires_grad()) m.accum_grad(g);
        if (v.requires_grad()) {
            std::vector<T> gv(cols, T(0));
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) gv[j] += g[i * cols + j];
            v.accum_grad(gv);
        }
    });
    return out;
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    require_rank(x, 4, "add_channel_bias", "input");
    require_rank(bias, 1, "add_channel_bias", "bias");
    if (x.dim(1) != bias.dim(0)) {
        throw DimensionError("add_channel_bias: channels of " + shape_str(x.shape()) +
                             " do not match bias " + shape_str(bias.shape()));
    }
    const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    auto out = Tensor<T>::zeros(x.shape());
    auto xd = x.data();
    auto bd = bias.data();
    auto od = out.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const T bc = bd[c];
            const std::size_t base = (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) od[base + i] = xd[base + i] + bc;
        }
    out.ensure_finite("add_channel_bias");
    maybe_record({x, bias}, out, [x, bias, out, B, C, HW]() {
        auto g = out.grad();
        if (g.empty()) return;
        if (x.requires_grad()) x.accum_grad(g);
        if (bias.requires_grad()) {
            std::vector<T> gb(C, T(0));
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t base = (b * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) gb[c] += g[base + i];
                }
            bias.accum_grad(gb);
        }
    });
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                             shape_str(shape));
    }
    auto xd = x.data();
    auto out = Tensor<T>::from(std::move(shape), std::vector<T>(xd.begin(), xd.end()));
    maybe_record({x}, out, [x, out]() {
        auto g = out.grad();
        if (g.empty()) return;
        x.accum_grad(g);
    });
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    auto xd = x.data();
    T acc = 0;
    for (T v : xd) acc += v;
    auto out = Tensor<T>::scalar(acc);
    out.ensure_finite("sum");
    maybe_record({x}, out, [x, out]() {
        auto g = out.grad();
        if (g.empty()) return;
        std::vector<T> gx(x.numel(), g[0]);
        x.accum_grad(gx);
    });
    return out;
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mse");
    auto ad = a.data();
    auto bd = b.data();
    const std::size_t n = ad.size();
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T diff = ad[i] - bd[i];
        acc += diff * diff;
    }
    auto out = Tensor<T>::scalar(acc / static_cast<T>(n));
    out.ensure_finite("mse");
    maybe_record({a, b}, out, [a, b, out, n]() {
        auto g = out.grad();
        if (g.empty()) return;
        auto ad = a.data();
        auto bd = b.data();
        const T coef = T(2) * g[0] / static_cast<T>(n);
        std::vector<T> buf(n);
        for (std::size_t i = 0; i < n; ++i) buf[i] = coef * (ad[i] - bd[i]);
        if (a.requires_grad()) a.accum_grad(buf);
        if (b.requires_grad()) {
            for (std::size_t i = 0; i < n; ++i) buf[i] = -buf[i];
            b.accum_grad(buf);
        }
    });
    return out;
}

template <typename T>
Tensor<T> bce(const Tensor<T>& prob, const Tensor<T>& label) {
    require_same_shape(prob, label, "bce");
    constexpr T kEps = T(1e-7);
    auto pd = prob.data();
    auto yd = label.data();
    const std::size_t n = pd.size();
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (yd[i] != T(0) && yd[i] != T(1)) {
            throw ValidationError("bce: label at index " + std::to_string(i) +
                                  " is not 0 or 1");
        }
        const T p = std::min(std::max(pd[i], kEps), T(1) - kEps);
        acc -= yd[i] * std::log(p) + (T(1) - yd[i]) * std::log(T(1) - p);
    }
    auto out = Tensor<T>::scalar(acc / static_cast<T>(n));
    out.ensure_finite("bce");
    maybe_record({prob, label}, out, [prob, label, out, n]() {
        auto g = out.grad();
        if (g.empty()) return;
        if (!prob.requires_grad()) return;  // labels are data, no gradient
        auto pd = prob.data();
        auto yd = label.data();
        const T coef = g[0] / static_cast<T>(n);
        std::vector<T> gp(n, T(0));
        for (std::size_t i = 0; i < n; ++i) {
            if (pd[i] <= kEps || pd[i] >= T(1) - kEps) continue;  // clamp region is flat
            gp[i] = coef * (-yd[i] / pd[i] + (T(1) - yd[i]) / (T(1) - pd[i]));
        }
        prob.accum_grad(gp);
    });
    return out;
}

template Tensor<float> matmul<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> conv2d<float>(const Tensor<float>&, const Tensor<float>&, std::size_t,
                                     std::size_t);
template Tensor<double> conv2d<double>(const Tensor<double>&, const Tensor<double>&, std::size_t,
                                       std::size_t);
template Tensor<float> conv_transpose2d<float>(const Tensor<float>&, const Tensor<float>&,
                                               std::size_t, std::size_t);
template Tensor<double> conv_transpose2d<double>(const Tensor<double>&, const Tensor<double>&,
                                                 std::size_t, std::size_t);
template Tensor<float> relu<float>(const Tensor<float>&);
template Tensor<double> relu<double>(const Tensor<double>&);
template Tensor<float> sigmoid<float>(const Tensor<float>&);
template Tensor<double> sigmoid<double>(const Tensor<double>&);
template Tensor<float> tanh<float>(const Tensor<float>&);
template Tensor<double> tanh<double>(const Tensor<double>&);
template Tensor<float> exp<float>(const Tensor<float>&);
template Tensor<double> exp<double>(const Tensor<double>&);
template Tensor<float> add<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> add<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> sub<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> sub<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> mul<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mul<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> scale<float>(const Tensor<float>&, float);
template Tensor<double> scale<double>(const Tensor<double>&, double);
template Tensor<float> add_rowvec<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> add_rowvec<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> add_channel_bias<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> add_channel_bias<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> reshape<float>(const Tensor<float>&, Shape);
template Tensor<double> reshape<double>(const Tensor<double>&, Shape);
template Tensor<float> sum<float>(const Tensor<float>&);
template Tensor<double> sum<double>(const Tensor<double>&);
template Tensor<float> mse<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> bce<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> bce<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace cgen::ad
