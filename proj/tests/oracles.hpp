#pragma once

// Independent reference implementations used to verify the tensor ops. These
// are written against the textbook definitions (explicit padded buffers,
// scatter-style transposed conv) rather than sharing any code with the
// library, so agreement is meaningful. All oracles run in double.

#include <cstddef>
#include <vector>

#include "cgen/rng.hpp"
#include "cgen/tensor.hpp"

namespace oracle {

// Fills a tensor with values on the dyadic lattice {i/8 : i in [-16, 15]}.
// Products and sums of such values are exact in double, so library-vs-oracle
// comparisons can demand bitwise equality regardless of accumulation order.
inline void lattice_fill(cgen::Rng& rng, cgen::ad::Tensor<double>& t) {
    for (auto& v : t.data()) v = static_cast<double>(rng.uniform_int(-16, 15)) / 8.0;
}

inline std::vector<double> matmul_oracle(const std::vector<double>& a,
                                         const std::vector<double>& b, std::size_t r,
                                         std::size_t k, std::size_t c) {
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t l = 0; l < c; ++l) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += a[i * k + j] * b[j * c + l];
            out[i * c + l] = acc;
        }
    return out;
}

// Direct cross-correlation over an explicitly zero-padded copy of the input.
inline std::vector<double> conv2d_oracle(const std::vector<double>& in, std::size_t B,
                                         std::size_t C, std::size_t H, std::size_t W,
                                         const std::vector<double>& k, std::size_t F,
                                         std::size_t KH, std::size_t KW, std::size_t s,
                                         std::size_t p) {
    const std::size_t PH = H + 2 * p, PW = W + 2 * p;
    std::vector<double> padded(B * C * PH * PW, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w)
                    padded[((b * C + c) * PH + h + p) * PW + w + p] =
                        in[((b * C + c) * H + h) * W + w];
    const std::size_t OH = (PH - KH) / s + 1, OW = (PW - KW) / s + 1;
    std::vector<double> out(B * F * OH * OW, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t kh = 0; kh < KH; ++kh)
                            for (std::size_t kw = 0; kw < KW; ++kw)
                                acc += padded[((b * C + c) * PH + oh * s + kh) * PW + ow * s + kw] *
                                       k[((f * C + c) * KH + kh) * KW + kw];
                    out[((b * F + f) * OH + oh) * OW + ow] = acc;
                }
    return out;
}

// Scatter form of the transposed convolution: every input element deposits a
// kernel-weighted stamp into the output, with padding cropping the borders.
inline std::vector<double> conv_transpose2d_oracle(const std::vector<double>& in, std::size_t B,
                                                   std::size_t F, std::size_t H, std::size_t W,
                                                   const std::vector<double>& k, std::size_t C,
                                                   std::size_t KH, std::size_t KW, std::size_t s,
                                                   std::size_t p) {
    const std::size_t OH = (H - 1) * s + KH - 2 * p, OW = (W - 1) * s + KW - 2 * p;
    std::vector<double> out(B * C * OH * OW, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    const double x = in[((b * F + f) * H + h) * W + w];
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t kh = 0; kh < KH; ++kh)
                            for (std::size_t kw = 0; kw < KW; ++kw) {
                                const long long oh = static_cast<long long>(h * s + kh) -
                                                     static_cast<long long>(p);
                                const long long ow = static_cast<long long>(w * s + kw) -
                                                     static_cast<long long>(p);
                                if (oh < 0 || ow < 0 || oh >= static_cast<long long>(OH) ||
                                    ow >= static_cast<long long>(OW))
                                    continue;
                                out[((b * C + c) * OH + oh) * OW + ow] +=
                                    x * k[((f * C + c) * KH + kh) * KW + kw];
                            }
                }
    return out;
}

}  // namespace oracle
