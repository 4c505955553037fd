#pragma once

// Shared float im2col plumbing for the training conv layers and the
// unquantized inference stages. Patch rows are ordered channel-major:
// row = c*K*K + ky*K + kx, matching the packed weight layout.

#include <stdexcept>
#include <vector>

#include "ternet/layers.hpp"
#include "ternet/tensor.hpp"

namespace ternet::detail {

struct ConvShapes {
    std::size_t batch;
    int h, w, oh, ow;
    std::size_t cols;  // batch * oh * ow
};

inline ConvShapes conv_shapes(const std::vector<std::size_t>& x_shape, const ConvGeom& g) {
    if (x_shape.size() != 4) {
        throw std::invalid_argument("conv: expected input shaped (batch, c, h, w)");
    }
    if (static_cast<int>(x_shape[1]) != g.in_c) {
        throw std::invalid_argument("conv: input channel count mismatch");
    }
    ConvShapes s;
    s.batch = x_shape[0];
    s.h = static_cast<int>(x_shape[2]);
    s.w = static_cast<int>(x_shape[3]);
    if (s.h + 2 * g.pad < g.kernel || s.w + 2 * g.pad < g.kernel) {
        throw std::invalid_argument("conv: kernel larger than padded input");
    }
    s.oh = g.out_dim(s.h);
    s.ow = g.out_dim(s.w);
    s.cols = s.batch * static_cast<std::size_t>(s.oh) * static_cast<std::size_t>(s.ow);
    return s;
}

// patches is (in_c*K*K) x (batch*oh*ow); column index is b*oh*ow + oy*ow + ox
inline void im2col(const Tensord& x, const ConvGeom& g, const ConvShapes& s,
                   RowMatrix<double>& patches) {
    const int K = g.kernel;
    patches.setZero(g.fan_in(), static_cast<Eigen::Index>(s.cols));
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    const std::size_t sample = static_cast<std::size_t>(g.in_c) * plane;
    for (std::size_t b = 0; b < s.batch; ++b) {
        const double* xb = x.data() + b * sample;
        for (int oy = 0; oy < s.oh; ++oy) {
            for (int ox = 0; ox < s.ow; ++ox) {
                const Eigen::Index col =
                    static_cast<Eigen::Index>(b * s.oh * s.ow + oy * static_cast<std::size_t>(s.ow) + ox);
                for (int c = 0; c < g.in_c; ++c) {
                    for (int ky = 0; ky < K; ++ky) {
                        const int y = oy * g.stride - g.pad + ky;
                        if (y < 0 || y >= s.h) continue;
                        for (int kx = 0; kx < K; ++kx) {
                            const int xcoord = ox * g.stride - g.pad + kx;
                            if (xcoord < 0 || xcoord >= s.w) continue;
                            patches(c * K * K + ky * K + kx, col) =
                                xb[c * plane + static_cast<std::size_t>(y) * s.w + xcoord];
                        }
                    }
                }
            }
        }
    }
}

inline void col2im(const RowMatrix<double>& dpatches, const ConvGeom& g, const ConvShapes& s,
                   Tensord& dx) {
    const int K = g.kernel;
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    const std::size_t sample = static_cast<std::size_t>(g.in_c) * plane;
    for (std::size_t b = 0; b < s.batch; ++b) {
        double* db = dx.data() + b * sample;
        for (int oy = 0; oy < s.oh; ++oy) {
            for (int ox = 0; ox < s.ow; ++ox) {
                const Eigen::Index col =
                    static_cast<Eigen::Index>(b * s.oh * s.ow + oy * static_cast<std::size_t>(s.ow) + ox);
                for (int c = 0; c < g.in_c; ++c) {
                    for (int ky = 0; ky < K; ++ky) {
                        const int y = oy * g.stride - g.pad + ky;
                        if (y < 0 || y >= s.h) continue;
                        for (int kx = 0; kx < K; ++kx) {
                            const int xcoord = ox * g.stride - g.pad + kx;
                            if (xcoord < 0 || xcoord >= s.w) continue;
                            db[c * plane + static_cast<std::size_t>(y) * s.w + xcoord] +=
                                dpatches(c * K * K + ky * K + kx, col);
                        }
                    }
                }
            }
        }
    }
}

// out(b, f, oy, ox) = sum over patch of w_eff(f, .) * patch + bias
inline Tensord conv_forward(const RowMatrix<double>& patches, const Tensord& w_eff,
                            const double* bias, const ConvGeom& g, const ConvShapes& s) {
    const auto wmat = w_eff.matrix(g.out_c, g.fan_in());
    RowMatrix<double> y = wmat * patches;  // (out_c) x (batch*oh*ow)
    Tensord out({s.batch, static_cast<std::size_t>(g.out_c), static_cast<std::size_t>(s.oh),
                 static_cast<std::size_t>(s.ow)});
    const std::size_t pix = static_cast<std::size_t>(s.oh) * s.ow;
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (int f = 0; f < g.out_c; ++f) {
            double* dst = out.data() + (b * g.out_c + static_cast<std::size_t>(f)) * pix;
            const double add = bias ? bias[f] : 0.0;
            for (std::size_t p = 0; p < pix; ++p) {
                dst[p] = y(f, static_cast<Eigen::Index>(b * pix + p)) + add;
            }
        }
    }
    return out;
}

// regroup grad_out (batch, out_c, oh, ow) into (out_c) x (batch*oh*ow)
inline RowMatrix<double> conv_grad_matrix(const Tensord& grad_out, const ConvGeom& g,
                                          const ConvShapes& s) {
    RowMatrix<double> gm(g.out_c, static_cast<Eigen::Index>(s.cols));
    const std::size_t pix = static_cast<std::size_t>(s.oh) * s.ow;
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (int f = 0; f < g.out_c; ++f) {
            const double* src = grad_out.data() + (b * g.out_c + static_cast<std::size_t>(f)) * pix;
            for (std::size_t p = 0; p < pix; ++p) {
                gm(f, static_cast<Eigen::Index>(b * pix + p)) = src[p];
            }
        }
    }
    return gm;
}

}  // namespace ternet::detail
