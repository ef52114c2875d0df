#pragma once

// Per-output-block bodies shared by the serial and OpenMP kernels. Each
// function owns a disjoint slice of the output, so the backends differ only
// in how the blocks are scheduled.

#include <algorithm>
#include <span>

#include "pufauth/kernels.hpp"

namespace pufauth::kernels::detail {

// Output indices o with 0 <= o*stride - pad + k < extent, clamped to [0, out).
inline void valid_range(int k, int stride, int pad, int extent, int out, int& lo, int& hi) {
    const int lo_num = pad - k;
    const int hi_num = extent - 1 + pad - k;
    lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
    hi = hi_num < 0 ? 0 : std::min(out, hi_num / stride + 1);
}

template <typename T>
void conv_forward_plane(const ConvShape& s, int n, int oc, const T* in, const T* w, const T* b, T* out) {
    const int oh = s.out_h(), ow = s.out_w(), K = s.kernel;
    T* dst = out + (std::size_t(n) * s.out_c + oc) * oh * ow;
    std::fill(dst, dst + std::size_t(oh) * ow, b[oc]);
    for (int ic = 0; ic < s.in_c; ++ic) {
        const T* src = in + (std::size_t(n) * s.in_c + ic) * s.in_h * s.in_w;
        for (int ky = 0; ky < K; ++ky) {
            int oy0, oy1;
            valid_range(ky, s.stride, s.pad, s.in_h, oh, oy0, oy1);
            for (int kx = 0; kx < K; ++kx) {
                int ox0, ox1;
                valid_range(kx, s.stride, s.pad, s.in_w, ow, ox0, ox1);
                const int off = kx - s.pad;
                const T wv = w[((std::size_t(oc) * s.in_c + ic) * K + ky) * K + kx];
                for (int oy = oy0; oy < oy1; ++oy) {
                    const T* row = src + std::size_t(oy * s.stride - s.pad + ky) * s.in_w;
                    T* o = dst + std::size_t(oy) * ow;
                    for (int ox = ox0; ox < ox1; ++ox) o[ox] += wv * row[ox * s.stride + off];
                }
            }
        }
    }
}

template <typename T>
void conv_backward_params_channel(const ConvShape& s, int oc, const T* in, const T* dout, T* dw, T* db) {
    const int oh = s.out_h(), ow = s.out_w(), K = s.kernel;
    double bias_acc = 0.0;
    for (int n = 0; n < s.batch; ++n) {
        const T* g = dout + (std::size_t(n) * s.out_c + oc) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) bias_acc += g[i];
    }
    db[oc] = static_cast<T>(bias_acc);
    for (int ic = 0; ic < s.in_c; ++ic) {
        for (int ky = 0; ky < K; ++ky) {
            int oy0, oy1;
            valid_range(ky, s.stride, s.pad, s.in_h, oh, oy0, oy1);
            for (int kx = 0; kx < K; ++kx) {
                int ox0, ox1;
                valid_range(kx, s.stride, s.pad, s.in_w, ow, ox0, ox1);
                const int off = kx - s.pad;
                double acc = 0.0;
                for (int n = 0; n < s.batch; ++n) {
                    const T* src = in + (std::size_t(n) * s.in_c + ic) * s.in_h * s.in_w;
                    const T* g = dout + (std::size_t(n) * s.out_c + oc) * oh * ow;
                    for (int oy = oy0; oy < oy1; ++oy) {
                        const T* row = src + std::size_t(oy * s.stride - s.pad + ky) * s.in_w;
                        const T* grow = g + std::size_t(oy) * ow;
                        T part = 0;
                        for (int ox = ox0; ox < ox1; ++ox) part += grow[ox] * row[ox * s.stride + off];
                        acc += part;
                    }
                }
                dw[((std::size_t(oc) * s.in_c + ic) * K + ky) * K + kx] = static_cast<T>(acc);
            }
        }
    }
}

template <typename T>
void conv_backward_input_plane(const ConvShape& s, int n, int ic, const T* w, const T* dout, T* din) {
    const int oh = s.out_h(), ow = s.out_w(), K = s.kernel;
    T* dst = din + (std::size_t(n) * s.in_c + ic) * s.in_h * s.in_w;
    std::fill(dst, dst + std::size_t(s.in_h) * s.in_w, T(0));
    for (int oc = 0; oc < s.out_c; ++oc) {
        const T* g = dout + (std::size_t(n) * s.out_c + oc) * oh * ow;
        for (int ky = 0; ky < K; ++ky) {
            int oy0, oy1;
            valid_range(ky, s.stride, s.pad, s.in_h, oh, oy0, oy1);
            for (int kx = 0; kx < K; ++kx) {
                int ox0, ox1;
                valid_range(kx, s.stride, s.pad, s.in_w, ow, ox0, ox1);
                const int off = kx - s.pad;
                const T wv = w[((std::size_t(oc) * s.in_c + ic) * K + ky) * K + kx];
                for (int oy = oy0; oy < oy1; ++oy) {
                    T* row = dst + std::size_t(oy * s.stride - s.pad + ky) * s.in_w;
                    const T* grow = g + std::size_t(oy) * ow;
                    for (int ox = ox0; ox < ox1; ++ox) row[ox * s.stride + off] += wv * grow[ox];
                }
            }
        }
    }
}

template <typename T>
void dense_forward_row(const DenseShape& s, int n, const T* x, const T* w, const T* b, T* y) {
    const T* xi = x + std::size_t(n) * s.in;
    T* yo = y + std::size_t(n) * s.out;
    for (int o = 0; o < s.out; ++o) {
        const T* wr = w + std::size_t(o) * s.in;
        T acc = 0;
        for (int i = 0; i < s.in; ++i) acc += wr[i] * xi[i];
        yo[o] = acc + b[o];
    }
}

template <typename T>
void dense_backward_params_row(const DenseShape& s, int o, const T* x, const T* dy, T* dw, T* db) {
    double bacc = 0.0;
    for (int n = 0; n < s.batch; ++n) bacc += dy[std::size_t(n) * s.out + o];
    db[o] = static_cast<T>(bacc);
    T* wr = dw + std::size_t(o) * s.in;
    for (int i = 0; i < s.in; ++i) {
        double acc = 0.0;
        for (int n = 0; n < s.batch; ++n) acc += double(dy[std::size_t(n) * s.out + o]) * x[std::size_t(n) * s.in + i];
        wr[i] = static_cast<T>(acc);
    }
}

template <typename T>
void dense_backward_input_row(const DenseShape& s, int n, const T* w, const T* dy, T* dx) {
    T* xr = dx + std::size_t(n) * s.in;
    std::fill(xr, xr + s.in, T(0));
    const T* g = dy + std::size_t(n) * s.out;
    for (int o = 0; o < s.out; ++o) {
        const T* wr = w + std::size_t(o) * s.in;
        const T go = g[o];
        for (int i = 0; i < s.in; ++i) xr[i] += wr[i] * go;
    }
}

}  // namespace pufauth::kernels::detail
