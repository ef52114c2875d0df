#include <omp.h>

#include "detail.hpp"
#include "pufauth/errors.hpp"

namespace pufauth::kernels {

namespace parallel {

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> in, std::span<const T> w, std::span<const T> b,
                    std::span<T> out) {
    if (in.size() != s.in_size() || w.size() != s.weight_size() || b.size() != std::size_t(s.out_c) ||
        out.size() != s.out_size())
        throw ShapeMismatch("conv2d_forward buffer sizes");
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < s.batch; ++n)
        for (int oc = 0; oc < s.out_c; ++oc) detail::conv_forward_plane(s, n, oc, in.data(), w.data(), b.data(), out.data());
}

template <typename T>
void conv2d_backward_params(const ConvShape& s, std::span<const T> in, std::span<const T> dout, std::span<T> dw,
                            std::span<T> db) {
    if (in.size() != s.in_size() || dout.size() != s.out_size() || dw.size() != s.weight_size() ||
        db.size() != std::size_t(s.out_c))
        throw ShapeMismatch("conv2d_backward_params buffer sizes");
#pragma omp parallel for schedule(dynamic)
    for (int oc = 0; oc < s.out_c; ++oc)
        detail::conv_backward_params_channel(s, oc, in.data(), dout.data(), dw.data(), db.data());
}

template <typename T>
void conv2d_backward_input(const ConvShape& s, std::span<const T> w, std::span<const T> dout, std::span<T> din) {
    if (w.size() != s.weight_size() || dout.size() != s.out_size() || din.size() != s.in_size())
        throw ShapeMismatch("conv2d_backward_input buffer sizes");
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < s.batch; ++n)
        for (int ic = 0; ic < s.in_c; ++ic) detail::conv_backward_input_plane(s, n, ic, w.data(), dout.data(), din.data());
}

template <typename T>
void dense_forward(const DenseShape& s, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                   std::span<T> y) {
    if (x.size() != std::size_t(s.batch) * s.in || w.size() != std::size_t(s.out) * s.in ||
        b.size() != std::size_t(s.out) || y.size() != std::size_t(s.batch) * s.out)
        throw ShapeMismatch("dense_forward buffer sizes");
#pragma omp parallel for schedule(static)
    for (int n = 0; n < s.batch; ++n) detail::dense_forward_row(s, n, x.data(), w.data(), b.data(), y.data());
}

template <typename T>
void dense_backward_params(const DenseShape& s, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                           std::span<T> db) {
    if (x.size() != std::size_t(s.batch) * s.in || dy.size() != std::size_t(s.batch) * s.out ||
        dw.size() != std::size_t(s.out) * s.in || db.size() != std::size_t(s.out))
        throw ShapeMismatch("dense_backward_params buffer sizes");
#pragma omp parallel for schedule(static)
    for (int o = 0; o < s.out; ++o) detail::dense_backward_params_row(s, o, x.data(), dy.data(), dw.data(), db.data());
}

template <typename T>
void dense_backward_input(const DenseShape& s, std::span<const T> w, std::span<const T> dy, std::span<T> dx) {
    if (w.size() != std::size_t(s.out) * s.in || dy.size() != std::size_t(s.batch) * s.out ||
        dx.size() != std::size_t(s.batch) * s.in)
        throw ShapeMismatch("dense_backward_input buffer sizes");
#pragma omp parallel for schedule(static)
    for (int n = 0; n < s.batch; ++n) detail::dense_backward_input_row(s, n, w.data(), dy.data(), dx.data());
}

#define PUFAUTH_INSTANTIATE(T)                                                                                  \
    template void conv2d_forward<T>(const ConvShape&, std::span<const T>, std::span<const T>, std::span<const T>, \
                                    std::span<T>);                                                             \
    template void conv2d_backward_params<T>(const ConvShape&, std::span<const T>, std::span<const T>,           \
                                            std::span<T>, std::span<T>);                                        \
    template void conv2d_backward_input<T>(const ConvShape&, std::span<const T>, std::span<const T>, std::span<T>); \
    template void dense_forward<T>(const DenseShape&, std::span<const T>, std::span<const T>, std::span<const T>, \
                                   std::span<T>);                                                              \
    template void dense_backward_params<T>(const DenseShape&, std::span<const T>, std::span<const T>,           \
                                           std::span<T>, std::span<T>);                                         \
    template void dense_backward_input<T>(const DenseShape&, std::span<const T>, std::span<const T>, std::span<T>);

PUFAUTH_INSTANTIATE(float)
PUFAUTH_INSTANTIATE(double)
#undef PUFAUTH_INSTANTIATE

}  // namespace parallel
}  // namespace pufauth::kernels
