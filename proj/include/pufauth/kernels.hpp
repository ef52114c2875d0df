#pragma once

#include <span>

namespace pufauth::kernels {

/// NCHW convolution geometry; square kernel, symmetric zero padding.
struct ConvShape {
    int batch = 1;
    int in_c = 1, in_h = 1, in_w = 1;
    int out_c = 1;
    int kernel = 3, stride = 1, pad = 1;

    int out_h() const noexcept { return (in_h + 2 * pad - kernel) / stride + 1; }
    int out_w() const noexcept { return (in_w + 2 * pad - kernel) / stride + 1; }
    std::size_t in_size() const noexcept { return std::size_t(batch) * in_c * in_h * in_w; }
    std::size_t out_size() const noexcept { return std::size_t(batch) * out_c * out_h() * out_w(); }
    std::size_t weight_size() const noexcept { return std::size_t(out_c) * in_c * kernel * kernel; }
};

/// Dense layer geometry: y[n, o] = b[o] + sum_i W[o, i] x[n, i].
struct DenseShape {
    int batch = 1;
    int in = 1;
    int out = 1;
};

// Both backends compute every output element with the same summation order,
// so their results are bitwise identical. The serial versions are the
// reference used by tests and the benchmark; layers call the dispatchers below.
// Backward kernels overwrite (not accumulate into) their gradient outputs.

namespace serial {
template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> in, std::span<const T> w, std::span<const T> b,
                    std::span<T> out);
template <typename T>
void conv2d_backward_params(const ConvShape& s, std::span<const T> in, std::span<const T> dout, std::span<T> dw,
                            std::span<T> db);
template <typename T>
void conv2d_backward_input(const ConvShape& s, std::span<const T> w, std::span<const T> dout, std::span<T> din);
template <typename T>
void dense_forward(const DenseShape& s, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                   std::span<T> y);
template <typename T>
void dense_backward_params(const DenseShape& s, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                           std::span<T> db);
template <typename T>
void dense_backward_input(const DenseShape& s, std::span<const T> w, std::span<const T> dy, std::span<T> dx);
}  // namespace serial

namespace parallel {
template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> in, std::span<const T> w, std::span<const T> b,
                    std::span<T> out);
template <typename T>
void conv2d_backward_params(const ConvShape& s, std::span<const T> in, std::span<const T> dout, std::span<T> dw,
                            std::span<T> db);
template <typename T>
void conv2d_backward_input(const ConvShape& s, std::span<const T> w, std::span<const T> dout, std::span<T> din);
template <typename T>
void dense_forward(const DenseShape& s, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                   std::span<T> y);
template <typename T>
void dense_backward_params(const DenseShape& s, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                           std::span<T> db);
template <typename T>
void dense_backward_input(const DenseShape& s, std::span<const T> w, std::span<const T> dy, std::span<T> dx);
}  // namespace parallel

enum class Backend { serial, parallel };

/// Process-wide backend used by the layer dispatchers (default: parallel).
void set_backend(Backend b) noexcept;
Backend backend() noexcept;

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> in, std::span<const T> w, std::span<const T> b,
                    std::span<T> out) {
    backend() == Backend::serial ? serial::conv2d_forward<T>(s, in, w, b, out)
                                 : parallel::conv2d_forward<T>(s, in, w, b, out);
}
template <typename T>
void conv2d_backward_params(const ConvShape& s, std::span<const T> in, std::span<const T> dout, std::span<T> dw,
                            std::span<T> db) {
    backend() == Backend::serial ? serial::conv2d_backward_params<T>(s, in, dout, dw, db)
                                 : parallel::conv2d_backward_params<T>(s, in, dout, dw, db);
}
template <typename T>
void conv2d_backward_input(const ConvShape& s, std::span<const T> w, std::span<const T> dout, std::span<T> din) {
    backend() == Backend::serial ? serial::conv2d_backward_input<T>(s, w, dout, din)
                                 : parallel::conv2d_backward_input<T>(s, w, dout, din);
}
template <typename T>
void dense_forward(const DenseShape& s, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                   std::span<T> y) {
    backend() == Backend::serial ? serial::dense_forward<T>(s, x, w, b, y)
                                 : parallel::dense_forward<T>(s, x, w, b, y);
}
template <typename T>
void dense_backward_params(const DenseShape& s, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                           std::span<T> db) {
    backend() == Backend::serial ? serial::dense_backward_params<T>(s, x, dy, dw, db)
                                 : parallel::dense_backward_params<T>(s, x, dy, dw, db);
}
template <typename T>
void dense_backward_input(const DenseShape& s, std::span<const T> w, std::span<const T> dy, std::span<T> dx) {
    backend() == Backend::serial ? serial::dense_backward_input<T>(s, w, dy, dx)
                                 : parallel::dense_backward_input<T>(s, w, dy, dx);
}

}  // namespace pufauth::kernels
