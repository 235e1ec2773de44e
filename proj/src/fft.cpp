#include "restore/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "restore/ops.hpp"

namespace restore {

namespace fft {

template <class T>
void transform(std::span<std::complex<T>> data, bool inverse) {
    const std::size_t n = data.size();
    if (!is_power_of_two(n)) throw std::invalid_argument("fft: length " + std::to_string(n) + " is not a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        for (std::size_t k = 0; k < half; ++k) {
            // Twiddles from the exact angle rather than repeated multiplication.
            const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
            const std::complex<T> w(static_cast<T>(std::cos(angle)), static_cast<T>(std::sin(angle)));
            for (std::size_t i = 0; i < n; i += len) {
                const std::complex<T> u = data[i + k];
                const std::complex<T> v = data[i + k + half] * w;
                data[i + k] = u + v;
                data[i + k + half] = u - v;
            }
        }
    }
}

template <class T>
void transform2d(std::span<std::complex<T>> plane, std::size_t rows, std::size_t cols, bool inverse) {
    if (plane.size() != rows * cols) throw std::invalid_argument("fft: plane size mismatch");
    for (std::size_t r = 0; r < rows; ++r) transform(plane.subspan(r * cols, cols), inverse);
    std::vector<std::complex<T>> column(rows);
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t r = 0; r < rows; ++r) column[r] = plane[r * cols + c];
        transform(std::span<std::complex<T>>(column), inverse);
        for (std::size_t r = 0; r < rows; ++r) plane[r * cols + c] = column[r];
    }
}

template void transform<float>(std::span<std::complex<float>>, bool);
template void transform<double>(std::span<std::complex<double>>, bool);
template void transform2d<float>(std::span<std::complex<float>>, std::size_t, std::size_t, bool);
template void transform2d<double>(std::span<std::complex<double>>, std::size_t, std::size_t, bool);

}  // namespace fft

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> fft2(const BasicTensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("fft2: expected [B,C,H,W], got " + shape_str(x.shape()));
    const std::size_t H = x.dim(2), W = x.dim(3);
    if (!fft::is_power_of_two(H) || !fft::is_power_of_two(W))
        throw ShapeError("fft2: spatial dims of " + shape_str(x.shape()) + " must be powers of two");
    const std::size_t P = H * W, planes = x.numel() / P;
    Buffer<T> re(x.numel()), im(x.numel());
    std::vector<std::complex<T>> buf(P);
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < P; ++i) buf[i] = {x.ptr()[p * P + i], T(0)};
        fft::transform2d(std::span<std::complex<T>>(buf), H, W);
        for (std::size_t i = 0; i < P; ++i) {
            re[p * P + i] = buf[i].real();
            im[p * P + i] = buf[i].imag();
        }
    }

    // Both outputs feed one shared input gradient: d/dx = Re(F(g_re - i g_im)).
    auto in = x.shared();
    auto backward_part = [in, H, W, P, planes](const TensorImpl<T>& o, bool imaginary) {
        auto gx = detail::grad_buffer(*in);
        std::vector<std::complex<T>> b(P);
        for (std::size_t p = 0; p < planes; ++p) {
            for (std::size_t i = 0; i < P; ++i)
                b[i] = imaginary ? std::complex<T>(T(0), -o.grad[p * P + i]) : std::complex<T>(o.grad[p * P + i], T(0));
            fft::transform2d(std::span<std::complex<T>>(b), H, W);
            for (std::size_t i = 0; i < P; ++i) gx[p * P + i] += b[i].real();
        }
    };
    auto re_t = detail::make_result<T>(x.shape(), std::move(re), {&x},
                                       [backward_part](const TensorImpl<T>& o) { backward_part(o, false); });
    auto im_t = detail::make_result<T>(x.shape(), std::move(im), {&x},
                                       [backward_part](const TensorImpl<T>& o) { backward_part(o, true); });
    return {re_t, im_t};
}

template std::pair<BasicTensor<float>, BasicTensor<float>> fft2(const BasicTensor<float>&);
template std::pair<BasicTensor<double>, BasicTensor<double>> fft2(const BasicTensor<double>&);

}  // namespace restore
