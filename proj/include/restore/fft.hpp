#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace restore::fft {

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 transform; length must be a power of two.
/// The inverse is unnormalized (no 1/n factor).
template <class T>
void transform(std::span<std::complex<T>> data, bool inverse = false);

/// Row-major [rows, cols] plane: transforms every row, then every column.
template <class T>
void transform2d(std::span<std::complex<T>> plane, std::size_t rows, std::size_t cols, bool inverse = false);

}  // namespace restore::fft
