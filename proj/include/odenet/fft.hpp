#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace odenet::fft {

using Complex = std::complex<double>;

enum class Direction { Forward, Inverse };

/// Unnormalized 2D DFT of a row-major rows x cols array. Forward uses e^{-i...}.
std::vector<Complex> transform_2d(std::span<const Complex> data, std::size_t rows, std::size_t cols,
                                  Direction dir);

/// Forward 2D DFT of real input.
std::vector<Complex> forward_real_2d(std::span<const double> data, std::size_t rows, std::size_t cols);

} // namespace odenet::fft
