#pragma once

#include <span>
#include <vector>

namespace haptix::detail {

// |X[k]| for k = 0..n/2 of the real FFT of `input` zero-padded to n points.
// Safe to call concurrently.
std::vector<double> real_fft_magnitude(std::span<const double> input, size_t n);

} // namespace haptix::detail
