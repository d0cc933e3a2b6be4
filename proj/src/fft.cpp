#include "fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace haptix::detail {

namespace {

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

// Plan creation is not thread-safe in FFTW; execution through the new-array
// interface is. Plans are created once per size under a lock and reused.
fftw_plan plan_for(size_t n) {
    static std::mutex mu;
    static std::map<size_t, fftw_plan> plans;
    std::lock_guard lock(mu);
    if (auto it = plans.find(n); it != plans.end()) {
        return it->second;
    }
    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(n));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(n / 2 + 1));
    fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
    if (p == nullptr) {
        throw std::runtime_error("FFTW could not plan a transform");
    }
    plans.emplace(n, p);
    return p;
}

} // namespace

std::vector<double> real_fft_magnitude(std::span<const double> input, size_t n) {
    if (n == 0 || input.size() > n) {
        throw std::invalid_argument("FFT size must cover the input");
    }
    fftw_plan p = plan_for(n);
    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(n));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(n / 2 + 1));
    std::fill(in.get(), in.get() + n, 0.0);
    std::copy(input.begin(), input.end(), in.get());
    fftw_execute_dft_r2c(p, in.get(), out.get());
    std::vector<double> mag(n / 2 + 1);
    for (size_t k = 0; k < mag.size(); ++k) {
        mag[k] = std::hypot(out.get()[k][0], out.get()[k][1]);
    }
    return mag;
}

} // namespace haptix::detail
