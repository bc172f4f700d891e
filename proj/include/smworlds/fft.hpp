#pragma once

// RAII wrapper over an FFTW complex-to-complex transform on the configuration grid.

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "error.hpp"
#include "hilbert.hpp"

namespace smw {

namespace detail {
// FFTW's planner is not thread-safe.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};
struct FftwPlanDestroy {
    void operator()(fftw_plan p) const noexcept {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(p);
    }
};
} // namespace detail

/// In-place forward/inverse transform over all N*d axes of a grid. Planned with
/// FFTW_ESTIMATE so results are deterministic for a given input. The inverse is
/// unnormalized; `inverse_normalized` divides by the cell count.
class GridFft {
public:
    explicit GridFft(const GridSpec& spec) : size_(spec.cell_count()) {
        spec.validate();
        buffer_.reset(static_cast<cplx*>(fftw_malloc(sizeof(cplx) * size_)));
        if (!buffer_) throw NumericalError("fft_allocation", "fftw_malloc failed");
        std::vector<int> dims(spec.axes(), static_cast<int>(spec.points_per_axis));
        auto* data = reinterpret_cast<fftw_complex*>(buffer_.get());
        std::lock_guard lock(detail::fftw_planner_mutex());
        forward_.reset(fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), data, data, FFTW_FORWARD, FFTW_ESTIMATE));
        backward_.reset(fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), data, data, FFTW_BACKWARD, FFTW_ESTIMATE));
        if (!forward_ || !backward_) throw NumericalError("fft_plan", "FFTW planning failed");
    }

    std::size_t size() const { return size_; }
    std::span<cplx> data() { return {buffer_.get(), size_}; }
    std::span<const cplx> data() const { return {buffer_.get(), size_}; }

    void forward() { fftw_execute(forward_.get()); }
    void inverse() { fftw_execute(backward_.get()); }
    void inverse_normalized() {
        inverse();
        const double f = 1.0 / static_cast<double>(size_);
        for (auto& z : data()) z *= f;
    }

private:
    std::size_t size_;
    std::unique_ptr<cplx, detail::FftwFree> buffer_;
    std::unique_ptr<std::remove_pointer_t<fftw_plan>, detail::FftwPlanDestroy> forward_;
    std::unique_ptr<std::remove_pointer_t<fftw_plan>, detail::FftwPlanDestroy> backward_;
};

/// Angular wavenumber of FFT bin j on a periodic axis of n points over L
/// (bins above n/2 are negative frequencies; the Nyquist bin maps to -pi n / L).
inline double wavenumber(std::size_t j, std::size_t n, double extent) {
    const auto sj = static_cast<double>(j);
    const auto sn = static_cast<double>(n);
    return 2.0 * M_PI / extent * (j < n / 2 ? sj : sj - sn);
}

} // namespace smw
