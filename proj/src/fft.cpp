#include "odenet/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <memory>
#include <mutex>

#include "odenet/error.hpp"

namespace odenet::fft {
namespace {

// FFTW planning is not thread-safe; execution of a private plan is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(p);
    }
};
struct BufferDeleter {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};

} // namespace

std::vector<Complex> transform_2d(std::span<const Complex> data, std::size_t rows, std::size_t cols,
                                  Direction dir) {
    if (rows == 0 || cols == 0 || data.size() != rows * cols)
        throw Error(ErrorKind::ShapeMismatch, "fft input size does not match rows*cols");
    std::unique_ptr<fftw_complex, BufferDeleter> buf(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * data.size())));
    std::unique_ptr<fftw_plan_s, PlanDeleter> plan;
    {
        std::lock_guard lock(planner_mutex());
        plan.reset(fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf.get(), buf.get(),
                                    dir == Direction::Forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                    FFTW_ESTIMATE));
    }
    std::memcpy(buf.get(), data.data(), sizeof(fftw_complex) * data.size());
    fftw_execute(plan.get());
    std::vector<Complex> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = Complex(buf.get()[i][0], buf.get()[i][1]);
    return out;
}

std::vector<Complex> forward_real_2d(std::span<const double> data, std::size_t rows, std::size_t cols) {
    std::vector<Complex> c(data.begin(), data.end());
    return transform_2d(c, rows, cols, Direction::Forward);
}

} // namespace odenet::fft
