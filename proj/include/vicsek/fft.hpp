#pragma once

// Thin RAII wrapper over FFTW real-to-complex transforms. Plans are created
// with FFTW_ESTIMATE | FFTW_UNALIGNED and executed through the new-array
// interface, so a single plan can be shared by any number of threads.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

namespace vicsek {

namespace detail {

// The FFTW planner is not reentrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};

using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;

inline fftw_complex* as_fftw(std::complex<double>* p) {
  return reinterpret_cast<fftw_complex*>(p);
}

}  // namespace detail

/// Real FFT of a fixed shape (1-D or 2-D, row-major). forward() is the
/// unnormalized DFT; inverse() includes the 1/n factor so that
/// inverse(forward(x)) == x.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : RealFft(std::vector<std::size_t>{n}) {}

  explicit RealFft(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 2)
      throw std::invalid_argument("RealFft: rank must be 1 or 2");
    real_size_ = 1;
    for (auto s : shape_) {
      if (s == 0) throw std::invalid_argument("RealFft: zero extent");
      real_size_ *= s;
    }
    complex_size_ = real_size_ / shape_.back() * (shape_.back() / 2 + 1);

    std::vector<double> r(real_size_);
    std::vector<std::complex<double>> c(complex_size_);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    if (shape_.size() == 1) {
      const int n = static_cast<int>(shape_[0]);
      fwd_.reset(fftw_plan_dft_r2c_1d(n, r.data(), detail::as_fftw(c.data()), flags));
      bwd_.reset(fftw_plan_dft_c2r_1d(n, detail::as_fftw(c.data()), r.data(), flags));
    } else {
      const int n0 = static_cast<int>(shape_[0]);
      const int n1 = static_cast<int>(shape_[1]);
      fwd_.reset(fftw_plan_dft_r2c_2d(n0, n1, r.data(), detail::as_fftw(c.data()), flags));
      bwd_.reset(fftw_plan_dft_c2r_2d(n0, n1, detail::as_fftw(c.data()), r.data(), flags));
    }
    if (!fwd_ || !bwd_) throw std::runtime_error("RealFft: FFTW planning failed");
  }

  std::size_t real_size() const noexcept { return real_size_; }
  std::size_t complex_size() const noexcept { return complex_size_; }
  const std::vector<std::size_t>& shape() const noexcept { return shape_; }

  void forward(std::span<const double> in, std::span<std::complex<double>> out) const {
    check(in.size() == real_size_ && out.size() == complex_size_);
    // Out-of-place r2c leaves its input untouched.
    fftw_execute_dft_r2c(fwd_.get(), const_cast<double*>(in.data()), detail::as_fftw(out.data()));
  }

  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
    check(in.size() == complex_size_ && out.size() == real_size_);
    // c2r destroys its input; work on a per-thread copy.
    thread_local std::vector<std::complex<double>> scratch;
    scratch.assign(in.begin(), in.end());
    fftw_execute_dft_c2r(bwd_.get(), detail::as_fftw(scratch.data()), out.data());
    const double scale = 1.0 / static_cast<double>(real_size_);
    for (double& x : out) x *= scale;
  }

 private:
  static void check(bool ok) {
    if (!ok) throw std::invalid_argument("RealFft: buffer size mismatch");
  }

  std::vector<std::size_t> shape_;
  std::size_t real_size_ = 0;
  std::size_t complex_size_ = 0;
  detail::PlanHandle fwd_;
  detail::PlanHandle bwd_;
};

}  // namespace vicsek
