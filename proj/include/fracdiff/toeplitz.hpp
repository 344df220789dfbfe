#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

namespace fracdiff {

enum class ApplyMethod { automatic, direct, fft };

namespace detail {

// FFTW planning is not thread safe; execution with the new-array interface is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  double* real() { return static_cast<double*>(ptr); }
  fftw_complex* complex() { return static_cast<fftw_complex*>(ptr); }
  void* ptr;
};

// Forward/backward real transforms of one length, shareable between threads.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    FftwBuffer in(sizeof(double) * n);
    FftwBuffer out(sizeof(fftw_complex) * (n / 2 + 1));
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    const int len = static_cast<int>(n);
    forward_ = fftw_plan_dft_r2c_1d(len, in.real(), out.complex(), FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_1d(len, out.complex(), in.real(), FFTW_ESTIMATE);
    if (!forward_ || !backward_) throw std::runtime_error("FFTW planning failed");
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  void forward(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(forward_, in, out); }
  // Unnormalised: backward(forward(x)) = n x.
  void backward(fftw_complex* in, double* out) const { fftw_execute_dft_c2r(backward_, in, out); }

 private:
  std::size_t n_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

inline std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

}  // namespace detail

// Symmetric Toeplitz matrix given by its first column, applied either by the
// direct sum or by circulant embedding and FFT.
class SymmetricToeplitz {
 public:
  static constexpr std::size_t kDirectLimit = 512;

  explicit SymmetricToeplitz(std::vector<double> first_column,
                             ApplyMethod method = ApplyMethod::automatic)
      : col_(std::move(first_column)), method_(method) {
    if (col_.empty()) throw std::invalid_argument("SymmetricToeplitz: empty column");
    if (method_ == ApplyMethod::automatic)
      method_ = col_.size() <= kDirectLimit ? ApplyMethod::direct : ApplyMethod::fft;
    prepare_fft();
  }

  std::size_t size() const { return col_.size(); }
  const std::vector<double>& column() const { return col_; }
  ApplyMethod method() const { return method_; }

  void apply(std::span<const double> x, std::span<double> y) const {
    if (method_ == ApplyMethod::direct)
      apply_direct(x, y);
    else
      apply_fft(x, y);
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> y(x.size());
    apply(x, y);
    return y;
  }

  void apply_direct(std::span<const double> x, std::span<double> y) const {
    check(x, y);
    const std::size_t n = col_.size();
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += col_[i > j ? i - j : j - i] * x[j];
      y[i] = acc;
    }
  }

  void apply_fft(std::span<const double> x, std::span<double> y) const {
    check(x, y);
    const std::size_t m = fft_->size();
    const std::size_t n = col_.size();
    detail::FftwBuffer in(sizeof(double) * m);
    detail::FftwBuffer spec(sizeof(fftw_complex) * (m / 2 + 1));
    double* buf = in.real();
    for (std::size_t i = 0; i < n; ++i) buf[i] = x[i];
    for (std::size_t i = n; i < m; ++i) buf[i] = 0.0;
    fft_->forward(buf, spec.complex());
    fftw_complex* c = spec.complex();
    for (std::size_t k = 0; k <= m / 2; ++k) {
      c[k][0] *= eig_[k];
      c[k][1] *= eig_[k];
    }
    fft_->backward(c, buf);
    const double scale = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < n; ++i) y[i] = buf[i] * scale;
  }

 private:
  void check(std::span<const double> x, std::span<double> y) const {
    if (x.size() != col_.size() || y.size() != col_.size())
      throw std::invalid_argument("SymmetricToeplitz: vector length mismatch");
  }

  void prepare_fft() {
    const std::size_t n = col_.size();
    const std::size_t m = detail::next_pow2(2 * n);
    auto fft = std::make_shared<detail::RealFft>(m);
    detail::FftwBuffer in(sizeof(double) * m);
    detail::FftwBuffer spec(sizeof(fftw_complex) * (m / 2 + 1));
    double* c = in.real();
    for (std::size_t i = 0; i < m; ++i) c[i] = 0.0;
    c[0] = col_[0];
    for (std::size_t k = 1; k < n; ++k) {
      c[k] = col_[k];
      c[m - k] = col_[k];
    }
    fft->forward(c, spec.complex());
    std::vector<double> eig(m / 2 + 1);
    for (std::size_t k = 0; k <= m / 2; ++k) eig[k] = spec.complex()[k][0];
    eig_ = std::move(eig);
    fft_ = std::move(fft);
  }

  std::vector<double> col_;
  ApplyMethod method_;
  std::shared_ptr<const detail::RealFft> fft_;
  std::vector<double> eig_;
};

}  // namespace fracdiff
