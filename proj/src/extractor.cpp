// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/extractor.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <complex>
#include <mutex>
#include <string>
#include <vector>

#include <fftw3.h>

#include "qrng/counter_rng.hpp"
#include "qrng/error.hpp"
#include "qrng/parallel.hpp"

namespace qrng {

H0Mode parse_h0_mode(std::string_view text) {
  if (text == "log2l") return H0Mode::kLog2L;
  if (text == "block") return H0Mode::kBlockBits;
  fail(ErrorCode::kInvalidArgument, "unknown h0 mode '" + std::string(text) + "' (expected log2l|block)");
}

SecuritySign parse_security_sign(std::string_view text) {
  if (text == "subtract") return SecuritySign::kSubtract;
  if (text == "add") return SecuritySign::kAdd;
  fail(ErrorCode::kInvalidArgument, "unknown security sign '" + std::string(text) + "' (expected subtract|add)");
}

std::string_view to_string(H0Mode mode) { return mode == H0Mode::kLog2L ? "log2l" : "block"; }
std::string_view to_string(SecuritySign sign) { return sign == SecuritySign::kSubtract ? "subtract" : "add"; }

ExtractMethod parse_extract_method(std::string_view text) {
  if (text == "naive") return ExtractMethod::kNaive;
  if (text == "fft") return ExtractMethod::kFft;
  fail(ErrorCode::kInvalidArgument, "unknown extract method '" + std::string(text) + "' (expected naive|fft)");
}

std::string_view to_string(ExtractMethod method) { return method == ExtractMethod::kNaive ? "naive" : "fft"; }

std::size_t compute_output_length(std::size_t l, double h_min, unsigned block_bits, int epsilon_log2,
                                  const SizingOptions& options) {
  require(l >= 2, ErrorCode::kInvalidArgument, "input length l must be at least 2");
  require(block_bits >= 1, ErrorCode::kInvalidArgument, "block_bits must be positive");
  require(std::isfinite(h_min) && h_min > 0.0 && h_min <= static_cast<double>(block_bits),
          ErrorCode::kInvalidArgument, "h_min must lie in (0, block_bits]");
  require(epsilon_log2 <= -1, ErrorCode::kInvalidArgument, "epsilon_log2 must be <= -1");

  const double h0 = options.h0_mode == H0Mode::kLog2L ? std::log2(static_cast<double>(l))
                                                      : static_cast<double>(block_bits);
  const double security = 2.0 * static_cast<double>(-epsilon_log2);  // 2 log2(1/eps)
  const double raw = static_cast<double>(l) * h_min / h0 +
                     (options.sign == SecuritySign::kSubtract ? -security : security);
  const double m = std::floor(raw);
  require(m > 0.0, ErrorCode::kOutputTooShort,
          "l = " + std::to_string(l) + " is too short for the requested security (m = " +
              std::to_string(static_cast<long long>(m)) + ")");
  require(m < static_cast<double>(l), ErrorCode::kInvalidArgument,
          "output length " + std::to_string(static_cast<long long>(m)) + " would not be shorter than l = " +
              std::to_string(l));
  return static_cast<std::size_t>(m);
}

ExtractorParams::ExtractorParams(std::size_t input_len, std::size_t output_len, double h_min, unsigned block_bits,
                                 int epsilon_log2, BitStream seed)
    : input_len_(input_len),
      output_len_(output_len),
      h_min_(h_min),
      block_bits_(block_bits),
      epsilon_log2_(epsilon_log2),
      seed_(std::move(seed)) {
  require(output_len_ > 0 && output_len_ < input_len_, ErrorCode::kInvalidArgument,
          "extractor needs 0 < m < l (l = " + std::to_string(input_len_) + ", m = " + std::to_string(output_len_) +
              ")");
  require(seed_.size() == input_len_ + output_len_ - 1, ErrorCode::kInvalidArgument,
          "seed must have l + m - 1 = " + std::to_string(input_len_ + output_len_ - 1) + " bits, got " +
              std::to_string(seed_.size()));
}

BitStream make_seed(std::size_t input_len, std::size_t output_len, std::uint64_t key) {
  require(input_len + output_len >= 2, ErrorCode::kInvalidArgument, "seed would be empty");
  return CounterRng(key).random_bits(input_len + output_len - 1);
}

// ---------------------------------------------------------------------------

namespace {

std::atomic<std::uint64_t> g_fft_fallbacks{0};
std::mutex g_fftw_planner_mutex;  // FFTW's planner is not thread-safe.

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double[], FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

RealBuffer alloc_real(std::size_t n) { return RealBuffer(fftw_alloc_real(n)); }
ComplexBuffer alloc_complex(std::size_t n) { return ComplexBuffer(fftw_alloc_complex(n)); }

std::size_t next_pow2(std::size_t n) { return std::bit_ceil(n); }

}  // namespace

struct ToeplitzExtractor::Impl {
  Impl(ExtractorParams p, FftOptions o) : params(std::move(p)), options(o) { build_shifted(); }

  ~Impl() {
    std::lock_guard lock(g_fftw_planner_mutex);
    if (forward != nullptr) fftw_destroy_plan(forward);
    if (inverse != nullptr) fftw_destroy_plan(inverse);
  }

  // shifted[s * stride + w] holds seed bits [64 w + s, 64 w + s + 64).
  void build_shifted() {
    const auto seed = params.seed().words();
    stride = seed.size() + 1;
    shifted.assign(64 * stride, 0);
    auto word = [&](std::size_t w) -> std::uint64_t { return w < seed.size() ? seed[w] : 0; };
    for (unsigned s = 0; s < 64; ++s) {
      for (std::size_t w = 0; w < stride; ++w) {
        shifted[s * stride + w] = s == 0 ? word(w) : (word(w) << s) | (word(w + 1) >> (64 - s));
      }
    }
  }

  // out receives words_for(m) words; input points at words_for(l) words
  // whose padding bits are zero.
  void naive_words(const std::uint64_t* input, std::uint64_t* out) const {
    const std::size_t l_words = BitStream::words_for(params.input_len());
    const std::size_t m = params.output_len();
    for (std::size_t w = 0; w < BitStream::words_for(m); ++w) out[w] = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t r = m - 1 - j;
      const std::uint64_t* window = shifted.data() + (r % 64) * stride + r / 64;
      std::uint64_t acc = 0;
      for (std::size_t w = 0; w < l_words; ++w) acc ^= input[w] & window[w];
      out[j / 64] |= static_cast<std::uint64_t>(std::popcount(acc) & 1) << (63 - j % 64);
    }
  }

  void ensure_fft() const {
    std::call_once(fft_once, [this] {
      const std::size_t l = params.input_len();
      const std::size_t m = params.output_len();
      fft_size = next_pow2(l + m - 1);
      const std::size_t bins = fft_size / 2 + 1;
      auto real = alloc_real(fft_size);
      auto spec = alloc_complex(bins);
      {
        std::lock_guard lock(g_fftw_planner_mutex);
        forward = fftw_plan_dft_r2c_1d(static_cast<int>(fft_size), real.get(), spec.get(), FFTW_ESTIMATE);
        inverse = fftw_plan_dft_c2r_1d(static_cast<int>(fft_size), spec.get(), real.get(), FFTW_ESTIMATE);
      }
      require(forward != nullptr && inverse != nullptr, ErrorCode::kInvalidArgument, "FFTW planning failed");
      const BitStream& seed = params.seed();
      for (std::size_t k = 0; k < fft_size; ++k) real[k] = k < seed.size() && seed[k] ? 1.0 : 0.0;
      fftw_execute_dft_r2c(forward, real.get(), spec.get());
      seed_spectrum.resize(bins);
      for (std::size_t k = 0; k < bins; ++k) seed_spectrum[k] = {spec[k][0], spec[k][1]};
    });
  }

  // Returns false if any needed coefficient misses the rounding check.
  bool fft_words(const BitStream& input, std::uint64_t* out) const {
    ensure_fft();
    const std::size_t l = params.input_len();
    const std::size_t m = params.output_len();
    const std::size_t bins = fft_size / 2 + 1;
    auto real = alloc_real(fft_size);
    auto spec = alloc_complex(bins);
    // Reversed input turns the correlation sum_i d_i t_{i+r} into a
    // convolution read at index l - 1 + r.
    for (std::size_t k = 0; k < fft_size; ++k) real[k] = k < l && input[l - 1 - k] ? 1.0 : 0.0;
    fftw_execute_dft_r2c(forward, real.get(), spec.get());
    for (std::size_t k = 0; k < bins; ++k) {
      const std::complex<double> prod = std::complex<double>(spec[k][0], spec[k][1]) * seed_spectrum[k];
      spec[k][0] = prod.real();
      spec[k][1] = prod.imag();
    }
    fftw_execute_dft_c2r(inverse, spec.get(), real.get());

    const double scale = 1.0 / static_cast<double>(fft_size);
    for (std::size_t w = 0; w < BitStream::words_for(m); ++w) out[w] = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double value = real[l + m - 2 - j] * scale;
      const double rounded = std::nearbyint(value);
      if (!(std::abs(value - rounded) < options.max_rounding_slack)) return false;
      const auto count = static_cast<std::int64_t>(rounded);
      out[j / 64] |= static_cast<std::uint64_t>(count & 1) << (63 - j % 64);
    }
    return true;
  }

  ExtractorParams params;
  FftOptions options;
  std::vector<std::uint64_t> shifted;
  std::size_t stride = 0;

  mutable std::once_flag fft_once;
  mutable std::size_t fft_size = 0;
  mutable fftw_plan forward = nullptr;
  mutable fftw_plan inverse = nullptr;
  mutable std::vector<std::complex<double>> seed_spectrum;
  mutable std::atomic<std::uint64_t> fallbacks{0};
};

ToeplitzExtractor::ToeplitzExtractor(ExtractorParams params, FftOptions fft)
    : impl_(std::make_unique<Impl>(std::move(params), fft)) {}
ToeplitzExtractor::~ToeplitzExtractor() = default;
ToeplitzExtractor::ToeplitzExtractor(ToeplitzExtractor&&) noexcept = default;
ToeplitzExtractor& ToeplitzExtractor::operator=(ToeplitzExtractor&&) noexcept = default;

const ExtractorParams& ToeplitzExtractor::params() const noexcept { return impl_->params; }

namespace {

void check_input(const BitStream& input, const ExtractorParams& params) {
  require(input.size() == params.input_len(), ErrorCode::kInvalidArgument,
          "input has " + std::to_string(input.size()) + " bits, extractor expects l = " +
              std::to_string(params.input_len()));
}

}  // namespace

BitStream ToeplitzExtractor::apply_naive(const BitStream& input) const {
  check_input(input, impl_->params);
  std::vector<std::uint64_t> out(BitStream::words_for(impl_->params.output_len()));
  impl_->naive_words(input.words().data(), out.data());
  return BitStream::from_words(std::move(out), impl_->params.output_len());
}

BitStream ToeplitzExtractor::apply_fft(const BitStream& input) const {
  check_input(input, impl_->params);
  std::vector<std::uint64_t> out(BitStream::words_for(impl_->params.output_len()));
  if (!impl_->fft_words(input, out.data())) {
    impl_->fallbacks.fetch_add(1, std::memory_order_relaxed);
    g_fft_fallbacks.fetch_add(1, std::memory_order_relaxed);
    impl_->naive_words(input.words().data(), out.data());
  }
  return BitStream::from_words(std::move(out), impl_->params.output_len());
}

std::uint64_t ToeplitzExtractor::fft_fallbacks() const noexcept {
  return impl_->fallbacks.load(std::memory_order_relaxed);
}

std::uint64_t total_fft_fallbacks() noexcept { return g_fft_fallbacks.load(std::memory_order_relaxed); }

BitStream extract_naive(const BitStream& input, const ExtractorParams& params) {
  check_input(input, params);
  return ToeplitzExtractor(params).apply_naive(input);
}

BitStream extract_fft(const BitStream& input, const ExtractorParams& params) {
  check_input(input, params);
  return ToeplitzExtractor(params).apply_fft(input);
}

StreamExtraction extract_stream(const BitStream& input, const ToeplitzExtractor& extractor, ExtractMethod method) {
  const std::size_t l = extractor.params().input_len();
  const std::size_t m = extractor.params().output_len();
  require(input.size() >= l, ErrorCode::kInvalidArgument,
          "input has " + std::to_string(input.size()) + " bits, fewer than one block of l = " + std::to_string(l));
  const std::size_t chunks = input.size() / l;
  const std::uint64_t fallbacks_before = extractor.fft_fallbacks();

  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), 1 + chunks / 256));
  std::vector<BitStream> parts(workers);
  parallel_ranges(workers, workers, [&](std::size_t first, std::size_t last) {
    for (std::size_t p = first; p < last; ++p) {
      const std::size_t begin = chunks * p / workers;
      const std::size_t end = chunks * (p + 1) / workers;
      BitStream& part = parts[p];
      part.reserve((end - begin) * m);
      for (std::size_t c = begin; c < end; ++c) {
        const BitStream block = input.slice(c * l, l);
        part.append(method == ExtractMethod::kNaive ? extractor.apply_naive(block) : extractor.apply_fft(block));
      }
    }
  });

  StreamExtraction result;
  result.output.reserve(chunks * m);
  for (const auto& part : parts) result.output.append(part);
  result.chunks = chunks;
  result.discarded_bits = input.size() - chunks * l;
  result.fft_fallbacks = extractor.fft_fallbacks() - fallbacks_before;
  return result;
}

StreamExtraction extract_stream(const BitStream& input, const ExtractorParams& params, ExtractMethod method) {
  return extract_stream(input, ToeplitzExtractor(params), method);
}

}  // namespace qrng
