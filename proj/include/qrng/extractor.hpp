// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string_view>

#include "qrng/bitstream.hpp"

namespace qrng {

/// Normalizer used when converting per-block min-entropy to output length.
enum class H0Mode {
  kLog2L,      // H0 = log2(l)
  kBlockBits,  // H0 = block_bits
};

/// How the security parameter enters the output length.
enum class SecuritySign {
  kSubtract,  // m = l*h/H0 - 2*log2(1/eps)  (leftover hash lemma)
  kAdd,       // m = l*h/H0 - 2*log2(eps)    (adds 2*log2(1/eps) bits)
};

struct SizingOptions {
  H0Mode h0_mode = H0Mode::kLog2L;
  SecuritySign sign = SecuritySign::kSubtract;
};

H0Mode parse_h0_mode(std::string_view text);
SecuritySign parse_security_sign(std::string_view text);
std::string_view to_string(H0Mode mode);
std::string_view to_string(SecuritySign sign);

/// m = floor(l * h_min / H0 -/+ 2 * log2(1/eps)), with eps = 2^epsilon_log2.
/// Throws kOutputTooShort if m <= 0 and kInvalidArgument if m >= l.
std::size_t compute_output_length(std::size_t l, double h_min, unsigned block_bits, int epsilon_log2,
                                  const SizingOptions& options = {});

/// One Toeplitz extraction instance: l input bits -> m output bits using a
/// seed of l + m - 1 bits.
class ExtractorParams {
 public:
  /// Throws kInvalidArgument unless 0 < m < l and seed.size() == l + m - 1.
  ExtractorParams(std::size_t input_len, std::size_t output_len, double h_min, unsigned block_bits,
                  int epsilon_log2, BitStream seed);

  std::size_t input_len() const noexcept { return input_len_; }
  std::size_t output_len() const noexcept { return output_len_; }
  double h_min() const noexcept { return h_min_; }
  unsigned block_bits() const noexcept { return block_bits_; }
  int epsilon_log2() const noexcept { return epsilon_log2_; }
  const BitStream& seed() const noexcept { return seed_; }

 private:
  std::size_t input_len_;
  std::size_t output_len_;
  double h_min_;
  unsigned block_bits_;
  int epsilon_log2_;
  BitStream seed_;
};

/// Deterministic pseudorandom seed of l + m - 1 bits for the given key.
BitStream make_seed(std::size_t input_len, std::size_t output_len, std::uint64_t key);

/// Entry (i, j) of the l x m matrix is seed[i - j + m - 1]; the matrix is
/// never materialized.
class ToeplitzMatrixView {
 public:
  explicit ToeplitzMatrixView(const ExtractorParams& params) : params_(&params) {}
  std::size_t rows() const noexcept { return params_->input_len(); }
  std::size_t cols() const noexcept { return params_->output_len(); }
  bool entry(std::size_t row, std::size_t col) const {
    return params_->seed().get(row + params_->output_len() - 1 - col);
  }

 private:
  const ExtractorParams* params_;
};

struct FftOptions {
  /// Coefficients further than this from an integer send the block back to
  /// the bit-packed path.
  double max_rounding_slack = 0.25;
};

/// Reusable extractor: precomputes the 64 bit-shifted copies of the seed for
/// the packed path and, on first use, the seed spectrum for the FFT path.
/// Safe to share across threads.
class ToeplitzExtractor {
 public:
  explicit ToeplitzExtractor(ExtractorParams params, FftOptions fft = {});
  ~ToeplitzExtractor();
  ToeplitzExtractor(ToeplitzExtractor&&) noexcept;
  ToeplitzExtractor& operator=(ToeplitzExtractor&&) noexcept;

  const ExtractorParams& params() const noexcept;

  /// d' = d x T over GF(2) with word-parallel AND + parity.
  BitStream apply_naive(const BitStream& input) const;
  /// Same product via a floating-point cyclic convolution of length
  /// >= l + m - 1, rounded and reduced mod 2.
  BitStream apply_fft(const BitStream& input) const;

  /// Blocks that failed the rounding check and were recomputed with
  /// apply_naive.
  std::uint64_t fft_fallbacks() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Process-wide count of FFT fallbacks (diagnostic).
std::uint64_t total_fft_fallbacks() noexcept;

BitStream extract_naive(const BitStream& input, const ExtractorParams& params);
BitStream extract_fft(const BitStream& input, const ExtractorParams& params);

enum class ExtractMethod { kNaive, kFft };
ExtractMethod parse_extract_method(std::string_view text);
std::string_view to_string(ExtractMethod method);

struct StreamExtraction {
  BitStream output;
  std::size_t chunks = 0;
  std::size_t discarded_bits = 0;
  std::uint64_t fft_fallbacks = 0;
};

/// Applies the same extractor to every consecutive l-bit chunk and
/// concatenates the m-bit outputs in order. Remainder bits are discarded and
/// counted.
StreamExtraction extract_stream(const BitStream& input, const ToeplitzExtractor& extractor,
                                ExtractMethod method = ExtractMethod::kNaive);
StreamExtraction extract_stream(const BitStream& input, const ExtractorParams& params,
                                ExtractMethod method = ExtractMethod::kNaive);

}  // namespace qrng
