// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qrng {

/// Packed, length-aware bit sequence.
///
/// Bits are stored MSB-first in 64-bit words: bit i lives in word i / 64 at
/// position 63 - (i % 64). That matches the on-disk byte order (first bit of
/// the stream is the most significant bit of byte 0) so serialization is a
/// big-endian dump of the words. Padding bits past size() are always zero.
class BitStream {
 public:
  static constexpr std::size_t kWordBits = 64;

  BitStream() = default;
  explicit BitStream(std::size_t length);

  /// Parses a string of '0' / '1' characters. Whitespace is ignored.
  static BitStream from_string(std::string_view text);
  /// Unpacks `length` bits from MSB-first bytes.
  static BitStream from_bytes(std::span<const std::uint8_t> bytes, std::size_t length);
  /// Adopts already-packed words; padding bits beyond `length` are cleared.
  static BitStream from_words(std::vector<std::uint64_t> words, std::size_t length);

  std::size_t size() const noexcept { return length_; }
  bool empty() const noexcept { return length_ == 0; }
  std::size_t word_count() const noexcept { return words_.size(); }

  bool operator[](std::size_t i) const noexcept {
    return (words_[i / kWordBits] >> (63 - i % kWordBits)) & 1u;
  }
  bool get(std::size_t i) const;
  void set(std::size_t i, bool value);
  void push_back(bool value);
  void reserve(std::size_t bits) { words_.reserve(words_for(bits)); }

  /// Appends `other` at the current end regardless of word alignment.
  void append(const BitStream& other);
  /// Copies bits [offset, offset + count) into a new word-aligned stream.
  BitStream slice(std::size_t offset, std::size_t count) const;

  /// Reads up to 64 bits starting at `pos`; the first bit read becomes the
  /// most significant bit of the (count-bit) result.
  std::uint64_t read_bits(std::size_t pos, unsigned count) const;

  std::span<const std::uint64_t> words() const noexcept { return words_; }

  std::size_t count_ones() const noexcept;
  std::size_t count_ones(std::size_t offset, std::size_t count) const;

  std::vector<std::uint8_t> to_bytes() const;
  std::string to_string() const;

  BitStream& operator^=(const BitStream& other);
  friend BitStream operator^(BitStream lhs, const BitStream& rhs) { return lhs ^= rhs; }
  friend bool operator==(const BitStream&, const BitStream&) = default;

  static constexpr std::size_t words_for(std::size_t bits) noexcept {
    return (bits + kWordBits - 1) / kWordBits;
  }

 private:
  void clear_padding() noexcept;

  std::vector<std::uint64_t> words_;
  std::size_t length_ = 0;
};

// ---------------------------------------------------------------------------
// Packed-bit container format.
//
// 16-byte header followed by the MSB-first payload:
//   bytes 0..3   magic "TRNG"
//   bytes 4..5   format version, little-endian u16 (currently 1)
//   bytes 6..13  bit length, little-endian u64
//   bytes 14..15 reserved, zero
// Payload is ceil(length / 8) bytes with zero trailing pad bits.

inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::uint16_t kFormatVersion = 1;

enum class Framing { kHeader, kHeaderless };

std::vector<std::uint8_t> encode(const BitStream& stream, Framing framing = Framing::kHeader);
BitStream decode(std::span<const std::uint8_t> bytes, Framing framing = Framing::kHeader);

void write_bitstream(const std::filesystem::path& path, const BitStream& stream,
                     Framing framing = Framing::kHeader);
BitStream read_bitstream(const std::filesystem::path& path, Framing framing = Framing::kHeader);

/// One '0'/'1' character per bit, no separators (NIST sts ASCII input).
void write_ascii(const std::filesystem::path& path, const BitStream& stream);

}  // namespace qrng
