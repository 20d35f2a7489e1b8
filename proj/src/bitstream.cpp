// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/bitstream.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "qrng/error.hpp"

namespace qrng {

namespace {

constexpr std::uint64_t low_mask(unsigned bits) {
  return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
}

// Mask selecting the first `bits` (most significant) positions of a word.
constexpr std::uint64_t high_mask(unsigned bits) {
  return bits == 0 ? 0 : ~std::uint64_t{0} << (64 - bits);
}

}  // namespace

BitStream::BitStream(std::size_t length) : words_(words_for(length), 0), length_(length) {}

BitStream BitStream::from_string(std::string_view text) {
  BitStream out;
  out.reserve(text.size());
  for (char c : text) {
    if (c == '0' || c == '1') {
      out.push_back(c == '1');
    } else if (c != ' ' && c != '\n' && c != '\r' && c != '\t') {
      fail(ErrorCode::kInvalidArgument, std::string("unexpected character '") + c + "' in bit string");
    }
  }
  return out;
}

BitStream BitStream::from_bytes(std::span<const std::uint8_t> bytes, std::size_t length) {
  require(bytes.size() * 8 >= length, ErrorCode::kInvalidArgument,
          "byte buffer shorter than requested bit length");
  BitStream out(length);
  const std::size_t used = (length + 7) / 8;
  for (std::size_t i = 0; i < used; ++i) {
    out.words_[i / 8] |= std::uint64_t{bytes[i]} << (56 - 8 * (i % 8));
  }
  out.clear_padding();
  return out;
}

BitStream BitStream::from_words(std::vector<std::uint64_t> words, std::size_t length) {
  require(words.size() >= words_for(length), ErrorCode::kInvalidArgument,
          "word buffer shorter than requested bit length");
  BitStream out;
  words.resize(words_for(length));
  out.words_ = std::move(words);
  out.length_ = length;
  out.clear_padding();
  return out;
}

bool BitStream::get(std::size_t i) const {
  require(i < length_, ErrorCode::kInvalidArgument, "bit index out of range");
  return (*this)[i];
}

void BitStream::set(std::size_t i, bool value) {
  require(i < length_, ErrorCode::kInvalidArgument, "bit index out of range");
  const std::uint64_t bit = std::uint64_t{1} << (63 - i % kWordBits);
  if (value) {
    words_[i / kWordBits] |= bit;
  } else {
    words_[i / kWordBits] &= ~bit;
  }
}

void BitStream::push_back(bool value) {
  if (length_ % kWordBits == 0) words_.push_back(0);
  if (value) words_.back() |= std::uint64_t{1} << (63 - length_ % kWordBits);
  ++length_;
}

void BitStream::append(const BitStream& other) {
  if (other.empty()) return;
  const unsigned shift = length_ % kWordBits;
  const std::size_t new_length = length_ + other.length_;
  if (shift == 0) {
    words_.insert(words_.end(), other.words_.begin(), other.words_.end());
  } else {
    words_.reserve(words_for(new_length) + 1);
    for (std::uint64_t w : other.words_) {
      words_.back() |= w >> shift;
      words_.push_back(w << (kWordBits - shift));
    }
  }
  length_ = new_length;
  words_.resize(words_for(length_));
  clear_padding();
}

BitStream BitStream::slice(std::size_t offset, std::size_t count) const {
  require(offset <= length_ && count <= length_ - offset, ErrorCode::kInvalidArgument,
          "slice out of range");
  BitStream out(count);
  const std::size_t first = offset / kWordBits;
  const unsigned shift = offset % kWordBits;
  const std::size_t n = out.words_.size();
  if (shift == 0) {
    std::copy_n(words_.begin() + static_cast<std::ptrdiff_t>(first), n, out.words_.begin());
  } else {
    for (std::size_t w = 0; w < n; ++w) {
      std::uint64_t v = words_[first + w] << shift;
      if (first + w + 1 < words_.size()) v |= words_[first + w + 1] >> (kWordBits - shift);
      out.words_[w] = v;
    }
  }
  out.clear_padding();
  return out;
}

std::uint64_t BitStream::read_bits(std::size_t pos, unsigned count) const {
  if (count == 0) return 0;
  const std::size_t q = pos / kWordBits;
  const unsigned s = pos % kWordBits;
  std::uint64_t v = words_[q] << s;
  if (s != 0 && s + count > kWordBits) v |= words_[q + 1] >> (kWordBits - s);
  return count == kWordBits ? v : v >> (kWordBits - count);
}

std::size_t BitStream::count_ones() const noexcept {
  std::size_t total = 0;
  for (std::uint64_t w : words_) total += static_cast<std::size_t>(std::popcount(w));
  return total;
}

std::size_t BitStream::count_ones(std::size_t offset, std::size_t count) const {
  require(offset <= length_ && count <= length_ - offset, ErrorCode::kInvalidArgument,
          "range out of bounds");
  if (count == 0) return 0;
  std::size_t end = offset + count;
  std::size_t first = offset / kWordBits;
  std::size_t last = (end - 1) / kWordBits;
  const unsigned head = offset % kWordBits;
  const unsigned tail = static_cast<unsigned>(end - last * kWordBits);
  if (first == last) {
    const std::uint64_t mask = high_mask(tail) & low_mask(kWordBits - head);
    return static_cast<std::size_t>(std::popcount(words_[first] & mask));
  }
  std::size_t total = static_cast<std::size_t>(std::popcount(words_[first] & low_mask(kWordBits - head)));
  for (std::size_t w = first + 1; w < last; ++w) total += static_cast<std::size_t>(std::popcount(words_[w]));
  total += static_cast<std::size_t>(std::popcount(words_[last] & high_mask(tail)));
  return total;
}

std::vector<std::uint8_t> BitStream::to_bytes() const {
  std::vector<std::uint8_t> out((length_ + 7) / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(words_[i / 8] >> (56 - 8 * (i % 8)));
  }
  return out;
}

std::string BitStream::to_string() const {
  std::string out(length_, '0');
  for (std::size_t i = 0; i < length_; ++i) {
    if ((*this)[i]) out[i] = '1';
  }
  return out;
}

BitStream& BitStream::operator^=(const BitStream& other) {
  require(other.length_ == length_, ErrorCode::kInvalidArgument, "xor of streams with different lengths");
  for (std::size_t w = 0; w < words_.size(); ++w) words_[w] ^= other.words_[w];
  return *this;
}

void BitStream::clear_padding() noexcept {
  const unsigned used = length_ % kWordBits;
  if (used != 0 && !words_.empty()) words_.back() &= high_mask(used);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'R', 'N', 'G'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t value, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{in[offset + static_cast<std::size_t>(i)]} << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode(const BitStream& stream, Framing framing) {
  std::vector<std::uint8_t> out;
  const std::size_t payload = (stream.size() + 7) / 8;
  out.reserve(payload + (framing == Framing::kHeader ? kHeaderSize : 0));
  if (framing == Framing::kHeader) {
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_le(out, kFormatVersion, 2);
    put_le(out, stream.size(), 8);
    put_le(out, 0, 2);
  }
  const auto bytes = stream.to_bytes();
  out.insert(out.end(), bytes.begin(), bytes.end());
  return out;
}

BitStream decode(std::span<const std::uint8_t> bytes, Framing framing) {
  if (framing == Framing::kHeaderless) return BitStream::from_bytes(bytes, bytes.size() * 8);

  require(bytes.size() >= kHeaderSize, ErrorCode::kFormat, "file shorter than header");
  require(std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorCode::kFormat, "bad magic, expected TRNG");
  const auto version = get_le(bytes, 4, 2);
  require(version == kFormatVersion, ErrorCode::kFormat,
          "unsupported format version " + std::to_string(version));
  const std::uint64_t length = get_le(bytes, 6, 8);
  const auto payload = bytes.subspan(kHeaderSize);
  require(payload.size() == (length + 7) / 8, ErrorCode::kFormat,
          "payload size does not match header bit length");
  if (length % 8 != 0) {
    const auto pad_mask = static_cast<std::uint8_t>(0xFFu >> (length % 8));
    require((payload.back() & pad_mask) == 0, ErrorCode::kFormat, "nonzero padding bits");
  }
  return BitStream::from_bytes(payload, length);
}

void write_bitstream(const std::filesystem::path& path, const BitStream& stream, Framing framing) {
  const auto bytes = encode(stream, framing);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

BitStream read_bitstream(const std::filesystem::path& path, Framing framing) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes, framing);
  } catch (const Error& e) {
    throw Error(e.code(), "'" + path.string() + "': " + e.what());
  }
}

void write_ascii(const std::filesystem::path& path, const BitStream& stream) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  const std::string text = stream.to_string();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

}  // namespace qrng
