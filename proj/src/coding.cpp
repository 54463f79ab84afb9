#include "phe/coding.hpp"

#include <bit>
#include <stdexcept>

namespace phe::coding {

HashCode HashCode::from_signs(std::span<const double> values) {
  HashCode c(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) c.set(i, values[i] < 0.0 ? -1 : 1);
  return c;
}

void HashCode::set(std::size_t i, int pm1) {
  if (i >= len_) throw std::out_of_range("HashCode::set: index " + std::to_string(i));
  if (pm1 != 1 && pm1 != -1) throw std::invalid_argument("HashCode::set: value must be +1 or -1");
  const std::uint64_t mask = 1ull << (i % 64);
  if (pm1 == 1)
    words_[i / 64] |= mask;
  else
    words_[i / 64] &= ~mask;
}

std::string HashCode::to_string() const {
  std::string s(len_, '+');
  for (std::size_t i = 0; i < len_; ++i)
    if (bit(i) < 0) s[i] = '-';
  return s;
}

std::size_t hamming(const HashCode& a, const HashCode& b) {
  if (a.len_ != b.len_)
    throw std::invalid_argument("hamming: length mismatch " + std::to_string(a.len_) + " vs " +
                                std::to_string(b.len_));
  std::size_t count = 0;
  for (std::size_t w = 0; w < a.words_.size(); ++w) count += static_cast<std::size_t>(std::popcount(a.words_[w] ^ b.words_[w]));
  return count;
}

BigInt binomial(unsigned n, unsigned k) {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  BigInt r = 1;
  for (unsigned i = 1; i <= k; ++i) {
    r *= n - k + i;
    r /= i;  // exact at every step: r holds C(n-k+i, i)
  }
  return r;
}

int gv_dmax(unsigned code_length, std::uint64_t num_classes) {
  if (code_length < 1 || code_length > 512)
    throw std::invalid_argument("gv_dmax: code length " + std::to_string(code_length) + " outside 1..512");
  if (num_classes < 1) throw std::invalid_argument("gv_dmax: need at least one class");
  const BigInt total = BigInt(1) << code_length;
  if (BigInt(num_classes) > total)
    throw std::invalid_argument("gv_dmax: " + std::to_string(num_classes) + " classes exceed 2^" +
                                std::to_string(code_length) + " codes");
  if (num_classes == 1) return static_cast<int>(code_length);
  BigInt ball = 0;  // sum_{i=0}^{d-1} C(L,i)
  for (unsigned d = 1; d <= code_length; ++d) {
    ball += binomial(code_length, d - 1);
    if (BigInt(num_classes) * ball >= total) return static_cast<int>(d);
  }
  return static_cast<int>(code_length);
}

int radius(int d_max) {
  if (d_max < 1) throw std::invalid_argument("radius: d_max must be >= 1");
  return std::max(d_max / 2, 1);
}

GVResult gv_bound(unsigned code_length, std::uint64_t num_classes) {
  GVResult r;
  r.code_length = code_length;
  r.num_classes = num_classes;
  r.d_max = gv_dmax(code_length, num_classes);
  r.radius = radius(r.d_max);
  return r;
}

}  // namespace phe::coding
