#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace phe::coding {

using BigInt = boost::multiprecision::cpp_int;

// Fixed-length code over {+1,-1}, packed as bits (+1 <-> 1).
class HashCode {
 public:
  HashCode() = default;
  explicit HashCode(std::size_t length) : len_(length), words_((length + 63) / 64, 0) {}

  // sign(0) := +1
  static HashCode from_signs(std::span<const double> values);

  std::size_t length() const { return len_; }
  int bit(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1 ? 1 : -1; }
  void set(std::size_t i, int pm1);

  std::string to_string() const;  // e.g. "+-++"

  bool operator==(const HashCode&) const = default;

  friend std::size_t hamming(const HashCode& a, const HashCode& b);

 private:
  std::size_t len_ = 0;
  std::vector<std::uint64_t> words_;
};

// differing positions; throws on length mismatch
std::size_t hamming(const HashCode& a, const HashCode& b);

BigInt binomial(unsigned n, unsigned k);

struct GVResult {
  unsigned code_length = 0;
  std::uint64_t num_classes = 0;
  int d_max = 0;
  int radius = 0;
};

// Smallest d >= 1 with 2^L <= Q * sum_{i<d} C(L,i), capped at L; exact
// integer arithmetic throughout. Q == 1 yields L.
int gv_dmax(unsigned code_length, std::uint64_t num_classes);

// Hamming ball radius max(floor(d_max/2), 1).
int radius(int d_max);

GVResult gv_bound(unsigned code_length, std::uint64_t num_classes);

}  // namespace phe::coding
