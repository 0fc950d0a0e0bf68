#pragma once

// Exact rationals for model parameters and a wide binary float for the few
// transcendental terms (Gaussian log-densities, logistic/softmax confidence).

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <string>
#include <string_view>

namespace inml {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;
using Real = boost::multiprecision::cpp_bin_float_50;

// Accepts "12", "-0.125", "1e-3", "3/7".
Rational parse_rational(std::string_view text);

// Exact decimal when the denominator is of the form 2^a 5^b, "p/q" otherwise.
// parse_rational(format_rational(r)) == r for every r.
std::string format_rational(const Rational& r);

Real to_real(const Rational& r);
double to_double(const Rational& r);
double to_double(const Real& r);

BigInt floor_div(const BigInt& num, const BigInt& den);
BigInt floor(const Rational& r);
BigInt ceil(const Rational& r);

// Round-half-to-even.
BigInt round_half_even(const Rational& r);
BigInt round_half_even(const Real& r);

// 2^bits as a rational/integer.
BigInt pow2(unsigned bits);

// Smallest c >= 0 with 2^c >= n (n >= 1); 0 for n <= 1.
int ceil_log2(std::uint64_t n);

// Signed range check for a two's-complement field of `width` bits.
bool fits_signed(const BigInt& v, int width);
bool fits_signed(std::int64_t v, int width);
bool fits_unsigned(std::uint64_t v, int width);

std::int64_t to_i64(const BigInt& v);

}  // namespace inml
