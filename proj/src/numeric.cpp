#include "inml/numeric.hpp"

#include "inml/error.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

namespace inml {

namespace {

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

// cpp_int reads a leading 0 as octal
BigInt decimal(std::string_view s) {
  auto nz = s.find_first_not_of('0');
  return nz == std::string_view::npos ? BigInt(0) : BigInt(std::string(s.substr(nz)));
}

BigInt parse_integer(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  if (!all_digits(s)) throw SchemaError("malformed integer '" + std::string(s) + "'");
  BigInt v = decimal(s);
  return neg ? BigInt(-v) : v;
}

BigInt pow10(unsigned n) {
  BigInt r = 1;
  for (unsigned i = 0; i < n; ++i) r *= 10;
  return r;
}

}  // namespace

Rational parse_rational(std::string_view text) {
  if (text.empty()) throw SchemaError("empty rational");
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    BigInt num = parse_integer(text.substr(0, slash));
    BigInt den = parse_integer(text.substr(slash + 1));
    if (den == 0) throw SchemaError("zero denominator in '" + std::string(text) + "'");
    return Rational(num, den);
  }
  std::string_view mantissa = text;
  long exponent = 0;
  if (auto e = text.find_first_of("eE"); e != std::string_view::npos) {
    mantissa = text.substr(0, e);
    BigInt ev = parse_integer(text.substr(e + 1));
    if (ev > 4096 || ev < -4096) throw SchemaError("exponent out of range in '" + std::string(text) + "'");
    exponent = static_cast<long>(ev);
  }
  bool neg = false;
  if (!mantissa.empty() && (mantissa.front() == '-' || mantissa.front() == '+')) {
    neg = mantissa.front() == '-';
    mantissa.remove_prefix(1);
  }
  std::string digits;
  long frac_digits = 0;
  if (auto dot = mantissa.find('.'); dot != std::string_view::npos) {
    auto ip = mantissa.substr(0, dot);
    auto fp = mantissa.substr(dot + 1);
    if (ip.empty() && fp.empty()) throw SchemaError("malformed decimal '" + std::string(text) + "'");
    if ((!ip.empty() && !all_digits(ip)) || (!fp.empty() && !all_digits(fp)))
      throw SchemaError("malformed decimal '" + std::string(text) + "'");
    digits = std::string(ip) + std::string(fp);
    frac_digits = static_cast<long>(fp.size());
  } else {
    if (!all_digits(mantissa)) throw SchemaError("malformed decimal '" + std::string(text) + "'");
    digits = std::string(mantissa);
  }
  BigInt num = decimal(digits);
  if (neg) num = -num;
  long scale = exponent - frac_digits;
  if (scale >= 0) return Rational(num * pow10(static_cast<unsigned>(scale)));
  return Rational(num, pow10(static_cast<unsigned>(-scale)));
}

std::string format_rational(const Rational& r) {
  BigInt num = boost::multiprecision::numerator(r);
  BigInt den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  BigInt d = den;
  unsigned twos = 0, fives = 0;
  while (d % 2 == 0) { d /= 2; ++twos; }
  while (d % 5 == 0) { d /= 5; ++fives; }
  if (d != 1) return num.str() + "/" + den.str();
  unsigned places = std::max(twos, fives);
  BigInt scaled = num * pow10(places) / den;  // exact
  bool neg = scaled < 0;
  if (neg) scaled = -scaled;
  std::string s = scaled.str();
  if (s.size() <= places) s.insert(0, places - s.size() + 1, '0');
  s.insert(s.size() - places, ".");
  return neg ? "-" + s : s;
}

Real to_real(const Rational& r) {
  return Real(boost::multiprecision::numerator(r)) / Real(boost::multiprecision::denominator(r));
}

double to_double(const Rational& r) { return to_real(r).convert_to<double>(); }
double to_double(const Real& r) { return r.convert_to<double>(); }

BigInt floor_div(const BigInt& num, const BigInt& den) {
  BigInt q = num / den;  // truncates toward zero
  BigInt rem = num - q * den;
  if (rem != 0 && ((rem < 0) != (den < 0))) q -= 1;
  return q;
}

BigInt floor(const Rational& r) {
  return floor_div(boost::multiprecision::numerator(r), boost::multiprecision::denominator(r));
}

BigInt ceil(const Rational& r) { return -floor(Rational(-r)); }

BigInt round_half_even(const Rational& r) {
  BigInt f = floor(r);
  Rational frac = r - Rational(f);
  Rational half(1, 2);
  if (frac > half) return f + 1;
  if (frac < half) return f;
  return (f % 2 == 0) ? f : BigInt(f + 1);
}

BigInt round_half_even(const Real& r) {
  Real f = boost::multiprecision::floor(r);
  Real frac = r - f;
  BigInt fi = f.convert_to<BigInt>();
  if (frac > Real(0.5)) return fi + 1;
  if (frac < Real(0.5)) return fi;
  return (fi % 2 == 0) ? fi : BigInt(fi + 1);
}

BigInt pow2(unsigned bits) {
  BigInt r = 1;
  r <<= bits;
  return r;
}

int ceil_log2(std::uint64_t n) {
  int c = 0;
  while (c < 64 && (std::uint64_t{1} << c) < n) ++c;
  return c;
}

bool fits_signed(const BigInt& v, int width) {
  if (width <= 0) return v == 0;
  BigInt lim = pow2(static_cast<unsigned>(width - 1));
  return v < lim && v >= -lim;
}

bool fits_signed(std::int64_t v, int width) {
  if (width >= 64) return true;
  if (width <= 0) return v == 0;
  std::int64_t lim = std::int64_t{1} << (width - 1);
  return v < lim && v >= -lim;
}

bool fits_unsigned(std::uint64_t v, int width) {
  if (width >= 64) return true;
  if (width <= 0) return v == 0;
  return v < (std::uint64_t{1} << width);
}

std::int64_t to_i64(const BigInt& v) {
  if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min())
    throw OverflowError("value " + v.str() + " does not fit in 64 bits");
  return v.convert_to<std::int64_t>();
}

}  // namespace inml
