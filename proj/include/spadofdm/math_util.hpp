#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

/// Numeric primitives shared across the library: Gaussian tail functions in
/// linear and log space, stable truncated-Gaussian moments, compensated
/// (double-double) arithmetic for alternating series, and an adaptive
/// Gauss-Kronrod integrator.
namespace spadofdm {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kPlanckJs = 6.62607015e-34;
inline constexpr double kLightSpeedMs = 299792458.0;

/// Configuration rejected at a precondition (bad key, bad value, bad shape).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical procedure left its validity domain (cancellation, divergence,
/// support overflow). `index()` carries the offending count/term when known.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what,
                          std::optional<std::int64_t> index = std::nullopt)
      : std::runtime_error(what), index_(index) {}
  std::optional<std::int64_t> index() const { return index_; }

 private:
  std::optional<std::int64_t> index_;
};

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}

/// Upper-tail probability of the standard normal, Q(x) = P(X > x).
inline double normal_q(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

/// Scaled complementary error function exp(x^2) erfc(x) for x >= 0.
inline double erfcx_positive(double x) {
  if (x < 25.0) {
    // erfc(x) is representable down to ~1e-272 here; the exp/log pairing
    // keeps the relative error at ~x^2 * eps.
    return std::exp(x * x + std::log(std::erfc(x)));
  }
  const double ix2 = 1.0 / (x * x);
  const double series =
      1.0 + ix2 * (-0.5 + ix2 * (0.75 + ix2 * (-1.875 + ix2 * 6.5625)));
  return series / (x * std::sqrt(kPi));
}

/// log Q(x), valid for all x including far tails where Q underflows.
inline double log_normal_q(double x) {
  if (x < 0.0) return std::log1p(-normal_q(-x));
  const double y = x / std::sqrt(2.0);
  return std::log(0.5 * erfcx_positive(y)) - y * y;
}

/// Moments of the standard normal shifted to mean -w and truncated to
/// [0, inf), premultiplied by exp(logpref):
///   j0 = e * Q(w),  j1 = e * (phi(w) - w Q(w)),
///   j2 = e * ((1 + w^2) Q(w) - w phi(w)).
/// The grouped forms cancel catastrophically for large positive w, so that
/// branch switches to Mills-ratio asymptotics. logpref may be large positive
/// as long as logpref - w^2/2 is bounded (true for the clipped-Gaussian
/// expectations this backs).
struct TruncGaussMoments {
  double j0 = 0.0;
  double j1 = 0.0;
  double j2 = 0.0;
};

inline TruncGaussMoments trunc_gauss_moments(double w, double logpref) {
  TruncGaussMoments m;
  if (w < 8.0) {
    const double q = std::exp(logpref + log_normal_q(w));
    const double lphi = logpref - 0.5 * w * w - 0.5 * std::log(2.0 * kPi);
    const double p = lphi > -745.0 ? std::exp(lphi) : 0.0;
    m.j0 = q;
    m.j1 = p - w * q;
    m.j2 = (1.0 + w * w) * q - w * p;
    return m;
  }
  const double lphi = logpref - 0.5 * w * w - 0.5 * std::log(2.0 * kPi);
  const double ephi = lphi > -745.0 ? std::exp(lphi) : 0.0;
  if (ephi == 0.0) return m;
  const double iw2 = 1.0 / (w * w);
  // M = Q/phi = sum (-1)^k (2k-1)!!/w^(2k+1); asymptotic, stop at min term.
  double mills = 0.0, term = 1.0 / w;
  for (int k = 0; k < 24; ++k) {
    mills += term;
    const double next = -term * (2 * k + 1) * iw2;
    if (std::abs(next) >= std::abs(term)) break;
    term = next;
  }
  // F1 = 1 - w M = sum_{k>=1} (-1)^(k+1) (2k-1)!!/w^(2k)
  double f1 = 0.0, t1 = iw2;
  for (int k = 1; k < 24; ++k) {
    f1 += (k % 2 == 1 ? t1 : -t1);
    const double next = t1 * (2 * k + 1) * iw2;
    if (next >= t1) break;
    t1 = next;
  }
  // F2 = (1+w^2) M - w = sum_{k>=2} (-1)^k [(2k-1)!! - (2k-3)!!]/w^(2k-1)
  double f2 = 0.0;
  double df1 = 3.0, df2 = 1.0;  // (2k-1)!!, (2k-3)!! at k = 2
  double wp = w * w * w, prev = std::numeric_limits<double>::infinity();
  for (int k = 2; k < 26; ++k) {
    const double t = (df1 - df2) / wp;
    if (t >= prev) break;
    f2 += (k % 2 == 0 ? t : -t);
    prev = t;
    df2 = df1;
    df1 *= (2 * k + 1);
    wp *= w * w;
  }
  m.j0 = ephi * mills;
  m.j1 = ephi * f1;
  m.j2 = ephi * f2;
  return m;
}

/// exp(logpref) * integral_0^inf (c2 x^2 + c1 x + c0) N(x; mean, sigma^2) dx.
inline double upper_gaussian_poly2(double c2, double c1, double c0, double mean,
                                   double sigma, double logpref) {
  const double w = -mean / sigma;
  const TruncGaussMoments m = trunc_gauss_moments(w, logpref);
  return c2 * sigma * sigma * m.j2 + c1 * sigma * m.j1 + c0 * m.j0;
}

// ---------------------------------------------------------------------------
// Double-double arithmetic (~31 significant digits), used where alternating
// series cancel far beyond double precision.

struct DD {
  double hi = 0.0;
  double lo = 0.0;
  DD() = default;
  explicit DD(double x) : hi(x) {}
  DD(double h, double l) : hi(h), lo(l) {}
  double value() const { return hi + lo; }
};

namespace detail {
inline DD two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}
inline DD quick_two_sum(double a, double b) {
  const double s = a + b;
  return {s, b - (s - a)};
}
inline DD two_prod(double a, double b) {
  const double p = a * b;
  return {p, std::fma(a, b, -p)};
}
}  // namespace detail

inline DD dd_add(DD a, DD b) {
  DD s = detail::two_sum(a.hi, b.hi);
  s.lo += a.lo + b.lo;
  return detail::quick_two_sum(s.hi, s.lo);
}

inline DD dd_mul(DD a, DD b) {
  DD p = detail::two_prod(a.hi, b.hi);
  p.lo += a.hi * b.lo + a.lo * b.hi;
  return detail::quick_two_sum(p.hi, p.lo);
}

inline DD dd_mul(DD a, double b) { return dd_mul(a, DD(b)); }

inline DD dd_div(DD a, double b) {
  const double q1 = a.hi / b;
  DD r = dd_add(a, dd_mul(DD(q1), -b));
  const double q2 = r.hi / b;
  r = dd_add(r, dd_mul(DD(q2), -b));
  const double q3 = r.hi / b;
  DD q = detail::quick_two_sum(q1, q2);
  return dd_add(q, DD(q3));
}

inline DD dd_neg(DD a) { return {-a.hi, -a.lo}; }

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod (G7, K15) quadrature.

namespace detail {
// Kronrod-15 abscissae/weights on [-1, 1] (symmetric; positive half listed)
// and the embedded Gauss-7 weights.
inline constexpr double kK15Nodes[8] = {
    0.0,
    0.2077849550078985,
    0.4058451513773972,
    0.5860872354676911,
    0.7415311855993944,
    0.8648644233597691,
    0.9491079123427585,
    0.9914553711208126};
inline constexpr double kK15Weights[8] = {
    0.2094821410847278, 0.2044329400752989, 0.1903505780647854,
    0.1690047266392679, 0.1406532597155259, 0.1047900103222502,
    0.0630920926299786, 0.0229353220105292};
inline constexpr double kG7Weights[4] = {
    0.4179591836734694, 0.3818300505051189, 0.2797053914892767,
    0.1294849661688697};

template <typename F>
std::pair<double, double> gk15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double kron = 0.0, gauss = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double x = h * kK15Nodes[i];
    const double fv = (i == 0) ? f(c) : f(c - x) + f(c + x);
    kron += kK15Weights[i] * fv;
    if (i % 2 == 0) gauss += kG7Weights[i / 2] * fv;
  }
  kron *= h;
  gauss *= h;
  return {kron, std::abs(kron - gauss)};
}
}  // namespace detail

/// Adaptive quadrature of f over [a, b] to a relative tolerance (with an
/// absolute floor). Throws NumericalError when the subdivision budget is
/// exhausted before the error estimate meets the tolerance.
template <typename F>
double integrate_adaptive(const F& f, double a, double b, double rel_tol,
                          double abs_tol = 0.0, int max_intervals = 4000) {
  struct Seg {
    double a, b, value, error;
  };
  auto [v0, e0] = detail::gk15(f, a, b);
  std::vector<Seg> segs{{a, b, v0, e0}};
  double total = v0, err = e0;
  int used = 1;
  while (true) {
    const double tol = std::max(abs_tol, rel_tol * std::abs(total));
    if (err <= tol) return total;
    if (used >= max_intervals) {
      throw NumericalError(
          "adaptive quadrature did not converge: error " + std::to_string(err) +
          " > tolerance " + std::to_string(tol));
    }
    std::size_t worst = 0;
    for (std::size_t i = 1; i < segs.size(); ++i)
      if (segs[i].error > segs[worst].error) worst = i;
    const Seg s = segs[worst];
    const double mid = 0.5 * (s.a + s.b);
    auto [vl, el] = detail::gk15(f, s.a, mid);
    auto [vr, er] = detail::gk15(f, mid, s.b);
    total += vl + vr - s.value;
    err += el + er - s.error;
    segs[worst] = {s.a, mid, vl, el};
    segs.push_back({mid, s.b, vr, er});
    ++used;
  }
}

/// Wilson score interval for a binomial proportion (95% by default).
inline std::pair<double, double> wilson_interval(std::uint64_t successes,
                                                 std::uint64_t trials,
                                                 double z = 1.959963984540054) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

}  // namespace spadofdm
