#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "spadofdm/math_util.hpp"

/// SPAD array receiver model: optical power to potential photon counts,
/// PQ (paralyzable) / AQ (non-paralyzable) dead-time transfer, exact
/// finite-window count distributions per device, array-level convolution,
/// exact moments, samplers, and an event-level brute-force oracle.
///
/// Counting convention: the detector runs continuously (stationary
/// illumination); counts are registered over a window of one symbol period.
/// The event oracle simulates exactly that, and the exact distributions
/// reproduce it.
namespace spadofdm {

struct SpadArrayConfig {
  double fill_factor = 0.322;          ///< C_FF
  double pdp = 0.2;                    ///< C_PDP
  double dcr_per_device_hz = 7270.0;   ///< N_DCR
  double after_pulsing_prob = 0.01;    ///< P_AP
  double dead_time_s = 13.5e-9;        ///< tau_d
  int n_devices = 1024;                ///< N_SPAD
  double wavelength_m = 450e-9;        ///< w_L

  void validate() const {
    if (fill_factor < 0.0 || fill_factor > 1.0)
      throw ConfigError("fill_factor must be in [0, 1]");
    if (pdp < 0.0 || pdp > 1.0) throw ConfigError("pdp must be in [0, 1]");
    if (dcr_per_device_hz < 0.0) throw ConfigError("dcr_per_device_hz must be >= 0");
    if (after_pulsing_prob < 0.0) throw ConfigError("after_pulsing_prob must be >= 0");
    if (!(dead_time_s > 0.0)) throw ConfigError("dead_time_s must be > 0");
    if (n_devices < 1) throw ConfigError("n_devices must be >= 1");
    if (!(wavelength_m > 0.0)) throw ConfigError("wavelength_m must be > 0");
  }

  /// Photon energy h c / lambda in joules.
  double photon_energy_j() const { return kPlanckJs * kLightSpeedMs / wavelength_m; }
};

enum class DeadTimeKind { Pq, Aq };
enum class CountingMode { Poisson, Exact };

/// Expected potential (pre-dead-time) counts for one symbol period.
struct PhotonFlux {
  double mu = 0.0;             ///< expected potential array counts per symbol
  double mu_per_device = 0.0;  ///< mu / N_SPAD
};

/// mu = [C_FF C_PDP P T_s / E_P + N_DCR N_SPAD T_s] (1 + P_AP)
inline PhotonFlux mean_potential_counts(double optical_power_w,
                                        const SpadArrayConfig& cfg,
                                        double symbol_period_s) {
  cfg.validate();
  if (optical_power_w < 0.0) throw ConfigError("optical power must be >= 0");
  if (!(symbol_period_s > 0.0)) throw ConfigError("symbol period must be > 0");
  const double signal = cfg.fill_factor * cfg.pdp * optical_power_w *
                        symbol_period_s / cfg.photon_energy_j();
  const double dark = cfg.dcr_per_device_hz * cfg.n_devices * symbol_period_s;
  PhotonFlux f;
  f.mu = (signal + dark) * (1.0 + cfg.after_pulsing_prob);
  f.mu_per_device = f.mu / cfg.n_devices;
  return f;
}

/// Mean registered array counts per symbol after the dead-time nonlinearity.
inline double dead_time_mean_transfer(const PhotonFlux& flux, DeadTimeKind kind,
                                      const SpadArrayConfig& cfg,
                                      double symbol_period_s) {
  const double ct = cfg.dead_time_s / (symbol_period_s * cfg.n_devices);
  if (kind == DeadTimeKind::Pq) return flux.mu * std::exp(-flux.mu * ct);
  return flux.mu / (1.0 + flux.mu * ct);
}

/// Saturation count per symbol: PQ peaks at T N / (e tau), AQ saturates at T N / tau.
inline double max_count_rate(DeadTimeKind kind, const SpadArrayConfig& cfg,
                             double symbol_period_s) {
  if (!(cfg.dead_time_s > 0.0)) throw ConfigError("dead_time_s must be > 0");
  const double base = symbol_period_s * cfg.n_devices / cfg.dead_time_s;
  return kind == DeadTimeKind::Pq ? base / std::exp(1.0) : base;
}

/// Largest mean count per device per symbol: floor(T/(e tau)) for PQ,
/// floor(T/tau) for AQ.
inline std::int64_t device_count_ceiling(DeadTimeKind kind,
                                         const SpadArrayConfig& cfg,
                                         double symbol_period_s) {
  const double r = symbol_period_s / cfg.dead_time_s;
  return static_cast<std::int64_t>(
      std::floor(kind == DeadTimeKind::Pq ? r / std::exp(1.0) : r));
}

// ---------------------------------------------------------------------------
// CountDistribution

/// A probability mass function over photon counts, stored from an offset to
/// keep array-level supports compact.
class CountDistribution {
 public:
  CountDistribution() : offset_(0), p_{1.0} {}
  CountDistribution(std::int64_t offset, std::vector<double> probs)
      : offset_(offset), p_(std::move(probs)) {
    if (p_.empty()) throw ConfigError("empty pmf");
    for (std::size_t i = 0; i < p_.size(); ++i) {
      if (p_[i] < 0.0) {
        if (p_[i] < -1e-12)
          throw NumericalError("pmf entry " + std::to_string(offset_ + static_cast<std::int64_t>(i)) +
                                   " is negative beyond tolerance: " + std::to_string(p_[i]),
                               offset_ + static_cast<std::int64_t>(i));
        p_[i] = 0.0;
      }
    }
    const double s = sum();
    if (std::abs(s - 1.0) > 1e-6)
      throw NumericalError("pmf sums to " + std::to_string(s) + ", expected 1");
  }

  std::int64_t min_count() const { return offset_; }
  std::int64_t max_count() const { return offset_ + static_cast<std::int64_t>(p_.size()) - 1; }
  std::size_t support_size() const { return p_.size(); }

  double prob(std::int64_t count) const {
    if (count < offset_ || count > max_count()) return 0.0;
    return p_[static_cast<std::size_t>(count - offset_)];
  }

  const std::vector<double>& raw() const { return p_; }

  double sum() const {
    double s = 0.0, c = 0.0;
    for (double v : p_) {  // Kahan
      const double y = v - c;
      const double t = s + y;
      c = (t - s) - y;
      s = t;
    }
    return s;
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < p_.size(); ++i)
      m += static_cast<double>(offset_ + static_cast<std::int64_t>(i)) * p_[i];
    return m;
  }

  double variance() const {
    const double m = mean();
    double v = 0.0;
    for (std::size_t i = 0; i < p_.size(); ++i) {
      const double d = static_cast<double>(offset_ + static_cast<std::int64_t>(i)) - m;
      v += d * d * p_[i];
    }
    return v;
  }

  /// 0.5 * sum_k |p(k) - q(k)|
  double total_variation(const CountDistribution& other) const {
    const std::int64_t lo = std::min(min_count(), other.min_count());
    const std::int64_t hi = std::max(max_count(), other.max_count());
    double tv = 0.0;
    for (std::int64_t k = lo; k <= hi; ++k) tv += std::abs(prob(k) - other.prob(k));
    return 0.5 * tv;
  }

  /// Drops leading/trailing tail mass below eps per side (no renormalization).
  void truncate_tails(double eps) {
    std::size_t lo = 0, hi = p_.size();
    double acc = 0.0;
    while (lo + 1 < hi && acc + p_[lo] < eps) acc += p_[lo++];
    acc = 0.0;
    while (hi > lo + 1 && acc + p_[hi - 1] < eps) acc += p_[--hi];
    if (lo > 0 || hi < p_.size()) {
      p_ = std::vector<double>(p_.begin() + lo, p_.begin() + hi);
      offset_ += static_cast<std::int64_t>(lo);
    }
  }

  template <typename Rng>
  std::int64_t sample(Rng& rng) const {
    if (cdf_.size() != p_.size()) build_cdf();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x = u(rng) * cdf_.back();
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), x);
    return offset_ + static_cast<std::int64_t>(it - cdf_.begin());
  }

 private:
  void build_cdf() const {
    cdf_.resize(p_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < p_.size(); ++i) {
      acc += p_[i];
      cdf_[i] = acc;
    }
  }

  std::int64_t offset_;
  std::vector<double> p_;
  mutable std::vector<double> cdf_;
};

/// Linear convolution of two pmfs.
inline CountDistribution convolve(const CountDistribution& a,
                                  const CountDistribution& b) {
  const auto& pa = a.raw();
  const auto& pb = b.raw();
  std::vector<double> out(pa.size() + pb.size() - 1, 0.0);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i] == 0.0) continue;
    for (std::size_t j = 0; j < pb.size(); ++j) out[i + j] += pa[i] * pb[j];
  }
  return CountDistribution(a.min_count() + b.min_count(), std::move(out));
}

// ---------------------------------------------------------------------------
// Exact per-device distributions.

namespace detail {

inline constexpr std::int64_t kMaxPqSupport = 1500;
inline constexpr std::int64_t kMaxAqSupport = 8192;

/// PQ exact pmf over an effective window W. The alternating Takacs series
///   P(a) = sum_{j=a}^{jmax} C(j,a) (-1)^(j-a) y_j^j / j!,
///   y_j = mu e^(-mu tau) (W - j tau),
/// cancels catastrophically in double precision (terms reach ~1e14 against
/// results of order 1), so terms are built in double-double with interleaved
/// divisor scheduling to keep intermediates in range. A per-entry error bound
/// max|term| * 2^-104 guards the result; exceeding the pmf clamp tolerance is
/// reported as numerical instability at that count.
inline std::vector<double> pq_series_pmf(double rate_hz, double window_s,
                                         double dead_time_s) {
  const double tau = dead_time_s;
  const std::int64_t jmax =
      static_cast<std::int64_t>(std::floor(window_s / tau - 1e-12));
  if (jmax > kMaxPqSupport)
    throw NumericalError(
        "PQ exact pmf support " + std::to_string(jmax + 1) +
            " exceeds the supported maximum " + std::to_string(kMaxPqSupport) +
            " (window/dead-time ratio too large)",
        jmax);
  // All series ingredients are assembled in double-double from the same
  // double inputs: an independently rounded y_j per term would be amplified
  // by the ~1e13 term magnitudes into absolute errors far above the clamp.
  const double damp = std::exp(-rate_hz * tau);
  const DD base = dd_mul(DD(rate_hz), DD(damp));
  std::vector<DD> y(static_cast<std::size_t>(jmax) + 1);
  for (std::int64_t j = 0; j <= jmax; ++j) {
    const DD jtau = detail::two_prod(static_cast<double>(j), tau);
    const DD wj = dd_add(DD(window_s), dd_neg(jtau));
    y[static_cast<std::size_t>(j)] = dd_mul(base, wj);
  }

  std::vector<double> pmf(static_cast<std::size_t>(jmax) + 1, 0.0);
  for (std::int64_t a = 0; a <= jmax; ++a) {
    DD sum(0.0);
    double max_term = 0.0;
    for (std::int64_t j = a; j <= jmax; ++j) {
      // |term| = y_j^j / (a! (j-a)!), built as prod_{i=1..j} y_j / d_i with
      // divisors 1..a, 1..j-a interleaved to bound intermediates by e^(y/e).
      DD t(1.0);
      const DD yj = y[static_cast<std::size_t>(j)];
      std::int64_t da = 1, db = 1;
      for (std::int64_t i = 0; i < j; ++i) {
        double div;
        if (da <= a && (db > j - a || da <= db)) div = static_cast<double>(da++);
        else div = static_cast<double>(db++);
        t = dd_div(dd_mul(t, yj), div);
      }
      max_term = std::max(max_term, std::abs(t.value()));
      if (((j - a) & 1) != 0) t = dd_neg(t);
      sum = dd_add(sum, t);
    }
    const double err = max_term * 0x1p-104;
    double v = sum.value();
    if (v < 0.0 && v >= -(1e-12 + err)) v = 0.0;
    if (err > 1e-9 && err > 1e-6 * std::max(std::abs(v), 1e-30))
      throw NumericalError(
          "PQ exact pmf: alternating-series cancellation beyond tolerance at count " +
              std::to_string(a) + " (error bound " + std::to_string(err) + ")",
          a);
    pmf[static_cast<std::size_t>(a)] = v;
  }
  return pmf;
}

/// Weighted Poisson partial sum sum_{j=0}^{jhi} (m - j) Pr(j; s), computed in
/// a shifted log domain so it stays finite for any s.
inline double weighted_poisson_sum(std::int64_t jhi, double m, double s,
                                   const std::vector<double>& log_fact) {
  if (jhi < 0) return 0.0;
  if (s <= 0.0) return m;  // Pr(0;0) = 1, all j>0 masses vanish
  const double ls = std::log(s);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::int64_t j = 0; j <= jhi; ++j) {
    const double lp = -s + j * ls - log_fact[static_cast<std::size_t>(j)];
    peak = std::max(peak, lp);
  }
  if (peak == -std::numeric_limits<double>::infinity() || peak < -745.0) return 0.0;
  double acc = 0.0;
  for (std::int64_t j = 0; j <= jhi; ++j) {
    const double lp = -s + j * ls - log_fact[static_cast<std::size_t>(j)];
    acc += (m - static_cast<double>(j)) * std::exp(lp - peak);
  }
  return acc * std::exp(peak);
}

/// AQ exact pmf (non-paralyzable, stationary), three-case closed form with
/// lambda = 1/(1 + mu tau) and S_a = mu (T - a tau).
inline std::vector<double> aq_exact_pmf(double rate_hz, double window_s,
                                        double dead_time_s) {
  const double tau = dead_time_s;
  const std::int64_t amax = static_cast<std::int64_t>(std::floor(window_s / tau));
  if (amax + 1 > kMaxAqSupport)
    throw NumericalError("AQ exact pmf support " + std::to_string(amax + 2) +
                             " exceeds the supported maximum " +
                             std::to_string(kMaxAqSupport),
                         amax);
  const double lambda = 1.0 / (1.0 + rate_hz * tau);
  const double mu_t = rate_hz * window_s;
  std::vector<double> log_fact(static_cast<std::size_t>(amax) + 3, 0.0);
  for (std::size_t j = 1; j < log_fact.size(); ++j)
    log_fact[j] = log_fact[j - 1] + std::log(static_cast<double>(j));
  const auto big_s = [&](std::int64_t a) {
    return rate_hz * (window_s - static_cast<double>(a) * tau);
  };

  std::vector<double> pmf(static_cast<std::size_t>(amax) + 2, 0.0);
  for (std::int64_t a = 0; a < amax; ++a) {
    const double s1 = weighted_poisson_sum(a - 2, static_cast<double>(a - 1), big_s(a - 1), log_fact);
    const double s2 = weighted_poisson_sum(a - 1, static_cast<double>(a), big_s(a), log_fact);
    const double s3 = weighted_poisson_sum(a, static_cast<double>(a + 1), big_s(a + 1), log_fact);
    pmf[static_cast<std::size_t>(a)] = lambda * (s1 - 2.0 * s2 + s3);
  }
  {
    const std::int64_t a = amax;
    const double s1 = weighted_poisson_sum(a - 2, static_cast<double>(a - 1), big_s(a - 1), log_fact);
    const double s2 = weighted_poisson_sum(a - 1, static_cast<double>(a), big_s(a), log_fact);
    pmf[static_cast<std::size_t>(a)] =
        lambda * (s1 - 2.0 * s2 - mu_t) + static_cast<double>(a) + 1.0;
  }
  {
    const std::int64_t a = amax + 1;
    const double s1 = weighted_poisson_sum(a - 2, static_cast<double>(a - 1), big_s(a - 1), log_fact);
    pmf[static_cast<std::size_t>(a)] = lambda * (s1 + mu_t) - static_cast<double>(a) + 1.0;
  }
  return pmf;
}

}  // namespace detail

/// Exact photon-count pmf of a single device over one symbol period for a
/// potential rate mu_m (counts/second). PQ uses the alternating series over an
/// effective window T_s + tau_d, which reproduces the stationary detector
/// (mean identical to the transfer curve); AQ uses the three-case closed form.
inline CountDistribution single_device_pmf(DeadTimeKind kind, double mu_m_rate_hz,
                                           const SpadArrayConfig& cfg,
                                           double symbol_period_s) {
  cfg.validate();
  if (mu_m_rate_hz < 0.0) throw ConfigError("rate must be >= 0");
  if (!(cfg.dead_time_s < symbol_period_s))
    throw ConfigError("dead time must be smaller than the symbol period");
  if (mu_m_rate_hz == 0.0) return CountDistribution(0, {1.0});
  std::vector<double> pmf =
      kind == DeadTimeKind::Pq
          ? detail::pq_series_pmf(mu_m_rate_hz, symbol_period_s + cfg.dead_time_s,
                                  cfg.dead_time_s)
          : detail::aq_exact_pmf(mu_m_rate_hz, symbol_period_s, cfg.dead_time_s);
  CountDistribution d(0, std::move(pmf));
  d.truncate_tails(1e-15);
  return d;
}

/// N-fold self-convolution by binary exponentiation, truncating tail mass
/// below 1e-15 per side at each step.
inline CountDistribution array_pmf(const CountDistribution& device, int n_devices) {
  if (n_devices < 1) throw ConfigError("n_devices must be >= 1");
  const double projected =
      static_cast<double>(device.support_size()) * n_devices;
  if (projected > 8e6)
    throw NumericalError("array pmf support would need ~" +
                         std::to_string(static_cast<std::int64_t>(projected)) +
                         " entries; reduce the device support first");
  CountDistribution base = device;
  CountDistribution result(0, {1.0});
  int n = n_devices;
  bool first = true;
  while (n > 0) {
    if (n & 1) {
      result = first ? base : convolve(result, base);
      first = false;
      result.truncate_tails(1e-15);
    }
    n >>= 1;
    if (n > 0) {
      base = convolve(base, base);
      base.truncate_tails(1e-15);
    }
  }
  return result;
}

/// Exact stationary mean and variance of the array output per symbol.
/// Mean equals the dead-time transfer for both kinds. Variances:
///   PQ: N [mu_m^2 e^(-2 mu_m tau)(tau^2 - 2 T tau) + mu_m e^(-mu_m tau) T]
///   AQ: N lambda^3 [mu_m T + g^2 lambda (1 + 2g/3 + g^2/6)],  g = mu_m tau
/// with mu_m in counts/second. Both collapse to the Poisson limit as tau -> 0.
struct ExactMoments {
  double mean = 0.0;
  double variance = 0.0;
};

inline ExactMoments exact_moments(DeadTimeKind kind, const PhotonFlux& flux,
                                  const SpadArrayConfig& cfg,
                                  double symbol_period_s) {
  if (!(cfg.dead_time_s < symbol_period_s))
    throw ConfigError("dead time must be smaller than the symbol period");
  const double tau = cfg.dead_time_s;
  const double t = symbol_period_s;
  const double n = cfg.n_devices;
  const double r = flux.mu_per_device / t;  // counts/second
  ExactMoments m;
  m.mean = dead_time_mean_transfer(flux, kind, cfg, symbol_period_s);
  if (kind == DeadTimeKind::Pq) {
    const double e1 = std::exp(-r * tau);
    m.variance = n * (r * r * e1 * e1 * (tau * tau - 2.0 * t * tau) + r * e1 * t);
  } else {
    const double g = r * tau;
    const double lambda = 1.0 / (1.0 + g);
    m.variance = n * lambda * lambda * lambda *
                 (r * t + g * g * lambda * (1.0 + 2.0 * g / 3.0 + g * g / 6.0));
  }
  return m;
}

/// One registered-count sample for the whole array.
/// Poisson mode draws Poisson(dead-time transfer mean). Exact mode sums
/// independent per-device draws from the exact device pmf (cached per
/// operating point).
template <typename Rng>
std::int64_t sample_counts(const PhotonFlux& flux, DeadTimeKind kind,
                           CountingMode mode, const SpadArrayConfig& cfg,
                           double symbol_period_s, Rng& rng) {
  if (mode == CountingMode::Poisson) {
    const double mean = dead_time_mean_transfer(flux, kind, cfg, symbol_period_s);
    if (mean <= 0.0) return 0;
    std::poisson_distribution<std::int64_t> d(mean);
    return d(rng);
  }
  using Key = std::tuple<int, std::uint64_t, std::uint64_t, std::uint64_t>;
  thread_local std::map<Key, CountDistribution> cache;
  auto bits = [](double x) {
    std::uint64_t b;
    static_assert(sizeof(b) == sizeof(x));
    std::memcpy(&b, &x, sizeof(b));
    return b;
  };
  const double rate = flux.mu_per_device / symbol_period_s;
  const Key key{kind == DeadTimeKind::Pq ? 0 : 1, bits(rate),
                bits(symbol_period_s), bits(cfg.dead_time_s)};
  auto it = cache.find(key);
  if (it == cache.end()) {
    if (cache.size() > 65536) cache.clear();
    it = cache.emplace(key, single_device_pmf(kind, rate, cfg, symbol_period_s)).first;
  }
  std::int64_t total = 0;
  for (int d = 0; d < cfg.n_devices; ++d) total += it->second.sample(rng);
  return total;
}

/// Event-level oracle: simulates homogeneous Poisson arrivals at `rate_hz` for
/// one device and counts registrations in [0, T] under the stationary
/// (continuously running) detector.
///   PQ: an arrival registers iff no arrival occurred in the preceding tau;
///       arrivals are generated from -tau so the look-back is exact.
///   AQ: an arrival registers iff >= tau elapsed since the last registration;
///       a warm-up from -(10 tau + 12/rate) settles the renewal state.
template <typename Rng>
std::int64_t dead_time_event_oracle(double rate_hz, DeadTimeKind kind,
                                    double dead_time_s, double window_s,
                                    Rng& rng) {
  if (rate_hz < 0.0) throw ConfigError("rate must be >= 0");
  if (rate_hz == 0.0) return 0;
  const double inv_rate = 1.0 / rate_hz;
  std::uniform_real_distribution<double> uni(std::numeric_limits<double>::min(), 1.0);
  auto next_gap = [&] { return -std::log(uni(rng)) * inv_rate; };

  std::int64_t count = 0;
  if (kind == DeadTimeKind::Pq) {
    double t = -dead_time_s + next_gap();
    double prev = -std::numeric_limits<double>::infinity();
    while (t <= window_s) {
      if (t >= 0.0 && t - prev >= dead_time_s) ++count;
      prev = t;
      t += next_gap();
    }
  } else {
    const double warmup = 10.0 * dead_time_s + 12.0 * inv_rate;
    double t = -warmup + next_gap();
    double last_reg = -std::numeric_limits<double>::infinity();
    while (t <= window_s) {
      if (t - last_reg >= dead_time_s) {
        last_reg = t;
        if (t >= 0.0) ++count;
      }
      t += next_gap();
    }
  }
  return count;
}

}  // namespace spadofdm
