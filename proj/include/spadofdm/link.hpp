#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spadofdm/analysis.hpp"
#include "spadofdm/math_util.hpp"
#include "spadofdm/ofdm.hpp"
#include "spadofdm/spad.hpp"

/// End-to-end Monte Carlo BER estimation, the pilot-based photon-to-amplitude
/// equalizer, MPR/MOI/LEA threshold extraction, and the maximum-bit-rate
/// sweep over the symbol period.
namespace spadofdm {

struct LinkScenario {
  OfdmConfig ofdm;
  SpadArrayConfig spad;
  DeadTimeKind kind = DeadTimeKind::Pq;
  CountingMode count_mode = CountingMode::Poisson;
  double target_ber = 1e-3;

  void validate() const {
    ofdm.validate();
    spad.validate();
    if (!(spad.dead_time_s < ofdm.symbol_period_s))
      throw ConfigError("dead time must be smaller than the symbol period");
    if (!(target_ber > 0.0 && target_ber < 0.5))
      throw ConfigError("target_ber must be in (0, 0.5)");
  }
};

struct BerPoint {
  double power_dbm = 0.0;
  double ber = 0.0;
  std::uint64_t n_bits = 0;
  std::uint64_t n_errors = 0;
};

struct BerCurve {
  std::vector<BerPoint> points;
};

struct LinkMetrics {
  double mpr_dbm = 0.0;
  double moi_dbm = 0.0;
  double lea_db = 0.0;
  bool feasible = false;
};

struct BitRatePoint {
  Scheme scheme = Scheme::Aco;
  DeadTimeKind kind = DeadTimeKind::Pq;
  int constellation_size = 4;
  double bias_level_db = 0.0;
  double spectral_efficiency = 0.0;
  double max_bit_rate = 0.0;        ///< bits/s, = R / limiting_symbol_period
  double limiting_symbol_period = 0.0;
  bool feasible = false;
};

struct MonteCarloResult {
  double ber = 0.0;
  std::uint64_t n_bits = 0;
  std::uint64_t n_errors = 0;
};

inline double dbm_to_watts(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w * 1e3); }

namespace detail {

struct TxFrame {
  std::vector<int> labels_i;
  std::vector<int> labels_q;
  QamSymbolFrame symbols;
  TimeDomainFrame normalized;
  double mean = 0.0;  ///< clipped-frame mean (1/normalization scale)
};

template <typename Rng>
TxFrame make_tx_frame(const OfdmConfig& cfg, const GrayQam& qam, int levels, Rng& rng) {
  TxFrame f;
  const int nd = cfg.data_subcarriers();
  f.labels_i.resize(nd);
  f.labels_q.resize(nd);
  f.symbols.symbols.resize(nd);
  std::uniform_int_distribution<int> lab(0, levels - 1);
  for (int i = 0; i < nd; ++i) {
    f.labels_i[i] = lab(rng);
    f.labels_q[i] = lab(rng);
    f.symbols.symbols[i] = qam.point(f.labels_i[i], f.labels_q[i]);
  }
  const FrequencyFrame freq = assemble_subcarriers(f.symbols, cfg);
  const TimeDomainFrame bip = to_time_domain(freq);
  const TimeDomainFrame clip = apply_bias_and_clip(bip, cfg);
  auto [norm, scale] = normalize_unit_mean(clip);
  f.normalized = std::move(norm);
  f.mean = 1.0 / scale;
  return f;
}

template <typename Rng>
std::vector<double> receive_counts(const TxFrame& f, const LinkScenario& sc,
                                   const PhotonAffineCoeffs& co, Rng& rng) {
  std::vector<double> counts(f.normalized.samples.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    PhotonFlux flux;
    flux.mu = co.c_signal * f.normalized.samples[k] + co.c_dark;
    flux.mu_per_device = flux.mu / sc.spad.n_devices;
    counts[k] = static_cast<double>(sample_counts(
        flux, sc.kind, sc.count_mode, sc.spad, sc.ofdm.symbol_period_s, rng));
  }
  return counts;
}

}  // namespace detail

/// Photon-to-amplitude coefficient from pilot frames with known data:
/// (known pilot mean amplitude) / (mean received counts). The pilot frames are
/// unit-mean by construction, so the known mean amplitude is 1.
template <typename Rng>
double pilot_equalizer_coefficient_rng(const LinkScenario& sc, double power_dbm,
                                       int n_pilot_frames, Rng& rng) {
  sc.validate();
  if (n_pilot_frames < 1) throw ConfigError("n_pilot_frames must be >= 1");
  const PhotonAffineCoeffs co =
      photon_affine_coeffs(dbm_to_watts(power_dbm), sc.spad, sc.ofdm.symbol_period_s);
  const GrayQam qam(sc.ofdm.constellation_size);
  const int levels = static_cast<int>(std::lround(std::sqrt(
      static_cast<double>(sc.ofdm.constellation_size))));
  double count_sum = 0.0;
  std::uint64_t n_samples = 0;
  for (int p = 0; p < n_pilot_frames; ++p) {
    const detail::TxFrame f = detail::make_tx_frame(sc.ofdm, qam, levels, rng);
    const std::vector<double> counts = detail::receive_counts(f, sc, co, rng);
    for (double c : counts) count_sum += c;
    n_samples += counts.size();
  }
  const double mean_counts = count_sum / static_cast<double>(n_samples);
  if (!(mean_counts > 0.0))
    throw NumericalError("pilot received zero mean counts: no signal");
  return 1.0 / mean_counts;
}

inline double pilot_equalizer_coefficient(const LinkScenario& sc, double power_dbm,
                                          int n_pilot_frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return pilot_equalizer_coefficient_rng(sc, power_dbm, n_pilot_frames, rng);
}

/// Transmits OFDM frames over the SPAD channel and counts bit errors.
///
/// The pilot (first `n_pilot_frames`, known data) provides two calibrations:
/// the photon-to-amplitude coefficient (mean-amplitude / mean-counts) and the
/// data-subcarrier gain (scalar least squares of the demodulated pilot
/// symbols on the known symbols), which is the constellation reference for ML
/// detection; the dark-count offset lands on the DC bin and never reaches the
/// data subcarriers. Deterministic for a fixed seed. Stops early once
/// `min_errors` is reached when that is set.
inline MonteCarloResult run_monte_carlo(const LinkScenario& sc, double power_dbm,
                                        std::uint64_t n_frames, std::uint64_t seed,
                                        int n_pilot_frames = 10,
                                        std::uint64_t min_errors = 0) {
  sc.validate();
  if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
  if (n_pilot_frames < 1) throw ConfigError("n_pilot_frames must be >= 1");
  std::mt19937_64 rng(seed);
  const PhotonAffineCoeffs co =
      photon_affine_coeffs(dbm_to_watts(power_dbm), sc.spad, sc.ofdm.symbol_period_s);
  const GrayQam qam(sc.ofdm.constellation_size);
  const int levels = static_cast<int>(std::lround(std::sqrt(
      static_cast<double>(sc.ofdm.constellation_size))));
  const int nd = sc.ofdm.data_subcarriers();

  // Pilot pass: amplitude coefficient and data-bin gain.
  double count_sum = 0.0;
  std::uint64_t n_samples = 0;
  double gain_num = 0.0, gain_den = 0.0;
  for (int p = 0; p < n_pilot_frames; ++p) {
    const detail::TxFrame f = detail::make_tx_frame(sc.ofdm, qam, levels, rng);
    const std::vector<double> counts = detail::receive_counts(f, sc, co, rng);
    for (double c : counts) count_sum += c;
    n_samples += counts.size();
    const QamSymbolFrame rx = demodulate(counts, sc.ofdm);
    for (int i = 0; i < nd; ++i) {
      const std::complex<double> r = rx.symbols[i] * f.mean;
      gain_num += f.symbols.symbols[i].real() * r.real() +
                  f.symbols.symbols[i].imag() * r.imag();
      gain_den += std::norm(f.symbols.symbols[i]);
    }
  }
  const double mean_counts = count_sum / static_cast<double>(n_samples);
  if (!(mean_counts > 0.0))
    throw NumericalError("pilot received zero mean counts: no signal");
  const double c_eq = 1.0 / mean_counts;                   // counts -> amplitude
  const double g_data = (gain_num / gain_den) * c_eq;      // constellation gain
  if (!(g_data > 0.0))
    throw NumericalError("pilot data-gain estimate is not positive");

  MonteCarloResult res;
  std::vector<double> amplitude(sc.ofdm.dft_size);
  for (std::uint64_t fr = 0; fr < n_frames; ++fr) {
    const detail::TxFrame f = detail::make_tx_frame(sc.ofdm, qam, levels, rng);
    const std::vector<double> counts = detail::receive_counts(f, sc, co, rng);
    for (std::size_t k = 0; k < counts.size(); ++k) amplitude[k] = c_eq * counts[k];
    const QamSymbolFrame rx = demodulate(amplitude, sc.ofdm);
    // Undo the frame normalization (known scale) and the pilot data gain.
    const double rescale = f.mean / g_data;
    for (int i = 0; i < nd; ++i) {
      int li = 0, lq = 0;
      qam.detect(rx.symbols[i] * rescale, li, lq);
      res.n_errors += static_cast<std::uint64_t>(
          __builtin_popcount(static_cast<unsigned>(li ^ f.labels_i[i])) +
          __builtin_popcount(static_cast<unsigned>(lq ^ f.labels_q[i])));
    }
    res.n_bits += static_cast<std::uint64_t>(sc.ofdm.bits_per_frame());
    if (min_errors > 0 && res.n_errors >= min_errors) break;
  }
  res.ber = res.n_bits ? static_cast<double>(res.n_errors) / res.n_bits : 0.0;
  return res;
}

/// MPR/MOI from a sampled BER curve: first downward and last upward crossing
/// of the target, refined by log-linear interpolation between the bracketing
/// grid points. Infeasible when no point is below target.
inline LinkMetrics find_thresholds(const BerCurve& curve, double target) {
  if (curve.points.empty()) throw ConfigError("empty BER curve");
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    if (curve.points[i].power_dbm <= curve.points[i - 1].power_dbm)
      throw ConfigError("BER curve powers must be strictly increasing");
  const auto& pts = curve.points;
  std::size_t first_below = pts.size(), last_below = pts.size();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].ber < target) {
      if (first_below == pts.size()) first_below = i;
      last_below = i;
    }
  }
  LinkMetrics m;
  if (first_below == pts.size()) return m;  // never below target
  m.feasible = true;

  const auto interp = [target](const BerPoint& hi, const BerPoint& lo) {
    // log-BER linear in power between a point above target (hi) and below (lo)
    const double bh = std::max(hi.ber, 1e-300);
    const double bl = std::max(lo.ber, 1e-300);
    if (bh <= target) return hi.power_dbm;
    if (bl >= target) return lo.power_dbm;
    const double t = (std::log(target) - std::log(bh)) / (std::log(bl) - std::log(bh));
    return hi.power_dbm + t * (lo.power_dbm - hi.power_dbm);
  };

  m.mpr_dbm = first_below == 0 ? pts.front().power_dbm
                               : interp(pts[first_below - 1], pts[first_below]);
  m.moi_dbm = last_below + 1 >= pts.size()
                  ? pts.back().power_dbm
                  : interp(pts[last_below + 1], pts[last_below]);
  m.lea_db = m.moi_dbm - m.mpr_dbm;
  return m;
}

/// Analytic MPR/MOI/LEA: 1 dB grid scan plus bisection on the analytic BER to
/// 0.1 dB at both crossings.
inline LinkMetrics analytic_link_metrics(const LinkScenario& sc,
                                         double start_dbm = -110.0,
                                         double stop_dbm = 0.0,
                                         double step_db = 1.0) {
  sc.validate();
  const auto ber_at = [&](double dbm) {
    return ber_mqam(snr(sc.ofdm.scheme, sc.kind, sc.count_mode, sc.ofdm, sc.spad,
                        dbm_to_watts(dbm)),
                    sc.ofdm.constellation_size);
  };
  std::vector<double> grid;
  for (double p = start_dbm; p <= stop_dbm + 1e-9; p += step_db) grid.push_back(p);
  std::vector<double> bers(grid.size());
  std::size_t first_below = grid.size(), last_below = grid.size();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    bers[i] = ber_at(grid[i]);
    if (bers[i] < sc.target_ber) {
      if (first_below == grid.size()) first_below = i;
      last_below = i;
    }
  }
  LinkMetrics m;
  if (first_below == grid.size()) return m;
  m.feasible = true;

  const auto bisect = [&](double lo, double hi, bool falling) {
    while (hi - lo > 0.1) {
      const double mid = 0.5 * (lo + hi);
      const bool below = ber_at(mid) < sc.target_ber;
      if (below == falling) hi = mid;
      else lo = mid;
    }
    return 0.5 * (lo + hi);
  };
  m.mpr_dbm = first_below == 0
                  ? grid.front()
                  : bisect(grid[first_below - 1], grid[first_below], true);
  m.moi_dbm = last_below + 1 >= grid.size()
                  ? grid.back()
                  : bisect(grid[last_below], grid[last_below + 1], false);
  m.lea_db = m.moi_dbm - m.mpr_dbm;
  return m;
}

/// One (scheme, bias, M) member of a bit-rate sweep family.
struct SweepEntry {
  Scheme scheme = Scheme::Aco;
  double bias_level_db = 0.0;
  int constellation_size = 4;
};

/// For each family entry, bisects the symbol period to the smallest T_s whose
/// analytic BER curve still dips below the target (nonempty LEA); the maximum
/// bit rate is R / T_s under the one-sample-per-T_s convention. The analytic
/// chain is evaluated below tau_d as well: the closed forms stay smooth there
/// and the feasibility boundary for low spectral efficiencies lies below the
/// dead time.
inline std::vector<BitRatePoint> max_bit_rate_sweep(
    const std::vector<SweepEntry>& family, DeadTimeKind kind,
    const SpadArrayConfig& spad, int dft_size = 2048, double target_ber = 1e-3,
    double t_min = 1e-12, double t_max = 1e-2) {
  spad.validate();
  std::vector<BitRatePoint> out;
  for (const SweepEntry& entry : family) {
    OfdmConfig cfg;
    cfg.scheme = entry.scheme;
    cfg.constellation_size = entry.constellation_size;
    cfg.dft_size = dft_size;
    cfg.bias_level_db = entry.bias_level_db;

    const auto feasible_at = [&](double ts) {
      cfg.symbol_period_s = ts;
      for (double dbm = -110.0; dbm <= 0.0 + 1e-9; dbm += 2.0) {
        const double b = ber_mqam(snr(cfg.scheme, kind, CountingMode::Poisson, cfg,
                                      spad, dbm_to_watts(dbm)),
                                  cfg.constellation_size);
        if (b <= target_ber) return true;
      }
      return false;
    };

    BitRatePoint pt;
    pt.scheme = entry.scheme;
    pt.kind = kind;
    pt.constellation_size = entry.constellation_size;
    pt.bias_level_db = entry.bias_level_db;
    cfg.symbol_period_s = t_max;
    pt.spectral_efficiency = cfg.spectral_efficiency();
    if (!feasible_at(t_max)) {
      out.push_back(pt);  // feasible = false
      continue;
    }
    double lo = t_min, hi = t_max;
    if (feasible_at(t_min)) {
      hi = t_min;
    } else {
      while (hi / lo > 1.002) {
        const double mid = std::sqrt(lo * hi);
        if (feasible_at(mid)) hi = mid;
        else lo = mid;
      }
    }
    pt.feasible = true;
    pt.limiting_symbol_period = hi;
    pt.max_bit_rate = pt.spectral_efficiency / hi;
    out.push_back(pt);
  }
  return out;
}

}  // namespace spadofdm
