#pragma once

#include <cmath>
#include <vector>

#include "spadofdm/math_util.hpp"
#include "spadofdm/ofdm.hpp"
#include "spadofdm/spad.hpp"

/// Closed-form analytical BER chain: clipped-Gaussian signal statistics,
/// Bussgang gain/distortion decomposition of the dead-time nonlinearity,
/// DCO clipping model, shot-noise variances, SNR assembly and M-QAM BER.
///
/// The transmitted frame is modelled as a Gaussian x with the transmitter
/// normalized to unit mean, so photon counts follow the affine map
///   N(x) = C_s x + C_n   for x > 0,
///   N(x) = C_n           for x <= 0 (clipped sample: dark counts remain),
/// and the dead time acts as z_PQ(N) = N exp(-C_t N) or
/// z_AQ(N) = N / (1 + C_t N).
namespace spadofdm {

struct SignalStats {
  double rho = 0.0;           ///< normalized mean of the underlying Gaussian
  double sigma_x = 0.0;       ///< normalized std deviation
  double mean_clipped = 0.0;  ///< E[x_clipped] before normalization
  double sigma_m = 0.0;       ///< pre-clip std deviation before normalization
};

/// ACO: sigma_m = sqrt((M-1)/3), E[x_clip] = sigma_m/sqrt(2 pi), rho = 0,
/// sigma_x = sqrt(2 pi) for every M.
/// DCO: sigma_m = sqrt(2(M-1)(N-2)/(3N)), B_DC = beta sigma_m,
/// E[x_clip] = B_DC Q(-beta) + sigma_m phi(beta), rho = B_DC/E, sigma_x = sigma_m/E.
inline SignalStats clipped_signal_stats(const OfdmConfig& cfg) {
  cfg.validate();
  SignalStats s;
  const double m = cfg.constellation_size;
  if (cfg.scheme == Scheme::Aco) {
    s.sigma_m = std::sqrt((m - 1.0) / 3.0);
    s.mean_clipped = s.sigma_m / std::sqrt(2.0 * kPi);
    s.rho = 0.0;
    s.sigma_x = std::sqrt(2.0 * kPi);
    return s;
  }
  const double n = cfg.dft_size;
  const double beta = cfg.bias_beta();
  s.sigma_m = std::sqrt(2.0 * (m - 1.0) * (n - 2.0) / (3.0 * n));
  const double bdc = beta * s.sigma_m;
  s.mean_clipped = bdc * normal_q(-beta) + s.sigma_m * normal_pdf(beta);
  s.rho = bdc / s.mean_clipped;
  s.sigma_x = s.sigma_m / s.mean_clipped;
  return s;
}

struct PhotonAffineCoeffs {
  double c_signal = 0.0;  ///< C_s: counts per unit normalized amplitude
  double c_dark = 0.0;    ///< C_n: dark-count offset in counts
  double c_dead = 0.0;    ///< C_t: tau_d / (T_s N_SPAD)
};

inline PhotonAffineCoeffs photon_affine_coeffs(double optical_power_w,
                                               const SpadArrayConfig& cfg,
                                               double symbol_period_s) {
  cfg.validate();
  if (optical_power_w < 0.0) throw ConfigError("optical power must be >= 0");
  PhotonAffineCoeffs c;
  c.c_signal = cfg.fill_factor * cfg.pdp * optical_power_w * symbol_period_s *
               (1.0 + cfg.after_pulsing_prob) / cfg.photon_energy_j();
  c.c_dark = cfg.dcr_per_device_hz * cfg.n_devices * symbol_period_s *
             (1.0 + cfg.after_pulsing_prob);
  c.c_dead = cfg.dead_time_s / (symbol_period_s * cfg.n_devices);
  return c;
}

struct BussgangExpectations {
  double e_nz = 0.0;  ///< E[N z(N)]
  double e_n2 = 0.0;  ///< E[N^2]
  double e_z2 = 0.0;  ///< E[z(N)^2]
  double e_z = 0.0;   ///< E[z(N)]
  double e_n = 0.0;   ///< E[N]
};

namespace detail {

/// Shared E[N] and E[N^2] (dead-time independent): Gaussian piece over x > 0
/// plus the clipped atom at N = C_n with mass Q(rho/sigma_x).
inline void affine_moments(const SignalStats& st, const PhotonAffineCoeffs& co,
                           BussgangExpectations& e) {
  const double atom = normal_q(st.rho / st.sigma_x);
  e.e_n = upper_gaussian_poly2(0.0, co.c_signal, co.c_dark, st.rho, st.sigma_x, 0.0) +
          co.c_dark * atom;
  e.e_n2 = upper_gaussian_poly2(co.c_signal * co.c_signal,
                                2.0 * co.c_signal * co.c_dark,
                                co.c_dark * co.c_dark, st.rho, st.sigma_x, 0.0) +
           co.c_dark * co.c_dark * atom;
}

}  // namespace detail

/// Closed forms of the five PQ expectations. Multiplying by
/// exp(-k C_t N) shifts the Gaussian piece mean to rho - k m with
/// m = C_t C_s sigma_x^2 and a log-prefactor k^2 C_t^2 C_s^2 sigma_x^2 / 2
/// - k C_t C_s rho - k C_t C_n; the pairing is evaluated in log space so both
/// halves stay finite at any operating point.
inline BussgangExpectations bussgang_expectations_pq(const SignalStats& st,
                                                     const PhotonAffineCoeffs& co) {
  const double cs = co.c_signal, cn = co.c_dark, ct = co.c_dead;
  const double sx = st.sigma_x, rho = st.rho;
  const double m = ct * cs * sx * sx;
  const double lp1 = 0.5 * ct * ct * cs * cs * sx * sx - ct * cs * rho - ct * cn;
  const double lp2 = 2.0 * ct * ct * cs * cs * sx * sx - 2.0 * ct * cs * rho - 2.0 * ct * cn;
  const double atom = normal_q(rho / sx);
  const double z_atom = cn * std::exp(-ct * cn);  // z_PQ at the clipped point

  BussgangExpectations e;
  detail::affine_moments(st, co, e);
  e.e_nz = upper_gaussian_poly2(cs * cs, 2.0 * cs * cn, cn * cn, rho - m, sx, lp1) +
           cn * z_atom * atom;
  e.e_z2 = upper_gaussian_poly2(cs * cs, 2.0 * cs * cn, cn * cn, rho - 2.0 * m, sx, lp2) +
           z_atom * z_atom * atom;
  e.e_z = upper_gaussian_poly2(0.0, cs, cn, rho - m, sx, lp1) + z_atom * atom;
  return e;
}

namespace detail {

/// E[f(N(x))] over the clipped-Gaussian distribution by adaptive quadrature.
template <typename F>
double clipped_gaussian_expect(const F& f, const SignalStats& st,
                               const PhotonAffineCoeffs& co, double rel_tol) {
  const double lo = -st.rho / st.sigma_x;
  const double hi = std::max(lo, 0.0) + 12.0;
  const auto integrand = [&](double u) {
    const double n = co.c_signal * (st.rho + st.sigma_x * u) + co.c_dark;
    return f(n) * normal_pdf(u);
  };
  const double gauss_piece = integrate_adaptive(integrand, lo, hi, rel_tol);
  return gauss_piece + f(co.c_dark) * normal_q(st.rho / st.sigma_x);
}

}  // namespace detail

/// AQ expectations: the rational z_AQ(N) = N/(1 + C_t N) has no elementary
/// Gaussian antiderivative, so E[Nz], E[z^2], E[z] are evaluated by adaptive
/// quadrature (relative tolerance 1e-8); E[N], E[N^2] reuse the closed forms.
inline BussgangExpectations bussgang_expectations_aq(const SignalStats& st,
                                                     const PhotonAffineCoeffs& co,
                                                     double rel_tol = 1e-8) {
  const double ct = co.c_dead;
  const auto z = [ct](double n) { return n / (1.0 + ct * n); };
  BussgangExpectations e;
  detail::affine_moments(st, co, e);
  e.e_nz = detail::clipped_gaussian_expect([&](double n) { return n * z(n); }, st, co, rel_tol);
  e.e_z2 = detail::clipped_gaussian_expect([&](double n) { const double v = z(n); return v * v; },
                                           st, co, rel_tol);
  e.e_z = detail::clipped_gaussian_expect(z, st, co, rel_tol);
  return e;
}

struct BussgangDecomposition {
  double alpha = 0.0;        ///< gain factor E[Nz]/E[N^2]
  double sigma_y_sq = 0.0;   ///< distortion-noise variance
  double e_y = 0.0;          ///< E[Y]
  double e_y2 = 0.0;         ///< E[Y^2]
};

inline BussgangDecomposition bussgang_decompose(const BussgangExpectations& e) {
  if (!(e.e_n2 > 0.0)) throw ConfigError("E[N^2] must be positive");
  BussgangDecomposition d;
  d.alpha = e.e_nz / e.e_n2;
  d.e_y2 = e.e_z2 - d.alpha * d.alpha * e.e_n2;
  d.e_y = e.e_z - d.alpha * e.e_n;
  d.sigma_y_sq = d.e_y2 - d.e_y * d.e_y;
  if (d.sigma_y_sq < 0.0) {
    if (d.sigma_y_sq < -1e-6 * e.e_z2)
      throw NumericalError("Bussgang distortion variance " +
                           std::to_string(d.sigma_y_sq) +
                           " is negative beyond cancellation tolerance");
    d.sigma_y_sq = 0.0;
  }
  return d;
}

struct ClippingModel {
  double alpha_c = 0.0;      ///< clipping gain
  double sigma_c_sq = 0.0;   ///< clipping-noise variance
  double g_dc = 0.0;         ///< DC power attenuation sigma_m^2/(sigma_m^2+B^2)
  double sigma_cp_sq = 0.0;  ///< receiver-referred clipping variance
  double b_dc = 0.0;         ///< DC bias in sigma_m units
};

/// DCO clipping distortion: alpha_c = Q(-beta) + beta G_DC phi(beta),
/// sigma_c^2 = alpha_c(1-alpha_c)(sigma_m^2+B^2) - E[Y_c]^2,
/// sigma_cp^2 = (1 - G_DC/R) C_s^2 sigma_c^2 / E[x_clipped]^2.
/// (1 - alpha_c) is assembled from its own small terms to avoid cancellation.
inline ClippingModel dco_clipping_model(const OfdmConfig& cfg,
                                        const PhotonAffineCoeffs& co) {
  if (cfg.scheme != Scheme::Dco)
    throw ConfigError("dco_clipping_model requires the DCO scheme");
  const SignalStats st = clipped_signal_stats(cfg);
  const double beta = cfg.bias_beta();
  const double sm = st.sigma_m;
  ClippingModel c;
  c.b_dc = beta * sm;
  c.g_dc = sm * sm / (sm * sm + c.b_dc * c.b_dc);
  const double qb = normal_q(beta);
  const double pb = normal_pdf(beta);
  const double one_minus_ac = qb - beta * c.g_dc * pb;
  c.alpha_c = 1.0 - one_minus_ac;
  const double e_yc = sm * pb - c.b_dc * qb + c.b_dc * one_minus_ac;
  c.sigma_c_sq = c.alpha_c * one_minus_ac * (sm * sm + c.b_dc * c.b_dc) - e_yc * e_yc;
  if (c.sigma_c_sq < 0.0) c.sigma_c_sq = 0.0;
  const double r = cfg.spectral_efficiency();
  c.sigma_cp_sq = (1.0 - c.g_dc / r) * co.c_signal * co.c_signal * c.sigma_c_sq /
                  (st.mean_clipped * st.mean_clipped);
  return c;
}

/// Average shot-noise variance over the signal distribution.
/// Poisson mode: E[z] (variance equals the mean).
/// Exact PQ: E[(3 tau - 2 T)/T C_t z^2 + z] from the finite-window variance.
/// Exact AQ: E[N lambda_N^3 (N/N + g^2 lambda (...))] by quadrature.
inline double shot_noise_variance(DeadTimeKind kind, CountingMode mode,
                                  const SignalStats& st,
                                  const PhotonAffineCoeffs& co,
                                  const SpadArrayConfig& spad,
                                  double symbol_period_s) {
  if (mode == CountingMode::Poisson) {
    if (kind == DeadTimeKind::Pq) return bussgang_expectations_pq(st, co).e_z;
    return detail::clipped_gaussian_expect(
        [&](double n) { return n / (1.0 + co.c_dead * n); }, st, co, 1e-8);
  }
  if (kind == DeadTimeKind::Pq) {
    const BussgangExpectations e = bussgang_expectations_pq(st, co);
    const double tau = spad.dead_time_s, t = symbol_period_s;
    return (3.0 * tau - 2.0 * t) / t * co.c_dead * e.e_z2 + e.e_z;
  }
  const double nsp = spad.n_devices;
  const double ct = co.c_dead;
  return detail::clipped_gaussian_expect(
      [&](double n) {
        const double lam = 1.0 / (1.0 + ct * n);
        const double g = ct * n;
        return nsp * lam * lam * lam *
               (n / nsp + g * g * lam * (1.0 + 2.0 * g / 3.0 + g * g / 6.0));
      },
      st, co, 1e-8);
}

struct SnrResult {
  double snr = 0.0;
  double spectral_efficiency = 0.0;
  double signal_power = 0.0;    ///< alpha^2 C_s^2 sigma_x^2 (x alpha_c^2 for DCO)
  double distortion_var = 0.0;  ///< sigma_Y^2
  double shot_var = 0.0;        ///< sigma_N^2
  double clip_var = 0.0;        ///< alpha_c^2 sigma_cp^2 (DCO only)
  double alpha = 0.0;
};

/// Electrical SNR of the demodulated data subcarriers.
///   ACO: alpha^2 C_s^2 sigma_x^2 / (2 R (sigma_Y^2 + sigma_N^2))
///   DCO: alpha_c^2 alpha^2 C_s^2 sigma_x^2 /
///        (R (alpha_c^2 sigma_cp^2 + sigma_Y^2 + sigma_N^2))
/// The DCO bias penalty enters through the unit-mean normalization
/// (sigma_x = sigma_m / E[x_clipped]); Monte Carlo confirms this bookkeeping.
inline SnrResult snr(Scheme scheme, DeadTimeKind kind, CountingMode mode,
                     const OfdmConfig& ofdm_cfg, const SpadArrayConfig& spad,
                     double optical_power_w) {
  OfdmConfig cfg = ofdm_cfg;
  cfg.scheme = scheme;
  cfg.validate();
  const SignalStats st = clipped_signal_stats(cfg);
  const PhotonAffineCoeffs co =
      photon_affine_coeffs(optical_power_w, spad, cfg.symbol_period_s);
  const BussgangExpectations e = kind == DeadTimeKind::Pq
                                     ? bussgang_expectations_pq(st, co)
                                     : bussgang_expectations_aq(st, co);
  const BussgangDecomposition bg = bussgang_decompose(e);
  const double sn2 = shot_noise_variance(kind, mode, st, co, spad, cfg.symbol_period_s);

  SnrResult r;
  r.spectral_efficiency = cfg.spectral_efficiency();
  r.alpha = bg.alpha;
  r.distortion_var = bg.sigma_y_sq;
  r.shot_var = sn2;
  const double base = bg.alpha * bg.alpha * co.c_signal * co.c_signal * st.sigma_x * st.sigma_x;
  if (scheme == Scheme::Aco) {
    r.signal_power = base;
    const double denom = 2.0 * r.spectral_efficiency * (bg.sigma_y_sq + sn2);
    r.snr = denom > 0.0 ? base / denom : 0.0;
  } else {
    const ClippingModel cm = dco_clipping_model(cfg, co);
    r.clip_var = cm.alpha_c * cm.alpha_c * cm.sigma_cp_sq;
    r.signal_power = cm.alpha_c * cm.alpha_c * base;
    const double denom =
        r.spectral_efficiency * (r.clip_var + bg.sigma_y_sq + sn2);
    r.snr = denom > 0.0 ? r.signal_power / denom : 0.0;
  }
  if (!(r.snr >= 0.0)) r.snr = 0.0;
  return r;
}

/// M-QAM BER:
///   4 (sqrt(M)-1)/(sqrt(M) log2 M) Q(sqrt(3R/(M-1) SNR))
/// + 4 (sqrt(M)-2)/(sqrt(M) log2 M) Q(3 sqrt(3R/(M-1) SNR)), clamped to [0, 1].
inline double ber_mqam(const SnrResult& s, int m) {
  if (s.snr < 0.0) throw ConfigError("SNR must be >= 0");
  const double sm = std::sqrt(static_cast<double>(m));
  const double b = std::log2(static_cast<double>(m));
  const double arg = std::sqrt(3.0 * s.spectral_efficiency / (m - 1.0) * s.snr);
  const double ber = 4.0 * (sm - 1.0) / (sm * b) * normal_q(arg) +
                     4.0 * (sm - 2.0) / (sm * b) * normal_q(3.0 * arg);
  return std::clamp(ber, 0.0, 1.0);
}

/// Analytic BER at each power of a sorted dBm grid.
inline std::vector<double> analytic_ber_curve(Scheme scheme, DeadTimeKind kind,
                                              CountingMode mode,
                                              const OfdmConfig& cfg,
                                              const SpadArrayConfig& spad,
                                              const std::vector<double>& powers_dbm) {
  for (std::size_t i = 1; i < powers_dbm.size(); ++i)
    if (powers_dbm[i] < powers_dbm[i - 1])
      throw ConfigError("power grid must be sorted ascending");
  std::vector<double> out;
  out.reserve(powers_dbm.size());
  for (double dbm : powers_dbm) {
    const double watts = std::pow(10.0, dbm / 10.0) * 1e-3;
    out.push_back(ber_mqam(snr(scheme, kind, mode, cfg, spad, watts),
                           cfg.constellation_size));
  }
  return out;
}

}  // namespace spadofdm
