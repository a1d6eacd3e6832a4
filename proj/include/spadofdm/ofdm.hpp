#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "spadofdm/math_util.hpp"

/// DCO/ACO optical-OFDM baseband: Gray-labelled square M-QAM, Hermitian
/// subcarrier assembly, real-valued IDFT, biasing/clipping, unit-mean
/// normalization, demodulation and ML detection.
///
/// DFT convention: the inverse transform carries the 1/N factor,
///   x[k] = (1/N) sum_n X[n] exp(+j 2 pi n k / N),
///   X[n] =       sum_k x[k] exp(-j 2 pi n k / N),
/// so forward(inverse(X)) == X and sum |X|^2 = N sum x^2 for real frames.
namespace spadofdm {

enum class Scheme { Aco, Dco };

struct OfdmConfig {
  Scheme scheme = Scheme::Aco;
  int constellation_size = 4;       ///< M, a power of 4 (square QAM)
  int dft_size = 2048;              ///< N, a power of 2, >= 8
  double bias_level_db = 7.0;       ///< DCO only; 10 log10(beta^2 + 1)
  double symbol_period_s = 1e-3;    ///< counting window per time sample

  void validate() const {
    const int m = constellation_size;
    int bits = 0;
    while ((1 << bits) < m && bits < 30) ++bits;
    if (m < 4 || (1 << bits) != m || bits % 2 != 0)
      throw ConfigError("constellation_size must be a power of 4 and >= 4");
    if (dft_size < 8 || (dft_size & (dft_size - 1)) != 0)
      throw ConfigError("dft_size must be a power of 2 and >= 8");
    if (bias_level_db < 0.0) throw ConfigError("bias_level_db must be >= 0");
    if (!(symbol_period_s > 0.0)) throw ConfigError("symbol_period_s must be > 0");
  }

  int data_subcarriers() const {
    return scheme == Scheme::Aco ? dft_size / 4 : dft_size / 2 - 1;
  }
  int bits_per_symbol() const {
    return static_cast<int>(std::lround(std::log2(constellation_size)));
  }
  int bits_per_frame() const { return data_subcarriers() * bits_per_symbol(); }

  /// beta from the bias level; 0 for ACO (no bias applied).
  double bias_beta() const {
    if (scheme == Scheme::Aco) return 0.0;
    return std::sqrt(std::pow(10.0, bias_level_db / 10.0) - 1.0);
  }

  /// Spectral efficiency in bits/s/Hz: ACO log2(M)/4, DCO (N-2)/(2N) log2(M).
  double spectral_efficiency() const {
    const double b = std::log2(static_cast<double>(constellation_size));
    if (scheme == Scheme::Aco) return 0.25 * b;
    return (dft_size - 2.0) / (2.0 * dft_size) * b;
  }
};

struct QamSymbolFrame {
  std::vector<std::complex<double>> symbols;
};

enum class Stage { Bipolar, Biased, Clipped, Normalized };

struct TimeDomainFrame {
  std::vector<double> samples;
  Stage stage = Stage::Bipolar;
};

struct FrequencyFrame {
  std::vector<std::complex<double>> bins;
};

// ---------------------------------------------------------------------------
// Gray-labelled square QAM.
//
// Labels are bit patterns [I bits | Q bits], each axis binary-reflected Gray
// coded. Per axis with L = sqrt(M) levels, a label g selects level index
// i = gray^-1(g) and amplitude ((L-1) - 2i)/s with s = sqrt(2(M-1)/3), which
// normalizes the constellation to unit average energy. Label 0 therefore maps
// to the most positive amplitude on both axes: for M = 4, bits 00 -> (1+j)/sqrt(2).

class GrayQam {
 public:
  explicit GrayQam(int m) : m_(m) {
    OfdmConfig probe;
    probe.constellation_size = m;
    probe.validate();  // reuses the power-of-4 check
    levels_ = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m))));
    bits_per_axis_ = static_cast<int>(std::lround(std::log2(levels_)));
    scale_ = std::sqrt(2.0 * (m - 1) / 3.0);
    amp_of_label_.resize(levels_);
    label_of_index_.resize(levels_);
    for (int i = 0; i < levels_; ++i) label_of_index_[i] = i ^ (i >> 1);
    for (int i = 0; i < levels_; ++i) {
      const int g = label_of_index_[i];
      amp_of_label_[g] = ((levels_ - 1) - 2.0 * i) / scale_;
    }
  }

  int order() const { return m_; }
  int bits_per_symbol() const { return 2 * bits_per_axis_; }

  std::complex<double> point(int label_i, int label_q) const {
    return {amp_of_label_[label_i], amp_of_label_[label_q]};
  }

  /// Maps one bit group (MSB first, [I bits | Q bits]) to a symbol.
  std::complex<double> map_bits(const std::uint8_t* bits) const {
    int li = 0, lq = 0;
    for (int b = 0; b < bits_per_axis_; ++b) li = (li << 1) | (bits[b] & 1);
    for (int b = 0; b < bits_per_axis_; ++b)
      lq = (lq << 1) | (bits[bits_per_axis_ + b] & 1);
    return point(li, lq);
  }

  /// Nearest-point detection per axis; exact midpoint ties resolve toward the
  /// candidate with the smaller Gray label (hence the smaller full label,
  /// since I bits are the high bits).
  void detect(std::complex<double> sym, int& label_i, int& label_q) const {
    label_i = detect_axis(sym.real());
    label_q = detect_axis(sym.imag());
  }

  void append_bits(int label_i, int label_q, std::vector<std::uint8_t>& out) const {
    for (int b = bits_per_axis_ - 1; b >= 0; --b) out.push_back((label_i >> b) & 1);
    for (int b = bits_per_axis_ - 1; b >= 0; --b) out.push_back((label_q >> b) & 1);
  }

 private:
  int detect_axis(double amp) const {
    const double u = ((levels_ - 1) - amp * scale_) / 2.0;
    const double fl = std::floor(u);
    int lo = static_cast<int>(fl);
    int hi = lo + 1;
    lo = std::clamp(lo, 0, levels_ - 1);
    hi = std::clamp(hi, 0, levels_ - 1);
    if (lo == hi) return label_of_index_[lo];
    const double frac = u - fl;
    if (frac < 0.5) return label_of_index_[lo];
    if (frac > 0.5) return label_of_index_[hi];
    return std::min(label_of_index_[lo], label_of_index_[hi]);
  }

  int m_;
  int levels_;
  int bits_per_axis_;
  double scale_;
  std::vector<double> amp_of_label_;
  std::vector<int> label_of_index_;
};

// ---------------------------------------------------------------------------
// Radix-2 FFT with per-thread cached twiddles.

namespace detail {

struct FftPlan {
  std::size_t n = 0;
  std::vector<std::size_t> bitrev;
  std::vector<std::complex<double>> twiddle;  // exp(-j 2 pi k / n), k < n/2

  explicit FftPlan(std::size_t size) : n(size) {
    bitrev.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
      bitrev[i] = r;
    }
    twiddle.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double ang = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
      twiddle[k] = {std::cos(ang), std::sin(ang)};
    }
  }

  void forward(std::vector<std::complex<double>>& a) const {
    for (std::size_t i = 0; i < n; ++i)
      if (bitrev[i] > i) std::swap(a[i], a[bitrev[i]]);
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t step = n / len;
      for (std::size_t i = 0; i < n; i += len) {
        for (std::size_t k = 0; k < len / 2; ++k) {
          const std::complex<double> w = twiddle[k * step];
          const std::complex<double> u = a[i + k];
          const std::complex<double> v = a[i + k + len / 2] * w;
          a[i + k] = u + v;
          a[i + k + len / 2] = u - v;
        }
      }
    }
  }
};

inline const FftPlan& fft_plan(std::size_t n) {
  thread_local std::map<std::size_t, FftPlan> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, FftPlan(n)).first;
  return it->second;
}

}  // namespace detail

/// Forward DFT of a real frame (no normalization factor).
inline FrequencyFrame forward_dft(const std::vector<double>& samples) {
  const std::size_t n = samples.size();
  if (n < 2 || (n & (n - 1)) != 0)
    throw ConfigError("forward_dft requires a power-of-two length");
  std::vector<std::complex<double>> a(samples.begin(), samples.end());
  detail::fft_plan(n).forward(a);
  return {std::move(a)};
}

// ---------------------------------------------------------------------------
// Pipeline operations.

/// Bits -> Gray-labelled unit-energy QAM symbols. Rejects bit counts that are
/// not a multiple of log2(M).
inline QamSymbolFrame qam_modulate(const std::vector<std::uint8_t>& bits, int m) {
  const GrayQam qam(m);
  const int bps = qam.bits_per_symbol();
  if (bits.size() % static_cast<std::size_t>(bps) != 0)
    throw ConfigError("bit count " + std::to_string(bits.size()) +
                      " is not a multiple of log2(M) = " + std::to_string(bps));
  QamSymbolFrame out;
  out.symbols.reserve(bits.size() / bps);
  for (std::size_t i = 0; i < bits.size(); i += bps)
    out.symbols.push_back(qam.map_bits(&bits[i]));
  return out;
}

/// Places symbols on subcarriers with Hermitian symmetry.
/// DCO: bins 1..N/2-1 carry data, bins 0 and N/2 are zero.
/// ACO: odd bins 1,3,...,N/2-1 carry data, all even bins are zero.
inline FrequencyFrame assemble_subcarriers(const QamSymbolFrame& syms,
                                           const OfdmConfig& cfg) {
  cfg.validate();
  const int n = cfg.dft_size;
  const int expected = cfg.data_subcarriers();
  if (syms.symbols.size() != static_cast<std::size_t>(expected))
    throw ConfigError("expected " + std::to_string(expected) + " symbols, got " +
                      std::to_string(syms.symbols.size()));
  FrequencyFrame f;
  f.bins.assign(n, {0.0, 0.0});
  if (cfg.scheme == Scheme::Aco) {
    for (int i = 0; i < expected; ++i) f.bins[2 * i + 1] = syms.symbols[i];
  } else {
    for (int i = 0; i < expected; ++i) f.bins[i + 1] = syms.symbols[i];
  }
  for (int k = 1; k < n / 2; ++k) f.bins[n - k] = std::conj(f.bins[k]);
  return f;
}

/// Hermitian frequency frame -> real time-domain frame (bipolar stage).
inline TimeDomainFrame to_time_domain(const FrequencyFrame& freq) {
  const std::size_t n = freq.bins.size();
  if (n < 2 || (n & (n - 1)) != 0)
    throw ConfigError("frame length must be a power of two");
  double scale = 0.0;
  for (const auto& b : freq.bins) scale = std::max(scale, std::abs(b));
  const double tol = 1e-9 * std::max(1.0, scale);
  if (std::abs(freq.bins[0].imag()) > tol || std::abs(freq.bins[n / 2].imag()) > tol)
    throw ConfigError("frame is not Hermitian: bins 0 and N/2 must be real");
  for (std::size_t k = 1; k < n / 2; ++k) {
    if (std::abs(freq.bins[k] - std::conj(freq.bins[n - k])) > tol)
      throw ConfigError("frame is not Hermitian at bin " + std::to_string(k));
  }
  // ifft(X) = conj(fft(conj(X))) / N
  std::vector<std::complex<double>> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = std::conj(freq.bins[i]);
  detail::fft_plan(n).forward(a);
  TimeDomainFrame out;
  out.stage = Stage::Bipolar;
  out.samples.resize(n);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = a[i].real() * inv;
  return out;
}

/// DCO: add B_DC = beta * sqrt(mean(x^2)) then zero-clip; ACO: zero-clip.
inline TimeDomainFrame apply_bias_and_clip(const TimeDomainFrame& frame,
                                           const OfdmConfig& cfg) {
  if (frame.stage != Stage::Bipolar)
    throw ConfigError("apply_bias_and_clip expects a bipolar frame");
  TimeDomainFrame out;
  out.samples = frame.samples;
  if (cfg.scheme == Scheme::Dco) {
    double ms = 0.0;
    for (double v : out.samples) ms += v * v;
    ms /= static_cast<double>(out.samples.size());
    const double bdc = cfg.bias_beta() * std::sqrt(ms);
    for (double& v : out.samples) v += bdc;
  }
  for (double& v : out.samples) v = std::max(v, 0.0);
  out.stage = Stage::Clipped;
  return out;
}

/// Scales a clipped frame to unit sample mean. Returns the applied
/// multiplicative scale (output = scale * input), needed on the receive side
/// to restore constellation amplitudes.
inline std::pair<TimeDomainFrame, double> normalize_unit_mean(
    const TimeDomainFrame& frame) {
  if (frame.stage != Stage::Clipped)
    throw ConfigError("normalize_unit_mean expects a clipped frame");
  const double mean =
      std::accumulate(frame.samples.begin(), frame.samples.end(), 0.0) /
      static_cast<double>(frame.samples.size());
  if (!(mean > 0.0)) throw ConfigError("cannot normalize an all-zero frame");
  TimeDomainFrame out;
  out.stage = Stage::Normalized;
  out.samples.resize(frame.samples.size());
  const double scale = 1.0 / mean;
  for (std::size_t i = 0; i < frame.samples.size(); ++i)
    out.samples[i] = frame.samples[i] * scale;
  return {std::move(out), scale};
}

/// Forward DFT + per-scheme data-bin extraction. ACO clipping halves the
/// data-bin amplitude, so those bins are compensated by a factor of 2.
inline QamSymbolFrame demodulate(const std::vector<double>& samples,
                                 const OfdmConfig& cfg) {
  cfg.validate();
  if (samples.size() != static_cast<std::size_t>(cfg.dft_size))
    throw ConfigError("demodulate expects exactly N samples");
  const FrequencyFrame f = forward_dft(samples);
  QamSymbolFrame out;
  const int nd = cfg.data_subcarriers();
  out.symbols.reserve(nd);
  if (cfg.scheme == Scheme::Aco) {
    for (int i = 0; i < nd; ++i) out.symbols.push_back(2.0 * f.bins[2 * i + 1]);
  } else {
    for (int i = 0; i < nd; ++i) out.symbols.push_back(f.bins[i + 1]);
  }
  return out;
}

/// ML detection against the Gray constellation; returns the bit stream.
inline std::vector<std::uint8_t> qam_detect(const QamSymbolFrame& syms, int m) {
  const GrayQam qam(m);
  std::vector<std::uint8_t> bits;
  bits.reserve(syms.symbols.size() * qam.bits_per_symbol());
  for (const auto& s : syms.symbols) {
    int li = 0, lq = 0;
    qam.detect(s, li, lq);
    qam.append_bits(li, lq, bits);
  }
  return bits;
}

}  // namespace spadofdm
