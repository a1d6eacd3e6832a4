// Command-line front end: analytic BER curves, Monte Carlo sweeps, MPR/MOI/LEA
// tables, maximum-bit-rate sweeps, and photon-count pmf exports.
//
// Exit codes: 0 ok, 2 configuration error, 3 numerical error.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spadofdm/spadofdm.hpp"

namespace {

using namespace spadofdm;

struct GlobalOpts {
  std::string scenario_path;
  std::string power_spec;
  std::uint64_t seed = 1;
  std::string format = "csv";
  std::string out_path;
};

ScenarioFile load_scenario(const GlobalOpts& g) {
  ScenarioFile sf = g.scenario_path.empty() ? default_scenario()
                                            : load_scenario_file(g.scenario_path);
  if (!g.power_spec.empty()) {
    // start:stop:step in dBm
    double a = 0, b = 0, c = 0;
    char c1 = 0, c2 = 0;
    std::istringstream ss(g.power_spec);
    if (!(ss >> a >> c1 >> b >> c2 >> c) || c1 != ':' || c2 != ':' || !(ss >> std::ws).eof())
      throw ConfigError("key '--power' must be start:stop:step, got '" + g.power_spec + "'");
    sf.power = PowerRange{a, b, c};
  }
  return sf;
}

void stamp(ResultTable& t, const GlobalOpts& g, const ScenarioFile& sf,
           const std::string& command) {
  t.add_metadata("tool", std::string("spadofdm ") + kToolVersion);
  t.add_metadata("command", command);
  t.add_metadata("seed", std::to_string(g.seed));
  t.add_metadata("scenario_hash",
                 std::to_string(fnv1a_hash(sf.canonical)));
}

void emit(const ResultTable& t, const GlobalOpts& g) {
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!g.out_path.empty()) {
    file.open(g.out_path);
    if (!file) throw ConfigError("cannot open output file: " + g.out_path);
    os = &file;
  }
  if (g.format == "csv") t.write_csv(*os);
  else if (g.format == "json") t.write_json(*os);
  else throw ConfigError("key '--format' must be csv or json");
}

int cmd_analyze(const GlobalOpts& g) {
  const ScenarioFile sf = load_scenario(g);
  const LinkScenario& sc = sf.scenario;
  ResultTable t({"power_dbm", "ber_poisson", "ber_exact"});
  stamp(t, g, sf, "analyze");
  for (double dbm : sf.power.grid()) {
    const double w = dbm_to_watts(dbm);
    const double bp = ber_mqam(snr(sc.ofdm.scheme, sc.kind, CountingMode::Poisson,
                                   sc.ofdm, sc.spad, w),
                               sc.ofdm.constellation_size);
    const double be = ber_mqam(snr(sc.ofdm.scheme, sc.kind, CountingMode::Exact,
                                   sc.ofdm, sc.spad, w),
                               sc.ofdm.constellation_size);
    t.add_row({dbm, bp, be});
  }
  emit(t, g);
  return 0;
}

int cmd_simulate(const GlobalOpts& g) {
  const ScenarioFile sf = load_scenario(g);
  const LinkScenario& sc = sf.scenario;
  if (sf.monte_carlo.n_frames == 0) throw ConfigError("key 'n_frames' must be >= 1");
  ResultTable t({"power_dbm", "ber_mc", "n_bits", "n_errors", "ci_low", "ci_high"});
  stamp(t, g, sf, "simulate");
  const auto grid = sf.power.grid();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const MonteCarloResult r =
        run_monte_carlo(sc, grid[i], sf.monte_carlo.n_frames,
                        g.seed + 0x9e3779b97f4a7c15ull * i,
                        sf.monte_carlo.n_pilot_frames, sf.monte_carlo.min_errors);
    const auto [lo, hi] = wilson_interval(r.n_errors, r.n_bits);
    t.add_row({grid[i], r.ber, static_cast<double>(r.n_bits),
               static_cast<double>(r.n_errors), lo, hi});
  }
  emit(t, g);
  return 0;
}

int cmd_metrics(const GlobalOpts& g) {
  const ScenarioFile sf = load_scenario(g);
  ResultTable t({"scheme", "kind", "constellation_size", "bias_level_db",
                 "symbol_period_us", "mpr_dbm", "moi_dbm", "lea_db", "feasible"});
  stamp(t, g, sf, "metrics");
  for (DeadTimeKind kind : sf.sweep.kinds) {
    for (const SweepEntry& e : sf.sweep.entries) {
      for (double ts_us : sf.sweep.symbol_periods_us) {
        LinkScenario sc = sf.scenario;
        sc.ofdm.scheme = e.scheme;
        sc.ofdm.constellation_size = e.constellation_size;
        sc.ofdm.bias_level_db = e.bias_level_db;
        sc.ofdm.symbol_period_s = ts_us * 1e-6;
        sc.kind = kind;
        const LinkMetrics m =
            analytic_link_metrics(sc, sf.power.start_dbm, sf.power.stop_dbm);
        t.add_row({e.scheme == Scheme::Aco ? 0.0 : 1.0,
                   kind == DeadTimeKind::Pq ? 0.0 : 1.0,
                   static_cast<double>(e.constellation_size), e.bias_level_db,
                   ts_us, m.feasible ? m.mpr_dbm : 0.0,
                   m.feasible ? m.moi_dbm : 0.0, m.feasible ? m.lea_db : 0.0,
                   m.feasible ? 1.0 : 0.0});
      }
    }
  }
  t.add_metadata("scheme_codes", "0=ACO 1=DCO");
  t.add_metadata("kind_codes", "0=PQ 1=AQ");
  emit(t, g);
  return 0;
}

int cmd_maxrate(const GlobalOpts& g) {
  const ScenarioFile sf = load_scenario(g);
  ResultTable t({"scheme", "kind", "constellation_size", "bias_level_db",
                 "spectral_efficiency", "max_bit_rate", "limiting_Ts"});
  stamp(t, g, sf, "maxrate");
  t.add_metadata("scheme_codes", "0=ACO 1=DCO");
  t.add_metadata("kind_codes", "0=PQ 1=AQ");
  int omitted = 0;
  for (DeadTimeKind kind : sf.sweep.kinds) {
    const auto points = max_bit_rate_sweep(sf.sweep.entries, kind,
                                           sf.scenario.spad,
                                           sf.scenario.ofdm.dft_size,
                                           sf.scenario.target_ber);
    for (const BitRatePoint& p : points) {
      if (!p.feasible) {
        ++omitted;
        continue;
      }
      t.add_row({p.scheme == Scheme::Aco ? 0.0 : 1.0,
                 p.kind == DeadTimeKind::Pq ? 0.0 : 1.0,
                 static_cast<double>(p.constellation_size), p.bias_level_db,
                 p.spectral_efficiency, p.max_bit_rate, p.limiting_symbol_period});
    }
  }
  if (omitted > 0)
    t.add_metadata("note", std::to_string(omitted) +
                               " infeasible grid points omitted (no symbol period "
                               "reaches the target BER)");
  emit(t, g);
  return 0;
}

int cmd_pmf(const GlobalOpts& g, const std::string& kind_str, double photons,
            std::uint64_t samples) {
  const ScenarioFile sf = load_scenario(g);
  const SpadArrayConfig& spad = sf.scenario.spad;
  const double ts = sf.scenario.ofdm.symbol_period_s;
  const DeadTimeKind kind = kind_str == "PQ" ? DeadTimeKind::Pq
                            : kind_str == "AQ"
                                ? DeadTimeKind::Aq
                                : throw ConfigError("key '--kind' must be PQ or AQ");
  if (photons < 0) throw ConfigError("key '--photons' must be >= 0");

  ResultTable t({"count", "p_exact", "p_poisson", "p_empirical"});
  stamp(t, g, sf, "pmf");
  t.add_metadata("incident_photons", ResultTable::format_number(photons));

  // Incident photons -> potential counts via the flux chain (FF, PDP, DCR, APP).
  const double signal = spad.fill_factor * spad.pdp * photons;
  const double dark = spad.dcr_per_device_hz * spad.n_devices * ts;
  PhotonFlux flux;
  flux.mu = (signal + dark) * (1.0 + spad.after_pulsing_prob);
  flux.mu_per_device = flux.mu / spad.n_devices;

  if (flux.mu == 0.0) {
    t.add_row({0.0, 1.0, 1.0, 1.0});
    emit(t, g);
    return 0;
  }

  const CountDistribution device =
      single_device_pmf(kind, flux.mu_per_device / ts, spad, ts);
  const CountDistribution exact = array_pmf(device, spad.n_devices);
  const double poisson_mean = dead_time_mean_transfer(flux, kind, spad, ts);

  // Empirical: sum of independent per-device event-oracle draws.
  std::mt19937_64 rng(g.seed);
  std::vector<std::uint64_t> hist;
  std::int64_t hist_lo = 0;
  std::vector<std::int64_t> draws(samples);
  for (std::uint64_t s = 0; s < samples; ++s) {
    std::int64_t total = 0;
    for (int d = 0; d < spad.n_devices; ++d)
      total += dead_time_event_oracle(flux.mu_per_device / ts, kind,
                                      spad.dead_time_s, ts, rng);
    draws[s] = total;
  }
  if (!draws.empty()) {
    hist_lo = *std::min_element(draws.begin(), draws.end());
    const std::int64_t hist_hi = *std::max_element(draws.begin(), draws.end());
    hist.assign(static_cast<std::size_t>(hist_hi - hist_lo) + 1, 0);
    for (std::int64_t v : draws) ++hist[static_cast<std::size_t>(v - hist_lo)];
  }
  const auto empirical = [&](std::int64_t k) {
    if (hist.empty() || k < hist_lo ||
        k >= hist_lo + static_cast<std::int64_t>(hist.size()))
      return 0.0;
    return static_cast<double>(hist[static_cast<std::size_t>(k - hist_lo)]) /
           static_cast<double>(samples);
  };
  const auto poisson_pmf = [&](std::int64_t k) {
    if (poisson_mean <= 0.0) return k == 0 ? 1.0 : 0.0;
    return std::exp(-poisson_mean + k * std::log(poisson_mean) -
                    std::lgamma(static_cast<double>(k) + 1.0));
  };

  std::int64_t lo = exact.min_count(), hi = exact.max_count();
  if (!hist.empty()) {
    lo = std::min(lo, hist_lo);
    hi = std::max(hi, hist_lo + static_cast<std::int64_t>(hist.size()) - 1);
  }
  const double psd = std::sqrt(poisson_mean);
  lo = std::min(lo, static_cast<std::int64_t>(std::floor(poisson_mean - 8 * psd)));
  hi = std::max(hi, static_cast<std::int64_t>(std::ceil(poisson_mean + 8 * psd)));
  lo = std::max<std::int64_t>(lo, 0);
  for (std::int64_t k = lo; k <= hi; ++k)
    t.add_row({static_cast<double>(k), exact.prob(k), poisson_pmf(k), empirical(k)});
  emit(t, g);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPAD-array optical OFDM link: analytic BER model and Monte Carlo simulator"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "RNG seed (default 1)");
  app.add_option("--format", g.format, "Output format: csv|json (default csv)");
  app.add_option("--out", g.out_path, "Output path (default stdout)");
  app.add_option("--scenario", g.scenario_path, "Scenario JSON file");
  app.add_option("--power", g.power_spec, "Power grid start:stop:step in dBm");

  auto* analyze = app.add_subcommand("analyze", "Analytic BER curve (Poisson and exact shot noise)");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo BER curve");
  auto* metrics = app.add_subcommand("metrics", "MPR/MOI/LEA per scheme, kind, M, Ts");
  auto* maxrate = app.add_subcommand("maxrate", "Theoretical maximum bit rates");
  auto* pmf = app.add_subcommand("pmf", "Photon-count pmf: exact vs Poisson vs empirical");

  std::string pmf_kind = "PQ";
  double pmf_photons = 1e4;
  std::uint64_t pmf_samples = 100000;
  pmf->add_option("--kind", pmf_kind, "Dead-time kind: PQ|AQ (default PQ)");
  pmf->add_option("--photons", pmf_photons, "Incident photons per symbol period");
  pmf->add_option("--samples", pmf_samples, "Empirical sample count (default 1e5)");

  try {
    app.parse(argc, argv);
    if (analyze->parsed()) return cmd_analyze(g);
    if (simulate->parsed()) return cmd_simulate(g);
    if (metrics->parsed()) return cmd_metrics(g);
    if (maxrate->parsed()) return cmd_maxrate(g);
    if (pmf->parsed()) return cmd_pmf(g, pmf_kind, pmf_photons, pmf_samples);
    return 2;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const spadofdm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const spadofdm::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
