#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "natmed/dataset.hpp"
#include "natmed/estimator.hpp"
#include "natmed/oracle.hpp"

namespace natmed {

enum class ScenarioKind {
  all_correct,
  g_e_q_r_correct,
  mu_rho_g_correct,
  mu_rho_q_correct,
};

std::string to_string(ScenarioKind k);
ScenarioKind scenario_from_string(const std::string& s);

// Correct slots get the cross-validated default stack; deliberately
// misspecified slots get intercept-only.
struct Scenario {
  ScenarioKind kind = ScenarioKind::all_correct;
  std::string name;
  NuisanceSpecs specs;

  static Scenario make(ScenarioKind kind, YKind y_kind = YKind::binary);
};

// n i.i.d. ancestral draws; reproducible from seed.
Dataset sample_dgm(const DgmSpec& dgm, int n, std::uint64_t seed);

struct EffectMetrics {
  double truth = 0.0, bound = 0.0;
  double abs_bias = 0.0;
  double sqrt_n_abs_bias = 0.0;
  double relse = 0.0;    // mean IC-based SE / Monte Carlo SD
  double relsd = 0.0;    // sqrt(n) * MC SD / sqrt(bound)
  double relrmse = 0.0;  // n * MSE / bound
  double coverage95 = 0.0;
};

struct SimMetrics {
  std::string scenario;
  int reps = 0, n = 0, J = 2;
  std::uint64_t seed = 0;
  int failures = 0;
  EffectMetrics nde, nie;
};

// Runs `reps` independent replications: sample, estimate, record
// (estimate, SE, CI covers truth) for NDE and NIE; truths and bounds come
// from exact enumeration of `dgm`. Rep failures beyond a 1% budget abort.
// threads = 0 picks hardware concurrency.
SimMetrics run_study(const DgmSpec& dgm, const Scenario& scenario, int reps,
                     int n, int J, std::uint64_t seed, int threads = 0);

// Six-column table (|bias|, sqrt(n)|bias|, relse, relsd, relrmse, coverage)
// per effect, one row per scenario.
std::string report_text(const std::vector<SimMetrics>& metrics);
std::string report_csv(const std::vector<SimMetrics>& metrics);
std::string report_json(const std::vector<SimMetrics>& metrics);
std::vector<SimMetrics> metrics_from_json(const std::string& text);
std::vector<SimMetrics> metrics_from_csv(const std::string& text);
// coverage-vs-n line chart, one polyline per scenario and effect
std::string report_svg(const std::vector<SimMetrics>& metrics);

}  // namespace natmed
