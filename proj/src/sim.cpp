#include "natmed/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "natmed/rng.hpp"

namespace natmed {

namespace {
using json = nlohmann::ordered_json;
}

std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::all_correct: return "all_correct";
    case ScenarioKind::g_e_q_r_correct: return "g_e_q_r_correct";
    case ScenarioKind::mu_rho_g_correct: return "mu_rho_g_correct";
    case ScenarioKind::mu_rho_q_correct: return "mu_rho_q_correct";
  }
  return "?";
}

ScenarioKind scenario_from_string(const std::string& s) {
  if (s == "all_correct") return ScenarioKind::all_correct;
  if (s == "g_e_q_r_correct") return ScenarioKind::g_e_q_r_correct;
  if (s == "mu_rho_g_correct") return ScenarioKind::mu_rho_g_correct;
  if (s == "mu_rho_q_correct") return ScenarioKind::mu_rho_q_correct;
  throw ConfigError("unknown scenario: " + s);
}

Scenario Scenario::make(ScenarioKind kind, YKind y_kind) {
  Scenario s;
  s.kind = kind;
  s.name = to_string(kind);
  const NuisanceSpecs good = NuisanceSpecs::default_stack(y_kind);
  const NuisanceSpecs bad = NuisanceSpecs::all_intercept(y_kind);
  switch (kind) {
    case ScenarioKind::all_correct:
      s.specs = good;
      break;
    case ScenarioKind::g_e_q_r_correct:
      s.specs = good;
      s.specs.mu = bad.mu;
      s.specs.rho = bad.rho;
      break;
    case ScenarioKind::mu_rho_g_correct:
      s.specs = bad;
      s.specs.mu = good.mu;
      s.specs.rho = good.rho;
      s.specs.g = good.g;
      break;
    case ScenarioKind::mu_rho_q_correct:
      s.specs = bad;
      s.specs.mu = good.mu;
      s.specs.rho = good.rho;
      s.specs.q = good.q;
      break;
  }
  return s;
}

Dataset sample_dgm(const DgmSpec& dgm, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_dgm: n must be >= 1");
  Rng rng(derive_seed(seed, 0x73616d706c65ULL));
  Dataset d;
  d.w_names = {"W1", "W2", "W3"};
  d.m_names = {"M"};
  d.y_kind = YKind::binary;
  d.records.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ObservedRecord r;
    const int w1 = rng.bernoulli(dgm.p_w1());
    const int w2 = rng.bernoulli(dgm.p_w2(w1));
    const int w3 = rng.bernoulli(dgm.p_w3(w1, w2));
    const std::array<int, 3> w{w1, w2, w3};
    r.w = {double(w1), double(w2), double(w3)};
    r.a = rng.bernoulli(dgm.p_a(w));
    r.z = rng.bernoulli(dgm.p_z(r.a, w));
    const int m = rng.bernoulli(dgm.p_m(r.a, r.z, w));
    r.m = {double(m)};
    r.y = rng.bernoulli(dgm.p_y(m, r.z, r.a, w));
    d.records.push_back(std::move(r));
  }
  return d;
}

namespace {

struct RepResult {
  double nde_est = 0, nde_se = 0, nie_est = 0, nie_se = 0;
  bool ok = false;
  std::string error;
};

EffectMetrics effect_metrics(const std::vector<double>& est,
                             const std::vector<double>& se, double truth,
                             double bound, int n) {
  const double reps = static_cast<double>(est.size());
  double mean_est = 0, mean_se = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    mean_est += est[i];
    mean_se += se[i];
  }
  mean_est /= reps;
  mean_se /= reps;
  double ss = 0, mse = 0;
  int covered = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    ss += (est[i] - mean_est) * (est[i] - mean_est);
    mse += (est[i] - truth) * (est[i] - truth);
    if (std::abs(est[i] - truth) <= 1.96 * se[i]) ++covered;
  }
  const double mc_sd = std::sqrt(ss / (reps - 1.0));
  mse /= reps;
  EffectMetrics m;
  m.truth = truth;
  m.bound = bound;
  m.abs_bias = std::abs(mean_est - truth);
  m.sqrt_n_abs_bias = std::sqrt(static_cast<double>(n)) * m.abs_bias;
  m.relse = mean_se / mc_sd;
  m.relsd = std::sqrt(static_cast<double>(n)) * mc_sd / std::sqrt(bound);
  m.relrmse = static_cast<double>(n) * mse / bound;
  m.coverage95 = static_cast<double>(covered) / reps;
  return m;
}

}  // namespace

SimMetrics run_study(const DgmSpec& dgm, const Scenario& scenario, int reps,
                     int n, int J, std::uint64_t seed, int threads) {
  if (reps < 2) throw ConfigError("run_study: reps must be >= 2 (MC sd undefined)");
  const ThetaParts t11 = true_theta(dgm, {1, 1});
  const ThetaParts t10 = true_theta(dgm, {1, 0});
  const ThetaParts t00 = true_theta(dgm, {0, 0});
  const double nde_truth = t10.total() - t00.total();
  const double nie_truth = t11.total() - t10.total();
  const double nde_bound = efficiency_bound(dgm, Contrast::nde);
  const double nie_bound = efficiency_bound(dgm, Contrast::nie);

  std::vector<RepResult> results(static_cast<std::size_t>(reps));
  std::atomic<int> next{0};
  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, reps));

  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= reps) return;
      RepResult& out = results[static_cast<std::size_t>(r)];
      try {
        const std::uint64_t data_seed =
            derive_seed(seed, 0x10000ULL + static_cast<std::uint64_t>(r));
        const std::uint64_t fit_seed =
            derive_seed(seed, 0x20000ULL + static_cast<std::uint64_t>(r));
        const Dataset d = sample_dgm(dgm, n, data_seed);
        EstimatorConfig cfg;
        cfg.estimand = {1, 0};
        cfg.folds = J;
        cfg.seed = fit_seed;
        cfg.specs = scenario.specs;
        const EffectEstimates est = estimate(d, cfg);
        out.nde_est = est.nde.est;
        out.nde_se = est.nde.se;
        out.nie_est = est.nie.est;
        out.nie_se = est.nie.se;
        out.ok = true;
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::vector<double> nde_est, nde_se, nie_est, nie_se;
  int failures = 0;
  std::string first_error;
  for (const RepResult& r : results) {
    if (!r.ok) {
      ++failures;
      if (first_error.empty()) first_error = r.error;
      continue;
    }
    nde_est.push_back(r.nde_est);
    nde_se.push_back(r.nde_se);
    nie_est.push_back(r.nie_est);
    nie_se.push_back(r.nie_se);
  }
  if (failures > std::max(1, reps / 100) || static_cast<int>(nde_est.size()) < 2)
    throw EstimationError("run_study: " + std::to_string(failures) + "/" +
                          std::to_string(reps) +
                          " replications failed (first: " + first_error + ")");

  SimMetrics m;
  m.scenario = scenario.name;
  m.reps = reps;
  m.n = n;
  m.J = J;
  m.seed = seed;
  m.failures = failures;
  m.nde = effect_metrics(nde_est, nde_se, nde_truth, nde_bound, n);
  m.nie = effect_metrics(nie_est, nie_se, nie_truth, nie_bound, n);
  return m;
}

namespace {

void append_row(std::ostringstream& os, const std::string& scenario,
                const EffectMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-18s %8.4f %12.4f %8.3f %8.3f %8.3f %10.3f\n",
                scenario.c_str(), m.abs_bias, m.sqrt_n_abs_bias, m.relse, m.relsd,
                m.relrmse, m.coverage95);
  os << buf;
}

json effect_to_json(const EffectMetrics& m) {
  return json{{"truth", m.truth},
              {"bound", m.bound},
              {"abs_bias", m.abs_bias},
              {"sqrt_n_abs_bias", m.sqrt_n_abs_bias},
              {"relse", m.relse},
              {"relsd", m.relsd},
              {"relrmse", m.relrmse},
              {"coverage95", m.coverage95}};
}

EffectMetrics effect_from_json(const json& j) {
  EffectMetrics m;
  m.truth = j.at("truth");
  m.bound = j.at("bound");
  m.abs_bias = j.at("abs_bias");
  m.sqrt_n_abs_bias = j.at("sqrt_n_abs_bias");
  m.relse = j.at("relse");
  m.relsd = j.at("relsd");
  m.relrmse = j.at("relrmse");
  m.coverage95 = j.at("coverage95");
  return m;
}

}  // namespace

std::string report_text(const std::vector<SimMetrics>& metrics) {
  std::ostringstream os;
  for (const char* effect : {"NDE", "NIE"}) {
    os << effect << "\n";
    os << "scenario             |bias|  sqrt(n)|bias|    relse    relsd  relrmse  95%CI cov\n";
    // group rows by n, largest first, matching the published table layout
    std::set<int, std::greater<int>> sizes;
    for (const auto& m : metrics) sizes.insert(m.n);
    for (int n : sizes) {
      os << "N=" << n << "\n";
      for (const auto& m : metrics) {
        if (m.n != n) continue;
        append_row(os, m.scenario, std::string(effect) == "NDE" ? m.nde : m.nie);
      }
    }
    os << "\n";
  }
  return os.str();
}

std::string report_csv(const std::vector<SimMetrics>& metrics) {
  std::ostringstream os;
  os << "effect,scenario,n,reps,seed,failures,abs_bias,sqrt_n_abs_bias,relse,"
        "relsd,relrmse,coverage95\n";
  auto row = [&os](const char* effect, const SimMetrics& m,
                   const EffectMetrics& e) {
    os << effect << ',' << m.scenario << ',' << m.n << ',' << m.reps << ','
       << m.seed << ',' << m.failures << ',' << e.abs_bias << ','
       << e.sqrt_n_abs_bias << ',' << e.relse << ',' << e.relsd << ','
       << e.relrmse << ',' << e.coverage95 << '\n';
  };
  for (const auto& m : metrics) row("NDE", m, m.nde);
  for (const auto& m : metrics) row("NIE", m, m.nie);
  return os.str();
}

std::string report_json(const std::vector<SimMetrics>& metrics) {
  json arr = json::array();
  for (const auto& m : metrics) {
    arr.push_back(json{{"scenario", m.scenario},
                       {"reps", m.reps},
                       {"n", m.n},
                       {"J", m.J},
                       {"seed", m.seed},
                       {"failures", m.failures},
                       {"nde", effect_to_json(m.nde)},
                       {"nie", effect_to_json(m.nie)}});
  }
  return arr.dump(2);
}

std::vector<SimMetrics> metrics_from_json(const std::string& text) {
  json arr = json::parse(text);
  std::vector<SimMetrics> out;
  for (const auto& j : arr) {
    SimMetrics m;
    m.scenario = j.at("scenario");
    m.reps = j.at("reps");
    m.n = j.at("n");
    m.J = j.at("J");
    m.seed = j.at("seed");
    m.failures = j.at("failures");
    m.nde = effect_from_json(j.at("nde"));
    m.nie = effect_from_json(j.at("nie"));
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<SimMetrics> metrics_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw DataError("metrics_from_csv: empty input");
  const std::string expected =
      "effect,scenario,n,reps,seed,failures,abs_bias,sqrt_n_abs_bias,relse,"
      "relsd,relrmse,coverage95";
  if (line != expected)
    throw DataError("metrics_from_csv: unexpected header: " + line);
  // truth/bound are not part of the table layout and come back as 0
  std::map<std::string, SimMetrics> by_key;
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    cells.push_back(cur);
    if (cells.size() != 12)
      throw DataError("metrics_from_csv: bad row: " + line);
    const std::string key = cells[1] + "|" + cells[2] + "|" + cells[4];
    if (!by_key.count(key)) {
      SimMetrics m;
      m.scenario = cells[1];
      m.n = std::stoi(cells[2]);
      m.reps = std::stoi(cells[3]);
      m.seed = std::stoull(cells[4]);
      m.failures = std::stoi(cells[5]);
      by_key[key] = m;
      order.push_back(key);
    }
    EffectMetrics e;
    e.abs_bias = std::stod(cells[6]);
    e.sqrt_n_abs_bias = std::stod(cells[7]);
    e.relse = std::stod(cells[8]);
    e.relsd = std::stod(cells[9]);
    e.relrmse = std::stod(cells[10]);
    e.coverage95 = std::stod(cells[11]);
    (cells[0] == "NDE" ? by_key[key].nde : by_key[key].nie) = e;
  }
  std::vector<SimMetrics> out;
  for (const auto& k : order) out.push_back(by_key[k]);
  return out;
}

std::string report_svg(const std::vector<SimMetrics>& metrics) {
  // coverage95 vs n, one polyline per (scenario, effect)
  const int width = 640, height = 420, ml = 60, mr = 160, mt = 30, mb = 50;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\">\n";
  os << "<text x=\"" << ml << "\" y=\"18\" font-size=\"13\">95% CI coverage vs n"
     << "</text>\n";
  std::set<int> sizes;
  std::map<std::string, std::map<int, double>> series;
  for (const auto& m : metrics) {
    sizes.insert(m.n);
    series[m.scenario + " NDE"][m.n] = m.nde.coverage95;
    series[m.scenario + " NIE"][m.n] = m.nie.coverage95;
  }
  const double x0 = ml, x1 = width - mr, y0 = height - mb, y1 = mt;
  auto xpos = [&](int n) {
    if (sizes.size() == 1) return (x0 + x1) / 2.0;
    const double lo = std::log10(double(*sizes.begin()));
    const double hi = std::log10(double(*sizes.rbegin()));
    return x0 + (std::log10(double(n)) - lo) / (hi - lo) * (x1 - x0);
  };
  auto ypos = [&](double cov) { return y0 - cov * (y0 - y1); };
  // axes and the 0.95 reference line
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1
     << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0
     << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << x0 << "\" y1=\"" << ypos(0.95) << "\" x2=\"" << x1
     << "\" y2=\"" << ypos(0.95)
     << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  for (double c : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    os << "<text x=\"8\" y=\"" << ypos(c) + 4 << "\" font-size=\"11\">" << c
       << "</text>\n";
  }
  for (int n : sizes) {
    os << "<text x=\"" << xpos(n) - 14 << "\" y=\"" << y0 + 18
       << "\" font-size=\"11\">" << n << "</text>\n";
  }
  const std::array<const char*, 8> colors{"#1f77b4", "#ff7f0e", "#2ca02c",
                                          "#d62728", "#9467bd", "#8c564b",
                                          "#e377c2", "#7f7f7f"};
  int idx = 0, legend_y = mt + 10;
  for (const auto& [label, pts] : series) {
    const char* color = colors[static_cast<std::size_t>(idx % 8)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const auto& [n, cov] : pts) os << xpos(n) << ',' << ypos(cov) << ' ';
    os << "\"/>\n";
    for (const auto& [n, cov] : pts)
      os << "<circle cx=\"" << xpos(n) << "\" cy=\"" << ypos(cov)
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    os << "<text x=\"" << width - mr + 10 << "\" y=\"" << legend_y
       << "\" font-size=\"11\" fill=\"" << color << "\">" << label
       << "</text>\n";
    legend_y += 16;
    ++idx;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace natmed
