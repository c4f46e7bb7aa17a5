// natmed: cross-fitted multiply robust estimation of natural direct and
// indirect effects with a binary treatment-induced confounder under
// monotonicity. Subcommands: estimate, simulate, oracle-check, report.
#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "natmed/estimator.hpp"
#include "natmed/oracle.hpp"
#include "natmed/sim.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace natmed;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitEstimation = 4;

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write output file: " + path);
  out << content;
}

ColumnSpec column_spec_from(const json& cfg) {
  ColumnSpec spec;
  if (!cfg.contains("columns"))
    throw ConfigError("config needs a 'columns' object naming w/a/z/m/y");
  const json& c = cfg.at("columns");
  try {
    spec.w = c.value("w", std::vector<std::string>{});
    spec.a = c.value("a", std::string("A"));
    spec.z = c.value("z", std::string("Z"));
    spec.m = c.at("m").get<std::vector<std::string>>();
    spec.y = c.value("y", std::string("Y"));
  } catch (const json::exception& e) {
    throw ConfigError("bad 'columns' object: " + std::string(e.what()));
  }
  const std::string yk = c.value("y_kind", std::string("binary"));
  if (yk == "binary")
    spec.y_kind = YKind::binary;
  else if (yk == "continuous")
    spec.y_kind = YKind::continuous;
  else
    throw ConfigError("y_kind must be 'binary' or 'continuous'");
  return spec;
}

LearnerSpec learner_from_string(const std::string& s, Link link) {
  if (s == "default") return LearnerSpec::default_stack(link);
  if (s == "intercept_only") return LearnerSpec::intercept_only(link);
  if (s == "glm") return LearnerSpec::glm_main(link);
  if (s == "glm_pairwise") return LearnerSpec::glm_pairwise(link);
  throw ConfigError("unknown learner '" + s +
                    "' (default|intercept_only|glm|glm_pairwise)");
}

NuisanceSpecs specs_from(const json& cfg, YKind y_kind) {
  NuisanceSpecs specs = NuisanceSpecs::default_stack(y_kind);
  if (!cfg.contains("learners")) return specs;
  const json& l = cfg.at("learners");
  const Link mu_link = (y_kind == YKind::binary) ? Link::logit : Link::identity;
  if (l.contains("g")) specs.g = learner_from_string(l.at("g"), Link::logit);
  if (l.contains("q")) specs.q = learner_from_string(l.at("q"), Link::logit);
  if (l.contains("e")) specs.e = learner_from_string(l.at("e"), Link::logit);
  if (l.contains("r")) specs.r = learner_from_string(l.at("r"), Link::logit);
  if (l.contains("mu")) specs.mu = learner_from_string(l.at("mu"), mu_link);
  if (l.contains("rho")) specs.rho = learner_from_string(l.at("rho"), Link::identity);
  return specs;
}

DgmSpec dgm_from_string(const std::string& name) {
  if (name == "sim_study") return dgm_sim_study();
  if (name == "uniform_half") return dgm_uniform_half();
  if (name == "a_depends_w") return dgm_a_depends_w();
  if (name == "constant_y") return dgm_constant_y();
  if (name == "strong_mediation") return dgm_strong_mediation();
  throw ConfigError(
      "unknown dgm '" + name +
      "' (sim_study|uniform_half|a_depends_w|constant_y|strong_mediation)");
}

struct CommonFlags {
  std::string config_path;
  std::string out_path;
  std::string format = "json";
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--out", f.out_path, "output path ('-' = stdout)");
  cmd->add_option("--format", f.format, "json|csv")
      ->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--seed", f.seed, "seed overriding the config");
}

int run_estimate(const CommonFlags& flags, const std::string& data_flag,
                 std::optional<int> a_flag, std::optional<int> ap_flag,
                 std::optional<int> folds_flag, std::optional<double> trunc_flag,
                 std::optional<double> randomized_a_flag) {
  json cfg = load_config(flags.config_path);
  const std::string data_path =
      !data_flag.empty() ? data_flag : cfg.value("data", std::string());
  if (data_path.empty()) throw ConfigError("no data file given (--data or config)");

  const ColumnSpec columns = column_spec_from(cfg);
  const Dataset d = load_csv(data_path, columns);

  EstimatorConfig ec;
  if (cfg.contains("estimand")) {
    ec.estimand.a = cfg.at("estimand").value("a", 1);
    ec.estimand.a_prime = cfg.at("estimand").value("a_prime", 0);
  }
  ec.folds = cfg.value("folds", 2);
  ec.delta = cfg.value("truncate", 0.01);
  ec.seed = cfg.value("seed", 1ULL);
  ec.clip_negative_dq = cfg.value("clip_negative_dq", false);
  ec.stratify_folds = cfg.value("stratify_folds", false);
  if (cfg.contains("randomized_a") && !cfg.at("randomized_a").is_null())
    ec.randomized_a = cfg.at("randomized_a").get<double>();
  ec.specs = specs_from(cfg, columns.y_kind);
  if (a_flag) ec.estimand.a = *a_flag;
  if (ap_flag) ec.estimand.a_prime = *ap_flag;
  if (folds_flag) ec.folds = *folds_flag;
  if (trunc_flag) ec.delta = *trunc_flag;
  if (randomized_a_flag) ec.randomized_a = *randomized_a_flag;
  if (flags.seed) ec.seed = *flags.seed;

  const EffectEstimates est = estimate(d, ec);
  write_output(flags.out_path, est.to_json() + "\n");

  auto line = [](const char* name, const ContrastEstimate& c) {
    std::ostringstream os;
    os << name << ": " << c.est << "  (se " << c.se << ", 95% CI [" << c.ci_low
       << ", " << c.ci_high << "])";
    return os.str();
  };
  std::cerr << "n=" << est.n << "  estimand a=" << est.estimand.a
            << " a'=" << est.estimand.a_prime << "\n"
            << line("NDE", est.nde) << "\n"
            << line("NIE", est.nie) << "\n"
            << line("ATE", est.ate) << "\n";
  for (const auto& w : est.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int run_simulate(const CommonFlags& flags) {
  json cfg = load_config(flags.config_path);
  if (!cfg.contains("sim")) throw ConfigError("config needs a 'sim' object");
  const json& sc = cfg.at("sim");
  const DgmSpec dgm = dgm_from_string(sc.value("dgm", std::string("sim_study")));
  const int reps = sc.value("reps", 500);
  const int n = sc.value("n", 10000);
  const int J = sc.value("J", 2);
  const int threads = sc.value("threads", 0);
  std::uint64_t seed = cfg.value("seed", 1ULL);
  if (flags.seed) seed = *flags.seed;

  std::vector<std::string> names;
  if (sc.contains("scenario")) {
    if (sc.at("scenario").is_array())
      names = sc.at("scenario").get<std::vector<std::string>>();
    else
      names = {sc.at("scenario").get<std::string>()};
  } else {
    names = {"all_correct"};
  }
  std::vector<SimMetrics> all;
  for (const auto& name : names) {
    const Scenario scenario = Scenario::make(scenario_from_string(name));
    all.push_back(run_study(dgm, scenario, reps, n, J, seed, threads));
    std::cerr << "finished scenario " << name << "\n";
  }
  write_output(flags.out_path,
               flags.format == "csv" ? report_csv(all) : report_json(all));
  std::cerr << report_text(all);
  return 0;
}

int run_oracle_check(const CommonFlags& flags) {
  json cfg = load_config(flags.config_path);
  const json oc = cfg.value("oracle", json::object());
  const DgmSpec dgm = dgm_from_string(oc.value("dgm", std::string("sim_study")));
  std::vector<double> eps_list = oc.value("eps", std::vector<double>{0.1, 0.05, 0.025});
  const EstimandSpec est{oc.value("a", 1), oc.value("a_prime", 0)};

  json out;
  out["dgm"] = dgm.name;
  const ThetaParts t11 = true_theta(dgm, {1, 1});
  const ThetaParts t10 = true_theta(dgm, {1, 0});
  const ThetaParts t00 = true_theta(dgm, {0, 0});
  out["theta"] = {{"1,1", t11.total()}, {"1,0", t10.total()}, {"0,0", t00.total()}};
  out["truths"] = {{"nde", t10.total() - t00.total()},
                   {"nie", t11.total() - t10.total()},
                   {"ate", t11.total() - t00.total()}};
  out["bounds"] = {{"nde", efficiency_bound(dgm, Contrast::nde)},
                   {"nie", efficiency_bound(dgm, Contrast::nie)}};

  // mean-zero residuals for all pairs, shipped variant
  json mz = json::array();
  for (const EstimandSpec& pr :
       {EstimandSpec{1, 1}, EstimandSpec{1, 0}, EstimandSpec{0, 0}}) {
    const MeanZeroReport rep = verify_eif_mean_zero(dgm, pr, HyVariant::derived);
    mz.push_back(json{{"a", pr.a},
                      {"a_prime", pr.a_prime},
                      {"residuals", {rep.residual[0], rep.residual[1], rep.residual[2]}},
                      {"max", rep.max_residual()}});
  }
  out["mean_zero"] = mz;

  // variant adjudication on a DGM where P(a|W) varies
  {
    const DgmSpec adj = dgm_a_depends_w();
    const EstimandSpec pr{1, 0};
    json j;
    j["dgm"] = adj.name;
    j["selected"] = to_string(adjudicate_hy00_variant(adj, pr));
    j["r00_reading"] = to_string(adjudicate_r00_reading(adj, pr));
    for (HyVariant v : {HyVariant::derived, HyVariant::as_printed}) {
      const RemainderReport rep =
          remainder_check(adj, pr, 0.1, v, R00Reading::derivation);
      j["max_abs_diff_" + to_string(v)] = rep.max_abs_diff();
    }
    out["variant_adjudication"] = j;
  }

  // remainder table with second-order ratios over the eps sweep
  json rem = json::array();
  std::array<double, 3> prev_lhs{};
  bool have_prev = false;
  for (double eps : eps_list) {
    const RemainderReport rep = remainder_check(dgm, est, eps);
    json rows = json::array();
    const std::array<const char*, 3> zz{"1,1", "1,0", "0,0"};
    for (std::size_t k = 0; k < 3; ++k) {
      json row{{"zz", zz[k]},
               {"lhs", rep.rows[k].lhs},
               {"rhs", rep.rows[k].rhs},
               {"abs_diff", std::abs(rep.rows[k].diff())}};
      if (have_prev && rep.rows[k].lhs != 0.0)
        row["lhs_ratio_vs_prev_eps"] = prev_lhs[k] / rep.rows[k].lhs;
      rows.push_back(row);
      prev_lhs[k] = rep.rows[k].lhs;
    }
    have_prev = true;
    rem.push_back(json{{"eps", eps}, {"rows", rows}});
  }
  out["remainder"] = rem;

  write_output(flags.out_path, out.dump(2) + "\n");
  std::cerr << "oracle-check: dgm=" << dgm.name
            << " nde=" << out["truths"]["nde"].get<double>()
            << " nie=" << out["truths"]["nie"].get<double>()
            << " bounds=(" << out["bounds"]["nde"].get<double>() << ", "
            << out["bounds"]["nie"].get<double>() << ")\n";
  return 0;
}

int run_report(const CommonFlags& flags, const std::string& metrics_flag,
               const std::string& svg_flag) {
  json cfg = load_config(flags.config_path);
  const json rc = cfg.value("report", json::object());
  const std::string metrics_path =
      !metrics_flag.empty() ? metrics_flag : rc.value("metrics", std::string());
  std::vector<SimMetrics> metrics;
  if (!metrics_path.empty()) {
    std::ifstream in(metrics_path);
    if (!in) throw DataError("cannot open metrics file: " + metrics_path);
    std::stringstream ss;
    ss << in.rdbuf();
    metrics = metrics_from_json(ss.str());
  }
  write_output(flags.out_path, flags.format == "csv" ? report_csv(metrics)
                                                     : report_text(metrics));
  const std::string svg_path =
      !svg_flag.empty() ? svg_flag : rc.value("svg", std::string());
  if (!svg_path.empty()) write_output(svg_path, report_svg(metrics));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "natmed: one-step cross-fitted estimation of natural direct/indirect "
      "effects with a binary post-treatment confounder under monotonicity"};
  app.require_subcommand(1);

  CommonFlags est_flags, sim_flags, ora_flags, rep_flags;
  std::string data_path, metrics_path, svg_path;
  std::optional<int> a_flag, ap_flag, folds_flag;
  std::optional<double> trunc_flag, randomized_a_flag;

  CLI::App* est = app.add_subcommand("estimate", "estimate effects from a CSV");
  add_common(est, est_flags);
  est->add_option("--data", data_path, "CSV data file");
  est->add_option("--a", a_flag, "treated level a")->check(CLI::IsMember({0, 1}));
  est->add_option("--aprime", ap_flag, "reference level a'")
      ->check(CLI::IsMember({0, 1}));
  est->add_option("--folds", folds_flag, "number of cross-fit folds");
  est->add_option("--truncate", trunc_flag, "probability truncation in (0,0.5)");
  est->add_option("--randomized-a", randomized_a_flag,
                  "known P(A=1) under randomization; skips the g regression");

  CLI::App* sim = app.add_subcommand("simulate", "run a Monte Carlo study");
  add_common(sim, sim_flags);

  CLI::App* ora = app.add_subcommand(
      "oracle-check", "exact-enumeration checks: truths, bounds, mean-zero, "
                      "remainder identity, weight-variant adjudication");
  add_common(ora, ora_flags);

  CLI::App* rep = app.add_subcommand("report", "render stored metrics");
  add_common(rep, rep_flags);
  rep->add_option("--metrics", metrics_path, "metrics JSON from 'simulate'");
  rep->add_option("--svg", svg_path, "also write an SVG coverage chart");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (est->parsed())
      return run_estimate(est_flags, data_path, a_flag, ap_flag, folds_flag,
                          trunc_flag, randomized_a_flag);
    if (sim->parsed()) return run_simulate(sim_flags);
    if (ora->parsed()) return run_oracle_check(ora_flags);
    if (rep->parsed()) return run_report(rep_flags, metrics_path, svg_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEstimation;
  }
  return 0;
}
