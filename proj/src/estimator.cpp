#include "natmed/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "natmed/rng.hpp"

namespace natmed {

namespace {

using json = nlohmann::ordered_json;

constexpr double kZ95 = 1.96;

double truncate_into(double v, double delta, std::size_t& count) {
  if (v < delta) {
    ++count;
    return delta;
  }
  if (v > 1.0 - delta) {
    ++count;
    return 1.0 - delta;
  }
  return v;
}

// truncate a base probability vector (e.g. P(A=1|...)) elementwise
Eigen::VectorXd truncate_vec(const Eigen::VectorXd& v, double delta,
                             std::size_t& count) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out[i] = truncate_into(v[i], delta, count);
  return out;
}

struct SharedNuisances {
  Eigen::VectorXd g1;                      // P(A=1|W), truncated
  Eigen::VectorXd q1_at[2];                // P(Z=1|A=a,W), a in {0,1}
  Eigen::VectorXd e1_z[2];                 // P(A=1|M,Z=z,W), z in {0,1}
  Eigen::VectorXd r1_at[2];                // P(Z=1|M,A=a,W)
  Eigen::VectorXd mu_az[2][2];             // E(Y|M,Z=z,A=a,W), [a][z]
  std::vector<FittedModel> mu_models;      // per fold, for rho training
  std::vector<std::string> warnings;
  std::size_t truncated = 0;
  double min_prop = 1.0, max_prop = 0.0;
};

void track_range(const Eigen::VectorXd& v, double& lo, double& hi) {
  if (v.size() == 0) return;
  lo = std::min(lo, v.minCoeff());
  hi = std::max(hi, v.maxCoeff());
}

void merge_warnings(std::vector<std::string>& into, const std::string& tag,
                    const std::vector<std::string>& from) {
  for (const auto& w : from) into.push_back(tag + ": " + w);
}

SharedNuisances fit_shared(const Dataset& d, const FoldPlan& plan,
                           const NuisanceSpecs& specs, double delta,
                           std::optional<double> randomized_a, bool y_binary) {
  SharedNuisances s;
  const int n = static_cast<int>(d.size());

  if (randomized_a) {
    if (*randomized_a <= 0.0 || *randomized_a >= 1.0)
      throw ConfigError("randomized_a must be inside (0,1)");
    s.g1 = Eigen::VectorXd::Constant(n, *randomized_a);
  } else {
    auto g = crossfit_regression(d, plan, specs.g, TargetSelector::a(),
                                 DesignSpec{false, false, false, true});
    merge_warnings(s.warnings, "g", g.warnings);
    s.g1 = g.values;
  }
  s.g1 = truncate_vec(s.g1, delta, s.truncated);
  track_range(s.g1, s.min_prop, s.max_prop);

  {
    auto q = crossfit_regression_multi(
        d, plan, specs.q, TargetSelector::z(), DesignSpec{true, false, false, true},
        {PredictOverrides{1, std::nullopt}, PredictOverrides{0, std::nullopt}});
    merge_warnings(s.warnings, "q", q[0].warnings);
    s.q1_at[1] = truncate_vec(q[0].values, delta, s.truncated);
    s.q1_at[0] = truncate_vec(q[1].values, delta, s.truncated);
    track_range(s.q1_at[1], s.min_prop, s.max_prop);
    track_range(s.q1_at[0], s.min_prop, s.max_prop);
  }
  {
    auto e = crossfit_regression_multi(
        d, plan, specs.e, TargetSelector::a(), DesignSpec{false, true, true, true},
        {PredictOverrides{std::nullopt, 1}, PredictOverrides{std::nullopt, 0}});
    merge_warnings(s.warnings, "e", e[0].warnings);
    s.e1_z[1] = truncate_vec(e[0].values, delta, s.truncated);
    s.e1_z[0] = truncate_vec(e[1].values, delta, s.truncated);
    track_range(s.e1_z[1], s.min_prop, s.max_prop);
    track_range(s.e1_z[0], s.min_prop, s.max_prop);
  }
  {
    auto r = crossfit_regression_multi(
        d, plan, specs.r, TargetSelector::z(), DesignSpec{true, false, true, true},
        {PredictOverrides{1, std::nullopt}, PredictOverrides{0, std::nullopt}});
    merge_warnings(s.warnings, "r", r[0].warnings);
    s.r1_at[1] = truncate_vec(r[0].values, delta, s.truncated);
    s.r1_at[0] = truncate_vec(r[1].values, delta, s.truncated);
    track_range(s.r1_at[1], s.min_prop, s.max_prop);
    track_range(s.r1_at[0], s.min_prop, s.max_prop);
  }
  {
    auto mu = crossfit_regression_multi(
        d, plan, specs.mu, TargetSelector::y(), DesignSpec{true, true, true, true},
        {PredictOverrides{1, 1}, PredictOverrides{1, 0}, PredictOverrides{0, 1},
         PredictOverrides{0, 0}});
    merge_warnings(s.warnings, "mu", mu[0].warnings);
    s.mu_models = mu[0].fold_models;
    auto maybe_trunc = [&](Eigen::VectorXd v) {
      return y_binary ? truncate_vec(v, delta, s.truncated) : v;
    };
    s.mu_az[1][1] = maybe_trunc(mu[0].values);
    s.mu_az[1][0] = maybe_trunc(mu[1].values);
    s.mu_az[0][1] = maybe_trunc(mu[2].values);
    s.mu_az[0][0] = maybe_trunc(mu[3].values);
  }
  return s;
}

// rho models trained per fold on in-sample pseudo-outcomes mu(a, M, z, W)
struct RhoFit {
  int a = 0, z = 0;
  std::vector<FittedModel> models;
  std::vector<std::pair<double, double>> pseudo_range;  // per fold
  std::vector<std::string> warnings;
  bool clamp = false;
};

RhoFit train_rho(const Dataset& d, const FoldPlan& plan,
                 const std::vector<FittedModel>& mu_models,
                 const LearnerSpec& spec, int a, int z,
                 std::optional<std::pair<double, double>> pseudo_clamp) {
  RhoFit rf;
  rf.a = a;
  rf.z = z;
  rf.clamp = pseudo_clamp.has_value();
  if (static_cast<int>(mu_models.size()) != plan.J)
    throw EstimationError("fit_rho: mu fold models do not match plan");

  std::vector<std::string> mu_names;
  const Eigen::MatrixXd Xmu =
      build_design(d, DesignSpec{true, true, true, true}, PredictOverrides{a, z},
                   &mu_names);
  std::vector<std::string> rho_names;
  const Eigen::MatrixXd Xrho = build_design(
      d, DesignSpec{true, true, false, true}, PredictOverrides{}, &rho_names);

  const auto train_idx = plan.training_rows();
  for (int j = 0; j < plan.J; ++j) {
    const auto& rows = train_idx[static_cast<std::size_t>(j)];
    Eigen::MatrixXd Xm(static_cast<Eigen::Index>(rows.size()), Xmu.cols());
    Eigen::MatrixXd Xr(static_cast<Eigen::Index>(rows.size()), Xrho.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Xm.row(static_cast<Eigen::Index>(r)) = Xmu.row(rows[r]);
      Xr.row(static_cast<Eigen::Index>(r)) = Xrho.row(rows[r]);
    }
    Eigen::VectorXd pseudo =
        predict(mu_models[static_cast<std::size_t>(j)], Xm, mu_names);
    if (pseudo_clamp) {
      pseudo = pseudo.cwiseMax(pseudo_clamp->first).cwiseMin(pseudo_clamp->second);
    }
    FittedModel m = fit(spec, Xr, rho_names, pseudo);
    if (!m.warning.empty())
      rf.warnings.push_back("fold " + std::to_string(j + 1) + ": " + m.warning);
    rf.pseudo_range.emplace_back(pseudo.minCoeff(), pseudo.maxCoeff());
    rf.models.push_back(std::move(m));
  }
  return rf;
}

Eigen::VectorXd predict_rho(const Dataset& d, const FoldPlan& plan,
                            const RhoFit& rf, int a_prime, int z_prime) {
  std::vector<std::string> rho_names;
  const Eigen::MatrixXd Xp =
      build_design(d, DesignSpec{true, true, false, true},
                   PredictOverrides{a_prime, z_prime}, &rho_names);
  Eigen::VectorXd out(static_cast<Eigen::Index>(d.size()));
  for (int j = 0; j < plan.J; ++j) {
    std::vector<int> rows;
    for (int i = 0; i < plan.n; ++i)
      if (plan.assignment[static_cast<std::size_t>(i)] == j) rows.push_back(i);
    Eigen::MatrixXd Xv(static_cast<Eigen::Index>(rows.size()), Xp.cols());
    for (std::size_t r = 0; r < rows.size(); ++r)
      Xv.row(static_cast<Eigen::Index>(r)) = Xp.row(rows[r]);
    Eigen::VectorXd pv = predict(rf.models[static_cast<std::size_t>(j)], Xv, rho_names);
    if (rf.clamp) {
      const auto [lo, hi] = rf.pseudo_range[static_cast<std::size_t>(j)];
      pv = pv.cwiseMax(lo).cwiseMin(hi);
    }
    for (std::size_t r = 0; r < rows.size(); ++r) out[rows[r]] = pv[static_cast<Eigen::Index>(r)];
  }
  return out;
}

NuisanceFits assemble_pair(const Dataset& d, const FoldPlan& plan,
                           const SharedNuisances& s, const NuisanceSpecs& specs,
                           const EstimandSpec& est, double delta, bool y_binary,
                           std::map<std::pair<int, int>, RhoFit>& rho_cache) {
  const int n = static_cast<int>(d.size());
  const int a = est.a, ap = est.a_prime;
  NuisanceFits f;
  f.est = est;
  f.warnings = s.warnings;
  f.truncated_count = s.truncated;
  f.min_propensity = s.min_prop;
  f.max_propensity = s.max_prop;

  auto flip = [](const Eigen::VectorXd& p1) {
    return (1.0 - p1.array()).matrix();
  };
  f.g_a = (a == 1) ? s.g1 : flip(s.g1);
  f.g_ap = (ap == 1) ? s.g1 : flip(s.g1);
  f.q1_a = s.q1_at[a];
  f.q1_ap = s.q1_at[ap];
  f.e_a_z1 = (a == 1) ? s.e1_z[1] : flip(s.e1_z[1]);
  f.e_ap_z1 = (ap == 1) ? s.e1_z[1] : flip(s.e1_z[1]);
  f.e_a_z0 = (a == 1) ? s.e1_z[0] : flip(s.e1_z[0]);
  f.e_ap_z0 = (ap == 1) ? s.e1_z[0] : flip(s.e1_z[0]);
  f.r1_ap = s.r1_at[ap];
  f.mu_a_z1 = s.mu_az[a][1];
  f.mu_a_z0 = s.mu_az[a][0];

  f.q1_obs.resize(n);
  f.mu_obs.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& r = d.records[static_cast<std::size_t>(i)];
    f.q1_obs[i] = s.q1_at[r.a][i];
    f.mu_obs[i] = s.mu_az[r.a][r.z][i];
  }

  if (a != ap) {
    for (int i = 0; i < n; ++i)
      if (f.q1_a[i] - f.q1_ap[i] < 0.0) ++f.negative_dq_count;
  }

  const std::optional<std::pair<double, double>> clamp =
      y_binary ? std::optional<std::pair<double, double>>({delta, 1.0 - delta})
               : std::nullopt;
  auto rho_models = [&](int ra, int rz) -> RhoFit& {
    auto key = std::make_pair(ra, rz);
    auto it = rho_cache.find(key);
    if (it == rho_cache.end()) {
      it = rho_cache
               .emplace(key, train_rho(d, plan, s.mu_models, specs.rho, ra, rz, clamp))
               .first;
      merge_warnings(f.warnings, "rho", it->second.warnings);
    }
    return it->second;
  };
  f.rho_11 = predict_rho(d, plan, rho_models(a, 1), ap, 1);
  f.rho_00 = predict_rho(d, plan, rho_models(a, 0), ap, 0);
  if (a != ap) {
    f.rho_10 = predict_rho(d, plan, rho_models(a, 1), ap, 0);
  } else {
    // every (1,0) weight carries an exactly-zero factor when a = a'
    f.rho_10 = Eigen::VectorXd::Zero(n);
  }
  return f;
}

double sample_sd(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n < 2) return 0.0;
  const double mean = v.mean();
  const double ss = (v.array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(n - 1));
}

ContrastEstimate contrast_from(const Eigen::VectorXd& ic) {
  ContrastEstimate c;
  const double n = static_cast<double>(ic.size());
  c.est = ic.mean();
  c.se = sample_sd(ic) / std::sqrt(n);
  c.ci_low = c.est - kZ95 * c.se;
  c.ci_high = c.est + kZ95 * c.se;
  return c;
}

std::string pair_key(int a, int ap) {
  return std::to_string(a) + "," + std::to_string(ap);
}

}  // namespace

NuisanceSpecs NuisanceSpecs::default_stack(YKind y_kind, std::uint64_t cv_seed) {
  NuisanceSpecs s;
  s.g = LearnerSpec::default_stack(Link::logit, cv_seed);
  s.q = LearnerSpec::default_stack(Link::logit, cv_seed);
  s.e = LearnerSpec::default_stack(Link::logit, cv_seed);
  s.r = LearnerSpec::default_stack(Link::logit, cv_seed);
  s.mu = LearnerSpec::default_stack(
      y_kind == YKind::binary ? Link::logit : Link::identity, cv_seed);
  s.rho = LearnerSpec::default_stack(Link::identity, cv_seed);
  return s;
}

NuisanceSpecs NuisanceSpecs::all_intercept(YKind y_kind) {
  NuisanceSpecs s;
  s.g = LearnerSpec::intercept_only(Link::logit);
  s.q = LearnerSpec::intercept_only(Link::logit);
  s.e = LearnerSpec::intercept_only(Link::logit);
  s.r = LearnerSpec::intercept_only(Link::logit);
  s.mu = LearnerSpec::intercept_only(
      y_kind == YKind::binary ? Link::logit : Link::identity);
  s.rho = LearnerSpec::intercept_only(Link::identity);
  return s;
}

EifNuisanceRow NuisanceFits::row(int i) const {
  EifNuisanceRow r;
  r.g_a = g_a[i];
  r.g_ap = g_ap[i];
  r.q1_a = q1_a[i];
  r.q1_ap = q1_ap[i];
  r.q1_obs = q1_obs[i];
  r.e_a_z1 = e_a_z1[i];
  r.e_ap_z1 = e_ap_z1[i];
  r.e_a_z0 = e_a_z0[i];
  r.e_ap_z0 = e_ap_z0[i];
  r.r1_ap = r1_ap[i];
  r.mu_obs = mu_obs[i];
  r.mu_a_z1 = mu_a_z1[i];
  r.mu_a_z0 = mu_a_z0[i];
  r.rho_11 = rho_11[i];
  r.rho_10 = rho_10[i];
  r.rho_00 = rho_00[i];
  return r;
}

NuisanceFits fit_nuisances(const Dataset& d, const FoldPlan& plan,
                           const NuisanceSpecs& specs, const EstimandSpec& est,
                           double delta, std::optional<double> randomized_a) {
  if (!(delta > 0.0 && delta < 0.5))
    throw ConfigError("truncation delta must be inside (0, 0.5)");
  const bool y_binary = d.y_kind == YKind::binary;
  SharedNuisances s = fit_shared(d, plan, specs, delta, randomized_a, y_binary);
  std::map<std::pair<int, int>, RhoFit> rho_cache;
  return assemble_pair(d, plan, s, specs, est, delta, y_binary, rho_cache);
}

CrossFitPredictions fit_rho(const Dataset& d, const FoldPlan& plan,
                            const CrossFitPredictions& mu_pred,
                            const LearnerSpec& spec, int a, int z, int a_prime,
                            int z_prime,
                            std::optional<std::pair<double, double>> pseudo_clamp) {
  RhoFit rf = train_rho(d, plan, mu_pred.fold_models, spec, a, z, pseudo_clamp);
  CrossFitPredictions out;
  out.values = predict_rho(d, plan, rf, a_prime, z_prime);
  out.producer = "rho pseudo mu(a=" + std::to_string(a) + ",z=" +
                 std::to_string(z) + ") at A=" + std::to_string(a_prime) +
                 ",Z=" + std::to_string(z_prime);
  out.fold_models = rf.models;
  out.warnings = rf.warnings;
  return out;
}

EifEvaluation evaluate_eif(const Dataset& d, const NuisanceFits& fits,
                           HyVariant variant, bool clip_negative_dq) {
  const int n = static_cast<int>(d.size());
  EifEvaluation ev;
  ev.weights.reserve(static_cast<std::size_t>(n));
  ev.d.reserve(static_cast<std::size_t>(n));
  ev.total.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& rec = d.records[static_cast<std::size_t>(i)];
    const EifNuisanceRow row = fits.row(i);
    const HWeights h =
        eif_weights(rec.a, rec.z, row, fits.est, variant, clip_negative_dq);
    const EifContribution c = eif_contribution(rec.y, rec.z, row, h);
    ev.total[i] = c.total();
    ev.weights.push_back(h);
    ev.d.push_back(c);
  }
  return ev;
}

EffectEstimates estimate(const Dataset& d, const EstimatorConfig& config) {
  d.validate();
  if (d.records.empty()) throw DataError("estimate: empty dataset");
  if (!(config.delta > 0.0 && config.delta < 0.5))
    throw ConfigError("truncation delta must be inside (0, 0.5)");
  const int n = static_cast<int>(d.size());
  const int a = config.estimand.a, ap = config.estimand.a_prime;
  if ((a != 0 && a != 1) || (ap != 0 && ap != 1))
    throw ConfigError("estimand (a, a') must be binary");

  EffectEstimates out;
  out.n = static_cast<std::size_t>(n);
  out.estimand = config.estimand;
  out.folds = config.folds;
  out.delta = config.delta;
  out.seed = config.seed;
  out.hy_variant = to_string(config.hy_variant);

  // advisory empirical diagnostics
  {
    DiagnosticsReport rep = diagnose(d);
    if (rep.monotonicity_flag)
      out.warnings.push_back(
          "diagnostics: empirical P(Z=1|A=1) < P(Z=1|A=0); monotonicity "
          "implausible on this sample");
  }

  FoldPlan plan;
  if (config.stratify_folds) {
    std::vector<int> cell(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto& r = d.records[static_cast<std::size_t>(i)];
      cell[static_cast<std::size_t>(i)] = 2 * r.a + r.z;
    }
    plan = make_folds_stratified(cell, config.folds, config.seed);
  } else {
    plan = make_folds(n, config.folds, config.seed);
  }

  // every learner seed flows from config.seed
  NuisanceSpecs specs = config.specs;
  specs.g.cv_seed = derive_seed(config.seed, 1);
  specs.q.cv_seed = derive_seed(config.seed, 2);
  specs.e.cv_seed = derive_seed(config.seed, 3);
  specs.r.cv_seed = derive_seed(config.seed, 4);
  specs.mu.cv_seed = derive_seed(config.seed, 5);
  specs.rho.cv_seed = derive_seed(config.seed, 6);

  const bool y_binary = d.y_kind == YKind::binary;
  SharedNuisances shared;
  try {
    shared = fit_shared(d, plan, specs, config.delta, config.randomized_a, y_binary);
  } catch (const EstimationError&) {
    throw;
  } catch (const std::exception& e) {
    throw EstimationError(std::string("nuisance fitting failed: ") + e.what());
  }

  std::map<std::pair<int, int>, RhoFit> rho_cache;
  const std::vector<std::pair<int, int>> pairs = {{a, a}, {a, ap}, {ap, ap}};
  std::map<std::string, Eigen::VectorXd> totals;
  std::set<std::string> seen_warnings;
  std::size_t truncated = 0, negative_dq = 0;
  double prop_lo = 1.0, prop_hi = 0.0;

  for (const auto& [pa, pap] : pairs) {
    const std::string key = pair_key(pa, pap);
    if (totals.count(key)) continue;
    NuisanceFits fits = assemble_pair(d, plan, shared, specs, {pa, pap},
                                      config.delta, y_binary, rho_cache);
    truncated = fits.truncated_count;
    prop_lo = std::min(prop_lo, fits.min_propensity);
    prop_hi = std::max(prop_hi, fits.max_propensity);
    if (pa != pap) negative_dq = fits.negative_dq_count;
    for (const auto& w : fits.warnings) seen_warnings.insert(w);
    EifEvaluation ev =
        evaluate_eif(d, fits, config.hy_variant, config.clip_negative_dq);
    ThetaEstimate t;
    t.est = ev.total.mean();
    t.se = sample_sd(ev.total) / std::sqrt(static_cast<double>(n));
    out.theta[key] = t;
    totals[key] = std::move(ev.total);
  }

  const Eigen::VectorXd& d_aa = totals[pair_key(a, a)];
  const Eigen::VectorXd& d_aap = totals[pair_key(a, ap)];
  const Eigen::VectorXd& d_apap = totals[pair_key(ap, ap)];
  const Eigen::VectorXd nde_ic = d_aap - d_apap;
  const Eigen::VectorXd nie_ic = d_aa - d_aap;
  const Eigen::VectorXd ate_ic = nde_ic + nie_ic;
  out.nde = contrast_from(nde_ic);
  out.nie = contrast_from(nie_ic);
  out.ate = contrast_from(ate_ic);
  out.ate.est = out.nde.est + out.nie.est;  // decomposition identity, exact

  if (truncated > 0) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "truncated %zu probability values into [%g, %g]; "
                  "post-truncation propensity range [%.6f, %.6f]",
                  truncated, config.delta, 1.0 - config.delta, prop_lo, prop_hi);
    out.warnings.push_back(buf);
  }
  if (negative_dq > 0)
    out.warnings.push_back(
        "fitted q(1|a,W) - q(1|a',W) negative for " +
        std::to_string(negative_dq) + " records" +
        (config.clip_negative_dq ? " (clipped at 0)" : " (not clipped)"));
  for (const auto& w : seen_warnings) out.warnings.push_back(w);
  return out;
}

std::string EffectEstimates::to_json(int indent) const {
  json j;
  j["n"] = n;
  j["estimand"] = {{"a", estimand.a}, {"a_prime", estimand.a_prime}};
  json th = json::object();
  for (const auto& [k, v] : theta) th[k] = {{"est", v.est}, {"se", v.se}};
  j["theta"] = th;
  auto contrast = [](const ContrastEstimate& c) {
    return json{{"est", c.est}, {"se", c.se}, {"ci", {c.ci_low, c.ci_high}}};
  };
  j["nde"] = contrast(nde);
  j["nie"] = contrast(nie);
  j["ate"] = contrast(ate);
  j["warnings"] = warnings;
  j["config"] = {{"folds", folds},
                 {"delta", delta},
                 {"seed", seed},
                 {"hy_variant", hy_variant}};
  return j.dump(indent);
}

}  // namespace natmed
