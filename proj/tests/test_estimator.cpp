#include <doctest.h>

#include <cmath>
#include <set>

#include "natmed/estimator.hpp"
#include "natmed/oracle.hpp"
#include "natmed/rng.hpp"
#include "natmed/sim.hpp"

using namespace natmed;

namespace {

EifNuisanceRow symmetric_row() {
  EifNuisanceRow r;  // all propensity slots 0.5, e/r ratios 1
  r.g_a = r.g_ap = 0.5;
  r.q1_a = r.q1_ap = r.q1_obs = 0.5;
  r.e_a_z1 = r.e_ap_z1 = r.e_a_z0 = r.e_ap_z0 = 0.5;
  r.r1_ap = 0.5;
  r.mu_obs = 0.3;
  r.mu_a_z1 = 0.4;
  r.mu_a_z0 = 0.2;
  r.rho_11 = 0.35;
  r.rho_10 = 0.25;
  r.rho_00 = 0.15;
  return r;
}

}  // namespace

TEST_CASE("weights obey the indicator structure") {
  const EstimandSpec est{1, 0};
  EifNuisanceRow row = symmetric_row();
  SUBCASE("A matches neither a nor a' is impossible for binary A, but "
          "indicators gate every residual weight") {
    // a_obs = a': H_Y terms vanish, H_M terms live
    const HWeights h = eif_weights(0, 1, row, est);
    CHECK(h.y11 == 0.0);
    CHECK(h.y10 == 0.0);
    CHECK(h.y00 == 0.0);
    CHECK(h.m11 == doctest::Approx(2.0));  // 1/g_ap with Z=1
    CHECK(h.m10 == 0.0);                   // needs Z=0
  }
  SUBCASE("a = a' zeroes every (1,0) weight") {
    const EstimandSpec same{1, 1};
    for (int a_obs = 0; a_obs <= 1; ++a_obs)
      for (int z_obs = 0; z_obs <= 1; ++z_obs) {
        const HWeights h = eif_weights(a_obs, z_obs, row, same);
        CHECK(h.y10 == 0.0);
        CHECK(h.m10 == 0.0);
        CHECK(h.z10 == 0.0);
        CHECK(h.w10 == 0.0);
      }
  }
}

TEST_CASE("weights at symmetric slots match hand evaluation") {
  const EstimandSpec est{1, 0};
  const EifNuisanceRow row = symmetric_row();
  {
    // record with A=a'=0, Z=1: H_M,1,1 = 1/g_ap = 2
    const HWeights h = eif_weights(0, 1, row, est);
    CHECK(h.m11 == doctest::Approx(2.0).epsilon(1e-12));
  }
  {
    // record with A=a=1, Z=0: H_Y,0,0 = (1/0.5)*1*(0.5/0.5) = 2, both variants
    const HWeights hd = eif_weights(1, 0, row, est, HyVariant::derived);
    const HWeights hp = eif_weights(1, 0, row, est, HyVariant::as_printed);
    CHECK(hd.y00 == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(hp.y00 == doctest::Approx(2.0).epsilon(1e-12));
    // symmetric slots: dq = 0 so the (1,0) weights vanish
    CHECK(hd.y10 == 0.0);
    CHECK(hd.m10 == 0.0);
  }
}

TEST_CASE("perfect-fit residuals leave only the H_W terms") {
  const EstimandSpec est{1, 0};
  EifNuisanceRow row = symmetric_row();
  row.q1_a = 0.7;
  row.q1_ap = 0.4;  // nonzero dq so every component is in play
  for (int a_obs = 0; a_obs <= 1; ++a_obs)
    for (int z_obs = 0; z_obs <= 1; ++z_obs) {
      EifNuisanceRow r = row;
      r.q1_obs = static_cast<double>(z_obs);   // Z residual zero
      const double y_obs = 0.55;
      r.mu_obs = y_obs;                        // Y residual zero
      r.mu_a_z1 = r.rho_11;                    // M residual zero for (1,1)
      r.mu_a_z0 = r.rho_00;                    // ... and (0,0)
      r.rho_10 = r.rho_11;                     // ... and (1,0) shares mu_a_z1
      const HWeights h = eif_weights(a_obs, z_obs, r, est);
      const EifContribution d = eif_contribution(y_obs, z_obs, r, h);
      CHECK(d.d11 == doctest::Approx(h.w11).epsilon(1e-12));
      CHECK(d.d10 == doctest::Approx(h.w10).epsilon(1e-12));
      CHECK(d.d00 == doctest::Approx(h.w00).epsilon(1e-12));
    }
}

TEST_CASE("a single observation's theta equals its own contribution") {
  const EstimandSpec est{1, 0};
  const EifNuisanceRow row = symmetric_row();
  const HWeights h = eif_weights(1, 1, row, est);
  const EifContribution d = eif_contribution(1.0, 1, row, h);
  // sample average over one observation is that observation
  const double theta_hat = d.total();
  CHECK(theta_hat == d.d11 + d.d10 + d.d00);
}

TEST_CASE("sign property: monotone fitted q gives nonnegative (1,0) weights") {
  const EstimandSpec est{1, 0};
  Rng rng(404);
  for (int trial = 0; trial < 500; ++trial) {
    EifNuisanceRow r;
    r.g_a = 0.05 + 0.9 * rng.uniform();
    r.g_ap = 1.0 - r.g_a;
    const double lo = 0.05 + 0.4 * rng.uniform();
    const double hi = lo + (0.95 - lo) * rng.uniform();
    r.q1_ap = lo;
    r.q1_a = hi;  // q1_a >= q1_ap
    r.q1_obs = 0.5;
    r.e_a_z1 = 0.05 + 0.9 * rng.uniform();
    r.e_ap_z1 = 1.0 - r.e_a_z1;
    r.e_a_z0 = 0.05 + 0.9 * rng.uniform();
    r.e_ap_z0 = 1.0 - r.e_a_z0;
    r.r1_ap = 0.05 + 0.9 * rng.uniform();
    const int a_obs = rng.bernoulli(0.5), z_obs = rng.bernoulli(0.5);
    const HWeights h = eif_weights(a_obs, z_obs, r, est);
    CHECK(h.y10 >= 0.0);
    CHECK(h.m10 >= 0.0);
  }
}

TEST_CASE("negative dq clipping zeroes the (1,0) weights") {
  const EstimandSpec est{1, 0};
  EifNuisanceRow r = symmetric_row();
  r.q1_a = 0.3;
  r.q1_ap = 0.6;  // anti-monotone fit
  const HWeights raw = eif_weights(1, 1, r, est, HyVariant::derived, false);
  CHECK(raw.y10 < 0.0);
  const HWeights clipped = eif_weights(1, 1, r, est, HyVariant::derived, true);
  CHECK(clipped.y10 == 0.0);
  CHECK(clipped.w10 == 0.0);
}

TEST_CASE("fit_nuisances on study data recovers known slot values") {
  const DgmSpec dgm = dgm_sim_study();
  const Dataset d = sample_dgm(dgm, 10000, 5);
  const FoldPlan plan = make_folds(10000, 2, 5);
  const NuisanceSpecs specs = NuisanceSpecs::default_stack(YKind::binary);
  const NuisanceFits f = fit_nuisances(d, plan, specs, {1, 0}, 0.01);

  // g is flat 0.5
  for (int i = 0; i < 200; ++i) {
    CHECK(f.g_a[i] == doctest::Approx(0.5).epsilon(0.08));
  }
  // q at a=1 for a record with W=(1,1,1): expit(1 - log 1.3) = 0.676479
  const TrueEta eta = true_nuisances(dgm);
  int checked = 0;
  for (int i = 0; i < 10000 && checked < 20; ++i) {
    const auto& r = d.records[static_cast<std::size_t>(i)];
    if (r.w == std::vector<double>{1.0, 1.0, 1.0}) {
      CHECK(f.q1_a[i] == doctest::Approx(0.676479).epsilon(0.06));
      ++checked;
    }
  }
  CHECK(checked == 20);
  // rho_11 at W=(0,0,0) against the exact two-term sum 0.843401
  checked = 0;
  double acc = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto& r = d.records[static_cast<std::size_t>(i)];
    if (r.w == std::vector<double>{0.0, 0.0, 0.0}) {
      acc += f.rho_11[i];
      ++checked;
    }
  }
  CHECK(checked > 100);
  CHECK(acc / checked ==
        doctest::Approx(eta.rho(1, 1, 1, 0, {0, 0, 0})).epsilon(0.05));
}

TEST_CASE("intercept-only mu slots equal the fold training mean") {
  const Dataset d = sample_dgm(dgm_sim_study(), 200, 8);
  const FoldPlan plan = make_folds(200, 2, 8);
  NuisanceSpecs specs = NuisanceSpecs::all_intercept(YKind::binary);
  const NuisanceFits f = fit_nuisances(d, plan, specs, {1, 0}, 0.01);
  const auto train = plan.training_rows();
  for (int j = 0; j < 2; ++j) {
    double mean = 0.0;
    for (int i : train[static_cast<std::size_t>(j)])
      mean += d.records[static_cast<std::size_t>(i)].y;
    mean /= static_cast<double>(train[static_cast<std::size_t>(j)].size());
    for (int i = 0; i < 200; ++i) {
      if (plan.assignment[static_cast<std::size_t>(i)] != j) continue;
      CHECK(f.mu_a_z1[i] == doctest::Approx(mean).epsilon(1e-9));
      CHECK(f.mu_a_z0[i] == doctest::Approx(mean).epsilon(1e-9));
    }
  }
}

TEST_CASE("fit_rho of a constant pseudo-outcome is that constant") {
  const Dataset d = sample_dgm(dgm_sim_study(), 100, 21);
  const FoldPlan plan = make_folds(100, 2, 21);
  // constant mu models: intercept-only fit on a constant target
  const double c = 0.37;
  const Eigen::VectorXd cv = Eigen::VectorXd::Constant(100, c);
  const auto mu_pred = crossfit_regression(
      d, plan, LearnerSpec::intercept_only(Link::identity),
      TargetSelector{TargetKind::Custom, &cv}, DesignSpec{true, true, true, true});
  SUBCASE("with range clamping the match is exact") {
    const auto rho = fit_rho(d, plan, mu_pred, LearnerSpec::glm_main(Link::identity),
                             1, 1, 0, 0, std::make_pair(0.01, 0.99));
    for (int i = 0; i < 100; ++i) CHECK(rho.values[i] == c);
  }
  SUBCASE("without clamping the regression still recovers it") {
    const auto rho = fit_rho(d, plan, mu_pred, LearnerSpec::glm_main(Link::identity),
                             1, 1, 0, 0, std::nullopt);
    for (int i = 0; i < 100; ++i)
      CHECK(rho.values[i] == doctest::Approx(c).epsilon(1e-6));
  }
}

TEST_CASE("fit_rho ignores overrides when M is independent of A, Z, W") {
  // mediator noise independent of everything: rho = E_M[mu] whatever the
  // override slot values are
  Rng rng(55);
  Dataset d;
  d.w_names = {"W1"};
  d.m_names = {"M"};
  for (int i = 0; i < 400; ++i) {
    ObservedRecord r;
    r.w = {double(rng.bernoulli(0.5))};
    r.a = rng.bernoulli(0.5);
    r.z = rng.bernoulli(0.5);
    r.m = {double(rng.bernoulli(0.5))};
    r.y = rng.bernoulli(0.5);
    d.records.push_back(std::move(r));
  }
  const FoldPlan plan = make_folds(400, 2, 55);
  // mu model: identity glm on (A,Z,M,W) fitted to M itself -> pseudo = M-mean-ish
  auto mu_pred = crossfit_regression(
      d, plan, LearnerSpec::glm_main(Link::identity), TargetSelector::y(),
      DesignSpec{true, true, true, true});
  const auto rho_a = fit_rho(d, plan, mu_pred, LearnerSpec::glm_main(Link::identity),
                             1, 1, 0, 0, std::nullopt);
  const auto rho_b = fit_rho(d, plan, mu_pred, LearnerSpec::glm_main(Link::identity),
                             1, 1, 1, 1, std::nullopt);
  double max_gap = 0.0;
  for (int i = 0; i < 400; ++i)
    max_gap = std::max(max_gap, std::abs(rho_a.values[i] - rho_b.values[i]));
  CHECK(max_gap < 0.12);  // sampling noise only; no systematic dependence
}

TEST_CASE("estimate on study data is close to the enumerated truths") {
  const DgmSpec dgm = dgm_sim_study();
  const double nde_truth = true_theta(dgm, {1, 0}).total() -
                           true_theta(dgm, {0, 0}).total();
  const double nie_truth = true_theta(dgm, {1, 1}).total() -
                           true_theta(dgm, {1, 0}).total();
  const Dataset d = sample_dgm(dgm, 10000, 11);
  EstimatorConfig cfg;
  cfg.seed = 11;
  const EffectEstimates e = estimate(d, cfg);
  // est sd ~ 0.010 (NDE) and 0.004 (NIE); 2.5 sd bands on a fixed seed
  CHECK(e.nde.est == doctest::Approx(nde_truth).epsilon(0.025 / nde_truth));
  CHECK(e.nie.est == doctest::Approx(nie_truth).epsilon(0.010 / nie_truth));
  CHECK(e.nde.se == doctest::Approx(std::sqrt(0.998460 / 10000)).epsilon(0.15));
  CHECK(e.nde.ci_low < e.nde.est);
  CHECK(e.nde.est < e.nde.ci_high);
  CHECK(e.theta.at("1,1").est - e.theta.at("0,0").est ==
        doctest::Approx(e.ate.est).epsilon(1e-9));
}

TEST_CASE("decomposition identity is exact") {
  const Dataset d = sample_dgm(dgm_sim_study(), 600, 2);
  EstimatorConfig cfg;
  cfg.seed = 2;
  cfg.specs = NuisanceSpecs::all_intercept(YKind::binary);  // fast
  const EffectEstimates e = estimate(d, cfg);
  CHECK(e.ate.est - (e.nde.est + e.nie.est) == 0.0);
}

TEST_CASE("randomized-A shortcut pins g at the known constant") {
  const Dataset d = sample_dgm(dgm_sim_study(), 500, 6);
  const FoldPlan plan = make_folds(500, 2, 6);
  const NuisanceFits f = fit_nuisances(
      d, plan, NuisanceSpecs::all_intercept(YKind::binary), {1, 0}, 0.01, 0.5);
  for (int i = 0; i < 500; ++i) {
    CHECK(f.g_a[i] == 0.5);
    CHECK(f.g_ap[i] == 0.5);
  }
}

TEST_CASE("estimate validates config and reports data errors") {
  const Dataset d = sample_dgm(dgm_sim_study(), 100, 3);
  EstimatorConfig cfg;
  SUBCASE("delta domain") {
    cfg.delta = 0.7;
    CHECK_THROWS_AS(estimate(d, cfg), ConfigError);
  }
  SUBCASE("fold feasibility") {
    cfg.folds = 60;
    CHECK_THROWS_AS(estimate(d, cfg), ConfigError);
  }
  SUBCASE("empty dataset") {
    Dataset empty;
    CHECK_THROWS_AS(estimate(empty, cfg), DataError);
  }
}

TEST_CASE("monotonicity warning surfaces in estimate output") {
  // force Z = 1-A so the diagnostic flags
  Dataset d = sample_dgm(dgm_sim_study(), 400, 9);
  for (auto& r : d.records) r.z = 1 - r.a;
  EstimatorConfig cfg;
  cfg.specs = NuisanceSpecs::all_intercept(YKind::binary);
  const EffectEstimates e = estimate(d, cfg);
  bool found = false;
  for (const auto& w : e.warnings)
    if (w.find("monotonicity") != std::string::npos) found = true;
  CHECK(found);
}

TEST_CASE("stratified folds option produces a valid estimate") {
  const Dataset d = sample_dgm(dgm_sim_study(), 400, 10);
  EstimatorConfig cfg;
  cfg.seed = 10;
  cfg.stratify_folds = true;
  cfg.specs = NuisanceSpecs::all_intercept(YKind::binary);
  const EffectEstimates e = estimate(d, cfg);
  CHECK(std::isfinite(e.nde.est));
  CHECK(std::isfinite(e.nie.se));
}
