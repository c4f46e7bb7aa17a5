#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "natmed/crossfit.hpp"
#include "natmed/dataset.hpp"
#include "natmed/eif.hpp"

namespace natmed {

// Learner choice per nuisance regression. Links are fixed by the target:
// g, q, e, r are logistic; mu follows the outcome kind; rho is identity.
struct NuisanceSpecs {
  LearnerSpec g, q, e, r, mu, rho;

  static NuisanceSpecs default_stack(YKind y_kind, std::uint64_t cv_seed = 1);
  // every slot intercept-only (used to misspecify deliberately)
  static NuisanceSpecs all_intercept(YKind y_kind);
};

struct EstimatorConfig {
  EstimandSpec estimand{1, 0};
  int folds = 2;
  double delta = 0.01;  // probability truncation, in (0, 0.5)
  std::uint64_t seed = 1;
  NuisanceSpecs specs = NuisanceSpecs::default_stack(YKind::binary);
  bool stratify_folds = false;          // stratify fold assignment by (A,Z)
  std::optional<double> randomized_a;   // known P(A=1); skips the g regression
  bool clip_negative_dq = false;
  HyVariant hy_variant = HyVariant::derived;
};

// Per-observation out-of-fold nuisance slots for one (a,a') pair, with
// truncation already applied.
struct NuisanceFits {
  EstimandSpec est;
  Eigen::VectorXd g_a, g_ap;
  Eigen::VectorXd q1_a, q1_ap, q1_obs;
  Eigen::VectorXd e_a_z1, e_ap_z1, e_a_z0, e_ap_z0;
  Eigen::VectorXd r1_ap;
  Eigen::VectorXd mu_obs, mu_a_z1, mu_a_z0;
  Eigen::VectorXd rho_11, rho_10, rho_00;
  std::vector<std::string> warnings;
  std::size_t truncated_count = 0;
  std::size_t negative_dq_count = 0;
  double min_propensity = 1.0, max_propensity = 0.0;

  EifNuisanceRow row(int i) const;
};

NuisanceFits fit_nuisances(const Dataset& d, const FoldPlan& plan,
                           const NuisanceSpecs& specs, const EstimandSpec& est,
                           double delta,
                           std::optional<double> randomized_a = std::nullopt);

// Pseudo-outcome regression: the fold-j model is trained on fold-j training
// rows only, with targets mu(a, M_i, z, W_i) predicted in-sample by the
// fold-j mu model; predictions are generated at (A=a', Z=z'). pseudo_clamp,
// when set, truncates pseudo-outcomes and keeps predictions inside the
// training pseudo-outcome range.
CrossFitPredictions fit_rho(
    const Dataset& d, const FoldPlan& plan, const CrossFitPredictions& mu_pred,
    const LearnerSpec& spec, int a, int z, int a_prime, int z_prime,
    std::optional<std::pair<double, double>> pseudo_clamp = std::nullopt);

// Per-observation weights and contributions for one (a,a') pair.
struct EifEvaluation {
  std::vector<HWeights> weights;
  std::vector<EifContribution> d;
  Eigen::VectorXd total;
};

EifEvaluation evaluate_eif(const Dataset& d, const NuisanceFits& fits,
                           HyVariant variant, bool clip_negative_dq = false);

struct ThetaEstimate {
  double est = 0.0, se = 0.0;
};
struct ContrastEstimate {
  double est = 0.0, se = 0.0, ci_low = 0.0, ci_high = 0.0;
};

struct EffectEstimates {
  std::size_t n = 0;
  EstimandSpec estimand;
  std::map<std::string, ThetaEstimate> theta;  // keys "a,a'" e.g. "1,0"
  ContrastEstimate nde, nie, ate;
  std::vector<std::string> warnings;
  // config echo
  int folds = 2;
  double delta = 0.01;
  std::uint64_t seed = 1;
  std::string hy_variant;

  std::string to_json(int indent = 2) const;
};

// One-step cross-fitted estimates of theta over the pairs
// {(a,a), (a,a'), (a',a')} plus the NDE/NIE/ATE contrasts with
// influence-function standard errors and 95% CIs. ATE = NDE + NIE exactly.
EffectEstimates estimate(const Dataset& d, const EstimatorConfig& config);

}  // namespace natmed
