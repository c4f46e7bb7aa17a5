#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "natmed/errors.hpp"

namespace natmed {

enum class Link { logit, identity };
enum class LearnerKind { intercept_only, glm, cv_select };

// Self-contained regression learner description. A cv_select spec holds
// candidate specs and picks the one with the lowest held-out loss
// (log-loss for logit, MSE for identity), then refits on all data.
struct LearnerSpec {
  LearnerKind kind = LearnerKind::glm;
  Link link = Link::logit;
  bool pairwise = false;  // add all pairwise products of base features
  std::vector<LearnerSpec> candidates;
  int cv_folds = 10;
  std::uint64_t cv_seed = 1;
  double l2_penalty = 0.0;
  int max_iter = 100;
  double tol = 1e-8;

  static LearnerSpec intercept_only(Link link);
  static LearnerSpec glm_main(Link link);
  static LearnerSpec glm_pairwise(Link link);
  // cv_select over {intercept_only, glm main effects, glm pairwise}
  static LearnerSpec default_stack(Link link, std::uint64_t cv_seed = 1);

  std::string describe() const;
};

struct FittedModel {
  LearnerSpec spec;                        // resolved (cv winner for cv_select)
  Eigen::VectorXd coefficients;            // intercept first, then expanded features
  std::vector<std::string> feature_names;  // base (pre-expansion) names
  bool converged = true;
  std::string warning;  // nonempty on non-convergence / constant-target clamp

  std::string to_json() const;
};

// Weighted fit. rows(X) == len(y) >= 1; logit link needs y in [0,1].
// Non-convergence returns the current iterate with converged=false.
FittedModel fit(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                const std::vector<std::string>& feature_names,
                const Eigen::VectorXd& y,
                const Eigen::VectorXd* sample_weights = nullptr);

// Columns must match model.feature_names in order; mismatches name the column.
Eigen::VectorXd predict(const FittedModel& model, const Eigen::MatrixXd& X,
                        const std::vector<std::string>& feature_names);

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit_fn(double p) { return std::log(p / (1.0 - p)); }

}  // namespace natmed
