#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "natmed/dataset.hpp"
#include "natmed/learners.hpp"

namespace natmed {

// Random balanced partition of {0..n-1} into J validation folds.
struct FoldPlan {
  int n = 0;
  int J = 2;
  std::vector<int> assignment;  // fold index j(i) in {0..J-1}
  std::uint64_t seed = 0;

  std::vector<std::vector<int>> validation_rows() const;
  std::vector<std::vector<int>> training_rows() const;
};

// Requires n >= 2J so every training set can hold a fit. Fold sizes differ
// by at most one; reproducible from seed.
FoldPlan make_folds(int n, int J, std::uint64_t seed);

// Same contract, shuffling within cells (e.g. the four (A,Z) cells) and
// dealing cyclically so cells stay balanced across folds.
FoldPlan make_folds_stratified(const std::vector<int>& cell, int J,
                               std::uint64_t seed);

// Which dataset columns enter the design matrix; canonical column order is
// A, Z, M..., W....
struct DesignSpec {
  bool use_a = false;
  bool use_z = false;
  bool use_m = false;
  bool use_w = false;
};

enum class TargetKind { A, Z, Y, Custom };

struct TargetSelector {
  TargetKind kind = TargetKind::Y;
  const Eigen::VectorXd* custom = nullptr;
  static TargetSelector a() { return {TargetKind::A, nullptr}; }
  static TargetSelector z() { return {TargetKind::Z, nullptr}; }
  static TargetSelector y() { return {TargetKind::Y, nullptr}; }
};

// Values fixed at prediction time regardless of the record's own A/Z.
struct PredictOverrides {
  std::optional<int> a;
  std::optional<int> z;
  std::string describe() const;
};

struct CrossFitPredictions {
  Eigen::VectorXd values;  // values[i] produced by the model trained off-fold
  std::string producer;
  std::vector<FittedModel> fold_models;  // one per fold
  std::vector<std::string> warnings;
};

Eigen::MatrixXd build_design(const Dataset& d, const DesignSpec& spec,
                             const PredictOverrides& at,
                             std::vector<std::string>* names_out = nullptr);

Eigen::VectorXd target_vector(const Dataset& d, const TargetSelector& target);

// Out-of-fold prediction: for each i, the value comes from the model
// trained on the complement of i's fold (optionally restricted to
// train_subset rows). A fold whose restricted training set is empty falls
// back to intercept-only on the unrestricted fold, with a warning.
CrossFitPredictions crossfit_regression(
    const Dataset& d, const FoldPlan& plan, const LearnerSpec& spec,
    const TargetSelector& target, const DesignSpec& features,
    const PredictOverrides& at = {},
    const std::vector<char>* train_subset = nullptr);

// Same, sharing the J trained models across several override sets.
std::vector<CrossFitPredictions> crossfit_regression_multi(
    const Dataset& d, const FoldPlan& plan, const LearnerSpec& spec,
    const TargetSelector& target, const DesignSpec& features,
    const std::vector<PredictOverrides>& at_list,
    const std::vector<char>* train_subset = nullptr);

}  // namespace natmed
