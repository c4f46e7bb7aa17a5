#include "natmed/crossfit.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "natmed/rng.hpp"

namespace natmed {

std::vector<std::vector<int>> FoldPlan::validation_rows() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(J));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])].push_back(i);
  return out;
}

std::vector<std::vector<int>> FoldPlan::training_rows() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(J));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < J; ++j)
      if (assignment[static_cast<std::size_t>(i)] != j)
        out[static_cast<std::size_t>(j)].push_back(i);
  return out;
}

FoldPlan make_folds(int n, int J, std::uint64_t seed) {
  if (J < 2) throw ConfigError("make_folds: J must be >= 2");
  if (n < 2 * J)
    throw ConfigError("make_folds: n=" + std::to_string(n) +
                      " too small for J=" + std::to_string(J) +
                      " folds (need n >= 2J)");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, 0x666f6c6473ULL));
  rng.shuffle(perm);
  FoldPlan plan;
  plan.n = n;
  plan.J = J;
  plan.seed = seed;
  plan.assignment.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    plan.assignment[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i % J;
  return plan;
}

FoldPlan make_folds_stratified(const std::vector<int>& cell, int J,
                               std::uint64_t seed) {
  const int n = static_cast<int>(cell.size());
  if (J < 2) throw ConfigError("make_folds: J must be >= 2");
  if (n < 2 * J)
    throw ConfigError("make_folds: n too small for J folds (need n >= 2J)");
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[cell[static_cast<std::size_t>(i)]].push_back(i);
  Rng rng(derive_seed(seed, 0x737472617466ULL));
  FoldPlan plan;
  plan.n = n;
  plan.J = J;
  plan.seed = seed;
  plan.assignment.assign(static_cast<std::size_t>(n), 0);
  int counter = 0;  // continues across cells so overall sizes stay within 1
  for (auto& [key, rows] : groups) {
    rng.shuffle(rows);
    for (int r : rows) plan.assignment[static_cast<std::size_t>(r)] = (counter++) % J;
  }
  return plan;
}

std::string PredictOverrides::describe() const {
  std::string s;
  if (a) s += "A=" + std::to_string(*a);
  if (z) s += (s.empty() ? "" : ",") + std::string("Z=") + std::to_string(*z);
  return s.empty() ? "observed" : s;
}

Eigen::MatrixXd build_design(const Dataset& d, const DesignSpec& spec,
                             const PredictOverrides& at,
                             std::vector<std::string>* names_out) {
  const Eigen::Index n = static_cast<Eigen::Index>(d.size());
  std::vector<std::string> names;
  if (spec.use_a) names.push_back("A");
  if (spec.use_z) names.push_back("Z");
  if (spec.use_m) names.insert(names.end(), d.m_names.begin(), d.m_names.end());
  if (spec.use_w) names.insert(names.end(), d.w_names.begin(), d.w_names.end());
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(names.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = d.records[static_cast<std::size_t>(i)];
    Eigen::Index c = 0;
    if (spec.use_a) X(i, c++) = at.a ? double(*at.a) : double(r.a);
    if (spec.use_z) X(i, c++) = at.z ? double(*at.z) : double(r.z);
    if (spec.use_m)
      for (double v : r.m) X(i, c++) = v;
    if (spec.use_w)
      for (double v : r.w) X(i, c++) = v;
  }
  if (names_out) *names_out = std::move(names);
  return X;
}

Eigen::VectorXd target_vector(const Dataset& d, const TargetSelector& target) {
  const Eigen::Index n = static_cast<Eigen::Index>(d.size());
  Eigen::VectorXd y(n);
  switch (target.kind) {
    case TargetKind::A:
      for (Eigen::Index i = 0; i < n; ++i) y[i] = d.records[static_cast<std::size_t>(i)].a;
      break;
    case TargetKind::Z:
      for (Eigen::Index i = 0; i < n; ++i) y[i] = d.records[static_cast<std::size_t>(i)].z;
      break;
    case TargetKind::Y:
      for (Eigen::Index i = 0; i < n; ++i) y[i] = d.records[static_cast<std::size_t>(i)].y;
      break;
    case TargetKind::Custom:
      if (!target.custom || target.custom->size() != n)
        throw EstimationError("crossfit: custom target missing or wrong length");
      y = *target.custom;
      break;
  }
  return y;
}

std::vector<CrossFitPredictions> crossfit_regression_multi(
    const Dataset& d, const FoldPlan& plan, const LearnerSpec& spec,
    const TargetSelector& target, const DesignSpec& features,
    const std::vector<PredictOverrides>& at_list,
    const std::vector<char>* train_subset) {
  const int n = static_cast<int>(d.size());
  if (plan.n != n) throw EstimationError("crossfit: fold plan size mismatch");
  if (train_subset && static_cast<int>(train_subset->size()) != n)
    throw EstimationError("crossfit: train_subset length mismatch");

  std::vector<std::string> names;
  const Eigen::MatrixXd X = build_design(d, features, PredictOverrides{}, &names);
  const Eigen::VectorXd y = target_vector(d, target);

  // one trained model per fold; predictions filled per override set
  std::vector<FittedModel> fold_models(static_cast<std::size_t>(plan.J));
  std::vector<std::string> warnings;
  const auto train_idx = plan.training_rows();

  for (int j = 0; j < plan.J; ++j) {
    std::vector<int> rows;
    for (int i : train_idx[static_cast<std::size_t>(j)])
      if (!train_subset || (*train_subset)[static_cast<std::size_t>(i)]) rows.push_back(i);

    LearnerSpec used = spec;
    if (rows.empty()) {
      rows = train_idx[static_cast<std::size_t>(j)];
      used = LearnerSpec::intercept_only(spec.link);
      warnings.push_back("fold " + std::to_string(j + 1) +
                         ": empty restricted training set; intercept-only fallback");
    }
    Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(rows.size()), X.cols());
    Eigen::VectorXd ytr(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Xtr.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
      ytr[static_cast<Eigen::Index>(r)] = y[rows[r]];
    }
    FittedModel m = fit(used, Xtr, names, ytr);
    if (!m.warning.empty())
      warnings.push_back("fold " + std::to_string(j + 1) + ": " + m.warning);
    fold_models[static_cast<std::size_t>(j)] = std::move(m);
  }

  std::vector<CrossFitPredictions> out;
  out.reserve(at_list.size());
  for (const auto& at : at_list) {
    std::vector<std::string> pred_names;
    const Eigen::MatrixXd Xp = build_design(d, features, at, &pred_names);
    CrossFitPredictions cp;
    cp.values.resize(n);
    cp.fold_models = fold_models;
    cp.warnings = warnings;
    cp.producer = spec.describe() + " target=" +
                  (target.kind == TargetKind::A   ? "A"
                   : target.kind == TargetKind::Z ? "Z"
                   : target.kind == TargetKind::Y ? "Y"
                                                  : "custom") +
                  " at=" + at.describe();
    for (int j = 0; j < plan.J; ++j) {
      // predict fold-j validation rows with the fold-j model
      std::vector<int> rows;
      for (int i = 0; i < n; ++i)
        if (plan.assignment[static_cast<std::size_t>(i)] == j) rows.push_back(i);
      Eigen::MatrixXd Xv(static_cast<Eigen::Index>(rows.size()), Xp.cols());
      for (std::size_t r = 0; r < rows.size(); ++r)
        Xv.row(static_cast<Eigen::Index>(r)) = Xp.row(rows[r]);
      Eigen::VectorXd pv =
          predict(fold_models[static_cast<std::size_t>(j)], Xv, pred_names);
      for (std::size_t r = 0; r < rows.size(); ++r) cp.values[rows[r]] = pv[static_cast<Eigen::Index>(r)];
    }
    out.push_back(std::move(cp));
  }
  return out;
}

CrossFitPredictions crossfit_regression(const Dataset& d, const FoldPlan& plan,
                                        const LearnerSpec& spec,
                                        const TargetSelector& target,
                                        const DesignSpec& features,
                                        const PredictOverrides& at,
                                        const std::vector<char>* train_subset) {
  return crossfit_regression_multi(d, plan, spec, target, features, {at},
                                   train_subset)[0];
}

}  // namespace natmed
