#include "natmed/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "natmed/dataset.hpp"
#include "natmed/rng.hpp"

namespace natmed {

namespace {

constexpr double kMeanClamp = 1e-6;    // constant-target logit clamp
constexpr double kEtaClamp = 30.0;     // linear predictor clamp
constexpr double kLossClamp = 1e-12;   // log-loss probability clamp

// Pairwise expansion: [x1..xp] -> [x1..xp, x1x2, x1x3, ..., x_{p-1}x_p].
Eigen::MatrixXd expand_pairwise(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows(), p = X.cols();
  const Eigen::Index q = p + p * (p - 1) / 2;
  Eigen::MatrixXd out(n, q);
  out.leftCols(p) = X;
  Eigen::Index c = p;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i + 1; j < p; ++j)
      out.col(c++) = X.col(i).cwiseProduct(X.col(j));
  return out;
}

// Collapse duplicate (x-row, y) pairs into weighted rows. Exact for both
// likelihood and least-squares objectives; a large win on all-binary data.
struct Collapsed {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

Collapsed collapse_rows(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& w) {
  const Eigen::Index n = X.rows(), p = X.cols();
  struct Key {
    const double* data;
    Eigen::Index len;
    bool operator==(const Key& o) const {
      return len == o.len && std::equal(data, data + len, o.data);
    }
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::size_t h = 0x9e3779b97f4a7c15ULL;
      for (Eigen::Index i = 0; i < k.len; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &k.data[i], sizeof(bits));
        h ^= bits + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      }
      return h;
    }
  };
  // row-major buffer of (x..., y); +0.0 folds -0.0 into +0.0 so equal
  // keys hash equally
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> buf(n, p + 1);
  buf.leftCols(p) = (X.array() + 0.0).matrix();
  buf.col(p) = (y.array() + 0.0).matrix();

  std::unordered_map<Key, Eigen::Index, KeyHash> seen;
  seen.reserve(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> order;
  std::vector<double> weights;
  order.reserve(64);
  for (Eigen::Index i = 0; i < n; ++i) {
    Key k{buf.row(i).data(), p + 1};
    auto [it, inserted] = seen.emplace(k, static_cast<Eigen::Index>(order.size()));
    if (inserted) {
      order.push_back(i);
      weights.push_back(w[i]);
    } else {
      weights[static_cast<std::size_t>(it->second)] += w[i];
    }
  }
  Collapsed c;
  const Eigen::Index k = static_cast<Eigen::Index>(order.size());
  c.X.resize(k, p);
  c.y.resize(k);
  c.w.resize(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    c.X.row(r) = X.row(order[static_cast<std::size_t>(r)]);
    c.y[r] = y[order[static_cast<std::size_t>(r)]];
    c.w[r] = weights[static_cast<std::size_t>(r)];
  }
  return c;
}

bool worth_collapsing(const Eigen::MatrixXd& X) {
  // cheap screen: only distinct values per column matter; all-binary or
  // low-cardinality designs collapse well
  if (X.rows() < 64) return false;
  const Eigen::Index probe = std::min<Eigen::Index>(X.rows(), 256);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    std::vector<double> vals;
    for (Eigen::Index i = 0; i < probe; ++i) {
      double v = X(i, j);
      if (std::find(vals.begin(), vals.end(), v) == vals.end()) {
        vals.push_back(v);
        if (vals.size() > 8) return false;
      }
    }
  }
  return true;
}

double weighted_mean(const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const double sw = w.sum();
  if (sw <= 0.0) throw EstimationError("fit: nonpositive total weight");
  return y.dot(w) / sw;
}

// penalized negative log-likelihood (logit) at clamped eta
double logit_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, const Eigen::VectorXd& beta,
                       double l2) {
  Eigen::VectorXd eta = (X * beta.tail(X.cols()));
  eta.array() += beta[0];
  double nll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double e = std::clamp(eta[i], -kEtaClamp, kEtaClamp);
    // log(1+exp(e)) - y*e, numerically stable form
    const double lse = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    nll += w[i] * (lse - y[i] * e);
  }
  if (l2 > 0.0) nll += 0.5 * l2 * beta.tail(beta.size() - 1).squaredNorm();
  return nll;
}

// Damped IRLS (Newton with step-halving) for the logit link. X excludes
// the intercept column; beta = [intercept, slopes].
FittedModel fit_logit_glm(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                          const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::Index n = X.rows(), p = X.cols();
  FittedModel out;
  out.spec = spec;

  const double ybar = weighted_mean(y, w);
  if (ybar <= 0.0 || ybar >= 1.0) {
    // constant target: clamped intercept, zero slopes
    out.coefficients = Eigen::VectorXd::Zero(p + 1);
    out.coefficients[0] = logit_fn(std::clamp(ybar, kMeanClamp, 1.0 - kMeanClamp));
    out.warning = "constant target; intercept clamped";
    return out;
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  beta[0] = logit_fn(std::clamp(ybar, kMeanClamp, 1.0 - kMeanClamp));
  double obj = logit_objective(X, y, w, beta, spec.l2_penalty);

  Eigen::MatrixXd Xi(n, p + 1);  // design with intercept
  Xi.col(0).setOnes();
  Xi.rightCols(p) = X;

  bool converged = false;
  for (int iter = 0; iter < spec.max_iter; ++iter) {
    Eigen::VectorXd eta = Xi * beta;
    eta = eta.cwiseMax(-kEtaClamp).cwiseMin(kEtaClamp);
    Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
    Eigen::VectorXd irls_w = w.array() * mu.array() * (1.0 - mu.array());
    irls_w = irls_w.cwiseMax(1e-10);

    Eigen::VectorXd grad = Xi.transpose() * (w.cwiseProduct(y - mu));
    Eigen::MatrixXd hess = Xi.transpose() * irls_w.asDiagonal() * Xi;
    if (spec.l2_penalty > 0.0) {
      for (Eigen::Index j = 1; j <= p; ++j) {
        grad[j] -= spec.l2_penalty * beta[j];
        hess(j, j) += spec.l2_penalty;
      }
    }
    hess.diagonal().array() += 1e-10;  // guard against exact singularity
    Eigen::VectorXd step = hess.ldlt().solve(grad);

    double scale = 1.0;
    Eigen::VectorXd cand;
    double cand_obj = std::numeric_limits<double>::infinity();
    for (int h = 0; h < 30; ++h) {
      cand = beta + scale * step;
      cand_obj = logit_objective(X, y, w, cand, spec.l2_penalty);
      if (cand_obj <= obj + 1e-14) break;
      scale *= 0.5;
    }
    const double delta = (cand - beta).cwiseAbs().maxCoeff();
    beta = cand;
    obj = cand_obj;
    if (delta < spec.tol) {
      converged = true;
      break;
    }
  }
  out.coefficients = beta;
  out.converged = converged;
  if (!converged) out.warning = "IRLS did not converge within max_iter";
  return out;
}

// Weighted (ridge) least squares via normal equations.
FittedModel fit_identity_glm(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::Index n = X.rows(), p = X.cols();
  FittedModel out;
  out.spec = spec;
  Eigen::MatrixXd Xi(n, p + 1);
  Xi.col(0).setOnes();
  Xi.rightCols(p) = X;
  Eigen::MatrixXd xtwx = Xi.transpose() * w.asDiagonal() * Xi;
  if (spec.l2_penalty > 0.0)
    for (Eigen::Index j = 1; j <= p; ++j) xtwx(j, j) += spec.l2_penalty;
  xtwx.diagonal().array() += 1e-10;
  Eigen::VectorXd xtwy = Xi.transpose() * (w.cwiseProduct(y));
  out.coefficients = xtwx.ldlt().solve(xtwy);
  return out;
}

FittedModel fit_resolved(const LearnerSpec& spec, const Eigen::MatrixXd& X_base,
                         const std::vector<std::string>& names,
                         const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  FittedModel out;
  if (spec.kind == LearnerKind::intercept_only) {
    out.spec = spec;
    out.feature_names = names;  // carried for interface checks; unused by predict
    const double mean = weighted_mean(y, w);
    out.coefficients = Eigen::VectorXd::Zero(1);
    if (spec.link == Link::logit) {
      out.coefficients[0] = logit_fn(std::clamp(mean, kMeanClamp, 1.0 - kMeanClamp));
      if (mean <= 0.0 || mean >= 1.0) out.warning = "constant target; intercept clamped";
    } else {
      out.coefficients[0] = mean;
    }
    return out;
  }

  Eigen::MatrixXd X = spec.pairwise ? expand_pairwise(X_base) : X_base;
  Collapsed c;
  const Eigen::MatrixXd* Xp = &X;
  const Eigen::VectorXd* yp = &y;
  const Eigen::VectorXd* wp = &w;
  if (worth_collapsing(X)) {
    c = collapse_rows(X, y, w);
    if (c.X.rows() * 2 < X.rows()) {
      Xp = &c.X;
      yp = &c.y;
      wp = &c.w;
    }
  }
  out = (spec.link == Link::logit) ? fit_logit_glm(spec, *Xp, *yp, *wp)
                                   : fit_identity_glm(spec, *Xp, *yp, *wp);
  out.feature_names = names;
  return out;
}

double heldout_loss(const LearnerSpec& spec, const FittedModel& model,
                    const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                    const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  Eigen::VectorXd pred = predict(model, X, names);
  double loss = 0.0, sw = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (spec.link == Link::logit) {
      const double p = std::clamp(pred[i], kLossClamp, 1.0 - kLossClamp);
      loss += -w[i] * (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
    } else {
      const double r = y[i] - pred[i];
      loss += w[i] * r * r;
    }
    sw += w[i];
  }
  return sw > 0 ? loss / sw : std::numeric_limits<double>::infinity();
}

FittedModel fit_cv_select(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                          const std::vector<std::string>& names,
                          const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  if (spec.candidates.empty())
    throw EstimationError("cv_select: empty candidate list");
  const Eigen::Index n = X.rows();
  const int K = std::max(2, std::min<int>(spec.cv_folds, static_cast<int>(n)));

  std::vector<int> fold(static_cast<std::size_t>(n));
  {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(spec.cv_seed, 0x6376666f6c64ULL));
    rng.shuffle(perm);
    for (std::size_t i = 0; i < perm.size(); ++i)
      fold[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % K);
  }

  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  for (std::size_t c = 0; c < spec.candidates.size(); ++c) {
    const LearnerSpec& cand = spec.candidates[c];
    double loss = 0.0, total_w = 0.0;
    for (int k = 0; k < K; ++k) {
      std::vector<Eigen::Index> tr, va;
      for (Eigen::Index i = 0; i < n; ++i)
        (fold[static_cast<std::size_t>(i)] == k ? va : tr).push_back(i);
      if (tr.empty() || va.empty()) continue;
      Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(tr.size()), X.cols());
      Eigen::VectorXd ytr(static_cast<Eigen::Index>(tr.size())),
          wtr(static_cast<Eigen::Index>(tr.size()));
      for (std::size_t i = 0; i < tr.size(); ++i) {
        Xtr.row(static_cast<Eigen::Index>(i)) = X.row(tr[i]);
        ytr[static_cast<Eigen::Index>(i)] = y[tr[i]];
        wtr[static_cast<Eigen::Index>(i)] = w[tr[i]];
      }
      Eigen::MatrixXd Xva(static_cast<Eigen::Index>(va.size()), X.cols());
      Eigen::VectorXd yva(static_cast<Eigen::Index>(va.size())),
          wva(static_cast<Eigen::Index>(va.size()));
      for (std::size_t i = 0; i < va.size(); ++i) {
        Xva.row(static_cast<Eigen::Index>(i)) = X.row(va[i]);
        yva[static_cast<Eigen::Index>(i)] = y[va[i]];
        wva[static_cast<Eigen::Index>(i)] = w[va[i]];
      }
      FittedModel m = fit_resolved(cand, Xtr, names, ytr, wtr);
      const double sw = wva.sum();
      loss += heldout_loss(cand, m, Xva, names, yva, wva) * sw;
      total_w += sw;
    }
    loss = total_w > 0 ? loss / total_w : std::numeric_limits<double>::infinity();
    if (loss < best_loss - 1e-15) {
      best_loss = loss;
      best = c;
    }
  }
  return fit_resolved(spec.candidates[best], X, names, y, w);
}

}  // namespace

LearnerSpec LearnerSpec::intercept_only(Link link) {
  LearnerSpec s;
  s.kind = LearnerKind::intercept_only;
  s.link = link;
  return s;
}

LearnerSpec LearnerSpec::glm_main(Link link) {
  LearnerSpec s;
  s.kind = LearnerKind::glm;
  s.link = link;
  return s;
}

LearnerSpec LearnerSpec::glm_pairwise(Link link) {
  LearnerSpec s = glm_main(link);
  s.pairwise = true;
  return s;
}

LearnerSpec LearnerSpec::default_stack(Link link, std::uint64_t cv_seed) {
  LearnerSpec s;
  s.kind = LearnerKind::cv_select;
  s.link = link;
  s.cv_seed = cv_seed;
  s.candidates = {intercept_only(link), glm_main(link), glm_pairwise(link)};
  return s;
}

std::string LearnerSpec::describe() const {
  std::string base;
  switch (kind) {
    case LearnerKind::intercept_only: base = "intercept_only"; break;
    case LearnerKind::glm: base = pairwise ? "glm_pairwise" : "glm_main"; break;
    case LearnerKind::cv_select: base = "cv_select[" + std::to_string(candidates.size()) + "]"; break;
  }
  return base + (link == Link::logit ? "/logit" : "/identity");
}

FittedModel fit(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                const std::vector<std::string>& feature_names,
                const Eigen::VectorXd& y, const Eigen::VectorXd* sample_weights) {
  if (X.rows() != y.size() || X.rows() < 1)
    throw EstimationError("fit: rows(X) must equal len(y) >= 1");
  if (X.cols() != static_cast<Eigen::Index>(feature_names.size()))
    throw EstimationError("fit: feature name count mismatch");
  Eigen::VectorXd w;
  if (sample_weights) {
    if (sample_weights->size() != y.size())
      throw EstimationError("fit: weight length mismatch");
    if ((sample_weights->array() < 0).any())
      throw EstimationError("fit: negative sample weight");
    w = *sample_weights;
  } else {
    w = Eigen::VectorXd::Ones(y.size());
  }
  if (spec.link == Link::logit) {
    if ((y.array() < 0.0).any() || (y.array() > 1.0).any())
      throw EstimationError("fit: logit link requires targets in [0,1]");
  }
  if (spec.kind == LearnerKind::cv_select)
    return fit_cv_select(spec, X, feature_names, y, w);
  return fit_resolved(spec, X, feature_names, y, w);
}

Eigen::VectorXd predict(const FittedModel& model, const Eigen::MatrixXd& X,
                        const std::vector<std::string>& feature_names) {
  if (model.spec.kind != LearnerKind::intercept_only) {
    if (feature_names.size() != model.feature_names.size())
      throw EstimationError("predict: expected " +
                            std::to_string(model.feature_names.size()) +
                            " columns, got " + std::to_string(feature_names.size()));
    for (std::size_t i = 0; i < feature_names.size(); ++i) {
      if (feature_names[i] != model.feature_names[i])
        throw EstimationError("predict: column mismatch at position " +
                              std::to_string(i) + ": expected '" +
                              model.feature_names[i] + "', got '" +
                              feature_names[i] + "'");
    }
  }
  Eigen::VectorXd eta;
  if (model.spec.kind == LearnerKind::intercept_only) {
    eta = Eigen::VectorXd::Constant(X.rows(), model.coefficients[0]);
  } else {
    Eigen::MatrixXd Xe = model.spec.pairwise ? expand_pairwise(X) : X;
    if (Xe.cols() + 1 != model.coefficients.size())
      throw EstimationError("predict: design width mismatch");
    eta = Xe * model.coefficients.tail(Xe.cols());
    eta.array() += model.coefficients[0];
  }
  if (model.spec.link == Link::logit) {
    return eta.unaryExpr([](double e) {
      return expit(std::clamp(e, -kEtaClamp, kEtaClamp));
    });
  }
  return eta;
}

std::string FittedModel::to_json() const {
  std::ostringstream os;
  os << "{\"learner\":\"" << spec.describe() << "\",\"coefficients\":[";
  for (Eigen::Index i = 0; i < coefficients.size(); ++i) {
    if (i) os << ',';
    os << coefficients[i];
  }
  os << "],\"features\":[";
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    if (i) os << ',';
    os << '"' << feature_names[i] << '"';
  }
  os << "],\"converged\":" << (converged ? "true" : "false");
  if (!warning.empty()) os << ",\"warning\":\"" << warning << '"';
  os << '}';
  return os.str();
}

}  // namespace natmed
