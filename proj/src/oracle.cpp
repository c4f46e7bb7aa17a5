#include "natmed/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "natmed/learners.hpp"

namespace natmed {

namespace {

double bern(double p1, int v) { return v == 1 ? p1 : 1.0 - p1; }

struct WAtom {
  std::array<int, 3> w;
  double mass;
};

std::vector<WAtom> w_marginal(const DgmSpec& dgm) {
  std::vector<WAtom> out;
  for (int w1 = 0; w1 <= 1; ++w1)
    for (int w2 = 0; w2 <= 1; ++w2)
      for (int w3 = 0; w3 <= 1; ++w3) {
        const double mass = bern(dgm.p_w1(), w1) * bern(dgm.p_w2(w1), w2) *
                            bern(dgm.p_w3(w1, w2), w3);
        out.push_back({{w1, w2, w3}, mass});
      }
  return out;
}

}  // namespace

DgmSpec dgm_sim_study() {
  const double l13 = std::log(1.3), l11 = std::log(1.1);
  DgmSpec d;
  d.name = "sim_study";
  d.p_w1 = [] { return 0.6; };
  d.p_w2 = [](int) { return 0.3; };
  d.p_w3 = [](int w1, int w2) { return std::min(0.2 + 0.33 * (w1 + w2), 1.0); };
  d.p_a = [](const std::array<int, 3>&) { return 0.5; };
  d.p_z = [l13](int a, const std::array<int, 3>& w) {
    return expit(-l13 * (w[0] + w[1] + w[2]) / 3.0 + 2.0 * a - 1.0);
  };
  d.p_m = [l11](int, int z, const std::array<int, 3>& w) {
    return expit(-l11 * w[2] + 2.0 * z - 0.9);
  };
  d.p_y = [l13](int m, int z, int, const std::array<int, 3>& w) {
    return expit(-l13 * (w[0] + w[1] + w[2]) / 3.0 + z + m);
  };
  return d;
}

DgmSpec dgm_uniform_half() {
  DgmSpec d;
  d.name = "uniform_half";
  d.p_w1 = [] { return 0.5; };
  d.p_w2 = [](int) { return 0.5; };
  d.p_w3 = [](int, int) { return 0.5; };
  d.p_a = [](const std::array<int, 3>&) { return 0.5; };
  d.p_z = [](int, const std::array<int, 3>&) { return 0.5; };
  d.p_m = [](int, int, const std::array<int, 3>&) { return 0.5; };
  d.p_y = [](int, int, int, const std::array<int, 3>&) { return 0.5; };
  return d;
}

DgmSpec dgm_a_depends_w() {
  DgmSpec d = dgm_sim_study();
  d.name = "a_depends_w";
  d.p_a = [](const std::array<int, 3>& w) { return expit(0.4 * (w[0] - w[1])); };
  return d;
}

DgmSpec dgm_constant_y() {
  DgmSpec d = dgm_sim_study();
  d.name = "constant_y";
  d.p_y = [](int, int, int, const std::array<int, 3>&) { return 1.0; };
  return d;
}

DgmSpec dgm_strong_mediation() {
  const double l13 = std::log(1.3), l11 = std::log(1.1);
  DgmSpec d = dgm_sim_study();
  d.name = "strong_mediation";
  d.p_m = [l11](int, int z, const std::array<int, 3>& w) {
    return expit(-l11 * w[2] + 4.564097011036 * z - 2.282996590535);
  };
  d.p_y = [l13](int m, int z, int, const std::array<int, 3>& w) {
    return expit(-l13 * (w[0] + w[1] + w[2]) / 3.0 + 1.002873517562 * z +
                 1.670018979664 * m);
  };
  return d;
}

std::vector<Atom> enumerate_atoms(const DgmSpec& dgm) {
  std::vector<Atom> atoms;
  atoms.reserve(128);
  double sum = 0.0;
  for (int w1 = 0; w1 <= 1; ++w1)
    for (int w2 = 0; w2 <= 1; ++w2)
      for (int w3 = 0; w3 <= 1; ++w3)
        for (int a = 0; a <= 1; ++a)
          for (int z = 0; z <= 1; ++z)
            for (int m = 0; m <= 1; ++m)
              for (int y = 0; y <= 1; ++y) {
                const std::array<int, 3> w{w1, w2, w3};
                Atom at;
                at.v = {w1, w2, w3, a, z, m, y};
                at.mass = bern(dgm.p_w1(), w1) * bern(dgm.p_w2(w1), w2) *
                          bern(dgm.p_w3(w1, w2), w3) * bern(dgm.p_a(w), a) *
                          bern(dgm.p_z(a, w), z) * bern(dgm.p_m(a, z, w), m) *
                          bern(dgm.p_y(m, z, a, w), y);
                sum += at.mass;
                atoms.push_back(at);
              }
  if (std::abs(sum - 1.0) > 1e-12)
    throw EstimationError("enumerate_atoms: masses sum to " + std::to_string(sum));
  return atoms;
}

double TrueEta::g1(const std::array<int, 3>& w) const { return dgm->p_a(w); }
double TrueEta::q1(int a, const std::array<int, 3>& w) const {
  return dgm->p_z(a, w);
}
double TrueEta::pm1(int a, int z, const std::array<int, 3>& w) const {
  return dgm->p_m(a, z, w);
}
double TrueEta::mu(int m, int z, int a, const std::array<int, 3>& w) const {
  return dgm->p_y(m, z, a, w);
}
double TrueEta::e1(int m, int z, const std::array<int, 3>& w) const {
  // Bayes over A given (M,Z,W)
  const double n1 = g1(w) * bern(q1(1, w), z) * bern(pm1(1, z, w), m);
  const double n0 = (1.0 - g1(w)) * bern(q1(0, w), z) * bern(pm1(0, z, w), m);
  return n1 / (n1 + n0);
}
double TrueEta::r1(int m, int a, const std::array<int, 3>& w) const {
  // Bayes over Z given (M,A,W)
  const double n1 = q1(a, w) * bern(pm1(a, 1, w), m);
  const double n0 = (1.0 - q1(a, w)) * bern(pm1(a, 0, w), m);
  return n1 / (n1 + n0);
}
double TrueEta::rho(int z, int zp, int a, int ap,
                    const std::array<int, 3>& w) const {
  const double p1 = pm1(ap, zp, w);
  return mu(1, z, a, w) * p1 + mu(0, z, a, w) * (1.0 - p1);
}

TrueEta true_nuisances(const DgmSpec& dgm) { return TrueEta{&dgm}; }

ThetaParts true_theta(const DgmSpec& dgm, const EstimandSpec& est) {
  const TrueEta eta = true_nuisances(dgm);
  ThetaParts t;
  for (const auto& [w, pw] : w_marginal(dgm)) {
    const double q1a = eta.q1(est.a, w), q1ap = eta.q1(est.a_prime, w);
    t.t11 += pw * eta.rho(1, 1, est.a, est.a_prime, w) * q1ap;
    t.t10 += pw * eta.rho(1, 0, est.a, est.a_prime, w) * (q1a - q1ap);
    t.t00 += pw * eta.rho(0, 0, est.a, est.a_prime, w) * (1.0 - q1a);
  }
  return t;
}

double interventional_mean(const DgmSpec& dgm, int a) {
  double out = 0.0;
  for (const auto& [w, pw] : w_marginal(dgm)) {
    for (int z = 0; z <= 1; ++z) {
      const double pz = bern(dgm.p_z(a, w), z);
      for (int m = 0; m <= 1; ++m) {
        const double pm = bern(dgm.p_m(a, z, w), m);
        out += pw * pz * pm * dgm.p_y(m, z, a, w);
      }
    }
  }
  return out;
}

EifNuisanceRow exact_row(const TrueEta& eta, const EstimandSpec& est,
                         const Atom& atom) {
  const auto w = atom.w();
  const int a = est.a, ap = est.a_prime;
  EifNuisanceRow r;
  r.g_a = bern(eta.g1(w), a);
  r.g_ap = bern(eta.g1(w), ap);
  r.q1_a = eta.q1(a, w);
  r.q1_ap = eta.q1(ap, w);
  r.q1_obs = eta.q1(atom.a(), w);
  r.e_a_z1 = bern(eta.e1(atom.m(), 1, w), a);
  r.e_ap_z1 = bern(eta.e1(atom.m(), 1, w), ap);
  r.e_a_z0 = bern(eta.e1(atom.m(), 0, w), a);
  r.e_ap_z0 = bern(eta.e1(atom.m(), 0, w), ap);
  r.r1_ap = eta.r1(atom.m(), ap, w);
  r.mu_obs = eta.mu(atom.m(), atom.z(), atom.a(), w);
  r.mu_a_z1 = eta.mu(atom.m(), 1, a, w);
  r.mu_a_z0 = eta.mu(atom.m(), 0, a, w);
  r.rho_11 = eta.rho(1, 1, a, ap, w);
  r.rho_10 = eta.rho(1, 0, a, ap, w);
  r.rho_00 = eta.rho(0, 0, a, ap, w);
  return r;
}

double MeanZeroReport::max_residual() const {
  return std::max({residual[0], residual[1], residual[2]});
}

MeanZeroReport verify_eif_mean_zero(const DgmSpec& dgm, const EstimandSpec& est,
                                    HyVariant variant) {
  const TrueEta eta = true_nuisances(dgm);
  const ThetaParts th = true_theta(dgm, est);
  double s11 = 0, s10 = 0, s00 = 0;
  for (const Atom& at : enumerate_atoms(dgm)) {
    if (at.mass == 0.0) continue;
    const EifNuisanceRow row = exact_row(eta, est, at);
    const HWeights h = eif_weights(at.a(), at.z(), row, est, variant);
    const EifContribution d = eif_contribution(at.y(), at.z(), row, h);
    s11 += at.mass * d.d11;
    s10 += at.mass * d.d10;
    s00 += at.mass * d.d00;
  }
  MeanZeroReport rep;
  rep.est = est;
  rep.variant = variant;
  rep.residual = {std::abs(s11 - th.t11), std::abs(s10 - th.t10),
                  std::abs(s00 - th.t00)};
  return rep;
}

namespace {

double total_d(const TrueEta& eta, const EstimandSpec& est, const Atom& at,
               HyVariant variant) {
  const EifNuisanceRow row = exact_row(eta, est, at);
  const HWeights h = eif_weights(at.a(), at.z(), row, est, variant);
  return eif_contribution(at.y(), at.z(), row, h).total();
}

}  // namespace

double efficiency_bound(const DgmSpec& dgm, Contrast contrast, HyVariant variant) {
  const TrueEta eta = true_nuisances(dgm);
  const EstimandSpec hi{1, 0};
  const EstimandSpec lo = (contrast == Contrast::nde) ? EstimandSpec{0, 0}
                                                      : EstimandSpec{1, 1};
  const double truth_hi = true_theta(dgm, hi).total();
  const double truth_lo = true_theta(dgm, lo).total();
  // NDE eif = D(1,0) - D(0,0) - NDE; NIE eif = D(1,1) - D(1,0) - NIE
  const double center = (contrast == Contrast::nde) ? truth_hi - truth_lo
                                                    : truth_lo - truth_hi;
  double var = 0.0;
  for (const Atom& at : enumerate_atoms(dgm)) {
    if (at.mass == 0.0) continue;
    const double d_hi = total_d(eta, hi, at, variant);
    const double d_lo = total_d(eta, lo, at, variant);
    const double eif = (contrast == Contrast::nde) ? (d_hi - d_lo) - center
                                                   : (d_lo - d_hi) - center;
    var += at.mass * eif * eif;
  }
  return var;
}

std::string to_string(R00Reading r) {
  switch (r) {
    case R00Reading::as_printed: return "as_printed";
    case R00Reading::a_prime_z0: return "a_prime_z0";
    case R00Reading::derivation: return "derivation";
  }
  return "?";
}

namespace {

int sign_pm(int k) { return (k % 2 == 0) ? 1 : -1; }

// Deterministic perturbation of the exact eta: probability slots move by
// eps*(-1)^(w1[+z]) on the logit scale (the slot's own Z argument when it
// has one), mu moves by eps*(-1)^(w1) on the identity scale, and rho is
// recomputed from the perturbed mu and mediator law so the remainder
// identity can hold exactly.
struct PerturbedEta {
  const TrueEta* base;
  double eps;

  double g1(const std::array<int, 3>& w) const {
    return expit(logit_fn(base->g1(w)) + eps * sign_pm(w[0]));
  }
  double q1(int a, const std::array<int, 3>& w) const {
    return expit(logit_fn(base->q1(a, w)) + eps * sign_pm(w[0]));
  }
  double pm1(int a, int z, const std::array<int, 3>& w) const {
    return expit(logit_fn(base->pm1(a, z, w)) + eps * sign_pm(w[0] + z));
  }
  double e1(int m, int z, const std::array<int, 3>& w) const {
    return expit(logit_fn(base->e1(m, z, w)) + eps * sign_pm(w[0] + z));
  }
  double r1(int m, int a, const std::array<int, 3>& w) const {
    return expit(logit_fn(base->r1(m, a, w)) + eps * sign_pm(w[0]));
  }
  double mu(int m, int z, int a, const std::array<int, 3>& w) const {
    return base->mu(m, z, a, w) + eps * sign_pm(w[0]);
  }
  double rho(int z, int zp, int a, int ap, const std::array<int, 3>& w) const {
    const double p1 = pm1(ap, zp, w);
    return mu(1, z, a, w) * p1 + mu(0, z, a, w) * (1.0 - p1);
  }

  EifNuisanceRow row(const EstimandSpec& est, const Atom& atom) const {
    const auto w = atom.w();
    const int a = est.a, ap = est.a_prime;
    EifNuisanceRow r;
    r.g_a = bern(g1(w), a);
    r.g_ap = bern(g1(w), ap);
    r.q1_a = q1(a, w);
    r.q1_ap = q1(ap, w);
    r.q1_obs = q1(atom.a(), w);
    r.e_a_z1 = bern(e1(atom.m(), 1, w), a);
    r.e_ap_z1 = bern(e1(atom.m(), 1, w), ap);
    r.e_a_z0 = bern(e1(atom.m(), 0, w), a);
    r.e_ap_z0 = bern(e1(atom.m(), 0, w), ap);
    r.r1_ap = r1(atom.m(), ap, w);
    r.mu_obs = mu(atom.m(), atom.z(), atom.a(), w);
    r.mu_a_z1 = mu(atom.m(), 1, a, w);
    r.mu_a_z0 = mu(atom.m(), 0, a, w);
    r.rho_11 = rho(1, 1, a, ap, w);
    r.rho_10 = rho(1, 0, a, ap, w);
    r.rho_00 = rho(0, 0, a, ap, w);
    return r;
  }
};

}  // namespace

double RemainderReport::max_abs_diff() const {
  return std::max({std::abs(rows[0].diff()), std::abs(rows[1].diff()),
                   std::abs(rows[2].diff())});
}

RemainderReport remainder_check(const DgmSpec& dgm, const EstimandSpec& est,
                                double eps, HyVariant variant,
                                R00Reading reading) {
  const TrueEta eta = true_nuisances(dgm);
  const PerturbedEta tilde{&eta, eps};
  const ThetaParts th = true_theta(dgm, est);
  const int a = est.a, ap = est.a_prime;

  RemainderReport rep;
  rep.eps = eps;
  rep.variant = variant;
  rep.reading = reading;

  // lhs_zz' = E[D_zz'(O; eta~)] - theta_zz'(eta), plus the H-difference
  // cross terms of the remainder, all over the true joint
  std::array<double, 3> e_d{};
  std::array<double, 3> cross{};
  for (const Atom& at : enumerate_atoms(dgm)) {
    if (at.mass == 0.0) continue;
    const auto w = at.w();
    const EifNuisanceRow row_t = tilde.row(est, at);
    const HWeights ht = eif_weights(at.a(), at.z(), row_t, est, variant);
    const EifContribution dt = eif_contribution(at.y(), at.z(), row_t, ht);
    e_d[0] += at.mass * dt.d11;
    e_d[1] += at.mass * dt.d10;
    e_d[2] += at.mass * dt.d00;

    const EifNuisanceRow row_0 = exact_row(eta, est, at);
    const HWeights h0 = eif_weights(at.a(), at.z(), row_0, est, variant);
    const double dmu = row_0.mu_obs - row_t.mu_obs;
    const double dq = row_0.q1_obs - row_t.q1_obs;
    // int mu~(a,m,z,W) [dP - dP~](m | a', z', W), summed over m in {0,1}
    auto mu_gap = [&](int z, int zp) {
      double s = 0.0;
      for (int m = 0; m <= 1; ++m) {
        const double dp = bern(eta.pm1(ap, zp, w), m) - bern(tilde.pm1(ap, zp, w), m);
        s += tilde.mu(m, z, a, w) * dp;
      }
      return s;
    };
    cross[0] += at.mass * ((ht.y11 - h0.y11) * dmu + (ht.m11 - h0.m11) * mu_gap(1, 1) +
                           (ht.z11 - h0.z11) * dq);
    cross[1] += at.mass * ((ht.y10 - h0.y10) * dmu + (ht.m10 - h0.m10) * mu_gap(1, 0) +
                           (ht.z10 - h0.z10) * dq);
    cross[2] += at.mass * ((ht.y00 - h0.y00) * dmu + (ht.m00 - h0.m00) * mu_gap(0, 0) +
                           (ht.z00 - h0.z00) * dq);
  }

  // R*_zz' in the two-line printed layout:
  //   int [mu - mu~][bracket1] dP~(m|a',z',w) dP(w)
  // + int  mu       [bracket2] [dP - dP~](m|a',z',w) dP(w)
  std::array<double, 3> rstar{};
  for (const auto& [w, pw] : w_marginal(dgm)) {
    const double q1a = eta.q1(a, w), q1ap = eta.q1(ap, w);
    const double tq1a = tilde.q1(a, w), tq1ap = tilde.q1(ap, w);
    struct Pair {
      double b1, b2;
    };
    std::array<Pair, 3> brackets{};
    brackets[0] = {q1ap - tq1ap, q1ap - tq1ap};                    // (1,1)
    brackets[1] = {(q1a - q1ap) - (tq1a - tq1ap),
                   (q1a - q1ap) - (tq1a - tq1ap)};                 // (1,0)
    switch (reading) {                                             // (0,0)
      case R00Reading::as_printed:
        brackets[2] = {q1ap - (1.0 - tq1ap), (1.0 - q1ap) - (1.0 - tq1ap)};
        break;
      case R00Reading::a_prime_z0:
        brackets[2] = {(1.0 - q1ap) - (1.0 - tq1ap), (1.0 - q1ap) - (1.0 - tq1ap)};
        break;
      case R00Reading::derivation:
        brackets[2] = {(1.0 - q1a) - (1.0 - tq1a), (1.0 - q1a) - (1.0 - tq1a)};
        break;
    }
    const std::array<std::pair<int, int>, 3> zz{{{1, 1}, {1, 0}, {0, 0}}};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto [z, zp] = zz[k];
      double line1 = 0.0, line2 = 0.0;
      for (int m = 0; m <= 1; ++m) {
        const double dpt = bern(tilde.pm1(ap, zp, w), m);
        const double dp = bern(eta.pm1(ap, zp, w), m);
        line1 += (eta.mu(m, z, a, w) - tilde.mu(m, z, a, w)) * dpt;
        line2 += eta.mu(m, z, a, w) * (dp - dpt);
      }
      rstar[k] += pw * (line1 * brackets[k].b1 + line2 * brackets[k].b2);
    }
  }

  const std::array<double, 3> theta_parts{th.t11, th.t10, th.t00};
  for (std::size_t k = 0; k < 3; ++k) {
    rep.rows[k].lhs = e_d[k] - theta_parts[k];
    rep.rows[k].rhs = cross[k] + rstar[k];
  }
  return rep;
}

HyVariant adjudicate_hy00_variant(const DgmSpec& dgm, const EstimandSpec& est,
                                  double eps, double tol) {
  const RemainderReport derived =
      remainder_check(dgm, est, eps, HyVariant::derived, R00Reading::derivation);
  const RemainderReport printed = remainder_check(dgm, est, eps,
                                                  HyVariant::as_printed,
                                                  R00Reading::derivation);
  const bool ok_derived = derived.max_abs_diff() < tol;
  const bool ok_printed = printed.max_abs_diff() < tol;
  if (ok_derived == ok_printed)
    throw EstimationError(
        "adjudicate_hy00_variant: DGM does not separate the variants "
        "(P(a|W) must vary and a != a')");
  return ok_derived ? HyVariant::derived : HyVariant::as_printed;
}

R00Reading adjudicate_r00_reading(const DgmSpec& dgm, const EstimandSpec& est,
                                  double eps, double tol) {
  R00Reading found = R00Reading::derivation;
  int passes = 0;
  for (R00Reading r : {R00Reading::as_printed, R00Reading::a_prime_z0,
                       R00Reading::derivation}) {
    const RemainderReport rep =
        remainder_check(dgm, est, eps, HyVariant::derived, r);
    if (std::abs(rep.rows[2].diff()) < tol) {
      found = r;
      ++passes;
    }
  }
  if (passes != 1)
    throw EstimationError("adjudicate_r00_reading: " + std::to_string(passes) +
                          " readings pass; DGM cannot separate them");
  return found;
}

}  // namespace natmed
