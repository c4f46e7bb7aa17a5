#pragma once

#include <array>
#include <string>

namespace natmed {

struct EstimandSpec {
  int a = 1;
  int a_prime = 0;
};

// The (0,0) outcome weight admits two algebraic forms that differ by the
// factor P(a|W)/P(a'|W): `as_printed` leads with 1/P(a|W); `derived` leads
// with 1/P(a'|W), which is the change-of-measure consistent form. The two
// coincide whenever P(a|W) = P(a'|W). The default is fixed by exact
// enumeration (see oracle::adjudicate_hy00_variant).
enum class HyVariant { derived, as_printed };

std::string to_string(HyVariant v);

// One observation's nuisance values, every probability already truncated.
// Slots are indexed against an estimand pair (a, a').
struct EifNuisanceRow {
  double g_a = 0.5, g_ap = 0.5;             // P(A=a|W), P(A=a'|W)
  double q1_a = 0.5, q1_ap = 0.5;           // P(Z=1|A=a,W), P(Z=1|A=a',W)
  double q1_obs = 0.5;                      // P(Z=1|A=A_i,W)
  double e_a_z1 = 0.5, e_ap_z1 = 0.5;       // P(A=.|M,Z=1,W)
  double e_a_z0 = 0.5, e_ap_z0 = 0.5;       // P(A=.|M,Z=0,W)
  double r1_ap = 0.5;                       // P(Z=1|M,A=a',W)
  double mu_obs = 0.0;                      // E(Y|M,Z=A_i's Z,A=A_i,W)
  double mu_a_z1 = 0.0, mu_a_z0 = 0.0;      // E(Y|M,Z=.,A=a,W)
  double rho_11 = 0.0, rho_10 = 0.0, rho_00 = 0.0;
};

// H weights for the three (z,z') components of theta(a,a').
struct HWeights {
  double y11 = 0, y10 = 0, y00 = 0;
  double m11 = 0, m10 = 0, m00 = 0;
  double z11 = 0, z10 = 0, z00 = 0;
  double w11 = 0, w10 = 0, w00 = 0;
};

// clip_negative_dq: floor q(1|a,W)-q(1|a',W) at 0 inside the weights.
HWeights eif_weights(int a_obs, int z_obs, const EifNuisanceRow& row,
                     const EstimandSpec& est,
                     HyVariant variant = HyVariant::derived,
                     bool clip_negative_dq = false);

struct EifContribution {
  double d11 = 0, d10 = 0, d00 = 0;
  double total() const { return d11 + d10 + d00; }
};

// D_{z,z'} = H_Y (Y - mu(A,M,Z,W)) + H_Z (Z - q(1|A,W))
//          + H_M (mu(a,M,z,W) - rho_{z,z'}) + H_W
EifContribution eif_contribution(double y_obs, int z_obs,
                                 const EifNuisanceRow& row, const HWeights& h);

}  // namespace natmed
