#include "natmed/eif.hpp"

#include <algorithm>

namespace natmed {

std::string to_string(HyVariant v) {
  return v == HyVariant::derived ? "derived" : "as_printed";
}

HWeights eif_weights(int a_obs, int z_obs, const EifNuisanceRow& row,
                     const EstimandSpec& est, HyVariant variant,
                     bool clip_negative_dq) {
  const double ind_a = (a_obs == est.a) ? 1.0 : 0.0;
  const double ind_ap = (a_obs == est.a_prime) ? 1.0 : 0.0;
  const double iz1 = (z_obs == 1) ? 1.0 : 0.0;
  const double iz0 = 1.0 - iz1;

  const double q0_a = 1.0 - row.q1_a;
  const double q0_ap = 1.0 - row.q1_ap;
  double dq = row.q1_a - row.q1_ap;
  if (est.a == est.a_prime) dq = 0.0;  // identical prediction slots; exact zero
  if (clip_negative_dq) dq = std::max(dq, 0.0);

  const double e_ratio_z1 = row.e_ap_z1 / row.e_a_z1;
  const double e_ratio_z0 = row.e_ap_z0 / row.e_a_z0;
  const double r1 = row.r1_ap;
  const double r0 = 1.0 - r1;

  HWeights h;
  h.y11 = ind_a * iz1 / row.g_ap * e_ratio_z1;
  h.y10 = ind_a * iz1 / (row.g_ap * q0_ap) * e_ratio_z1 * (r0 / r1) * dq;
  // leading inverse propensity differs between the two algebraic forms
  const double lead = (variant == HyVariant::derived) ? row.g_ap : row.g_a;
  h.y00 = ind_a * iz0 / lead * e_ratio_z0 * (q0_a / q0_ap);

  h.m11 = ind_ap * iz1 / row.g_ap;
  h.m10 = ind_ap * iz0 / (q0_ap * row.g_ap) * dq;
  h.m00 = ind_ap * iz0 / (q0_ap * row.g_ap) * q0_a;

  h.z11 = ind_ap / row.g_ap * row.rho_11;
  h.z10 = (ind_a / row.g_a - ind_ap / row.g_ap) * row.rho_10;
  h.z00 = -ind_a / row.g_a * row.rho_00;

  h.w11 = row.rho_11 * row.q1_ap;
  h.w10 = row.rho_10 * dq;
  h.w00 = row.rho_00 * q0_a;
  return h;
}

EifContribution eif_contribution(double y_obs, int z_obs,
                                 const EifNuisanceRow& row, const HWeights& h) {
  const double ry = y_obs - row.mu_obs;
  const double rz = static_cast<double>(z_obs) - row.q1_obs;
  EifContribution d;
  d.d11 = h.y11 * ry + h.z11 * rz + h.m11 * (row.mu_a_z1 - row.rho_11) + h.w11;
  d.d10 = h.y10 * ry + h.z10 * rz + h.m10 * (row.mu_a_z1 - row.rho_10) + h.w10;
  d.d00 = h.y00 * ry + h.z00 * rz + h.m00 * (row.mu_a_z0 - row.rho_00) + h.w00;
  return d;
}

}  // namespace natmed
