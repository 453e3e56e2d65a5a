#pragma once
// Reference formulas written out term by term, with no calls into the library.

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

inline double idm(double v, double s, double vl, double a, double b, double T, double delta, double s0,
                  double v0) {
  const double s_star = s0 + v * T + v * (v - vl) / (2.0 * std::sqrt(a * b));
  return a * (1.0 - std::pow(v / v0, delta) - std::pow(s_star / s, 2.0));
}

inline double fs_threshold(double dx0, double d, double dv_minus) { return dx0 + dv_minus * dv_minus / (2.0 * d); }

// Piecewise FollowerStopper command with v = min(max(v_lead, 0), U).
inline double fs_cmd(double dx, double v_lead, double x1, double x2, double x3, double U) {
  const double v = std::min(std::max(v_lead, 0.0), U);
  if (dx <= x1) return 0.0;
  if (dx <= x2) return v * (dx - x1) / (x2 - x1);
  if (dx <= x3) return v + (U - v) * (dx - x2) / (x3 - x2);
  return U;
}

inline double piws_target(double dx, double U, double v_catch, double gl, double gu) {
  return U + v_catch * std::min(std::max((dx - gl) / (gu - gl), 0.0), 1.0);
}

inline double piws_cmd(double target, double v_lead, double prev, double alpha, double beta) {
  return beta * (alpha * target + (1.0 - alpha) * v_lead) + (1.0 - beta) * prev;
}

inline double bcm(double dd, double dvl, double dvf, double v, double kd, double kv, double kc, double vdes) {
  return kd * dd + kv * (dvl - dvf) + kc * (vdes - v);
}

inline double lacc_cmd(double s, double v, double dvl, double k1, double k2, double h) {
  return k1 * (s - h * v) + k2 * dvl;
}

inline double lacc_lag(double a_prev, double cmd_prev, double dt, double tau) {
  return (1.0 - dt / tau) * a_prev + (dt / tau) * cmd_prev;
}

// Label codes: 0 Forming, 1 Leaving, 2 Congested, 3 FreeFlow, 4 Undefined, 5 NoVehicle.
inline double r_eff(double v, double a, int c) {
  double r = 0.75 * v - 2.0 * std::fabs(a);
  if (c == 2 && a > 0.0) r = r + std::min(-1.0, -10.0 * std::fabs(a));
  if (c == 1 && a < 0.0) r = r + (-10.0) * std::fabs(a);
  return r;
}

inline double r_safe(double vbar, double a, int c) {
  double r = 0.15 * vbar - 4.0 * std::fabs(a);
  if (c == 0) r = r + std::min(-1.0, -5.0 * std::fabs(a));
  return r;
}

inline double r_follow(double dp, double dv, double a) { return -2.0 * dp + 4.0 * dv - 4.0 * std::fabs(a) + 10.0; }

inline double ttc(double gap, double closing) {
  return closing > 0.0 ? gap / closing : std::numeric_limits<double>::infinity();
}

inline double drac(double gap, double closing) { return closing > 0.0 ? closing * closing / (2.0 * gap) : 0.0; }

inline double tri_cdf(double x, double lo, double mode, double hi) {
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  if (x <= mode) return (x - lo) * (x - lo) / ((hi - lo) * (mode - lo));
  return 1.0 - (hi - x) * (hi - x) / ((hi - lo) * (hi - mode));
}

}  // namespace oracle
