#pragma once

#include <array>
#include <deque>

#include "carl/sim_core.hpp"

namespace carl {

/// Treiber defaults.
struct IdmParams {
  double a_max = 1.0;
  double b_comf = 1.5;
  double time_headway = 1.0;
  double delta = 4.0;
  double min_gap = 2.0;
  double desired_velocity = 30.0;

  void validate() const;
};

/// Intelligent Driver Model acceleration. Degenerate gaps (<= 0) brake at -kEmergencyBrake.
double idm_accel(double v, double gap, double v_lead, const IdmParams& p);

struct FsParams {
  double desired_velocity = 4.5;  // U
  std::array<double, 3> base_offsets = {4.5, 5.25, 6.0};
  std::array<double, 3> decel_rates = {1.5, 1.0, 0.5};

  void validate() const;
};

/// Switching thresholds dx_k = dx_k^0 + dv_minus^2 / (2 d_k), dv_minus = min(v_lead - v, 0).
std::array<double, 3> fs_thresholds(const FsParams& p, double dv_minus);

/// Piecewise FollowerStopper command velocity for explicit thresholds.
double fs_command_velocity(double gap, double v_lead, const std::array<double, 3>& thresholds,
                           double desired_velocity);
/// Same, with thresholds derived from the ego/leader relative velocity.
double fs_command_velocity(double gap, double v, double v_lead, const FsParams& p);

struct PiwsParams {
  double catch_velocity = 1.0;  // v_catch
  double gap_lower = 7.0;       // g_l
  double gap_upper = 30.0;      // g_u
  int history_window = 380;     // steps averaged for U
  double beta = 0.9;

  void validate() const;
};

double piws_target_velocity(double gap, double desired_velocity, const PiwsParams& p);
/// Default alpha schedule: the same clamped gap ratio used by the target velocity.
double piws_alpha(double gap, const PiwsParams& p);
/// v_cmd(t+1) = beta (alpha v_target + (1 - alpha) v_lead) + (1 - beta) v_cmd(t).
double piws_update(double gap, double v_lead, double desired_velocity, double prev_cmd, double alpha,
                   double beta, const PiwsParams& p);

struct BcmParams {
  double k_d = 1.0;
  double k_v = 1.0;
  double k_c = 1.0;
  double desired_velocity = 4.5;
};

/// Bilateral control law before clamping. dd: gap ahead minus gap behind; dv_l = v_lead - v;
/// dv_f = v - v_follower.
double bcm_accel_raw(double dd, double dv_l, double dv_f, double v, const BcmParams& p);
double bcm_accel(double dd, double dv_l, double dv_f, double v, const BcmParams& p);

struct LaccParams {
  double k1 = 0.3;
  double k2 = 0.4;
  double h = 1.0;    // s
  double tau = 0.1;  // s
};

/// a_cmd = k1 (s - h v) + k2 dv_l.
double lacc_command(double s, double v, double dv_l, const LaccParams& p);

struct LaccOutput {
  double accel;    // a_t after the first-order actuation lag
  double command;  // a_cmd,t to feed the next step
};

LaccOutput lacc_accel(double prev_accel, double prev_command, double s, double v, double dv_l,
                      const LaccParams& p, double dt);

/// Proportional velocity tracking for velocity-command controllers, clamped to the action bound.
double velocity_tracking_accel(double v, double v_cmd, double gain = 2.0);

double clamp_controller_output(double accel);

/// Krauss safe velocity: the fastest speed from which the ego can still stop behind a leader
/// braking at `decel`, given reaction time `tau`.
double safe_velocity(double gap, double v, double v_lead, double decel = kMaxAccel, double tau = 1.0);
/// Largest acceleration over one step that keeps the ego at or below its safe velocity.
double safe_accel_cap(double gap, double v, double v_lead, double dt, double decel = kMaxAccel, double tau = 1.0);

struct ControllerSuite {
  IdmParams idm;
  FsParams fs;
  PiwsParams piws;
  BcmParams bcm;
  LaccParams lacc;
  double velocity_gain = 2.0;
};

/// Per-vehicle controller binding. LACC and PIwS keep scalar memory here; call observe()
/// every step (including warmup) so that memory is current when the controller takes over.
class VehicleController {
 public:
  explicit VehicleController(ControllerKind kind = ControllerKind::Idm) : kind_(kind) {}

  ControllerKind kind() const { return kind_; }
  /// Acceleration command for vehicle `index`, in [-kEmergencyBrake, kMaxAccel].
  double accel(const World& world, std::size_t index, const ControllerSuite& suite);
  /// Records the post-step state for controllers with memory.
  void observe(const World& world, std::size_t index, const ControllerSuite& suite);

 private:
  ControllerKind kind_;
  // LACC
  double lacc_prev_command_ = 0.0;
  bool lacc_primed_ = false;
  // PIwS
  std::deque<double> speed_history_;
  double speed_history_sum_ = 0.0;
  double piws_cmd_ = 0.0;
  bool piws_primed_ = false;
};

}  // namespace carl
