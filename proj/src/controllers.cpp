#include "carl/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace carl {

void IdmParams::validate() const {
  if (!(a_max > 0 && b_comf > 0 && time_headway > 0 && min_gap > 0 && desired_velocity > 0)) {
    throw std::invalid_argument("IDM parameters must be positive");
  }
  if (delta < 1.0) throw std::invalid_argument("IDM delta must be >= 1");
}

double idm_accel(double v, double gap, double v_lead, const IdmParams& p) {
  if (gap <= 0.0) return -kEmergencyBrake;
  const double s_star =
      p.min_gap + v * p.time_headway + v * (v - v_lead) / (2.0 * std::sqrt(p.a_max * p.b_comf));
  return p.a_max * (1.0 - std::pow(v / p.desired_velocity, p.delta) - (s_star / gap) * (s_star / gap));
}

void FsParams::validate() const {
  if (!(desired_velocity > 0)) throw std::invalid_argument("FS desired velocity must be > 0");
  for (std::size_t k = 0; k < 3; ++k) {
    if (!(decel_rates[k] > 0)) throw std::invalid_argument("FS deceleration rates must be > 0");
    if (k > 0 && !(base_offsets[k] > base_offsets[k - 1])) {
      throw std::invalid_argument("FS base offsets must be strictly increasing");
    }
    if (k > 0 && decel_rates[k] > decel_rates[k - 1]) {
      throw std::invalid_argument("FS deceleration rates must be non-increasing");
    }
  }
}

std::array<double, 3> fs_thresholds(const FsParams& p, double dv_minus) {
  std::array<double, 3> dx{};
  const double dv2 = dv_minus * dv_minus;
  for (std::size_t k = 0; k < 3; ++k) dx[k] = p.base_offsets[k] + dv2 / (2.0 * p.decel_rates[k]);
  return dx;
}

double fs_command_velocity(double gap, double v_lead, const std::array<double, 3>& dx, double u) {
  const double v = std::min(std::max(v_lead, 0.0), u);
  if (gap <= dx[0]) return 0.0;
  if (gap <= dx[1]) return v * (gap - dx[0]) / (dx[1] - dx[0]);
  if (gap <= dx[2]) return v + (u - v) * (gap - dx[1]) / (dx[2] - dx[1]);
  return u;
}

double fs_command_velocity(double gap, double v, double v_lead, const FsParams& p) {
  const double dv_minus = std::min(v_lead - v, 0.0);
  return fs_command_velocity(gap, v_lead, fs_thresholds(p, dv_minus), p.desired_velocity);
}

void PiwsParams::validate() const {
  if (!(gap_lower < gap_upper)) throw std::invalid_argument("PIwS requires gap_lower < gap_upper");
  if (!(catch_velocity > 0)) throw std::invalid_argument("PIwS catch velocity must be > 0");
  if (history_window < 1) throw std::invalid_argument("PIwS history window must be >= 1");
}

double piws_alpha(double gap, const PiwsParams& p) {
  return std::min(std::max((gap - p.gap_lower) / (p.gap_upper - p.gap_lower), 0.0), 1.0);
}

double piws_target_velocity(double gap, double desired_velocity, const PiwsParams& p) {
  return desired_velocity + p.catch_velocity * piws_alpha(gap, p);
}

double piws_update(double gap, double v_lead, double desired_velocity, double prev_cmd, double alpha,
                   double beta, const PiwsParams& p) {
  const double target = piws_target_velocity(gap, desired_velocity, p);
  return beta * (alpha * target + (1.0 - alpha) * v_lead) + (1.0 - beta) * prev_cmd;
}

double bcm_accel_raw(double dd, double dv_l, double dv_f, double v, const BcmParams& p) {
  return p.k_d * dd + p.k_v * (dv_l - dv_f) + p.k_c * (p.desired_velocity - v);
}

double bcm_accel(double dd, double dv_l, double dv_f, double v, const BcmParams& p) {
  return clamp_controller_output(bcm_accel_raw(dd, dv_l, dv_f, v, p));
}

double lacc_command(double s, double v, double dv_l, const LaccParams& p) {
  const double gap_error = s - p.h * v;
  return p.k1 * gap_error + p.k2 * dv_l;
}

LaccOutput lacc_accel(double prev_accel, double prev_command, double s, double v, double dv_l,
                      const LaccParams& p, double dt) {
  if (!(p.tau > 0)) throw std::invalid_argument("LACC tau must be > 0");
  const double blend = dt / p.tau;
  return {(1.0 - blend) * prev_accel + blend * prev_command, lacc_command(s, v, dv_l, p)};
}

double velocity_tracking_accel(double v, double v_cmd, double gain) {
  return std::clamp(gain * (v_cmd - v), -kMaxAccel, kMaxAccel);
}

double clamp_controller_output(double accel) {
  if (std::isnan(accel)) return -kEmergencyBrake;
  return std::clamp(accel, -kEmergencyBrake, kMaxAccel);
}

double safe_velocity(double gap, double v, double v_lead, double decel, double tau) {
  const double g = std::max(gap, 0.0);
  return std::max(0.0, v_lead + (g - v_lead * tau) / ((v + v_lead) / (2.0 * decel) + tau));
}

double safe_accel_cap(double gap, double v, double v_lead, double dt, double decel, double tau) {
  return (safe_velocity(gap, v, v_lead, decel, tau) - v) / dt;
}

double VehicleController::accel(const World& world, std::size_t index, const ControllerSuite& suite) {
  const auto& ego = world.vehicles[index];
  const auto& lead = world.vehicles[world.leader_of(index)];
  const double gap = raw_gap(world, index);
  double a = 0.0;
  switch (kind_) {
    case ControllerKind::Idm:
    case ControllerKind::Policy:
      a = idm_accel(ego.velocity, gap, lead.velocity, suite.idm);
      break;
    case ControllerKind::FollowerStopper: {
      const double v_cmd = fs_command_velocity(std::max(gap, 0.0), ego.velocity, lead.velocity, suite.fs);
      a = velocity_tracking_accel(ego.velocity, v_cmd, suite.velocity_gain);
      break;
    }
    case ControllerKind::Piws:
      a = velocity_tracking_accel(ego.velocity, piws_cmd_, suite.velocity_gain);
      break;
    case ControllerKind::Bcm: {
      const auto follower = world.follower_of(index);
      const double dd = gap - raw_gap(world, follower);
      const double dv_l = lead.velocity - ego.velocity;
      const double dv_f = ego.velocity - world.vehicles[follower].velocity;
      a = bcm_accel_raw(dd, dv_l, dv_f, ego.velocity, suite.bcm);
      break;
    }
    case ControllerKind::Lacc: {
      const auto out = lacc_accel(ego.acceleration, lacc_prev_command_, gap, ego.velocity,
                                  lead.velocity - ego.velocity, suite.lacc, world.dt);
      a = out.accel;
      break;
    }
  }
  if (gap <= 0.0) a = std::min(a, -kEmergencyBrake);
  return clamp_controller_output(a);
}

void VehicleController::observe(const World& world, std::size_t index, const ControllerSuite& suite) {
  const auto& ego = world.vehicles[index];
  const auto& lead = world.vehicles[world.leader_of(index)];
  const double gap = headway(world, index);
  if (kind_ == ControllerKind::Lacc) {
    lacc_prev_command_ = lacc_command(gap, ego.velocity, lead.velocity - ego.velocity, suite.lacc);
    lacc_primed_ = true;
  } else if (kind_ == ControllerKind::Piws) {
    speed_history_.push_back(ego.velocity);
    speed_history_sum_ += ego.velocity;
    while (speed_history_.size() > static_cast<std::size_t>(suite.piws.history_window)) {
      speed_history_sum_ -= speed_history_.front();
      speed_history_.pop_front();
    }
    const double u = speed_history_sum_ / static_cast<double>(speed_history_.size());
    if (!piws_primed_) {
      piws_cmd_ = ego.velocity;
      piws_primed_ = true;
    }
    piws_cmd_ = piws_update(gap, lead.velocity, u, piws_cmd_, piws_alpha(gap, suite.piws),
                            suite.piws.beta, suite.piws);
  }
}

}  // namespace carl
