#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace carl {

/// Action bound shared by every controller and the simulator.
inline constexpr double kMaxAccel = 3.0;
/// Braking floor for degenerate gaps (controllers only; the integrator clamps to kMaxAccel).
inline constexpr double kEmergencyBrake = 5.0;

enum class CongestionLabel : std::uint8_t {
  Forming = 0,
  Leaving = 1,
  Congested = 2,
  FreeFlow = 3,
  Undefined = 4,
  NoVehicle = 5,
};

inline constexpr std::size_t kNumLabels = 6;
inline constexpr std::array<CongestionLabel, kNumLabels> kAllLabels = {
    CongestionLabel::Forming,  CongestionLabel::Leaving,   CongestionLabel::Congested,
    CongestionLabel::FreeFlow, CongestionLabel::Undefined, CongestionLabel::NoVehicle};

std::string_view to_string(CongestionLabel label);
CongestionLabel parse_label(std::string_view text);
constexpr std::size_t index_of(CongestionLabel label) { return static_cast<std::size_t>(label); }

enum class ControllerKind : std::uint8_t { Idm, FollowerStopper, Piws, Bcm, Lacc, Policy };

std::string_view to_string(ControllerKind kind);
ControllerKind parse_controller_kind(std::string_view text);

enum class PerturbationSource : std::uint8_t { Imitation, Sampled };

std::string_view to_string(PerturbationSource source);

/// Acceleration override injected into one human-driven vehicle.
struct PerturbationEvent {
  int vehicle_id = 0;
  long start_step = 0;
  long duration_steps = 0;
  double intensity = 0.0;
  PerturbationSource source = PerturbationSource::Sampled;

  long end_step() const { return start_step + duration_steps; }
  bool active_at(long step) const { return step >= start_step && step < end_step(); }
};

}  // namespace carl
