#include "carl/types.hpp"

#include <stdexcept>
#include <string>

namespace carl {

std::string_view to_string(CongestionLabel label) {
  switch (label) {
    case CongestionLabel::Forming: return "Forming";
    case CongestionLabel::Leaving: return "Leaving";
    case CongestionLabel::Congested: return "Congested";
    case CongestionLabel::FreeFlow: return "FreeFlow";
    case CongestionLabel::Undefined: return "Undefined";
    case CongestionLabel::NoVehicle: return "NoVehicle";
  }
  return "Undefined";
}

CongestionLabel parse_label(std::string_view text) {
  for (auto label : kAllLabels) {
    if (to_string(label) == text) return label;
  }
  if (text.size() == 1 && text[0] >= '0' && text[0] <= '5') {
    return kAllLabels[static_cast<std::size_t>(text[0] - '0')];
  }
  throw std::invalid_argument("unknown congestion label: " + std::string(text));
}

std::string_view to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Idm: return "idm";
    case ControllerKind::FollowerStopper: return "fs";
    case ControllerKind::Piws: return "piws";
    case ControllerKind::Bcm: return "bcm";
    case ControllerKind::Lacc: return "lacc";
    case ControllerKind::Policy: return "rl";
  }
  return "idm";
}

ControllerKind parse_controller_kind(std::string_view text) {
  for (auto kind : {ControllerKind::Idm, ControllerKind::FollowerStopper, ControllerKind::Piws,
                    ControllerKind::Bcm, ControllerKind::Lacc, ControllerKind::Policy}) {
    if (to_string(kind) == text) return kind;
  }
  throw std::invalid_argument("unknown controller kind: " + std::string(text) +
                              " (expected idm|fs|piws|bcm|lacc|rl)");
}

std::string_view to_string(PerturbationSource source) {
  return source == PerturbationSource::Imitation ? "imitation" : "sampled";
}

}  // namespace carl
