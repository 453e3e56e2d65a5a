#include "carl/hv_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace carl {

void DurationModel::validate() const {
  if (!(tau_min > 0.0 && tau_min < tau_max)) {
    throw std::invalid_argument("duration model requires 0 < tau_min < tau_max");
  }
}

double duration_mode(double intensity, const DurationModel& dm) {
  const double mag = std::min(std::abs(intensity), kMaxAccel);
  return dm.tau_max - (mag / kMaxAccel) * dm.range();
}

double triangular_pdf(double tau, double mode, const DurationModel& dm) {
  if (tau < dm.tau_min || tau > dm.tau_max) return 0.0;
  if (tau < mode) return 2.0 * (tau - dm.tau_min) / (dm.range() * (mode - dm.tau_min));
  if (mode == dm.tau_max) return 2.0 / dm.range();
  return 2.0 * (dm.tau_max - tau) / (dm.range() * (dm.tau_max - mode));
}

double triangular_cdf(double tau, double mode, const DurationModel& dm) {
  if (tau <= dm.tau_min) return 0.0;
  if (tau >= dm.tau_max) return 1.0;
  if (tau <= mode) return (tau - dm.tau_min) * (tau - dm.tau_min) / (dm.range() * (mode - dm.tau_min));
  return 1.0 - (dm.tau_max - tau) * (dm.tau_max - tau) / (dm.range() * (dm.tau_max - mode));
}

double sample_duration(Rng& rng, double mode, const DurationModel& dm) {
  if (mode < dm.tau_min || mode > dm.tau_max) throw std::invalid_argument("mode outside [tau_min, tau_max]");
  const double u = rng.uniform();
  const double split = (mode - dm.tau_min) / dm.range();
  if (u < split) return dm.tau_min + std::sqrt(u * dm.range() * (mode - dm.tau_min));
  return dm.tau_max - std::sqrt((1.0 - u) * dm.range() * (dm.tau_max - mode));
}

double bc_predict(const Mlp& model, double ego_v, double headway, double leader_v) {
  if (model.update_count == 0) throw std::invalid_argument("behavioral-cloning model is untrained");
  const double x[3] = {ego_v, headway, leader_v};
  const double a = forward(model, x).front();
  if (!std::isfinite(a)) return -kMaxAccel;
  return std::clamp(a, -kMaxAccel, kMaxAccel);
}

BcTrainResult train_bc(const std::vector<BcRow>& rows, const TrainConfig& cfg, const std::vector<int>& layers,
                       double validation_fraction) {
  if (rows.empty()) throw std::invalid_argument("empty behavioral-cloning dataset");
  if (layers.front() != 3 || layers.back() != 1) throw std::invalid_argument("BC network must map 3 -> 1");
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, 0xbc));
  rng.shuffle(std::span<std::size_t>(order));
  auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(rows.size())));
  if (n_val >= rows.size()) n_val = 0;
  Batch train_set, val_set;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& r = rows[order[k]];
    auto& dst = k < n_val ? val_set : train_set;
    dst.x.push_back({r.ego_v, r.headway, r.leader_v});
    dst.y.push_back({r.accel});
  }
  BcTrainResult result{Mlp(layers, OutputActivation::Identity, derive_seed(cfg.seed, 1)), {}};
  result.model.normalizer = Normalizer::fit(train_set.x);
  result.history = train(result.model, train_set, val_set, LossKind::Mse, cfg);
  return result;
}

std::vector<BcRow> synthetic_bc_rows(std::size_t n, std::uint64_t seed, const IdmParams& idm, double noise_std) {
  Rng rng(seed);
  std::vector<BcRow> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    BcRow r;
    r.ego_v = rng.uniform(0.0, 12.0);
    r.headway = rng.uniform(1.0, 12.0);
    r.leader_v = std::max(0.0, r.ego_v + rng.uniform(-3.0, 3.0));
    const double a = idm_accel(r.ego_v, r.headway, r.leader_v, idm) + noise_std * rng.normal();
    r.accel = std::clamp(a, -kMaxAccel, kMaxAccel);
    rows.push_back(r);
  }
  return rows;
}

IntensityDraw sample_intensity(Rng& rng, double headway, const Mlp* bc, double ego_v, double leader_v,
                               double fallback_accel) {
  if (headway < 0.0) throw std::invalid_argument("headway must be >= 0");
  if (headway < kImitationHeadway) {
    const double a = bc ? bc_predict(*bc, ego_v, headway, leader_v)
                        : std::clamp(fallback_accel, -kMaxAccel, kMaxAccel);
    return {a, PerturbationSource::Imitation};
  }
  return {rng.uniform(-kMaxAccel, kMaxAccel), PerturbationSource::Sampled};
}

Schedule sample_schedule(Rng& rng, int vehicle_id, long window_start, long window_steps, double dt,
                         const DurationModel& dm) {
  if (window_steps < 1) throw std::invalid_argument("perturbation window must cover >= 1 step");
  dm.validate();
  Schedule s;
  const double minutes = static_cast<double>(window_steps) * dt / 60.0;
  long count = std::lround(rng.uniform(10.0, 30.0) * minutes / 6.0);
  const long slot = static_cast<long>(std::ceil(dm.tau_max / dt - 1e-9));
  const long fit = window_steps / slot;
  if (count > fit) {
    s.warnings.push_back("vehicle " + std::to_string(vehicle_id) + ": window of " +
                         std::to_string(window_steps) + " steps fits " + std::to_string(fit) + " of " +
                         std::to_string(count) + " events");
    count = fit;
  }
  const long slack = window_steps - count * slot;
  std::vector<long> offsets(static_cast<std::size_t>(count));
  for (auto& o : offsets) o = static_cast<long>(rng.index(static_cast<std::size_t>(slack) + 1));
  std::sort(offsets.begin(), offsets.end());
  for (long i = 0; i < count; ++i) {
    PerturbationEvent e;
    e.vehicle_id = vehicle_id;
    e.start_step = window_start + i * slot + offsets[static_cast<std::size_t>(i)];
    e.duration_steps = slot;
    s.events.push_back(e);
  }
  return s;
}

void fire_event(PerturbationEvent& event, Rng& rng, double headway, const Mlp* bc, double ego_v,
                double leader_v, double fallback_accel, const DurationModel& dm, double dt) {
  const auto draw = sample_intensity(rng, headway, bc, ego_v, leader_v, fallback_accel);
  event.intensity = draw.value;
  event.source = draw.source;
  const double tau = sample_duration(rng, duration_mode(draw.value, dm), dm);
  event.duration_steps = std::max(1L, std::lround(tau / dt));
}

}  // namespace carl
