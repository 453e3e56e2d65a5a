#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "carl/sim_core.hpp"

namespace carl {

/// gap / closing speed; +inf when not closing.
double ttc(double gap, double closing_speed);
/// closing^2 / (2 gap); 0 when not closing, +inf (and `*collision = true`) at zero gap.
double drac(double gap, double closing_speed, bool* collision = nullptr);

/// Polynomial fuel-rate surrogate in mL/s:
/// c0 + c1 a v + c2 a^2 v + c3 v + c4 v^2 + c5 v^3, floored at the idle rate c0.
struct FuelModel {
  std::array<double, 6> c{};
  std::string name;

  double rate_ml_per_s(double v, double a) const;
};

inline constexpr double kMlPerGallon = 3785.41;
inline constexpr double kMetersPerMile = 1609.344;

FuelModel load_fuel_model(const std::string& path);
/// Table shipped in the data directory.
FuelModel default_fuel_model();

/// Fuel rate in gallons per hour.
double fuel_rate(double v, double a, const FuelModel& m);

struct MetricsWindow {
  long start = 0;
  long end = -1;  // exclusive; -1 means the end of the log
};

/// Miles per gallon over the window, summed across all vehicles.
double fuel_economy(const TrajectoryLog& log, const FuelModel& m, MetricsWindow w = {});
/// Probe-line crossings per hour over the window.
double throughput(const TrajectoryLog& log, double probe_position, MetricsWindow w = {});

struct RolloutMetrics {
  double ttc = 0.0;
  double drac = 0.0;
  double fuel_economy = 0.0;
  double throughput = 0.0;
  bool collision = false;
};

struct MetricsOptions {
  MetricsWindow window;
  double probe_position = 0.0;
  /// 0 reports the instantaneous worst case; p in (0, 50) reports the p-th percentile of TTC and
  /// the (100 - p)-th percentile of DRAC over every vehicle-step sample.
  double percentile = 0.0;
};

/// TTC/DRAC over `vehicles` (all vehicles when empty); FE and throughput over all vehicles.
RolloutMetrics rollout_metrics(const TrajectoryLog& log, const std::vector<int>& vehicles, const FuelModel& m,
                               const MetricsOptions& opt);

struct Stat {
  double mean = 0.0;
  double std = 0.0;
};

/// Population mean/std of values sorted first, so the result ignores input order.
Stat summarize(std::vector<double> values);

struct MetricsReport {
  Stat ttc_worst_rv;
  Stat drac_worst_rv;
  Stat fuel_economy;
  Stat throughput;
  std::vector<RolloutMetrics> rollouts;
  std::vector<int> vehicles;  // empty: worst case over every vehicle
  int collisions = 0;
};

MetricsReport report(const std::vector<TrajectoryLog>& logs, const std::vector<int>& rv_ids, const FuelModel& m,
                     const MetricsOptions& opt);

nlohmann::json to_json(const MetricsReport& r);
inline constexpr std::string_view kReportCsvHeader =
    "rv_type,penetration,ttc_mean,ttc_std,drac_mean,drac_std,fe_mean,fe_std,tput_mean,tput_std";
void write_report_csv_row(const MetricsReport& r, std::string_view rv_type, double penetration, std::ostream& out);

}  // namespace carl
