#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ddrmpc/control.hpp"
#include "ddrmpc/synthetic.hpp"
#include "ddrmpc/uncertainty.hpp"
#include "ddrmpc/weather.hpp"

namespace ddrmpc {

struct RosterEntry {
  ControllerConfig config;
  std::string label;  // report key; empty picks controller_name(config)
};

// One closed-loop experiment: an evaluation series, a training series for
// the data-driven entries, and the roster competing on identical weather.
// Either series can come from a CSV archive or the synthetic generator.
struct SimulationPlan {
  std::string csv_path;  // evaluation records; empty switches to synthetic
  std::uint64_t seed = 1;
  int months = 6;
  SyntheticWeatherParams weather;

  std::string train_csv_path;  // training records; empty switches to synthetic
  std::uint64_t train_seed = 2;
  int train_months = 6;
  TrainPlan training;
  // 0 trains once up front and holds the sets fixed. A positive value
  // refreshes them every so many periods on everything realized so far.
  int retrain_interval_periods = 0;

  std::vector<RosterEntry> roster;
  WaterBalanceParams dynamics;
  double x_min = 30.0;
  double u_max = 10.0;
  HargreavesParams hargreaves;
  double x0 = 40.0;
  std::string output_dir;  // trace CSVs and failure dumps land here

  void validate() const;
};

struct TracePeriod {
  std::int64_t timestamp = 0;
  double x = 0.0;  // level at period start, mm
  double u = 0.0;
  double e = 0.0;  // realized ET over the period
  double p = 0.0;  // realized precipitation
  double ehat = 0.0;  // lead-1 forecasts behind the decision
  double phat = 0.0;
  SolveStatus status = SolveStatus::Optimal;
  double solve_seconds = 0.0;
  bool soft_fallback = false;
  bool clamped = false;       // physical floor at zero engaged
  double clamp_added = 0.0;   // mm the floor injected
};

struct ClosedLoopTrace {
  std::string controller;
  double x0 = 0.0;
  double decay = 0.0;
  double x_min = 0.0;
  std::vector<TracePeriod> periods;
  double x_final = 0.0;
  int clamp_events = 0;
  bool failed = false;   // controller threw; periods holds the prefix
  std::string error;
};

struct SimulationResult {
  std::map<std::string, ClosedLoopTrace> traces;  // by roster label
  std::vector<WeatherRecord> records;
  TrainedUncertainty trained;
  bool trained_used = false;
};

// Runs every roster entry over the same records from plan.x0. Uncertainty
// sets are trained once and shared when any entry needs them; pass
// `pretrained` to skip that step. A controller failure truncates only its
// own trace.
SimulationResult run_closed_loop(const SimulationPlan& plan,
                                 const TrainedUncertainty* pretrained = nullptr);

// Largest absolute gap between the recorded levels and a fresh replay of
// the recorded inputs and weather through the balance equation.
double replay_deviation(const ClosedLoopTrace& trace, const WaterBalanceParams& params);

// Signed water-budget residual of the whole trace:
//   x0 + sum(u - e + p - c x + clamp_added) - x_final.
double conservation_gap(const ClosedLoopTrace& trace);

struct MonthMetrics {
  int year_month = 0;  // year*100 + month
  double irrigation_mm = 0.0;
  double loss_mm = 0.0;  // percolation/runoff, c x per period
  int periods = 0;
  int violations = 0;
  double violation_pct = 0.0;
};

struct MetricsReport {
  std::string controller;
  std::vector<MonthMetrics> months;
  double irrigation_mm = 0.0;
  double loss_mm = 0.0;
  int periods = 0;
  int violations = 0;  // end-of-period levels below x_min
  double violation_pct = 0.0;
  double avg_solve_seconds = 0.0;
  int soft_fallbacks = 0;
  int clamp_events = 0;
  bool failed = false;
};

MetricsReport compute_metrics(const ClosedLoopTrace& trace);

struct SweepCell {
  double p1 = 0.0;
  double p2 = 0.0;
  MetricsReport metrics;
  std::string error;  // set when this cell's run failed; the sweep continues
};

// Parameter grid for the rule controllers: family "open_loop" sweeps (a, b),
// family "rule_based" sweeps (threshold, dose). Each cell reruns the plan
// with a single-entry roster.
struct SweepTable {
  std::string family;
  std::string p1_name;
  std::string p2_name;
  std::vector<SweepCell> cells;
};

SweepTable grid_sweep(const std::string& family, const std::vector<double>& p1_values,
                      const std::vector<double>& p2_values, const SimulationPlan& plan);

// Plan configs are JSON objects with the struct field names; every field is
// optional and missing ones keep their defaults. Roster entries name the
// controller ("open_loop", "rule_based", "cempc", "norm_rmpc", "sp_tracking",
// "ddrmpc") plus its parameters.
SimulationPlan simulation_plan_from_json(const std::string& text);
std::string simulation_plan_to_json(const SimulationPlan& plan);

std::string metrics_to_json(const std::vector<MetricsReport>& reports);
std::vector<MetricsReport> metrics_from_json(const std::string& text);
std::string metrics_table_csv(const std::vector<MetricsReport>& reports);
std::string metrics_table_markdown(const std::vector<MetricsReport>& reports);
// Month-by-month irrigation, one column per controller.
std::string monthly_irrigation_csv(const std::vector<MetricsReport>& reports);
std::string monthly_irrigation_markdown(const std::vector<MetricsReport>& reports);
std::string sweep_to_csv(const SweepTable& table);

void write_trace_csv(const ClosedLoopTrace& trace, const std::string& path);

}  // namespace ddrmpc
