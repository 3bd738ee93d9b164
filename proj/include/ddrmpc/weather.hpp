#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ddrmpc/dynamics.hpp"

namespace ddrmpc {

// One row of the forecast/measurement series. p_measured is the realized
// cumulative precipitation over the period starting at `timestamp`;
// p_forecast(k-1) / t_forecast(k-1) are the lead-k forecasts issued at
// `timestamp` for the period starting k-1 periods later. et_measured is NaN
// when the column is absent (synthetic mode fills it).
struct WeatherRecord {
  std::int64_t timestamp = 0;  // unix seconds, UTC
  double p_measured = 0.0;
  double t_measured = 0.0;
  double et_measured = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd p_forecast;  // lead steps 1..H
  Eigen::VectorXd t_forecast;
};

struct HargreavesParams {
  double gamma_c = 0.0023;  // crop coefficient
  double ra = 10.0;         // extraterrestrial radiation, mm-equivalent per period
  double td = 10.0;         // annual average daily temperature difference, degC

  void validate() const;
};

// Forecast-error training windows. Window i starts at record start_rows[i];
// step t pairs the lead-(t+1) forecast issued there with the realization at
// record start+t.
struct ErrorDataset {
  std::vector<Eigen::VectorXd> eta_windows;   // ET forecast errors, mm
  std::vector<Eigen::VectorXd> xi_windows;    // precipitation forecast errors, mm
  std::vector<Eigen::VectorXd> phat_windows;  // matching precipitation forecasts, mm
  std::vector<int> start_rows;
  int horizon = 0;
  int skipped_windows = 0;  // windows dropped over gaps or missing values
  std::vector<std::string> warnings;

  int size() const { return static_cast<int>(eta_windows.size()); }
};

double hargreaves_et(double t_mean, const HargreavesParams& params);

// ISO-8601 UTC helpers ("YYYY-MM-DDTHH:MM:SS", optional trailing Z).
std::int64_t parse_iso8601(const std::string& text);
std::string format_iso8601(std::int64_t unix_seconds);
// Year*100 + month of the instant, for monthly aggregation.
int year_month_of(std::int64_t unix_seconds);

// Reads the documented CSV schema:
//   timestamp,p_meas,t_meas,et_meas,p_fc_1..p_fc_H,t_fc_1..t_fc_H
// Records come back sorted by timestamp. Malformed rows raise one error
// listing every offending line; an empty file yields an empty list plus a
// warning.
std::vector<WeatherRecord> ingest_csv(const std::string& path,
                                      std::vector<std::string>* warnings = nullptr);
void write_csv(const std::vector<WeatherRecord>& records, const std::string& path);

ErrorDataset build_error_windows(const std::vector<WeatherRecord>& records,
                                 const WaterBalanceParams& dyn_params,
                                 const HargreavesParams& hargreaves, int stride = 1);

}  // namespace ddrmpc
