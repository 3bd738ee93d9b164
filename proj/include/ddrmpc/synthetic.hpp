#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddrmpc/weather.hpp"

namespace ddrmpc {

// Desk-scale stand-in for a real forecast archive. Precipitation follows a
// seeded compound process: a Bernoulli event per period times a bounded
// positive intensity. The consensus forecast is drawn first and the
// realization is noise around it, so every forecast error lands inside
// [-phat, p_max - phat] by construction. Temperature rides a seasonal
// sinusoid with noise, and realized ET is its Hargreaves image.
struct SyntheticWeatherParams {
  double rain_probability = 0.15;  // forecast wet-period rate
  double rain_scale = 6.0;         // mean wet intensity, mm per period
  double surprise_rate = 0.04;     // rain materializing on a dry forecast
  double p_noise = 0.35;           // relative spread of realized vs forecast
  double p_max = 50.0;             // physical cap, mm per period
  double temp_base = 16.0;         // degC
  double temp_amplitude = 9.0;     // seasonal swing
  double temp_noise = 1.2;         // per-period jitter
  double t_forecast_noise = 0.9;   // forecast temperature error, degC
  int horizon = 8;                 // forecast leads carried per record
  double period_hours = 6.0;
  std::string start = "2023-05-01T00:00:00Z";
  HargreavesParams hargreaves;

  void validate() const;
};

// `months` calendar months of records from the start instant, one per
// period, each carrying the full set of forecast leads. Deterministic per
// seed.
std::vector<WeatherRecord> generate_synthetic_weather(std::uint64_t seed, int months,
                                                      const SyntheticWeatherParams& params);

// The ISO instant shifted by whole calendar months (negative goes back),
// clamping the day to the target month's length.
std::string shift_months(const std::string& start_iso, int months);

}  // namespace ddrmpc
