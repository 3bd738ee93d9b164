#include "ddrmpc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ddrmpc {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  static const int base[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : base[m - 1];
}

struct Civil {
  int year;
  int month;
  int day;
};

Civil civil_of(std::int64_t unix_seconds) {
  // Howard Hinnant's civil-from-days, shifted so the era starts 2000-03-01.
  std::int64_t z = unix_seconds / 86400;
  if (unix_seconds % 86400 < 0) --z;
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const int doe = static_cast<int>(z - era * 146097);
  const int yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int y = static_cast<int>(yoe + era * 400);
  const int doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const int mp = (5 * doy + 2) / 153;
  const int d = doy - (153 * mp + 2) / 5 + 1;
  const int m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2 ? 1 : 0), m, d};
}

int day_of_year(const Civil& c) {
  int doy = c.day;
  for (int m = 1; m < c.month; ++m) doy += days_in_month(c.year, m);
  return doy;
}

std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m > 2 ? m - 3 : m + 9) + 2) / 5 +
                       static_cast<unsigned>(d) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

std::string shift_months(const std::string& start_iso, int months) {
  const std::int64_t ts = parse_iso8601(start_iso);
  std::int64_t day = ts / 86400;
  std::int64_t second_of_day = ts % 86400;
  if (second_of_day < 0) {
    --day;
    second_of_day += 86400;
  }
  const Civil c = civil_of(day * 86400);
  const int idx = c.year * 12 + (c.month - 1) + months;
  const int y = idx / 12;
  const int m = idx % 12 + 1;
  const int d = std::min(c.day, days_in_month(y, m));
  return format_iso8601(days_from_civil(y, m, d) * 86400 + second_of_day);
}

void SyntheticWeatherParams::validate() const {
  if (rain_probability < 0.0 || rain_probability > 1.0)
    throw std::invalid_argument("synthetic weather: rain_probability must lie in [0, 1]");
  if (surprise_rate < 0.0 || surprise_rate > 1.0)
    throw std::invalid_argument("synthetic weather: surprise_rate must lie in [0, 1]");
  if (rain_scale <= 0.0) throw std::invalid_argument("synthetic weather: rain_scale must be positive");
  if (p_max <= 0.0) throw std::invalid_argument("synthetic weather: p_max must be positive");
  if (p_noise < 0.0 || temp_noise < 0.0 || t_forecast_noise < 0.0)
    throw std::invalid_argument("synthetic weather: noise scales must be nonnegative");
  if (temp_amplitude < 0.0)
    throw std::invalid_argument("synthetic weather: temp_amplitude must be nonnegative");
  if (horizon < 1) throw std::invalid_argument("synthetic weather: horizon must be at least 1");
  if (period_hours <= 0.0 || std::abs(24.0 / period_hours - std::round(24.0 / period_hours)) > 1e-9)
    throw std::invalid_argument("synthetic weather: period_hours must divide a day evenly");
  hargreaves.validate();
  parse_iso8601(start);
}

std::vector<WeatherRecord> generate_synthetic_weather(std::uint64_t seed, int months,
                                                      const SyntheticWeatherParams& params) {
  params.validate();
  if (months < 1) throw std::invalid_argument("synthetic weather: months must be at least 1");

  const std::int64_t start_ts = parse_iso8601(params.start);
  const auto period_seconds = static_cast<std::int64_t>(std::llround(params.period_hours * 3600.0));
  const int per_day = static_cast<int>(std::lround(24.0 / params.period_hours));

  const Civil start_civil = civil_of(start_ts);
  int total_days = 0;
  for (int k = 0; k < months; ++k) {
    const int idx = start_civil.month - 1 + k;
    total_days += days_in_month(start_civil.year + idx / 12, idx % 12 + 1);
  }
  const int total = total_days * per_day;
  // The forecast consensus and the truth extend past the final record so
  // every record carries its full set of leads.
  const int extended = total + params.horizon - 1;

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution wet(params.rain_probability);
  std::bernoulli_distribution surprise(params.surprise_rate);
  std::exponential_distribution<double> intensity(1.0 / params.rain_scale);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Consensus precipitation forecast first; the realization is drawn around
  // it below, which keeps every error inside [-phat, p_max - phat].
  Eigen::VectorXd consensus = Eigen::VectorXd::Zero(extended);
  for (int i = 0; i < extended; ++i) {
    if (wet(rng)) consensus(i) = std::min(intensity(rng), params.p_max);
  }

  Eigen::VectorXd truth_p = Eigen::VectorXd::Zero(extended);
  for (int i = 0; i < extended; ++i) {
    if (consensus(i) > 0.0) {
      const double drawn = consensus(i) * (1.0 + params.p_noise * gauss(rng));
      truth_p(i) = std::clamp(drawn, 0.0, params.p_max);
    } else if (surprise(rng)) {
      // Unforecast drizzle, deliberately lighter than forecast events.
      truth_p(i) = std::min(0.3 * intensity(rng), params.p_max);
    }
  }

  Eigen::VectorXd truth_t(extended);
  for (int i = 0; i < extended; ++i) {
    const std::int64_t ts = start_ts + static_cast<std::int64_t>(i) * period_seconds;
    const Civil c = civil_of(ts);
    const double doy = day_of_year(c);
    // Phase picked so the sinusoid peaks in mid July.
    const double seasonal = std::sin(2.0 * kPi * (doy - 105.0) / 365.25);
    truth_t(i) = params.temp_base + params.temp_amplitude * seasonal + params.temp_noise * gauss(rng);
  }

  std::vector<WeatherRecord> records(total);
  for (int t = 0; t < total; ++t) {
    WeatherRecord& rec = records[t];
    rec.timestamp = start_ts + static_cast<std::int64_t>(t) * period_seconds;
    rec.p_measured = truth_p(t);
    rec.t_measured = truth_t(t);
    rec.et_measured = hargreaves_et(truth_t(t), params.hargreaves);
    rec.p_forecast = consensus.segment(t, params.horizon);
    rec.t_forecast.resize(params.horizon);
    for (int k = 0; k < params.horizon; ++k) {
      rec.t_forecast(k) = truth_t(t + k) + params.t_forecast_noise * gauss(rng);
    }
  }
  return records;
}

}  // namespace ddrmpc
