#include "ddrmpc/weather.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ddrmpc {

namespace {

// Howard Hinnant's civil calendar conversions, days since 1970-01-01.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int yoe = static_cast<int>(y - era * 400);
  const int doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const int doe = static_cast<int>(z - era * 146097);
  const int yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int yr = static_cast<int>(yoe + era * 400);
  const int doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const int mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = yr + (m <= 2);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto begin = field.find_first_not_of(" \t\r");
    const auto end = field.find_last_not_of(" \t\r");
    fields.push_back(begin == std::string::npos ? std::string()
                                                : field.substr(begin, end - begin + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size() && std::isfinite(out);
}

}  // namespace

void HargreavesParams::validate() const {
  if (!(gamma_c > 0.0) || !(ra > 0.0) || !(td > 0.0)) {
    throw std::invalid_argument("hargreaves parameters must be positive");
  }
}

double hargreaves_et(double t_mean, const HargreavesParams& params) {
  params.validate();
  const double et = params.gamma_c * params.ra * std::sqrt(params.td) * (t_mean + 17.8);
  return std::max(et, 0.0);
}

std::int64_t parse_iso8601(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0, z = 0;
  const int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d%c", &y, &mo, &d, &sep,
                            &h, &mi, &s, &z);
  const bool ok = (n == 7 || (n == 8 && z == 'Z')) && (sep == 'T' || sep == ' ') &&
                  mo >= 1 && mo <= 12 && d >= 1 && d <= 31 && h >= 0 && h < 24 &&
                  mi >= 0 && mi < 60 && s >= 0 && s < 60;
  if (!ok) throw std::invalid_argument("bad ISO-8601 timestamp: " + text);
  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_iso8601(std::int64_t unix_seconds) {
  std::int64_t days = unix_seconds / 86400;
  std::int64_t rem = unix_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d,
                static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                static_cast<int>(rem % 60));
  return buf;
}

int year_month_of(std::int64_t unix_seconds) {
  std::int64_t days = unix_seconds / 86400;
  if (unix_seconds % 86400 < 0) days -= 1;
  int y, m, d;
  civil_from_days(days, y, m, d);
  return y * 100 + m;
}

std::vector<WeatherRecord> ingest_csv(const std::string& path,
                                      std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open weather CSV: " + path);

  std::string line;
  if (!std::getline(in, line)) {
    if (warnings) warnings->push_back("weather CSV is empty: " + path);
    return {};
  }

  const std::vector<std::string> header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_ts = column("timestamp");
  const int c_p = column("p_meas");
  const int c_t = column("t_meas");
  const int c_et = column("et_meas");
  if (c_ts < 0 || c_p < 0 || c_t < 0) {
    throw std::runtime_error(path + ": header must contain timestamp,p_meas,t_meas");
  }
  int horizon = 0;
  while (column("p_fc_" + std::to_string(horizon + 1)) >= 0) ++horizon;
  if (horizon == 0) throw std::runtime_error(path + ": no p_fc_* forecast columns");
  std::vector<int> c_pfc(horizon), c_tfc(horizon);
  for (int k = 0; k < horizon; ++k) {
    c_pfc[k] = column("p_fc_" + std::to_string(k + 1));
    c_tfc[k] = column("t_fc_" + std::to_string(k + 1));
    if (c_tfc[k] < 0) {
      throw std::runtime_error(path + ": missing t_fc_" + std::to_string(k + 1));
    }
  }

  std::vector<WeatherRecord> records;
  std::vector<std::string> errors;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    auto fail = [&](const std::string& what) {
      errors.push_back("line " + std::to_string(line_no) + ": " + what);
    };
    if (static_cast<int>(fields.size()) < static_cast<int>(header.size())) {
      fail("expected " + std::to_string(header.size()) + " fields, got " +
           std::to_string(fields.size()));
      continue;
    }
    WeatherRecord rec;
    try {
      rec.timestamp = parse_iso8601(fields[c_ts]);
    } catch (const std::exception& e) {
      fail(e.what());
      continue;
    }
    bool ok = parse_double(fields[c_p], rec.p_measured) &&
              parse_double(fields[c_t], rec.t_measured);
    if (ok && c_et >= 0 && !fields[c_et].empty()) {
      ok = parse_double(fields[c_et], rec.et_measured);
    }
    rec.p_forecast.resize(horizon);
    rec.t_forecast.resize(horizon);
    for (int k = 0; ok && k < horizon; ++k) {
      ok = parse_double(fields[c_pfc[k]], rec.p_forecast(k)) &&
           parse_double(fields[c_tfc[k]], rec.t_forecast(k));
    }
    if (!ok) {
      fail("unparseable numeric field");
      continue;
    }
    if (rec.p_measured < 0.0) {
      fail("negative measured precipitation");
      continue;
    }
    records.push_back(std::move(rec));
  }
  if (!errors.empty()) {
    std::string msg = path + ": " + std::to_string(errors.size()) + " bad row(s)";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::runtime_error(msg);
  }

  std::stable_sort(records.begin(), records.end(),
                   [](const WeatherRecord& a, const WeatherRecord& b) {
                     return a.timestamp < b.timestamp;
                   });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp == records[i - 1].timestamp) {
      throw std::runtime_error(path + ": duplicate timestamp " +
                               format_iso8601(records[i].timestamp));
    }
  }
  return records;
}

void write_csv(const std::vector<WeatherRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write weather CSV: " + path);
  const int horizon = records.empty() ? 0 : static_cast<int>(records[0].p_forecast.size());
  out << "timestamp,p_meas,t_meas,et_meas";
  for (int k = 1; k <= horizon; ++k) out << ",p_fc_" << k;
  for (int k = 1; k <= horizon; ++k) out << ",t_fc_" << k;
  out << "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    out << ',' << buf;
  };
  for (const auto& rec : records) {
    if (rec.p_forecast.size() != horizon || rec.t_forecast.size() != horizon) {
      throw std::invalid_argument("inconsistent forecast horizon across records");
    }
    out << format_iso8601(rec.timestamp);
    num(rec.p_measured);
    num(rec.t_measured);
    if (std::isnan(rec.et_measured)) {
      out << ',';
    } else {
      num(rec.et_measured);
    }
    for (int k = 0; k < horizon; ++k) num(rec.p_forecast(k));
    for (int k = 0; k < horizon; ++k) num(rec.t_forecast(k));
    out << "\n";
  }
}

ErrorDataset build_error_windows(const std::vector<WeatherRecord>& records,
                                 const WaterBalanceParams& dyn_params,
                                 const HargreavesParams& hargreaves, int stride) {
  dyn_params.validate();
  hargreaves.validate();
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  const int h = dyn_params.horizon_steps;
  const int n = static_cast<int>(records.size());

  ErrorDataset ds;
  ds.horizon = h;
  if (n < h) {
    ds.warnings.push_back("series too short for any window: " + std::to_string(n) +
                          " records, horizon " + std::to_string(h));
    return ds;
  }
  const std::int64_t period_seconds =
      static_cast<std::int64_t>(dyn_params.period_hours * 3600.0);

  for (int start = 0; start + h <= n; start += stride) {
    if (static_cast<int>(records[start].p_forecast.size()) < h) {
      throw std::invalid_argument("record forecast horizon shorter than model horizon");
    }
    bool usable = true;
    Eigen::VectorXd eta(h), xi(h), phat(h);
    for (int t = 0; t < h && usable; ++t) {
      const WeatherRecord& issued = records[start];
      const WeatherRecord& realized = records[start + t];
      if (t + 1 < h && records[start + t + 1].timestamp - realized.timestamp !=
                           period_seconds) {
        usable = false;
        break;
      }
      if (std::isnan(realized.et_measured)) {
        usable = false;
        break;
      }
      phat(t) = issued.p_forecast(t);
      xi(t) = realized.p_measured - issued.p_forecast(t);
      eta(t) = realized.et_measured - hargreaves_et(issued.t_forecast(t), hargreaves);
    }
    if (!usable) {
      ++ds.skipped_windows;
      continue;
    }
    ds.eta_windows.push_back(std::move(eta));
    ds.xi_windows.push_back(std::move(xi));
    ds.phat_windows.push_back(std::move(phat));
    ds.start_rows.push_back(start);
  }
  if (ds.skipped_windows > 0) {
    ds.warnings.push_back(std::to_string(ds.skipped_windows) +
                          " window(s) skipped over gaps or missing ET");
  }
  return ds;
}

}  // namespace ddrmpc
