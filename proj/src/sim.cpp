#include "ddrmpc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>
#include <variant>

#include "ddrmpc/dynamics.hpp"

namespace ddrmpc {

namespace {

std::string effective_label(const RosterEntry& entry) {
  return entry.label.empty() ? controller_name(entry.config) : entry.label;
}

bool needs_trained_sets(const std::vector<RosterEntry>& roster) {
  return std::any_of(roster.begin(), roster.end(), [](const RosterEntry& e) {
    return std::holds_alternative<DdrmpcConfig>(e.config);
  });
}

std::string format_month(int year_month) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", year_month / 100, year_month % 100);
  return buf;
}

std::string num(double v, int decimals) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace

void SimulationPlan::validate() const {
  dynamics.validate();
  hargreaves.validate();
  training.validate();
  if (x_min < 0.0) throw std::invalid_argument("simulation plan: x_min must be nonnegative");
  if (u_max <= 0.0) throw std::invalid_argument("simulation plan: u_max must be positive");
  if (x0 < 0.0) throw std::invalid_argument("simulation plan: x0 must be nonnegative");
  if (retrain_interval_periods < 0)
    throw std::invalid_argument("simulation plan: retrain interval must be nonnegative");
  if (roster.empty()) throw std::invalid_argument("simulation plan: roster is empty");
  std::set<std::string> labels;
  for (const auto& entry : roster) {
    if (!labels.insert(effective_label(entry)).second)
      throw std::invalid_argument("simulation plan: duplicate roster label '" +
                                  effective_label(entry) + "'");
  }
  const bool synthetic_eval = csv_path.empty();
  const bool synthetic_train = train_csv_path.empty() && needs_trained_sets(roster);
  if (synthetic_eval && months < 1)
    throw std::invalid_argument("simulation plan: months must be at least 1");
  if (synthetic_train && train_months < 1)
    throw std::invalid_argument("simulation plan: train_months must be at least 1");
  if (synthetic_eval || synthetic_train) {
    weather.validate();
    if (std::abs(weather.period_hours - dynamics.period_hours) > 1e-9)
      throw std::invalid_argument(
          "simulation plan: synthetic weather and dynamics disagree on period length");
    if (weather.horizon < dynamics.horizon_steps)
      throw std::invalid_argument(
          "simulation plan: synthetic forecasts carry fewer leads than the horizon");
  }
  if (synthetic_train && std::abs(training.p_max - weather.p_max) > 1e-9)
    throw std::invalid_argument(
        "simulation plan: training p_max must match the synthetic weather cap");
}

SimulationResult run_closed_loop(const SimulationPlan& plan, const TrainedUncertainty* pretrained) {
  plan.validate();

  SimulationResult result;
  result.records = plan.csv_path.empty()
                       ? generate_synthetic_weather(plan.seed, plan.months, plan.weather)
                       : ingest_csv(plan.csv_path);
  if (static_cast<int>(result.records.size()) < plan.dynamics.horizon_steps)
    throw std::runtime_error("simulation: evaluation series shorter than one horizon");

  result.trained_used = needs_trained_sets(plan.roster);
  const bool rolling = result.trained_used && plan.retrain_interval_periods > 0;
  std::vector<WeatherRecord> train_records;
  if (result.trained_used && (pretrained == nullptr || rolling)) {
    if (plan.train_csv_path.empty()) {
      // Same calendar window in earlier years, so training sees the season
      // it will be asked to cover.
      SyntheticWeatherParams train_weather = plan.weather;
      train_weather.start =
          shift_months(plan.weather.start, -12 * ((plan.train_months + 11) / 12));
      train_records =
          generate_synthetic_weather(plan.train_seed, plan.train_months, train_weather);
    } else {
      train_records = ingest_csv(plan.train_csv_path);
    }
  }
  if (result.trained_used) {
    if (pretrained != nullptr) {
      result.trained = *pretrained;
    } else {
      const ErrorDataset windows =
          build_error_windows(train_records, plan.dynamics, plan.hargreaves);
      result.trained = train_uncertainty(windows, plan.training);
    }
  }

  // Rolling retraining boundaries are shared across the roster; every entry
  // sees the same refreshed sets at the same periods.
  std::map<int, TrainedUncertainty> retrained_cache;
  auto trained_for_period = [&](int t) -> const TrainedUncertainty* {
    if (!rolling || t < plan.retrain_interval_periods) return &result.trained;
    const int boundary = t - t % plan.retrain_interval_periods;
    auto it = retrained_cache.find(boundary);
    if (it == retrained_cache.end()) {
      std::vector<WeatherRecord> grown = train_records;
      grown.insert(grown.end(), result.records.begin(), result.records.begin() + boundary);
      const ErrorDataset windows = build_error_windows(grown, plan.dynamics, plan.hargreaves);
      it = retrained_cache.emplace(boundary, train_uncertainty(windows, plan.training)).first;
    }
    return &it->second;
  };

  const ConstraintSet cons =
      make_constraints(plan.dynamics.horizon_steps, plan.x_min, plan.u_max);
  const int total = static_cast<int>(result.records.size());

  // Realized ET and the forecast vectors are shared across the roster.
  std::vector<double> e_real(total);
  std::vector<Forecasts> forecasts(total);
  for (int t = 0; t < total; ++t) {
    const WeatherRecord& rec = result.records[t];
    e_real[t] = std::isnan(rec.et_measured) ? hargreaves_et(rec.t_measured, plan.hargreaves)
                                            : rec.et_measured;
    const int avail = static_cast<int>(std::min(rec.p_forecast.size(), rec.t_forecast.size()));
    const int h = std::min(plan.dynamics.horizon_steps, avail);
    if (h < 1)
      throw std::runtime_error("simulation: record " + format_iso8601(rec.timestamp) +
                               " carries no forecast leads");
    forecasts[t].phat = rec.p_forecast.head(h);
    forecasts[t].ehat.resize(h);
    for (int k = 0; k < h; ++k)
      forecasts[t].ehat(k) = hargreaves_et(rec.t_forecast(k), plan.hargreaves);
  }

  for (const auto& entry : plan.roster) {
    const std::string label = effective_label(entry);
    ClosedLoopTrace trace;
    trace.controller = label;
    trace.x0 = plan.x0;
    trace.decay = plan.dynamics.decay;
    trace.x_min = plan.x_min;
    trace.periods.reserve(total);

    const TrainedUncertainty* active = result.trained_used ? &result.trained : nullptr;
    std::optional<Controller> controller;
    controller.emplace(entry.config, plan.dynamics, cons, active, plan.output_dir);
    double x = plan.x0;
    for (int t = 0; t < total; ++t) {
      if (rolling && std::holds_alternative<DdrmpcConfig>(entry.config)) {
        const TrainedUncertainty* want = trained_for_period(t);
        if (want != active) {
          active = want;
          controller.emplace(entry.config, plan.dynamics, cons, active, plan.output_dir);
        }
      }
      TracePeriod period;
      period.timestamp = result.records[t].timestamp;
      period.x = x;
      period.e = e_real[t];
      period.p = result.records[t].p_measured;
      period.ehat = forecasts[t].ehat(0);
      period.phat = forecasts[t].phat(0);
      try {
        period.u = controller.decide(x, forecasts[t], t);
      } catch (const std::exception& ex) {
        trace.failed = true;
        trace.error = ex.what();
        break;
      }
      const DecisionInfo& info = controller.last_decision();
      period.status = info.status;
      period.solve_seconds = info.solve_seconds;
      period.soft_fallback = info.soft_fallback;

      // The balance equation can dip below the physical floor when realized
      // ET outruns a drained store; the floor injects the difference and the
      // audit trail keeps it.
      const double raw = step(x, period.u, period.e, period.p, plan.dynamics);
      if (raw < 0.0) {
        period.clamped = true;
        period.clamp_added = -raw;
        ++trace.clamp_events;
        x = 0.0;
      } else {
        x = raw;
      }
      trace.periods.push_back(period);
    }
    trace.x_final = x;
    result.traces.emplace(label, std::move(trace));
  }
  return result;
}

double replay_deviation(const ClosedLoopTrace& trace, const WaterBalanceParams& params) {
  double x = trace.x0;
  double worst = 0.0;
  for (const TracePeriod& period : trace.periods) {
    worst = std::max(worst, std::abs(x - period.x));
    x = std::max(step(x, period.u, period.e, period.p, params), 0.0);
  }
  return std::max(worst, std::abs(x - trace.x_final));
}

double conservation_gap(const ClosedLoopTrace& trace) {
  double balance = trace.x0;
  for (const TracePeriod& period : trace.periods) {
    balance += period.u - period.e + period.p - trace.decay * period.x + period.clamp_added;
  }
  return balance - trace.x_final;
}

MetricsReport compute_metrics(const ClosedLoopTrace& trace) {
  MetricsReport report;
  report.controller = trace.controller;
  report.failed = trace.failed;
  report.clamp_events = trace.clamp_events;
  report.periods = static_cast<int>(trace.periods.size());

  std::map<int, MonthMetrics> by_month;
  double solve_total = 0.0;
  const double guard = 1e-9;
  for (std::size_t i = 0; i < trace.periods.size(); ++i) {
    const TracePeriod& period = trace.periods[i];
    MonthMetrics& month = by_month[year_month_of(period.timestamp)];
    month.year_month = year_month_of(period.timestamp);
    ++month.periods;
    month.irrigation_mm += period.u;
    month.loss_mm += trace.decay * period.x;
    // Violations are judged on the level each period hands to the next.
    const double x_end = i + 1 < trace.periods.size() ? trace.periods[i + 1].x : trace.x_final;
    if (x_end < trace.x_min - guard) ++month.violations;
    solve_total += period.solve_seconds;
    if (period.soft_fallback) ++report.soft_fallbacks;
  }
  for (auto& [ym, month] : by_month) {
    month.violation_pct = month.periods > 0 ? 100.0 * month.violations / month.periods : 0.0;
    report.irrigation_mm += month.irrigation_mm;
    report.loss_mm += month.loss_mm;
    report.violations += month.violations;
    report.months.push_back(month);
  }
  report.violation_pct =
      report.periods > 0 ? 100.0 * report.violations / report.periods : 0.0;
  report.avg_solve_seconds = report.periods > 0 ? solve_total / report.periods : 0.0;
  return report;
}

SweepTable grid_sweep(const std::string& family, const std::vector<double>& p1_values,
                      const std::vector<double>& p2_values, const SimulationPlan& plan) {
  SweepTable table;
  table.family = family;
  if (family == "open_loop") {
    table.p1_name = "a";
    table.p2_name = "b";
  } else if (family == "rule_based") {
    table.p1_name = "threshold";
    table.p2_name = "dose";
  } else {
    throw std::invalid_argument("grid sweep: unknown family '" + family + "'");
  }
  if (p1_values.empty() || p2_values.empty())
    throw std::invalid_argument("grid sweep: parameter grids must be nonempty");

  SimulationPlan cell_plan = plan;
  for (double p1 : p1_values) {
    for (double p2 : p2_values) {
      ControllerConfig config;
      if (family == "open_loop") {
        config = OpenLoopConfig{p1, p2};
      } else {
        config = RuleBasedConfig{p1, p2};
      }
      cell_plan.roster = {RosterEntry{config, "cell"}};
      const SimulationResult result = run_closed_loop(cell_plan);
      SweepCell cell;
      cell.p1 = p1;
      cell.p2 = p2;
      cell.metrics = compute_metrics(result.traces.at("cell"));
      table.cells.push_back(std::move(cell));
    }
  }
  return table;
}

namespace {

ControllerConfig roster_config_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("controller", std::string());
  if (kind == "open_loop") {
    OpenLoopConfig c;
    c.a = j.value("a", c.a);
    c.b = j.value("b", c.b);
    return c;
  }
  if (kind == "rule_based") {
    RuleBasedConfig c;
    c.threshold = j.value("threshold", c.threshold);
    c.dose = j.value("dose", c.dose);
    return c;
  }
  if (kind == "cempc") return CempcConfig{};
  if (kind == "norm_rmpc") {
    NormRmpcConfig c;
    c.omega = j.value("omega", c.omega);
    return c;
  }
  if (kind == "sp_tracking") {
    SpTrackingConfig c;
    c.setpoint = j.value("setpoint", c.setpoint);
    return c;
  }
  if (kind == "ddrmpc") {
    DdrmpcConfig c;
    const std::string policy = j.value("policy", std::string("gadf"));
    if (policy == "gadf") {
      c.policy = PolicyKind::Gadf;
    } else if (policy == "adf") {
      c.policy = PolicyKind::Adf;
    } else {
      throw std::invalid_argument("plan config: unknown policy '" + policy + "'");
    }
    const std::string cost = j.value("cost", std::string("nominal"));
    if (cost == "expected") {
      c.cost.kind = CostKind::Expected;
    } else if (cost != "nominal") {
      throw std::invalid_argument("plan config: unknown cost '" + cost + "'");
    }
    c.cost.terminal_weight = j.value("terminal_weight", c.cost.terminal_weight);
    return c;
  }
  throw std::invalid_argument("plan config: unknown controller '" + kind + "'");
}

nlohmann::json roster_config_to_json(const ControllerConfig& config) {
  nlohmann::json j;
  if (const auto* ol = std::get_if<OpenLoopConfig>(&config)) {
    j = {{"controller", "open_loop"}, {"a", ol->a}, {"b", ol->b}};
  } else if (const auto* rb = std::get_if<RuleBasedConfig>(&config)) {
    j = {{"controller", "rule_based"}, {"threshold", rb->threshold}, {"dose", rb->dose}};
  } else if (std::holds_alternative<CempcConfig>(config)) {
    j = {{"controller", "cempc"}};
  } else if (const auto* nr = std::get_if<NormRmpcConfig>(&config)) {
    j = {{"controller", "norm_rmpc"}, {"omega", nr->omega}};
  } else if (const auto* sp = std::get_if<SpTrackingConfig>(&config)) {
    j = {{"controller", "sp_tracking"}, {"setpoint", sp->setpoint}};
  } else {
    const auto& dd = std::get<DdrmpcConfig>(config);
    j = {{"controller", "ddrmpc"},
         {"policy", dd.policy == PolicyKind::Gadf ? "gadf" : "adf"},
         {"cost", dd.cost.kind == CostKind::Expected ? "expected" : "nominal"},
         {"terminal_weight", dd.cost.terminal_weight}};
  }
  return j;
}

}  // namespace

SimulationPlan simulation_plan_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  SimulationPlan plan;
  plan.csv_path = j.value("csv_path", plan.csv_path);
  plan.seed = j.value("seed", plan.seed);
  plan.months = j.value("months", plan.months);
  plan.train_csv_path = j.value("train_csv_path", plan.train_csv_path);
  plan.train_seed = j.value("train_seed", plan.train_seed);
  plan.train_months = j.value("train_months", plan.train_months);
  plan.x_min = j.value("x_min", plan.x_min);
  plan.u_max = j.value("u_max", plan.u_max);
  plan.x0 = j.value("x0", plan.x0);
  plan.output_dir = j.value("output_dir", plan.output_dir);

  if (j.contains("dynamics")) {
    const auto& d = j.at("dynamics");
    plan.dynamics.decay = d.value("decay", plan.dynamics.decay);
    plan.dynamics.horizon_steps = d.value("horizon_steps", plan.dynamics.horizon_steps);
    plan.dynamics.period_hours = d.value("period_hours", plan.dynamics.period_hours);
  }
  if (j.contains("hargreaves")) {
    const auto& h = j.at("hargreaves");
    plan.hargreaves.gamma_c = h.value("gamma_c", plan.hargreaves.gamma_c);
    plan.hargreaves.ra = h.value("ra", plan.hargreaves.ra);
    plan.hargreaves.td = h.value("td", plan.hargreaves.td);
  }
  if (j.contains("weather")) {
    const auto& w = j.at("weather");
    SyntheticWeatherParams& sw = plan.weather;
    sw.rain_probability = w.value("rain_probability", sw.rain_probability);
    sw.rain_scale = w.value("rain_scale", sw.rain_scale);
    sw.surprise_rate = w.value("surprise_rate", sw.surprise_rate);
    sw.p_noise = w.value("p_noise", sw.p_noise);
    sw.p_max = w.value("p_max", sw.p_max);
    sw.temp_base = w.value("temp_base", sw.temp_base);
    sw.temp_amplitude = w.value("temp_amplitude", sw.temp_amplitude);
    sw.temp_noise = w.value("temp_noise", sw.temp_noise);
    sw.t_forecast_noise = w.value("t_forecast_noise", sw.t_forecast_noise);
    sw.horizon = w.value("horizon", sw.horizon);
    sw.period_hours = w.value("period_hours", sw.period_hours);
    sw.start = w.value("start", sw.start);
    sw.hargreaves = plan.hargreaves;
  } else {
    plan.weather.hargreaves = plan.hargreaves;
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    plan.training.p_max = t.value("p_max", plan.training.p_max);
    plan.training.min_train_windows =
        t.value("min_train_windows", plan.training.min_train_windows);
    plan.training.split_seed = t.value("split_seed", plan.training.split_seed);
    const std::string split = t.value("split", std::string("chronological"));
    if (split == "random") {
      plan.training.split = SplitRule::Random;
    } else if (split != "chronological") {
      throw std::invalid_argument("plan config: unknown split rule '" + split + "'");
    }
    if (t.contains("budget")) {
      const auto& b = t.at("budget");
      GuaranteeBudget& gb = plan.training.budget;
      gb = GuaranteeBudget::even_split(b.value("epsilon", gb.epsilon), b.value("beta", gb.beta));
      gb.epsilon1 = b.value("epsilon1", gb.epsilon1);
      gb.epsilon2 = b.value("epsilon2", gb.epsilon2);
      gb.beta1 = b.value("beta1", gb.beta1);
      gb.beta2 = b.value("beta2", gb.beta2);
    }
    if (t.contains("svc")) {
      const auto& s = t.at("svc");
      plan.training.svc.nu = s.value("nu", plan.training.svc.nu);
      plan.training.svc.delta = s.value("delta", plan.training.svc.delta);
      plan.training.svc.covariance_ridge =
          s.value("covariance_ridge", plan.training.svc.covariance_ridge);
    }
  }
  if (j.contains("roster")) {
    plan.roster.clear();
    for (const auto& entry : j.at("roster")) {
      plan.roster.push_back(
          {roster_config_from_json(entry), entry.value("label", std::string())});
    }
  }
  return plan;
}

std::string simulation_plan_to_json(const SimulationPlan& plan) {
  nlohmann::json roster = nlohmann::json::array();
  for (const auto& entry : plan.roster) {
    nlohmann::json r = roster_config_to_json(entry.config);
    if (!entry.label.empty()) r["label"] = entry.label;
    roster.push_back(std::move(r));
  }
  const SyntheticWeatherParams& sw = plan.weather;
  const nlohmann::json j = {
      {"csv_path", plan.csv_path},
      {"seed", plan.seed},
      {"months", plan.months},
      {"train_csv_path", plan.train_csv_path},
      {"train_seed", plan.train_seed},
      {"train_months", plan.train_months},
      {"x_min", plan.x_min},
      {"u_max", plan.u_max},
      {"x0", plan.x0},
      {"output_dir", plan.output_dir},
      {"dynamics",
       {{"decay", plan.dynamics.decay},
        {"horizon_steps", plan.dynamics.horizon_steps},
        {"period_hours", plan.dynamics.period_hours}}},
      {"hargreaves",
       {{"gamma_c", plan.hargreaves.gamma_c},
        {"ra", plan.hargreaves.ra},
        {"td", plan.hargreaves.td}}},
      {"weather",
       {{"rain_probability", sw.rain_probability},
        {"rain_scale", sw.rain_scale},
        {"surprise_rate", sw.surprise_rate},
        {"p_noise", sw.p_noise},
        {"p_max", sw.p_max},
        {"temp_base", sw.temp_base},
        {"temp_amplitude", sw.temp_amplitude},
        {"temp_noise", sw.temp_noise},
        {"t_forecast_noise", sw.t_forecast_noise},
        {"horizon", sw.horizon},
        {"period_hours", sw.period_hours},
        {"start", sw.start}}},
      {"training",
       {{"p_max", plan.training.p_max},
        {"min_train_windows", plan.training.min_train_windows},
        {"split", plan.training.split == SplitRule::Random ? "random" : "chronological"},
        {"split_seed", plan.training.split_seed},
        {"budget",
         {{"epsilon", plan.training.budget.epsilon},
          {"beta", plan.training.budget.beta},
          {"epsilon1", plan.training.budget.epsilon1},
          {"epsilon2", plan.training.budget.epsilon2},
          {"beta1", plan.training.budget.beta1},
          {"beta2", plan.training.budget.beta2}}},
        {"svc",
         {{"nu", plan.training.svc.nu},
          {"delta", plan.training.svc.delta},
          {"covariance_ridge", plan.training.svc.covariance_ridge}}}}},
      {"roster", std::move(roster)}};
  return j.dump(2);
}

std::string metrics_to_json(const std::vector<MetricsReport>& reports) {
  nlohmann::json root = nlohmann::json::array();
  for (const MetricsReport& report : reports) {
    nlohmann::json months = nlohmann::json::array();
    for (const MonthMetrics& month : report.months) {
      months.push_back({{"month", format_month(month.year_month)},
                        {"irrigation_mm", month.irrigation_mm},
                        {"loss_mm", month.loss_mm},
                        {"periods", month.periods},
                        {"violations", month.violations},
                        {"violation_pct", month.violation_pct}});
    }
    root.push_back({{"controller", report.controller},
                    {"irrigation_mm", report.irrigation_mm},
                    {"loss_mm", report.loss_mm},
                    {"periods", report.periods},
                    {"violations", report.violations},
                    {"violation_pct", report.violation_pct},
                    {"avg_solve_seconds", report.avg_solve_seconds},
                    {"soft_fallbacks", report.soft_fallbacks},
                    {"clamp_events", report.clamp_events},
                    {"failed", report.failed},
                    {"months", std::move(months)}});
  }
  return root.dump(2);
}

std::string metrics_table_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "controller,irrigation_mm,loss_mm,violation_pct,violations,periods,"
         "avg_solve_seconds,soft_fallbacks,clamp_events,failed\n";
  for (const MetricsReport& r : reports) {
    out << r.controller << ',' << num(r.irrigation_mm, 2) << ',' << num(r.loss_mm, 2) << ','
        << num(r.violation_pct, 3) << ',' << r.violations << ',' << r.periods << ','
        << num(r.avg_solve_seconds, 4) << ',' << r.soft_fallbacks << ',' << r.clamp_events << ','
        << (r.failed ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string metrics_table_markdown(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "| controller | irrigation (mm) | loss (mm) | violations (%) | avg solve (s) |\n";
  out << "|---|---:|---:|---:|---:|\n";
  for (const MetricsReport& r : reports) {
    out << "| " << r.controller << (r.failed ? " (failed)" : "") << " | "
        << num(r.irrigation_mm, 1) << " | " << num(r.loss_mm, 1) << " | "
        << num(r.violation_pct, 2) << " | " << num(r.avg_solve_seconds, 3) << " |\n";
  }
  return out.str();
}

namespace {

std::vector<int> month_union(const std::vector<MetricsReport>& reports) {
  std::set<int> months;
  for (const MetricsReport& r : reports)
    for (const MonthMetrics& m : r.months) months.insert(m.year_month);
  return {months.begin(), months.end()};
}

double month_irrigation(const MetricsReport& report, int year_month, bool* found) {
  for (const MonthMetrics& m : report.months) {
    if (m.year_month == year_month) {
      *found = true;
      return m.irrigation_mm;
    }
  }
  *found = false;
  return 0.0;
}

}  // namespace

std::string monthly_irrigation_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "month";
  for (const MetricsReport& r : reports) out << ',' << r.controller;
  out << '\n';
  for (int ym : month_union(reports)) {
    out << format_month(ym);
    for (const MetricsReport& r : reports) {
      bool found = false;
      const double v = month_irrigation(r, ym, &found);
      out << ',';
      if (found) out << num(v, 2);
    }
    out << '\n';
  }
  return out.str();
}

std::string monthly_irrigation_markdown(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "| month |";
  for (const MetricsReport& r : reports) out << ' ' << r.controller << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < reports.size(); ++i) out << "---:|";
  out << '\n';
  for (int ym : month_union(reports)) {
    out << "| " << format_month(ym) << " |";
    for (const MetricsReport& r : reports) {
      bool found = false;
      const double v = month_irrigation(r, ym, &found);
      out << ' ' << (found ? num(v, 1) : std::string("-")) << " |";
    }
    out << '\n';
  }
  return out.str();
}

std::string sweep_to_csv(const SweepTable& table) {
  std::ostringstream out;
  out << table.p1_name << ',' << table.p2_name
      << ",irrigation_mm,loss_mm,violation_pct,violations,periods\n";
  for (const SweepCell& cell : table.cells) {
    out << num(cell.p1, 4) << ',' << num(cell.p2, 4) << ','
        << num(cell.metrics.irrigation_mm, 2) << ',' << num(cell.metrics.loss_mm, 2) << ','
        << num(cell.metrics.violation_pct, 3) << ',' << cell.metrics.violations << ','
        << cell.metrics.periods << '\n';
  }
  return out.str();
}

void write_trace_csv(const ClosedLoopTrace& trace, const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open trace file " + path);
  out << "timestamp,x,u,e,p,ehat,phat,x_end,status,solve_seconds,soft_fallback,"
         "clamped,clamp_added\n";
  for (std::size_t i = 0; i < trace.periods.size(); ++i) {
    const TracePeriod& period = trace.periods[i];
    const double x_end = i + 1 < trace.periods.size() ? trace.periods[i + 1].x : trace.x_final;
    out << format_iso8601(period.timestamp) << ',' << num(period.x, 6) << ','
        << num(period.u, 6) << ',' << num(period.e, 6) << ',' << num(period.p, 6) << ','
        << num(period.ehat, 6) << ',' << num(period.phat, 6) << ',' << num(x_end, 6) << ','
        << to_string(period.status) << ',' << num(period.solve_seconds, 6) << ','
        << (period.soft_fallback ? 1 : 0) << ',' << (period.clamped ? 1 : 0) << ','
        << num(period.clamp_added, 6) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing trace file " + path);
}

}  // namespace ddrmpc
