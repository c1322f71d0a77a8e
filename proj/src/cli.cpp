#include "srmq/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "srmq/errors.hpp"
#include "srmq/format.hpp"
#include "srmq/lqt_oracle.hpp"

namespace srmq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value, const std::string& why) {
  throw ValidationError("config: [" + section + "] " + key + " = '" + value + "': " + why);
}

double to_double(const std::string& sec, const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d || !std::isfinite(*d)) bad_value(sec, key, v, "expected a finite number");
  return *d;
}

template <typename Int>
Int to_int(const std::string& sec, const std::string& key, const std::string& v) {
  Int out{};
  const char* first = v.data();
  const char* last = v.data() + v.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last || first == last) {
    bad_value(sec, key, v, "expected an integer");
  }
  return out;
}

bool to_bool(const std::string& sec, const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  bad_value(sec, key, v, "expected true or false");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

// Inline comments start at a ';' or '#' that follows whitespace.
std::string strip_comment(const std::string& v) {
  for (std::size_t n = 1; n < v.size(); ++n) {
    if ((v[n] == ';' || v[n] == '#') && (v[n - 1] == ' ' || v[n - 1] == '\t')) {
      return trim(v.substr(0, n));
    }
  }
  return trim(v);
}

// "step:amplitude, step:amplitude"
std::vector<StepEvent> to_events(const std::string& sec, const std::string& key,
                                 const std::string& v) {
  std::vector<StepEvent> events;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) bad_value(sec, key, v, "events are step:amplitude pairs");
    StepEvent ev;
    ev.step = to_int<std::int64_t>(sec, key, trim(item.substr(0, colon)));
    ev.amplitude = to_double(sec, key, trim(item.substr(colon + 1)));
    events.push_back(ev);
  }
  return events;
}

std::string from_events(const std::vector<StepEvent>& events) {
  std::string out;
  for (const auto& ev : events) {
    if (!out.empty()) out += ", ";
    out += std::to_string(ev.step) + ":" + format_double(ev.amplitude);
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(Config&, const std::string&, const fs::path&)> set;
  std::function<std::string(const Config&)> get;
};

template <typename Acc>
Field real(std::string sec, std::string key, Acc acc) {
  return {sec, key,
          [=](Config& c, const std::string& v, const fs::path&) { acc(c) = to_double(sec, key, v); },
          [=](const Config& c) { return format_double(acc(c)); }};
}

template <typename Int, typename Acc>
Field integer(std::string sec, std::string key, Acc acc) {
  return {sec, key,
          [=](Config& c, const std::string& v, const fs::path&) { acc(c) = to_int<Int>(sec, key, v); },
          [=](const Config& c) { return std::to_string(acc(c)); }};
}

template <typename Acc>
Field boolean(std::string sec, std::string key, Acc acc) {
  return {sec, key,
          [=](Config& c, const std::string& v, const fs::path&) { acc(c) = to_bool(sec, key, v); },
          [=](const Config& c) { return std::string(acc(c) ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(real("motor", "resistance", [](auto& c) -> auto& { return c.motor.resistance; }));
    f.push_back(real("motor", "sample_period", [](auto& c) -> auto& { return c.motor.sample_period; }));
    f.push_back(real("motor", "l_unaligned", [](auto& c) -> auto& { return c.motor.l_unaligned; }));
    f.push_back(real("motor", "l_aligned", [](auto& c) -> auto& { return c.motor.l_aligned; }));
    f.push_back(real("motor", "rotor_pitch", [](auto& c) -> auto& { return c.motor.rotor_pitch; }));
    f.push_back(real("motor", "speed_rpm", [](auto& c) -> auto& { return c.motor.speed_rpm; }));
    f.push_back(real("motor", "v_dc", [](auto& c) -> auto& { return c.motor.v_dc; }));
    f.push_back(real("motor", "i_nominal", [](auto& c) -> auto& { return c.motor.i_nominal; }));

    f.push_back({"surface", "file",
                 [](Config& c, const std::string& v, const fs::path& base) {
                   if (v.empty()) {
                     c.surface_file.reset();
                   } else {
                     const fs::path p(v);
                     c.surface_file = p.is_absolute() ? p : fs::absolute(base / p);
                   }
                 },
                 [](const Config& c) { return c.surface_file ? c.surface_file->string() : ""; }});
    f.push_back(real("surface", "kappa", [](auto& c) -> auto& { return c.surface.kappa; }));
    f.push_back(real("surface", "i_sat", [](auto& c) -> auto& { return c.surface.i_sat; }));
    f.push_back(integer<int>("surface", "theta_intervals", [](auto& c) -> auto& { return c.surface.theta_intervals; }));
    f.push_back(integer<int>("surface", "current_nodes", [](auto& c) -> auto& { return c.surface.current_nodes; }));
    f.push_back(real("surface", "i_max", [](auto& c) -> auto& { return c.surface.i_max; }));

    f.push_back(integer<int>("grid", "theta_nodes", [](auto& c) -> auto& { return c.grid.theta_nodes; }));
    f.push_back(integer<int>("grid", "current_nodes", [](auto& c) -> auto& { return c.grid.current_nodes; }));
    f.push_back(real("grid", "i_max", [](auto& c) -> auto& { return c.grid.i_max; }));

    f.push_back(real("training", "gamma", [](auto& c) -> auto& { return c.training.gamma; }));
    f.push_back(real("training", "Q", [](auto& c) -> auto& { return c.training.Q; }));
    f.push_back(real("training", "R_u", [](auto& c) -> auto& { return c.training.R_u; }));
    f.push_back(real("training", "C", [](auto& c) -> auto& { return c.training.C; }));
    f.push_back(real("training", "F", [](auto& c) -> auto& { return c.training.F; }));
    f.push_back(real("training", "K0_x", [](auto& c) -> auto& { return c.training.K0_x; }));
    f.push_back(real("training", "K0_r", [](auto& c) -> auto& { return c.training.K0_r; }));
    f.push_back(real("training", "tau", [](auto& c) -> auto& { return c.training.tau; }));
    f.push_back(real("training", "dither_fraction", [](auto& c) -> auto& { return c.training.dither_fraction; }));
    f.push_back(integer<int>("training", "tuples", [](auto& c) -> auto& { return c.training.tuples; }));
    f.push_back(real("training", "gain_tol", [](auto& c) -> auto& { return c.training.gain_tol; }));
    f.push_back(integer<int>("training", "max_iterations", [](auto& c) -> auto& { return c.training.max_iterations; }));
    f.push_back(real("training", "safety_factor", [](auto& c) -> auto& { return c.training.safety_factor; }));
    f.push_back(real("training", "reference_level", [](auto& c) -> auto& { return c.training.reference_level; }));
    f.push_back(integer<std::uint64_t>("training", "seed", [](auto& c) -> auto& { return c.training.seed; }));
    f.push_back(integer<unsigned>("training", "threads", [](auto& c) -> auto& { return c.training.threads; }));

    f.push_back({"scenario", "controller",
                 [](Config& c, const std::string& v, const fs::path&) { c.scenario.controller = v; },
                 [](const Config& c) { return c.scenario.controller; }});
    f.push_back(integer<std::int64_t>("scenario", "duration", [](auto& c) -> auto& { return c.scenario.duration; }));
    f.push_back(real("scenario", "amplitude", [](auto& c) -> auto& { return c.scenario.amplitude; }));
    f.push_back(real("scenario", "theta_on", [](auto& c) -> auto& { return c.scenario.theta_on; }));
    f.push_back(real("scenario", "theta_off", [](auto& c) -> auto& { return c.scenario.theta_off; }));
    f.push_back({"scenario", "events",
                 [](Config& c, const std::string& v, const fs::path&) {
                   c.scenario.events = to_events("scenario", "events", v);
                 },
                 [](const Config& c) { return from_events(c.scenario.events); }});
    f.push_back(boolean("scenario", "online_learning", [](auto& c) -> auto& { return c.scenario.online_learning; }));
    f.push_back(real("scenario", "dither_v", [](auto& c) -> auto& { return c.scenario.dither_v; }));
    f.push_back(real("scenario", "resistance_scale", [](auto& c) -> auto& { return c.scenario.resistance_scale; }));
    f.push_back(real("scenario", "start_theta", [](auto& c) -> auto& { return c.scenario.start_theta; }));
    f.push_back(real("scenario", "delta_band", [](auto& c) -> auto& { return c.scenario.delta_band; }));
    f.push_back(integer<int>("scenario", "core_row", [](auto& c) -> auto& { return c.scenario.core_row; }));
    f.push_back(integer<int>("scenario", "core_col", [](auto& c) -> auto& { return c.scenario.core_col; }));
    f.push_back(real("scenario", "gain_clamp", [](auto& c) -> auto& { return c.scenario.gain_clamp; }));
    f.push_back(real("scenario", "trust_region", [](auto& c) -> auto& { return c.scenario.trust_region; }));
    f.push_back(real("scenario", "safety_factor", [](auto& c) -> auto& { return c.scenario.safety_factor; }));
    f.push_back(integer<int>("scenario", "skip_cycles", [](auto& c) -> auto& { return c.scenario.skip_cycles; }));
    f.push_back(integer<std::uint64_t>("scenario", "seed", [](auto& c) -> auto& { return c.scenario.seed; }));
    return f;
  }();
  return table;
}

void check(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("config: " + what);
}

json gain_json(const PolicyGain& g) { return json::array({g.k_x(), g.k_r()}); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string trace_extension(TraceFormat format) {
  return format == TraceFormat::Csv ? ".csv" : ".jsonl";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json metrics_json(const SimTrace& trace, const std::optional<Metrics>& m) {
  json j;
  j["steps"] = trace.records.size();
  j["aborted"] = trace.aborted;
  j["diagnostic"] = trace.diagnostic;
  j["fallback_count"] = trace.fallback_count;
  j["online_updates"] = trace.online_updates;
  j["rate_limited_updates"] = trace.rate_limited_updates;
  if (!m) {
    j["metrics"] = nullptr;
    return j;
  }
  json windows = json::array();
  for (const auto& w : m->windows) {
    windows.push_back({{"first_k", w.first_k},
                       {"samples", w.samples},
                       {"amplitude", w.amplitude},
                       {"rmse", w.rmse},
                       {"rmse_rel", w.rmse_rel},
                       {"ripple", w.ripple},
                       {"settling_steps", w.settling_steps},
                       {"settled", w.settled},
                       {"mean_dk", w.mean_dk}});
  }
  j["metrics"] = {{"rmse", m->rmse},
                  {"rmse_rel", m->rmse_rel},
                  {"ripple", m->ripple},
                  {"mean_settling_steps", m->mean_settling_steps},
                  {"final_mean_dk", m->final_mean_dk},
                  {"evaluated_windows", m->evaluated_windows},
                  {"windows", windows}};
  return j;
}

// Metrics are unavailable when an aborted run never reached a window.
std::optional<Metrics> try_metrics(const SimTrace& trace, const Scenario& scenario) {
  try {
    return compute_metrics(trace, scenario);
  } catch (const ValidationError&) {
    if (trace.aborted) return std::nullopt;
    throw;
  }
}

QCoreTable load_checked_table(const Config& config, const fs::path& table_path) {
  if (table_path.empty()) throw ValidationError("run: --table is required for this controller");
  LoadedTable loaded = load_table(table_path);
  const std::uint64_t expected = motor_params_hash(config.motor);
  if (loaded.params_hash != expected) {
    std::ostringstream os;
    os << "table " << table_path.string() << " was trained for different motor parameters"
       << " (hash " << std::hex << std::setw(16) << std::setfill('0') << loaded.params_hash
       << ", config gives " << std::setw(16) << expected << std::dec
       << "); retrain with 'srmq train' for this config";
    throw ValidationError(os.str());
  }
  if (std::abs(loaded.table.gamma() - config.training.gamma) > 1e-12) {
    throw ValidationError("table " + table_path.string() + " was trained with gamma " +
                          format_double(loaded.table.gamma()) + " but the config has " +
                          format_double(config.training.gamma));
  }
  if (std::abs(loaded.table.grid().pitch - config.motor.rotor_pitch) > 1e-9) {
    throw ValidationError("table " + table_path.string() + " covers a different rotor pitch");
  }
  return std::move(loaded.table);
}

std::string metric_cell(const std::optional<Metrics>& m, double Metrics::*field) {
  return m ? format_double((*m).*field) : std::string("n/a");
}

}  // namespace

void Config::validate() const {
  motor.validate();
  check(surface.kappa >= 0, "[surface] kappa must be >= 0");
  check(surface.theta_intervals >= 2, "[surface] theta_intervals must be >= 2");
  check(surface.current_nodes >= 2, "[surface] current_nodes must be >= 2");
  if (surface_file) {
    check(fs::exists(*surface_file), "[surface] file " + surface_file->string() + " does not exist");
  }
  check(grid.theta_nodes >= 1 && grid.current_nodes >= 1, "[grid] node counts must be >= 1");
  check(grid.i_max > 0, "[grid] i_max must be > 0");
  check(training.gamma > 0 && training.gamma <= 1, "[training] gamma must be in (0, 1]");
  check(training.Q >= 0, "[training] Q must be >= 0");
  check(training.R_u > 0, "[training] R_u must be > 0");
  check(training.tau > 0, "[training] tau must be > 0");
  check(training.dither_fraction >= 0, "[training] dither_fraction must be >= 0");
  check(training.tuples >= 6, "[training] tuples must be >= 6");
  check(training.gain_tol > 0, "[training] gain_tol must be > 0");
  check(training.max_iterations >= 1, "[training] max_iterations must be >= 1");
  check(training.safety_factor > 0, "[training] safety_factor must be > 0");
  check(training.reference_level > 0, "[training] reference_level must be > 0");
  parse_controller(scenario.controller);
  check(scenario.duration > 0, "[scenario] duration must be > 0");
  check(scenario.core_row >= 0 && scenario.core_col >= 0, "[scenario] core indices must be >= 0");
  check(scenario.amplitude >= 0, "[scenario] amplitude must be >= 0");
  for (const auto& ev : scenario.events) {
    check(ev.step >= 0 && ev.amplitude >= 0, "[scenario] events need step >= 0 and amplitude >= 0");
  }
}

Config parse_config(const std::string& text, const fs::path& base_dir) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError("config: line " + std::to_string(e.line()) + ": " + e.message());
  }
  Config config;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ValidationError("config: key '" + section + "' outside a [section]");
    }
    for (const auto& [key, node] : body) {
      const auto& all = fields();
      const auto it = std::find_if(all.begin(), all.end(), [&](const Field& f) {
        return f.section == section && f.key == key;
      });
      if (it == all.end()) throw ValidationError("config: unknown key [" + section + "] " + key);
      it->set(config, strip_comment(node.data()), base_dir);
    }
  }
  config.validate();
  return config;
}

Config load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

std::string dump_config(const Config& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      out << (section.empty() ? "" : "\n") << '[' << f.section << "]\n";
      section = f.section;
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
  return out.str();
}

void apply_seed(Config& config, std::uint64_t seed) {
  config.training.seed = seed;
  config.scenario.seed = seed;
}

InductanceSurface build_surface(const Config& config) {
  if (config.surface_file) {
    InductanceSurface s = InductanceSurface::load_csv(*config.surface_file);
    if (std::abs(s.pitch() - config.motor.rotor_pitch) > 1e-9 * config.motor.rotor_pitch) {
      throw ValidationError("surface file " + config.surface_file->string() +
                            " does not span one rotor pitch");
    }
    return s;
  }
  return default_surface(config.motor, config.surface);
}

GridSpec build_grid(const Config& config) {
  return GridSpec::uniform(config.motor.rotor_pitch, config.grid.theta_nodes,
                           config.grid.current_nodes, config.grid.i_max);
}

TableTrainConfig build_train_config(const Config& config) {
  const TrainingConfig& t = config.training;
  TableTrainConfig out;
  out.C = t.C;
  out.F = t.F;
  out.Q = t.Q;
  out.R_u = t.R_u;
  out.gamma = t.gamma;
  out.K0 = PolicyGain(t.K0_x, t.K0_r);
  out.learner.tuples_per_iteration = t.tuples;
  out.learner.dither_amplitude = t.dither_fraction * config.motor.v_dc;
  out.learner.gain_tol = t.gain_tol;
  out.learner.max_iterations = t.max_iterations;
  out.learner.safety_current = t.safety_factor * config.motor.i_nominal;
  out.learner.seed = t.seed;
  out.reference_level = t.reference_level;
  out.tau = t.tau;
  out.threads = t.threads;
  return out;
}

Scenario build_scenario(const Config& config, const InductanceSurface& surface) {
  const ScenarioConfig& sc = config.scenario;
  Scenario s;
  s.motor = config.motor;
  s.surface = surface;
  s.reference.amplitude = sc.amplitude;
  s.reference.theta_on = sc.theta_on;
  s.reference.theta_off = sc.theta_off;
  s.reference.events = sc.events;
  s.controller = parse_controller(sc.controller);
  s.duration = sc.duration;
  s.seed = sc.seed;
  s.online_learning = sc.online_learning;
  s.dither = sc.dither_v;
  s.resistance_scale = sc.resistance_scale;
  s.start_theta = sc.start_theta;
  s.delta_band = sc.delta_band;
  s.core_row = std::size_t(sc.core_row);
  s.core_col = std::size_t(sc.core_col);
  s.cost = make_tracking_cost(config.training.C, config.training.Q, config.training.R_u,
                              config.training.gamma);
  s.online.gain_clamp = sc.gain_clamp;
  s.online.trust_region = sc.trust_region;
  s.safety_factor = sc.safety_factor;
  s.skip_cycles = sc.skip_cycles;
  s.validate();
  return s;
}

RunReport cmd_train(const Config& config, const fs::path& table_out) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  if (table_out.empty()) throw ValidationError("train: --out is required");
  const InductanceSurface surface = build_surface(config);
  const GridSpec grid = build_grid(config);
  TrainedTable trained = train_table(config.motor, surface, grid, build_train_config(config));

  // A learned gain that strays from the Riccati gain of its frozen plant
  // means the data did not pin down the Q-kernel.
  constexpr double kMaxOracleGap = 0.01;
  std::ostringstream off;
  int off_count = 0;
  for (const auto& r : trained.reports) {
    if (r.oracle_gap > kMaxOracleGap) {
      ++off_count;
      off << "\n  node (" << r.row << ", " << r.col << ") gap " << format_double(r.oracle_gap);
    }
  }
  if (off_count) {
    throw ConvergenceError("train: " + std::to_string(off_count) +
                               " core(s) differ from the Riccati gain by more than 1%" + off.str(),
                           0.0);
  }
  save_table(trained.table, motor_params_hash(config.motor), table_out);

  RunReport report;
  report.artifacts.push_back(table_out);
  std::ostringstream text;
  json cores = json::array();
  double max_gap = 0.0;
  int max_it = 0;
  text << "trained " << grid.rows() << " x " << grid.cols() << " Q-cores -> "
       << table_out.string() << "\n";
  text << "row col theta_deg i_A L_H iterations K1 K2 oracle_K1 oracle_K2 gap\n";
  for (const auto& r : trained.reports) {
    max_gap = std::max(max_gap, r.oracle_gap);
    max_it = std::max(max_it, r.iterations);
    text << r.row << ' ' << r.col << ' ' << format_double(r.theta) << ' '
         << format_double(r.current) << ' ' << format_double(r.inductance) << ' '
         << r.iterations << ' ' << format_double(r.gain.k_x()) << ' '
         << format_double(r.gain.k_r()) << ' ' << format_double(r.oracle_gain.k_x()) << ' '
         << format_double(r.oracle_gain.k_r()) << ' ' << format_double(r.oracle_gap) << '\n';
    cores.push_back({{"row", r.row},
                     {"col", r.col},
                     {"theta_deg", r.theta},
                     {"current_A", r.current},
                     {"inductance_H", r.inductance},
                     {"iterations", r.iterations},
                     {"K", gain_json(r.gain)},
                     {"oracle_K", gain_json(r.oracle_gain)},
                     {"oracle_gap", r.oracle_gap}});
  }
  text << "max oracle gap " << format_double(max_gap) << ", max iterations " << max_it
       << ", " << std::fixed << std::setprecision(3) << seconds_since(start) << " s\n";
  report.text = text.str();
  report.json = json{{"command", "train"},
                     {"table", table_out.string()},
                     {"params_hash", motor_params_hash(config.motor)},
                     {"max_oracle_gap", max_gap},
                     {"max_iterations", max_it},
                     {"cores", cores},
                     {"artifacts", json::array({table_out.string()})}}
                    .dump(2);
  return report;
}

RunReport cmd_run(const Config& config, const fs::path& table_path, const fs::path& out_dir,
                  TraceFormat format) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  if (out_dir.empty()) throw ValidationError("run: --out is required");
  const Scenario scenario = build_scenario(config, build_surface(config));
  std::optional<QCoreTable> table;
  if (scenario.controller != ControllerKind::DeltaModulation) {
    table = load_checked_table(config, table_path);
  }
  const SimTrace trace = table ? run_closed_loop(scenario, *table) : run_closed_loop(scenario);
  const std::optional<Metrics> metrics = try_metrics(trace, scenario);

  fs::create_directories(out_dir);
  RunReport report;
  const fs::path trace_path = out_dir / ("trace" + trace_extension(format));
  export_trace(trace, trace_path, format);
  report.artifacts.push_back(trace_path);
  const fs::path config_path = out_dir / "effective.ini";
  write_text(config_path, dump_config(config));
  report.artifacts.push_back(config_path);
  if (table && scenario.online_learning) {
    const fs::path learned = out_dir / "table_learned.txt";
    save_table(*table, motor_params_hash(config.motor), learned);
    report.artifacts.push_back(learned);
  }

  json j = metrics_json(trace, metrics);
  j["command"] = "run";
  j["controller"] = to_string(scenario.controller);
  const fs::path metrics_path = out_dir / "metrics.json";
  report.artifacts.push_back(metrics_path);
  json artifacts = json::array();
  for (const auto& a : report.artifacts) artifacts.push_back(a.string());
  j["artifacts"] = artifacts;
  write_text(metrics_path, j.dump(2) + "\n");
  report.json = j.dump(2);

  std::ostringstream text;
  text << "controller " << to_string(scenario.controller) << ", " << trace.records.size()
       << " steps, " << std::fixed << std::setprecision(3) << seconds_since(start) << " s\n";
  text.unsetf(std::ios::floatfield);
  if (metrics) {
    text << "rmse_A=" << format_double(metrics->rmse)
         << " rmse_rel=" << format_double(metrics->rmse_rel)
         << " ripple_A=" << format_double(metrics->ripple)
         << " settling_steps=" << format_double(metrics->mean_settling_steps)
         << " final_mean_dk=" << format_double(metrics->final_mean_dk)
         << " windows=" << metrics->evaluated_windows << '\n';
  }
  if (trace.online_updates || trace.rate_limited_updates) {
    text << "online_updates=" << trace.online_updates
         << " rate_limited=" << trace.rate_limited_updates << '\n';
  }
  if (trace.fallback_count) text << "fallbacks=" << trace.fallback_count << '\n';
  for (const auto& a : report.artifacts) text << "wrote " << a.string() << '\n';
  if (trace.aborted) {
    text << trace.diagnostic << '\n';
    report.exit_code = kExitSafety;
  }
  report.text = text.str();
  return report;
}

RunReport cmd_compare(const Config& config, const fs::path& table_path, const fs::path& out_dir,
                      TraceFormat format) {
  config.validate();
  if (out_dir.empty()) throw ValidationError("compare: --out is required");
  const InductanceSurface surface = build_surface(config);
  Scenario scheduled = build_scenario(config, surface);
  scheduled.controller = ControllerKind::ScheduledQ;
  Scenario delta = scheduled;
  delta.controller = ControllerKind::DeltaModulation;

  QCoreTable table = load_checked_table(config, table_path);
  const SimTrace q_trace = run_closed_loop(scheduled, table);
  const SimTrace d_trace = run_closed_loop(delta);
  const auto q_metrics = try_metrics(q_trace, scheduled);
  const auto d_metrics = try_metrics(d_trace, delta);

  fs::create_directories(out_dir);
  RunReport report;
  const fs::path q_path = out_dir / ("trace_scheduled" + trace_extension(format));
  const fs::path d_path = out_dir / ("trace_delta" + trace_extension(format));
  export_trace(q_trace, q_path, format);
  export_trace(d_trace, d_path, format);
  const fs::path config_path = out_dir / "effective.ini";
  write_text(config_path, dump_config(config));
  const fs::path json_path = out_dir / "compare.json";
  report.artifacts = {q_path, d_path, config_path, json_path};

  json j;
  j["command"] = "compare";
  j["scheduled"] = metrics_json(q_trace, q_metrics);
  j["delta"] = metrics_json(d_trace, d_metrics);
  if (q_metrics && d_metrics && d_metrics->ripple > 0) {
    j["ripple_ratio"] = q_metrics->ripple / d_metrics->ripple;
  } else {
    j["ripple_ratio"] = nullptr;
  }
  json artifacts = json::array();
  for (const auto& a : report.artifacts) artifacts.push_back(a.string());
  j["artifacts"] = artifacts;
  write_text(json_path, j.dump(2) + "\n");
  report.json = j.dump(2);

  std::ostringstream text;
  text << std::left << std::setw(22) << "metric" << std::setw(24) << "scheduled-qlearning"
       << "delta-modulation\n";
  auto row = [&](const char* name, double Metrics::*field) {
    text << std::setw(22) << name << std::setw(24) << metric_cell(q_metrics, field)
         << metric_cell(d_metrics, field) << '\n';
  };
  row("rmse_A", &Metrics::rmse);
  row("rmse_rel", &Metrics::rmse_rel);
  row("ripple_A", &Metrics::ripple);
  row("settling_steps", &Metrics::mean_settling_steps);
  if (!j["ripple_ratio"].is_null()) {
    text << "ripple ratio scheduled/delta = " << format_double(j["ripple_ratio"].get<double>())
         << '\n';
  }
  for (const auto& a : report.artifacts) text << "wrote " << a.string() << '\n';
  for (const SimTrace* t : {&q_trace, &d_trace}) {
    if (t->aborted) {
      text << t->diagnostic << '\n';
      report.exit_code = kExitSafety;
    }
  }
  report.text = text.str();
  return report;
}

RunReport cmd_oracle(const Config& config) {
  config.validate();
  const InductanceSurface surface = build_surface(config);
  const GridSpec grid = build_grid(config);
  const TrainingConfig& t = config.training;
  const PolicyGain K0(t.K0_x, t.K0_r);

  std::ostringstream text;
  json nodes = json::array();
  double max_pi_gap = 0.0;
  text << "row col theta_deg i_A L_H A B P11 P12 P22 are_iterations K1 K2 pi_iterations pi_gap\n";
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      const double theta = grid.theta_nodes[r];
      const double current = grid.current_nodes[c];
      const double L = surface.at(theta, current);
      const PhaseCoefficients pc = discretize(config.motor.resistance, config.motor.sample_period, L);
      const AugmentedModel model = build_augmented(pc.A, pc.B, t.C, t.F, t.Q, t.R_u, t.gamma);
      const AreSolution are = are_fixed_point(model);
      const PolicyGain K = optimal_gain(are.kernel, model);
      const PolicyIterationResult pi = policy_iteration_model_based(model, K0);
      const double gap = (pi.gain.K - K.K).norm();
      max_pi_gap = std::max(max_pi_gap, gap);
      const Eigen::Matrix2d& P = are.kernel.P;
      text << r << ' ' << c << ' ' << format_double(theta) << ' ' << format_double(current)
           << ' ' << format_double(L) << ' ' << format_double(pc.A) << ' '
           << format_double(pc.B) << ' ' << format_double(P(0, 0)) << ' '
           << format_double(P(0, 1)) << ' ' << format_double(P(1, 1)) << ' ' << are.iterations
           << ' ' << format_double(K.k_x()) << ' ' << format_double(K.k_r()) << ' '
           << pi.iterations << ' ' << format_double(gap) << '\n';
      nodes.push_back({{"row", r},
                       {"col", c},
                       {"theta_deg", theta},
                       {"current_A", current},
                       {"inductance_H", L},
                       {"A", pc.A},
                       {"B", pc.B},
                       {"P", {{P(0, 0), P(0, 1)}, {P(1, 0), P(1, 1)}}},
                       {"are_iterations", are.iterations},
                       {"are_residual", are.residual},
                       {"K", gain_json(K)},
                       {"pi_K", gain_json(pi.gain)},
                       {"pi_iterations", pi.iterations},
                       {"pi_gap", gap}});
    }
  }
  text << "max |K_pi - K_are| = " << format_double(max_pi_gap) << '\n';
  RunReport report;
  report.text = text.str();
  report.json = json{{"command", "oracle"}, {"max_pi_gap", max_pi_gap}, {"nodes", nodes}}.dump(2);
  return report;
}

RunReport report_error(int exit_code, const std::string& message) {
  RunReport report;
  report.exit_code = exit_code;
  report.text = "error: " + message + "\n";
  report.json = json{{"error", message}, {"exit_code", exit_code}}.dump(2);
  return report;
}

RunReport guarded(const std::function<RunReport()>& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    return report_error(kExitValidation, e.what());
  } catch (const ConvergenceError& e) {
    return report_error(kExitConvergence, e.what());
  } catch (const RankDeficientError& e) {
    return report_error(kExitConvergence, e.what());
  } catch (const EvaluationError& e) {
    return report_error(kExitConvergence, e.what());
  } catch (const SafetyAbort& e) {
    return report_error(kExitSafety, e.what());
  } catch (const std::exception& e) {
    return report_error(1, e.what());
  }
}

}  // namespace srmq
