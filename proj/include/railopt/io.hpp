#pragma once

// Run configuration (strict JSON), result files and the four run commands.
//
// Numbers in CSV files are written in shortest round-trip form, so parsing an
// emitted value reproduces the binary double exactly. Every file is written
// to a temporary name and renamed into place.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <random>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "railopt/adjoint.hpp"
#include "railopt/admissible.hpp"
#include "railopt/error.hpp"
#include "railopt/forward.hpp"
#include "railopt/model.hpp"
#include "railopt/optimizer.hpp"
#include "railopt/oracle.hpp"
#include "railopt/shape.hpp"

namespace railopt {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class ControlInitKind { zeros, constant, file };

struct ControlInit {
  ControlInitKind kind = ControlInitKind::zeros;
  double value = 0.0;
  std::string path;
};

/// Either modal coefficient lists (missing trailing modes are zero) or a CSV
/// file of grid samples with header x,w0,v0.
struct InitialCondition {
  std::vector<double> q{1.0};
  std::vector<double> v;
  std::string file;
};

struct SweepSettings {
  std::vector<std::size_t> params{0};
  std::vector<int> points{33};
};

struct GradCheckSettings {
  int directions = 10;
  double eps = 1e-5;
  std::uint64_t seed = 1;
  bool random_control = true;
};

struct RunConfig {
  ModelConfig model;
  ShapeParams shape{ShapeFamily::gaussian_bump, {0.5, 0.1}, {{0.1, 0.9}, {0.05, 0.2}}};
  double control_radius = 10.0;
  ControlInit control_init;
  OptimConfig optimizer;
  InitialCondition initial_condition;
  std::string output_dir = "railopt-out";
  SweepSettings sweep;
  GradCheckSettings gradcheck;
};

struct RunOptions {
  std::string output_dir;  // overrides the config when non-empty
  bool physical = false;
};

struct RunSummary {
  std::string command;
  std::string status;
  double J_initial = 0.0;
  double J_final = 0.0;
  KKTResidual kkt;
  int iterations = 0;
  double wall_time = 0.0;
  bool passed = true;
  json details = json::object();
  json config_echo;
  std::vector<std::string> artifacts;
};

// ---------------------------------------------------------------------------
// number formatting

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double x = 0.0;
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("not a number: '" + std::string(s) + "'");
  return x;
}

// ---------------------------------------------------------------------------
// files

inline void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCategory::io, "cannot write " + tmp.string());
    out << content;
    if (!out) throw Error(ErrorCategory::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCategory::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) { row_strings(header); }

  void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ += ',';
      out_ += format_double(values[i]);
    }
    out_ += '\n';
  }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ += ',';
      out_ += cells[i];
    }
    out_ += '\n';
  }

  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

/// Numeric CSV with a mandatory header; returns rows of values.
inline std::vector<std::vector<double>> read_csv(const fs::path& path, const std::vector<std::string>& header) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string expected;
  for (std::size_t i = 0; i < header.size(); ++i) expected += (i ? "," : "") + header[i];
  if (line != expected) throw ConfigError(path.string() + ": expected header '" + expected + "'");
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const auto cell = std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      try {
        row.push_back(parse_double(cell));
      } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (row.size() != header.size())
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " columns");
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// config parsing

namespace detail {

inline void check_keys(const json& obj, std::string_view block, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(block) + " must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || item.key() == a;
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + std::string(block));
  }
}

template <class T>
void read_key(const json& obj, std::string_view block, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(block) + "." + key + " has the wrong type");
  }
}

inline double read_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + " must be a number");
  return j.get<double>();
}

inline std::vector<double> read_number_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_number(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return fs::absolute(path).lexically_normal();
}

inline int line_of_offset(const std::string& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < std::min(offset, text.size()); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

inline void validate(const RunConfig& cfg) {
  validate(cfg.model);
  try {
    validate(cfg.shape);
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::invalid_shape) throw ConfigError(std::string("shape: ") + e.what());
    throw;
  }
  validate(AdmissibleSets{cfg.control_radius, cfg.shape.bounds});
  validate(cfg.optimizer);
  const int n = cfg.model.n_modes;
  if (cfg.initial_condition.file.empty()) {
    if (static_cast<int>(cfg.initial_condition.q.size()) > n || static_cast<int>(cfg.initial_condition.v.size()) > n)
      throw ConfigError("initial_condition lists more modes than n_modes");
  } else if (!fs::exists(cfg.initial_condition.file)) {
    throw ConfigError("initial_condition file not found: " + cfg.initial_condition.file);
  }
  if (cfg.control_init.kind == ControlInitKind::file && !fs::exists(cfg.control_init.path))
    throw ConfigError("control file not found: " + cfg.control_init.path);
  for (std::size_t p : cfg.sweep.params)
    if (p >= cfg.shape.size()) throw ConfigError("sweep.params index out of range");
  if (cfg.sweep.params.empty() || cfg.sweep.params.size() > 2 || cfg.sweep.points.size() != cfg.sweep.params.size())
    throw ConfigError("sweep needs one or two params with matching points");
  for (int p : cfg.sweep.points)
    if (p < 2) throw ConfigError("sweep.points must be at least 2");
  if (cfg.gradcheck.directions < 0) throw ConfigError("gradcheck.directions must be non-negative");
  if (!(cfg.gradcheck.eps >= 1e-7 && cfg.gradcheck.eps <= 1e-3))
    throw ConfigError("gradcheck.eps must lie in [1e-7, 1e-3]");
}

/// Builds a RunConfig from a parsed document; relative paths resolve against base_dir.
inline RunConfig parse_config_json(const json& doc, const fs::path& base_dir) {
  RunConfig cfg;
  detail::check_keys(doc, "config",
                     {"model", "shape", "control", "optimizer", "initial_condition", "output_dir", "sweep", "gradcheck"});

  if (doc.contains("model")) {
    const json& m = doc["model"];
    detail::check_keys(m, "model", {"alpha", "mu", "cd", "gamma", "tau", "n_modes", "n_quad", "dt"});
    detail::read_key(m, "model", "alpha", cfg.model.alpha);
    detail::read_key(m, "model", "mu", cfg.model.mu);
    detail::read_key(m, "model", "cd", cfg.model.cd);
    detail::read_key(m, "model", "gamma", cfg.model.gamma);
    detail::read_key(m, "model", "tau", cfg.model.tau);
    detail::read_key(m, "model", "n_modes", cfg.model.n_modes);
    detail::read_key(m, "model", "n_quad", cfg.model.n_quad);
    detail::read_key(m, "model", "dt", cfg.model.dt);
  }

  if (doc.contains("shape")) {
    const json& s = doc["shape"];
    detail::check_keys(s, "shape", {"family", "values", "bounds"});
    if (s.contains("family")) {
      if (!s["family"].is_string()) throw ConfigError("shape.family must be a string");
      const auto fam = parse_shape_family(s["family"].get<std::string>());
      if (!fam) throw ConfigError("unknown shape family '" + s["family"].get<std::string>() + "'");
      if (*fam != cfg.shape.family && (!s.contains("values") || !s.contains("bounds")))
        throw ConfigError("shape.values and shape.bounds are required for family " + std::string(to_string(*fam)));
      cfg.shape.family = *fam;
    }
    if (s.contains("values")) cfg.shape.values = detail::read_number_list(s["values"], "shape.values");
    if (s.contains("bounds")) {
      const json& b = s["bounds"];
      if (!b.is_array()) throw ConfigError("shape.bounds must be an array of [lo, hi] pairs");
      cfg.shape.bounds.clear();
      for (std::size_t i = 0; i < b.size(); ++i) {
        const auto pair = detail::read_number_list(b[i], "shape.bounds[" + std::to_string(i) + "]");
        if (pair.size() != 2) throw ConfigError("shape.bounds entries must be [lo, hi]");
        cfg.shape.bounds.push_back({pair[0], pair[1]});
      }
    }
  }

  if (doc.contains("control")) {
    const json& c = doc["control"];
    detail::check_keys(c, "control", {"radius", "initial"});
    detail::read_key(c, "control", "radius", cfg.control_radius);
    if (c.contains("initial")) {
      if (!c["initial"].is_string()) throw ConfigError("control.initial must be a string");
      const auto init = c["initial"].get<std::string>();
      if (init == "zeros") {
        cfg.control_init = {ControlInitKind::zeros, 0.0, {}};
      } else if (init.rfind("constant:", 0) == 0) {
        cfg.control_init = {ControlInitKind::constant, parse_double(init.substr(9)), {}};
      } else if (init.rfind("file:", 0) == 0) {
        cfg.control_init = {ControlInitKind::file, 0.0, detail::resolve(base_dir, init.substr(5)).string()};
      } else {
        throw ConfigError("control.initial must be zeros, constant:<value> or file:<path>");
      }
    }
  }

  if (doc.contains("optimizer")) {
    const json& o = doc["optimizer"];
    detail::check_keys(o, "optimizer",
                       {"max_iters", "grad_tol", "armijo_c", "backtrack_factor", "initial_step", "mode"});
    detail::read_key(o, "optimizer", "max_iters", cfg.optimizer.max_iters);
    detail::read_key(o, "optimizer", "grad_tol", cfg.optimizer.grad_tol);
    detail::read_key(o, "optimizer", "armijo_c", cfg.optimizer.armijo_c);
    detail::read_key(o, "optimizer", "backtrack_factor", cfg.optimizer.backtrack_factor);
    detail::read_key(o, "optimizer", "initial_step", cfg.optimizer.initial_step);
    if (o.contains("mode")) {
      const json& mode = o["mode"];
      if (mode == "joint") cfg.optimizer.mode = OptimMode::joint;
      else if (mode == "alternating") cfg.optimizer.mode = OptimMode::alternating;
      else throw ConfigError("optimizer.mode must be joint or alternating");
    }
  }

  if (doc.contains("initial_condition")) {
    const json& ic = doc["initial_condition"];
    detail::check_keys(ic, "initial_condition", {"q", "v", "file"});
    if (ic.contains("file") && (ic.contains("q") || ic.contains("v")))
      throw ConfigError("initial_condition takes either a file or modal lists, not both");
    if (ic.contains("file")) {
      if (!ic["file"].is_string()) throw ConfigError("initial_condition.file must be a string");
      cfg.initial_condition = {{}, {}, detail::resolve(base_dir, ic["file"].get<std::string>()).string()};
    } else {
      cfg.initial_condition.q =
          ic.contains("q") ? detail::read_number_list(ic["q"], "initial_condition.q") : std::vector<double>{};
      if (ic.contains("v")) cfg.initial_condition.v = detail::read_number_list(ic["v"], "initial_condition.v");
    }
  }

  if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string()) throw ConfigError("output_dir must be a string");
    cfg.output_dir = doc["output_dir"].get<std::string>();
  }

  if (doc.contains("sweep")) {
    const json& s = doc["sweep"];
    detail::check_keys(s, "sweep", {"params", "points"});
    detail::read_key(s, "sweep", "params", cfg.sweep.params);
    detail::read_key(s, "sweep", "points", cfg.sweep.points);
  }

  if (doc.contains("gradcheck")) {
    const json& g = doc["gradcheck"];
    detail::check_keys(g, "gradcheck", {"directions", "eps", "seed", "random_control"});
    detail::read_key(g, "gradcheck", "directions", cfg.gradcheck.directions);
    detail::read_key(g, "gradcheck", "eps", cfg.gradcheck.eps);
    detail::read_key(g, "gradcheck", "seed", cfg.gradcheck.seed);
    detail::read_key(g, "gradcheck", "random_control", cfg.gradcheck.random_control);
  }

  if (cfg.model.n_quad == 0) cfg.model.n_quad = 4 * cfg.model.n_modes;
  validate(cfg);
  return cfg;
}

inline RunConfig parse_config(const fs::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ":" + std::to_string(detail::line_of_offset(text, e.byte)) +
                      ": parse error: " + e.what());
  }
  return parse_config_json(doc, fs::absolute(path).parent_path());
}

/// Fully resolved config; parse_config_json on this reproduces cfg.
inline json config_to_json(const RunConfig& cfg) {
  json doc;
  doc["model"] = {{"alpha", cfg.model.alpha}, {"mu", cfg.model.mu},         {"cd", cfg.model.cd},
                  {"gamma", cfg.model.gamma}, {"tau", cfg.model.tau},       {"n_modes", cfg.model.n_modes},
                  {"n_quad", cfg.model.quad_points()}, {"dt", cfg.model.dt}};
  json bounds = json::array();
  for (const auto& b : cfg.shape.bounds) bounds.push_back({b.lo, b.hi});
  doc["shape"] = {{"family", std::string(to_string(cfg.shape.family))}, {"values", cfg.shape.values}, {"bounds", bounds}};
  std::string initial = "zeros";
  if (cfg.control_init.kind == ControlInitKind::constant) initial = "constant:" + format_double(cfg.control_init.value);
  if (cfg.control_init.kind == ControlInitKind::file) initial = "file:" + cfg.control_init.path;
  doc["control"] = {{"radius", cfg.control_radius}, {"initial", initial}};
  doc["optimizer"] = {{"max_iters", cfg.optimizer.max_iters},       {"grad_tol", cfg.optimizer.grad_tol},
                      {"armijo_c", cfg.optimizer.armijo_c},         {"backtrack_factor", cfg.optimizer.backtrack_factor},
                      {"initial_step", cfg.optimizer.initial_step}, {"mode", std::string(to_string(cfg.optimizer.mode))}};
  if (cfg.initial_condition.file.empty())
    doc["initial_condition"] = {{"q", cfg.initial_condition.q}, {"v", cfg.initial_condition.v}};
  else
    doc["initial_condition"] = {{"file", cfg.initial_condition.file}};
  doc["output_dir"] = cfg.output_dir;
  doc["sweep"] = {{"params", cfg.sweep.params}, {"points", cfg.sweep.points}};
  doc["gradcheck"] = {{"directions", cfg.gradcheck.directions},
                      {"eps", cfg.gradcheck.eps},
                      {"seed", cfg.gradcheck.seed},
                      {"random_control", cfg.gradcheck.random_control}};
  return doc;
}

// ---------------------------------------------------------------------------
// run inputs

inline StateVector initial_state(const DiscreteModel& model, const InitialCondition& ic) {
  const int n = model.n_modes();
  if (!ic.file.empty()) {
    const auto rows = read_csv(ic.file, {"x", "w0", "v0"});
    const auto m = model.quad_grid().size();
    if (static_cast<Eigen::Index>(rows.size()) != m)
      throw ConfigError(ic.file + ": expected " + std::to_string(m) + " grid rows");
    Vector w(m), v(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      w[j] = rows[j][1];
      v[j] = rows[j][2];
    }
    return state_from_physical(model, w, v);
  }
  StateVector x = StateVector::zero(n);
  for (std::size_t i = 0; i < ic.q.size(); ++i) x.q[static_cast<Eigen::Index>(i)] = ic.q[i];
  for (std::size_t i = 0; i < ic.v.size(); ++i) x.v[static_cast<Eigen::Index>(i)] = ic.v[i];
  return x;
}

inline ControlSignal initial_control(const DiscreteModel& model, const ControlInit& init, double radius) {
  const TimeGrid grid = make_time_grid(model);
  ControlSignal u{Vector::Zero(grid.n_nodes()), radius};
  if (init.kind == ControlInitKind::constant) u.samples.setConstant(init.value);
  if (init.kind == ControlInitKind::file) {
    const auto rows = read_csv(init.path, {"t", "u"});
    if (static_cast<int>(rows.size()) != grid.n_nodes())
      throw ConfigError(init.path + ": expected " + std::to_string(grid.n_nodes()) + " control samples");
    for (int k = 0; k < grid.n_nodes(); ++k) u.samples[k] = rows[k][1];
  }
  return u;
}

// ---------------------------------------------------------------------------
// emitters

inline std::string trajectory_csv(const DiscreteModel& model, const Trajectory& traj) {
  const int n = model.n_modes();
  const TimeGrid grid = make_time_grid(model);
  std::vector<std::string> header{"t"};
  for (int i = 1; i <= n; ++i) header.push_back("q_" + std::to_string(i));
  for (int i = 1; i <= n; ++i) header.push_back("v_" + std::to_string(i));
  CsvWriter csv(header);
  std::vector<double> row(1 + 2 * n);
  for (int k = 0; k < grid.n_nodes(); ++k) {
    row[0] = grid.time(k);
    for (int i = 0; i < n; ++i) {
      row[1 + i] = traj.states[k].q[i];
      row[1 + n + i] = traj.states[k].v[i];
    }
    csv.row(row);
  }
  return csv.str();
}

inline std::string physical_csv(const DiscreteModel& model, const Trajectory& traj) {
  const TimeGrid grid = make_time_grid(model);
  const auto m = model.quad_grid().size();
  std::vector<std::string> header{"t"};
  for (Eigen::Index j = 1; j <= m; ++j) header.push_back("w(x_" + std::to_string(j) + ")");
  CsvWriter csv(header);
  std::vector<double> row(1 + m);
  for (int k = 0; k < grid.n_nodes(); ++k) {
    const Vector w = model.synthesize(traj.states[k].q);
    row[0] = grid.time(k);
    for (Eigen::Index j = 0; j < m; ++j) row[1 + j] = w[j];
    csv.row(row);
  }
  return csv.str();
}

inline std::string control_csv(const DiscreteModel& model, const ControlSignal& u) {
  const TimeGrid grid = make_time_grid(model);
  CsvWriter csv({"t", "u"});
  for (int k = 0; k < grid.n_nodes(); ++k) csv.row({grid.time(k), u.samples[k]});
  return csv.str();
}

inline std::string shape_csv(const DiscreteModel& model, const ShapeParams& r) {
  const Vector b = eval_shape(r, model.quad_grid());
  CsvWriter csv({"x", "b"});
  for (Eigen::Index j = 0; j < b.size(); ++j) csv.row({model.quad_grid()[j], b[j]});
  return csv.str();
}

inline std::string history_csv(const std::vector<IterateRecord>& log) {
  CsvWriter csv({"iter", "J", "control_stationarity", "shape_stationarity", "step"});
  for (const auto& r : log)
    csv.row({static_cast<double>(r.iter), r.cost, r.control_stationarity, r.shape_stationarity, r.step});
  return csv.str();
}

inline json kkt_json(const KKTResidual& k) {
  return {{"control_stationarity", k.control_stationarity},
          {"shape_stationarity", k.shape_stationarity},
          {"collinearity", k.collinearity}};
}

/// summary.json contents; wall time is left out so reruns are byte-identical.
inline json summary_json(const RunSummary& s) {
  json doc;
  doc["command"] = s.command;
  doc["status"] = s.status;
  doc["J_initial"] = s.J_initial;
  doc["J_final"] = s.J_final;
  doc["kkt"] = kkt_json(s.kkt);
  doc["iterations"] = s.iterations;
  doc["details"] = s.details;
  doc["artifacts"] = s.artifacts;
  doc["config"] = s.config_echo;
  return doc;
}

namespace detail {

struct RunContext {
  RunConfig cfg;
  DiscreteModel model;
  fs::path out_dir;
  StateVector x0;
  ControlSignal u0;
  RunSummary summary;
  std::chrono::steady_clock::time_point start;

  RunContext(const RunConfig& config, const RunOptions& opts, std::string command)
      : cfg(config), model(build_model(config.model)), start(std::chrono::steady_clock::now()) {
    validate(cfg);
    out_dir = opts.output_dir.empty() ? fs::path(cfg.output_dir) : fs::path(opts.output_dir);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCategory::io, "cannot create " + out_dir.string() + ": " + ec.message());
    x0 = initial_state(model, cfg.initial_condition);
    u0 = initial_control(model, cfg.control_init, cfg.control_radius);
    summary.command = std::move(command);
    summary.config_echo = config_to_json(cfg);
  }

  AdmissibleSets sets() const { return {cfg.control_radius, cfg.shape.bounds}; }

  void emit(const std::string& name, const std::string& content) {
    write_file_atomic(out_dir / name, content);
    summary.artifacts.push_back(name);
  }

  RunSummary finish() {
    summary.artifacts.push_back("config.json");
    summary.artifacts.push_back("summary.json");
    write_file_atomic(out_dir / "config.json", summary.config_echo.dump(2) + "\n");
    write_file_atomic(out_dir / "summary.json", summary_json(summary).dump(2) + "\n");
    summary.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return summary;
  }
};

inline json shape_json(const ShapeParams& r) {
  return {{"family", std::string(to_string(r.family))}, {"values", r.values}};
}

}  // namespace detail

inline RunSummary run_simulate(const RunConfig& cfg, const RunOptions& opts = {}) {
  detail::RunContext ctx(cfg, opts, "simulate");
  ShapeParams r = cfg.shape;
  const Trajectory traj = forward_solve(ctx.model, ctx.u0, r, ctx.x0);
  const double j = evaluate_cost(ctx.model, traj);
  ctx.summary.status = "ok";
  ctx.summary.J_initial = j;
  ctx.summary.J_final = j;
  ctx.summary.details["shape"] = detail::shape_json(r);
  ctx.summary.details["energy_initial"] = energy_norm_sq(ctx.model, traj.states.front());
  ctx.summary.details["energy_final"] = energy_norm_sq(ctx.model, traj.states.back());
  ctx.emit("trajectory.csv", trajectory_csv(ctx.model, traj));
  if (opts.physical) ctx.emit("physical.csv", physical_csv(ctx.model, traj));
  ctx.emit("shape.csv", shape_csv(ctx.model, r));
  return ctx.finish();
}

inline RunSummary run_optimize(const RunConfig& cfg, const RunOptions& opts = {}) {
  detail::RunContext ctx(cfg, opts, "optimize");
  const OptimResult res = optimize(ctx.model, ctx.sets(), cfg.optimizer, ctx.x0, ctx.u0, cfg.shape);
  ctx.summary.status = std::string(to_string(res.status));
  ctx.summary.J_initial = res.J_initial;
  ctx.summary.J_final = res.J_opt;
  ctx.summary.kkt = res.kkt;
  ctx.summary.iterations = res.iterations;
  ctx.summary.passed = res.status != OptimStatus::solver_failure;
  ctx.summary.details["shape"] = detail::shape_json(res.r_opt);
  ctx.summary.details["control_norm"] = control_l2_norm(res.u_opt.samples, make_time_grid(ctx.model));
  if (!res.message.empty()) ctx.summary.details["message"] = res.message;
  ctx.emit("trajectory.csv", trajectory_csv(ctx.model, res.trajectory));
  if (opts.physical) ctx.emit("physical.csv", physical_csv(ctx.model, res.trajectory));
  ctx.emit("control.csv", control_csv(ctx.model, res.u_opt));
  ctx.emit("history.csv", history_csv(res.iterate_log));
  ctx.emit("shape.csv", shape_csv(ctx.model, res.r_opt));
  return ctx.finish();
}

inline RunSummary run_gradcheck(const RunConfig& cfg, const RunOptions& opts = {}) {
  detail::RunContext ctx(cfg, opts, "gradcheck");
  ControlSignal u = ctx.u0;
  if (cfg.gradcheck.random_control) {
    std::mt19937_64 rng(cfg.gradcheck.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal;
    for (Eigen::Index k = 0; k < u.samples.size(); ++k) u.samples[k] = normal(rng);
  }
  const auto report =
      grad_check(ctx.model, u, cfg.shape, ctx.x0, cfg.gradcheck.directions, cfg.gradcheck.eps, cfg.gradcheck.seed);
  const double j = cost_at(ctx.model, u, cfg.shape, ctx.x0);
  ctx.summary.status = report.pass ? "pass" : "fail";
  ctx.summary.passed = report.pass;
  ctx.summary.J_initial = j;
  ctx.summary.J_final = j;
  ctx.summary.details["eps"] = report.eps;
  ctx.summary.details["worst_relative_error"] = report.worst;
  ctx.summary.details["resolution_floor"] = report.floor;
  ctx.summary.details["threshold"] = kGradCheckThreshold;

  CsvWriter csv({"label", "adjoint", "finite_difference", "relative_error"});
  for (std::size_t i = 0; i < report.labels.size(); ++i)
    csv.row_strings({report.labels[i], format_double(report.adjoint_values[i]), format_double(report.fd_values[i]),
                     format_double(report.errors[i])});
  ctx.emit("gradcheck.csv", csv.str());
  return ctx.finish();
}

inline RunSummary run_sweep(const RunConfig& cfg, const RunOptions& opts = {}) {
  detail::RunContext ctx(cfg, opts, "sweep");
  const auto res = sweep_shape(ctx.model, ctx.sets(), cfg.optimizer, ctx.x0, ctx.u0, cfg.shape, cfg.sweep.params,
                               cfg.sweep.points);
  std::vector<std::string> header;
  for (auto p : res.params) header.push_back("r_" + std::to_string(p));
  header.push_back("J");
  header.push_back("ok");
  CsvWriter csv(header);
  std::size_t failures = 0;
  for (std::size_t i = 0; i < res.points.size(); ++i) {
    std::vector<double> row = res.points[i];
    row.push_back(res.cost[i]);
    row.push_back(res.ok[i] ? 1.0 : 0.0);
    csv.row(row);
    failures += res.ok[i] ? 0 : 1;
  }
  ctx.emit("sweep.csv", csv.str());
  ctx.summary.status = failures == res.points.size() ? "solver-failure" : "ok";
  ctx.summary.passed = failures < res.points.size();
  ctx.summary.J_final = res.cost[res.argmin];
  ShapeParams best = cfg.shape;
  for (std::size_t j = 0; j < res.params.size(); ++j) best.values[res.params[j]] = res.points[res.argmin][j];
  // relaxation is monotone from the initial control, so this bounds J_final
  ctx.summary.J_initial = failures == res.points.size() ? res.cost[res.argmin] : cost_at(ctx.model, ctx.u0, best, ctx.x0);
  ctx.summary.details["argmin_index"] = res.argmin;
  ctx.summary.details["argmin_point"] = res.points[res.argmin];
  ctx.summary.details["failed_points"] = failures;
  return ctx.finish();
}

}  // namespace railopt
