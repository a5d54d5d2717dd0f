#include "popdmp/config.hpp"

#include "popdmp/error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace popdmp {

using nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

void check_keys(const ordered_json& obj, const std::string& path, std::set<std::string> allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) fail(path.empty() ? key : path + "." + key, "unknown key");
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double get_number(const ordered_json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) fail(path, "must be finite");
  return d;
}

std::size_t get_count(const ordered_json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    fail(path, "expected a nonnegative integer");
  return v.get<std::size_t>();
}

std::string get_string(const ordered_json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

std::vector<double> get_numbers(const ordered_json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_number(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

template <class F>
void read(const ordered_json& obj, const std::string& path, const char* key, F&& assign) {
  if (obj.contains(key)) assign(obj.at(key), join(path, key));
}

RegularizationKernel::Kind parse_kernel_kind(const std::string& s, const std::string& path) {
  if (s == "gaussian") return RegularizationKernel::Kind::gaussian;
  if (s == "epanechnikov") return RegularizationKernel::Kind::epanechnikov;
  fail(path, "expected \"gaussian\" or \"epanechnikov\"");
}

void parse_model(const ordered_json& j, const std::string& path, ModelSpec& m) {
  if (j.contains("builtin")) {
    if (j.size() != 1) fail(path, "a built-in model takes no other keys");
    m = builtin_model(get_string(j.at("builtin"), join(path, "builtin")));
    return;
  }
  check_keys(j, path,
             {"name", "states", "actions", "hazard", "cost", "kernel", "noise", "discount", "initial"});
  for (const char* key : {"states", "cost", "kernel", "noise"})
    if (!j.contains(key)) fail(join(path, key), "required for an inline model");
  m = ModelSpec{};
  m.name = "inline";
  read(j, path, "name", [&](const auto& v, const auto& p) { m.name = get_string(v, p); });
  m.states = get_numbers(j.at("states"), join(path, "states"));
  read(j, path, "actions", [&](const auto& v, const auto& p) {
    check_keys(v, p, {"lower", "upper"});
    read(v, p, "lower", [&](const auto& w, const auto& q) { m.action_lower = get_number(w, q); });
    read(v, p, "upper", [&](const auto& w, const auto& q) { m.action_upper = get_number(w, q); });
  });
  m.hazard_constant = 1.0;
  read(j, path, "hazard", [&](const auto& v, const auto& p) {
    if (v.is_number()) {
      m.hazard_constant = get_number(v, p);
      return;
    }
    check_keys(v, p, {"breakpoints", "values"});
    m.hazard_constant.reset();
    m.hazard_breakpoints = get_numbers(v.at("breakpoints"), join(p, "breakpoints"));
    m.hazard_values = get_numbers(v.at("values"), join(p, "values"));
  });
  {
    const auto& v = j.at("cost");
    const auto p = join(path, "cost");
    check_keys(v, p, {"breakpoints", "values"});
    if (!v.contains("breakpoints") || !v.contains("values")) fail(p, "needs breakpoints and values");
    m.cost_breakpoints = get_numbers(v.at("breakpoints"), join(p, "breakpoints"));
    m.cost_values = get_numbers(v.at("values"), join(p, "values"));
  }
  {
    const auto& v = j.at("kernel");
    const auto p = join(path, "kernel");
    check_keys(v, p, {"breakpoints", "rows"});
    if (!v.contains("breakpoints") || !v.contains("rows")) fail(p, "needs breakpoints and rows");
    m.kernel_breakpoints = get_numbers(v.at("breakpoints"), join(p, "breakpoints"));
    const auto& rows = v.at("rows");
    if (!rows.is_array()) fail(join(p, "rows"), "expected an array of rows");
    for (std::size_t i = 0; i < rows.size(); ++i)
      m.kernel_rows.push_back(get_numbers(rows[i], join(p, "rows") + "[" + std::to_string(i) + "]"));
  }
  {
    const auto& v = j.at("noise");
    const auto p = join(path, "noise");
    check_keys(v, p, {"offsets", "weights"});
    if (!v.contains("offsets") || !v.contains("weights")) fail(p, "needs offsets and weights");
    m.noise_offsets = get_numbers(v.at("offsets"), join(p, "offsets"));
    m.noise_weights = get_numbers(v.at("weights"), join(p, "weights"));
  }
  read(j, path, "discount", [&](const auto& v, const auto& p) { m.discount = get_number(v, p); });
  read(j, path, "initial", [&](const auto& v, const auto& p) {
    std::string s = get_string(v, p);
    if (s.rfind("dirac:", 0) == 0) {
      m.initial = "dirac";
      try {
        m.initial_index = std::stoul(s.substr(6));
      } catch (const std::exception&) {
        fail(p, "expected dirac:<state index>");
      }
    } else {
      m.initial = s;
    }
  });
}

void parse_family(const ordered_json& v, const std::string& path, std::vector<FamilyEntry>& family) {
  if (!v.is_array() || v.empty()) fail(path, "expected a nonempty array of entries");
  family.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto p = path + "[" + std::to_string(i) + "]";
    const auto& e = v[i];
    check_keys(e, p, {"kind", "action", "after", "tau_min", "tau_max", "tau_step"});
    FamilyEntry entry;
    if (!e.contains("kind") || !e.contains("action")) fail(p, "needs kind and action");
    std::string kind = get_string(e.at("kind"), join(p, "kind"));
    if (kind == "constant")
      entry.kind = FamilyEntry::Kind::constant;
    else if (kind == "switched")
      entry.kind = FamilyEntry::Kind::switched;
    else
      fail(join(p, "kind"), "expected \"constant\" or \"switched\"");
    entry.action = get_number(e.at("action"), join(p, "action"));
    read(e, p, "after", [&](const auto& w, const auto& q) { entry.after = get_number(w, q); });
    read(e, p, "tau_min", [&](const auto& w, const auto& q) { entry.tau_min = get_number(w, q); });
    read(e, p, "tau_max", [&](const auto& w, const auto& q) { entry.tau_max = get_number(w, q); });
    read(e, p, "tau_step", [&](const auto& w, const auto& q) { entry.tau_step = get_number(w, q); });
    family.push_back(entry);
  }
}

void parse_solver(const ordered_json& j, const std::string& path, SolverSpec& s) {
  check_keys(j, path,
             {"grid_k", "tol", "max_iter", "sigma", "kernel", "quad_step", "tail_tol", "tie_tol", "family"});
  read(j, path, "grid_k", [&](const auto& v, const auto& p) { s.grid_k = get_count(v, p); });
  read(j, path, "tol", [&](const auto& v, const auto& p) { s.tol = get_number(v, p); });
  read(j, path, "max_iter", [&](const auto& v, const auto& p) { s.max_iter = get_count(v, p); });
  read(j, path, "sigma", [&](const auto& v, const auto& p) {
    if (v.is_string()) {
      if (v.template get<std::string>() != "plain") fail(p, "expected a number or \"plain\"");
      s.sigma.reset();
    } else {
      s.sigma = get_number(v, p);
    }
  });
  read(j, path, "kernel", [&](const auto& v, const auto& p) { s.kernel = parse_kernel_kind(get_string(v, p), p); });
  read(j, path, "quad_step", [&](const auto& v, const auto& p) { s.quad_step = get_number(v, p); });
  read(j, path, "tail_tol", [&](const auto& v, const auto& p) { s.tail_tol = get_number(v, p); });
  read(j, path, "tie_tol", [&](const auto& v, const auto& p) { s.tie_tol = get_number(v, p); });
  read(j, path, "family", [&](const auto& v, const auto& p) { parse_family(v, p, s.family); });
}

void parse_sim(const ordered_json& j, const std::string& path, SimSpec& s) {
  check_keys(j, path, {"n_traj", "seed", "horizon", "step", "x0", "grid_slack"});
  read(j, path, "n_traj", [&](const auto& v, const auto& p) { s.n_traj = get_count(v, p); });
  read(j, path, "seed", [&](const auto& v, const auto& p) { s.seed = get_count(v, p); });
  read(j, path, "horizon", [&](const auto& v, const auto& p) { s.horizon = get_number(v, p); });
  read(j, path, "step", [&](const auto& v, const auto& p) { s.step = get_number(v, p); });
  read(j, path, "x0", [&](const auto& v, const auto& p) { s.x0 = get_numbers(v, p); });
  read(j, path, "grid_slack", [&](const auto& v, const auto& p) { s.grid_slack = get_number(v, p); });
}

ordered_json model_json(const ModelSpec& m) {
  ordered_json j;
  j["name"] = m.name;
  j["states"] = m.states;
  j["actions"] = {{"lower", m.action_lower}, {"upper", m.action_upper}};
  if (m.hazard_constant)
    j["hazard"] = *m.hazard_constant;
  else
    j["hazard"] = {{"breakpoints", m.hazard_breakpoints}, {"values", m.hazard_values}};
  j["cost"] = {{"breakpoints", m.cost_breakpoints}, {"values", m.cost_values}};
  j["kernel"] = {{"breakpoints", m.kernel_breakpoints}, {"rows", m.kernel_rows}};
  j["noise"] = {{"offsets", m.noise_offsets}, {"weights", m.noise_weights}};
  j["discount"] = m.discount;
  j["initial"] = m.initial == "dirac" ? "dirac:" + std::to_string(m.initial_index) : m.initial;
  return j;
}

ordered_json family_json(const std::vector<FamilyEntry>& family) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : family) {
    ordered_json j;
    j["kind"] = e.kind == FamilyEntry::Kind::constant ? "constant" : "switched";
    j["action"] = e.action;
    if (e.kind == FamilyEntry::Kind::switched) {
      j["after"] = e.after;
      j["tau_min"] = e.tau_min;
      j["tau_max"] = e.tau_max;
      j["tau_step"] = e.tau_step;
    }
    arr.push_back(j);
  }
  return arr;
}

}  // namespace

ModelSpec builtin_model(const std::string& name) {
  if (name != "particle-steering") throw ConfigError("model.builtin: unknown built-in model \"" + name + "\"");
  ModelSpec m;
  m.name = name;
  m.states = {-2.0, 0.0, 2.0};
  m.action_lower = -1.0;
  m.action_upper = 1.0;
  m.hazard_constant = 1.0;
  m.cost_breakpoints = {-2.0, -1.5, 1.5, 2.0};
  m.cost_values = {10.0, 0.0, 0.0, 10.0};
  m.kernel_breakpoints = {-2.0, -1.5, 1.5, 2.0};
  m.kernel_rows = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  m.noise_offsets = {-1.0, 0.0, 1.0};
  m.noise_weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  m.discount = 1.0;
  m.initial = "bayes";
  return m;
}

RunConfig default_config() {
  RunConfig cfg;
  cfg.model = builtin_model("particle-steering");
  return cfg;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  RunConfig cfg = default_config();
  check_keys(j, "", {"model", "solver", "sim", "sweep", "filter", "output", "workers"});
  read(j, "", "model", [&](const auto& v, const auto& p) { parse_model(v, p, cfg.model); });
  read(j, "", "solver", [&](const auto& v, const auto& p) { parse_solver(v, p, cfg.solver); });
  read(j, "", "sim", [&](const auto& v, const auto& p) { parse_sim(v, p, cfg.sim); });
  read(j, "", "sweep", [&](const auto& v, const auto& p) {
    check_keys(v, p, {"sigmas"});
    read(v, p, "sigmas", [&](const auto& w, const auto& q) { cfg.sweep.sigmas = get_numbers(w, q); });
  });
  read(j, "", "filter", [&](const auto& v, const auto& p) {
    check_keys(v, p, {"x0", "events"});
    read(v, p, "x0", [&](const auto& w, const auto& q) { cfg.filter.x0 = get_number(w, q); });
    read(v, p, "events", [&](const auto& w, const auto& q) { cfg.filter.events = get_string(w, q); });
  });
  read(j, "", "output", [&](const auto& v, const auto& p) { cfg.output = get_string(v, p); });
  read(j, "", "workers", [&](const auto& v, const auto& p) { cfg.workers = static_cast<int>(get_count(v, p)); });
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

void validate(const RunConfig& cfg) {
  try {
    PopdmpModel model = build_model(cfg.model);
    model.validate();
    build_family(cfg.solver.family).validate(model);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  const auto& s = cfg.solver;
  if (s.grid_k == 0) fail("solver.grid_k", "must be at least 1");
  if (!(s.tol > 0.0)) fail("solver.tol", "must be positive");
  if (s.max_iter == 0) fail("solver.max_iter", "must be at least 1");
  if (s.sigma && !(*s.sigma > 0.0)) fail("solver.sigma", "must be positive");
  if (!(s.quad_step > 0.0)) fail("solver.quad_step", "must be positive");
  if (!(s.tail_tol > 0.0)) fail("solver.tail_tol", "must be positive");
  if (!(s.tie_tol >= 0.0)) fail("solver.tie_tol", "must be nonnegative");
  if (cfg.sim.n_traj == 0) fail("sim.n_traj", "must be positive");
  if (!(cfg.sim.horizon >= 0.0)) fail("sim.horizon", "must be nonnegative");
  if (!(cfg.sim.step > 0.0)) fail("sim.step", "must be positive");
  if (!(cfg.sim.grid_slack >= 0.0)) fail("sim.grid_slack", "must be nonnegative");
  for (double sigma : cfg.sweep.sigmas)
    if (!(sigma > 0.0)) fail("sweep.sigmas", "every sigma must be positive");
  if (cfg.workers < 0) fail("workers", "must be nonnegative");
}

std::string resolved_config_text(const RunConfig& cfg) {
  ordered_json j;
  j["model"] = model_json(cfg.model);
  ordered_json s;
  s["grid_k"] = cfg.solver.grid_k;
  s["tol"] = cfg.solver.tol;
  s["max_iter"] = cfg.solver.max_iter;
  if (cfg.solver.sigma)
    s["sigma"] = *cfg.solver.sigma;
  else
    s["sigma"] = "plain";
  s["kernel"] = kernel_name(cfg.solver.kernel);
  s["quad_step"] = cfg.solver.quad_step;
  s["tail_tol"] = cfg.solver.tail_tol;
  s["tie_tol"] = cfg.solver.tie_tol;
  s["family"] = family_json(cfg.solver.family);
  j["solver"] = s;
  j["sim"] = {{"n_traj", cfg.sim.n_traj}, {"seed", cfg.sim.seed},       {"horizon", cfg.sim.horizon},
              {"step", cfg.sim.step},     {"x0", cfg.sim.x0},           {"grid_slack", cfg.sim.grid_slack}};
  j["sweep"] = {{"sigmas", cfg.sweep.sigmas}};
  j["filter"] = {{"x0", cfg.filter.x0}, {"events", cfg.filter.events}};
  j["output"] = cfg.output;
  j["workers"] = cfg.workers;
  return j.dump(2) + "\n";
}

PopdmpModel build_model(const ModelSpec& spec) {
  if (spec.states.empty()) fail("model.states", "must not be empty");
  if (!(spec.action_lower <= spec.action_upper)) fail("model.actions", "lower must not exceed upper");
  if (!(spec.discount > 0.0)) fail("model.discount", "must be positive");
  if (spec.kernel_breakpoints.size() != spec.kernel_rows.size())
    fail("model.kernel", "needs one row per breakpoint");
  for (std::size_t i = 0; i < spec.kernel_rows.size(); ++i) {
    if (spec.kernel_rows[i].size() != spec.states.size())
      fail("model.kernel.rows[" + std::to_string(i) + "]", "needs one entry per state");
    double total = 0.0;
    for (double q : spec.kernel_rows[i]) total += q;
    if (std::abs(total - 1.0) > 1e-12) {
      std::ostringstream os;
      os.precision(9);
      os << "sums to " << total << ", expected 1";
      fail("model.kernel.rows[" + std::to_string(i) + "]", os.str());
    }
  }
  if (spec.noise_offsets.size() != spec.noise_weights.size())
    fail("model.noise", "needs one weight per offset");

  PopdmpModel m;
  for (double y : spec.states) m.post_jump_states.push_back(scalar_point(y));
  m.actions = {scalar_point(spec.action_lower), scalar_point(spec.action_upper)};
  m.drift = action_velocity_flow();
  try {
    if (spec.hazard_constant) {
      const double rate = *spec.hazard_constant;
      if (!(rate > 0.0)) fail("model.hazard", "must be positive");
      m.hazard = [rate](const Point&, const Action&) { return rate; };
      m.hazard_lower = m.hazard_upper = rate;
    } else {
      PiecewiseLinear table(spec.hazard_breakpoints, spec.hazard_values);
      if (!(table.min_value() > 0.0)) fail("model.hazard", "values must be positive");
      m.hazard = [table](const Point& y, const Action&) { return table(y[0]); };
      m.hazard_lower = table.min_value();
      m.hazard_upper = table.max_value();
    }
    PiecewiseLinearRows kernel(spec.kernel_breakpoints, spec.kernel_rows);
    m.jump_kernel = [kernel](const Point& y, const Action&, std::span<double> out) { kernel(y[0], out); };
    PiecewiseLinear cost(spec.cost_breakpoints, spec.cost_values);
    if (cost.min_value() < 0.0) fail("model.cost", "values must be nonnegative");
    m.cost_rate = [cost](const Point& y, const Action&) { return cost(y[0]); };
    m.cost_max = cost.max_value();
  } catch (const ModelError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  for (double eps : spec.noise_offsets) m.noise.offsets.push_back(scalar_point(eps));
  m.noise.density = spec.noise_weights;
  m.discount = spec.discount;
  if (spec.initial == "bayes") {
    m.initial_kernel = bayes_initial_kernel(m.post_jump_states, m.noise);
  } else if (spec.initial == "uniform") {
    m.initial_kernel = uniform_initial_kernel(spec.states.size());
  } else if (spec.initial == "dirac") {
    if (spec.initial_index >= spec.states.size()) fail("model.initial", "dirac index out of range");
    m.initial_kernel = dirac_initial_kernel(spec.states.size(), spec.initial_index);
  } else {
    fail("model.initial", "expected \"bayes\", \"uniform\" or \"dirac:<index>\"");
  }
  m.hazard_controlled = false;
  return m;
}

StageQuadrature build_quadrature(const RunConfig& cfg, const PopdmpModel& model) {
  return StageQuadrature::for_model(model, cfg.solver.quad_step, cfg.solver.tail_tol);
}

std::optional<RegularizationKernel> build_kernel(const SolverSpec& spec) {
  if (!spec.sigma) return std::nullopt;
  return RegularizationKernel{spec.kernel, *spec.sigma};
}

namespace {

double parse_number(const std::string& s, const std::string& whole) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v))
    throw ConfigError("control \"" + whole + "\": cannot read number \"" + s + "\"");
  return v;
}

std::vector<std::string> split_terms(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '+' && !cur.empty() && cur.back() != 'e' && cur.back() != 'E' && cur.back() != '*') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

RelaxedControl parse_control(const std::string& text) {
  std::vector<double> breakpoints;
  std::vector<ActionMixture> pieces;
  std::stringstream ss(text);
  std::string piece;
  while (std::getline(ss, piece, ';')) {
    std::string body = piece;
    auto at = piece.find('@');
    if (at != std::string::npos) {
      body = piece.substr(0, at);
      breakpoints.push_back(parse_number(piece.substr(at + 1), text));
    }
    std::vector<ActionAtom> atoms;
    auto terms = split_terms(body);
    for (const auto& term : terms) {
      auto star = term.find('*');
      ActionAtom atom;
      if (star == std::string::npos) {
        if (terms.size() != 1) throw ConfigError("control \"" + text + "\": mixture atoms need a weight");
        atom.action = scalar_point(parse_number(term, text));
        atom.weight = 1.0;
      } else {
        atom.action = scalar_point(parse_number(term.substr(0, star), text));
        atom.weight = parse_number(term.substr(star + 1), text);
      }
      atoms.push_back(atom);
    }
    pieces.emplace_back(std::move(atoms));
  }
  if (pieces.empty()) throw ConfigError("control \"" + text + "\" is empty");
  if (breakpoints.size() + 1 != pieces.size())
    throw ConfigError("control \"" + text + "\": every piece but the last needs an @breakpoint");
  try {
    return RelaxedControl(std::move(breakpoints), std::move(pieces));
  } catch (const ModelError& e) {
    throw ConfigError("control \"" + text + "\": " + e.what());
  }
}

}  // namespace popdmp
