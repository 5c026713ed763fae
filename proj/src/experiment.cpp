#include "bifinf/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>

#include "bifinf/csv.hpp"
#include "bifinf/errors.hpp"

namespace bifinf {

namespace {

using nlohmann::json;

std::string num(double v) {
  if (std::isnan(v)) return "auto";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& text, bool allow_auto = false) {
  std::string t = text;
  t.erase(0, t.find_first_not_of(" \t"));
  t.erase(t.find_last_not_of(" \t") + 1);
  if (allow_auto && t == "auto") return ExperimentConfig::kAuto;
  try {
    std::size_t pos = 0;
    const double v = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw PreconditionError("config key '" + key + "': '" + text + "' is not a number" +
                            (allow_auto ? " or 'auto'" : ""));
  }
}

int parse_int(const std::string& key, const std::string& text) {
  const double v = parse_double(key, text);
  if (v != std::floor(v) || std::abs(v) > 1e9) {
    throw PreconditionError("config key '" + key + "': '" + text + "' is not an integer");
  }
  return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw PreconditionError("config key '" + key + "': '" + text + "' is not a boolean");
}

struct Entry {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define BIFINF_DOUBLE(KEY, FIELD)                                                     \
  Entry {                                                                             \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_double(KEY, v); }, \
        [](const ExperimentConfig& c) { return num(c.FIELD); }                        \
  }
#define BIFINF_AUTO(KEY, FIELD)                                                            \
  Entry {                                                                                  \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_double(KEY, v, true); }, \
        [](const ExperimentConfig& c) { return num(c.FIELD); }                             \
  }
#define BIFINF_INT(KEY, FIELD)                                                       \
  Entry {                                                                            \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_int(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }            \
  }
#define BIFINF_BOOL(KEY, FIELD)                                                       \
  Entry {                                                                             \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_bool(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); } \
  }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      Entry{"experiment.name", [](ExperimentConfig& c, const std::string& v) { c.name = v; },
            [](const ExperimentConfig& c) { return c.name; }},
      BIFINF_INT("experiment.k", k),
      BIFINF_INT("experiment.modes", modes),
      BIFINF_DOUBLE("experiment.truncation_factor", truncation_factor),
      Entry{"experiment.seed",
            [](ExperimentConfig& c, const std::string& v) {
              const double s = parse_double("experiment.seed", v);
              if (s < 0 || s != std::floor(s)) throw PreconditionError("config key 'experiment.seed' must be a nonnegative integer");
              c.seed = static_cast<unsigned long long>(s);
            },
            [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      Entry{"experiment.stage",
            [](ExperimentConfig& c, const std::string& v) { c.stage = parse_stage(v); },
            [](const ExperimentConfig& c) { return std::string(to_string(c.stage)); }},
      Entry{"experiment.output", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
            [](const ExperimentConfig& c) { return c.output_dir.string(); }},
      Entry{"domain.kind",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "interval") c.domain.kind = DomainKind::interval;
              else if (v == "square") c.domain.kind = DomainKind::square;
              else throw PreconditionError("config key 'domain.kind': unknown domain '" + v + "' (interval | square)");
            },
            [](const ExperimentConfig& c) {
              return std::string(c.domain.kind == DomainKind::interval ? "interval" : "square");
            }},
      BIFINF_DOUBLE("domain.length", domain.length),
      BIFINF_INT("domain.quadrature_points", domain.quadrature_points_per_dim),
      Entry{"nonlinearity.name",
            [](ExperimentConfig& c, const std::string& v) { c.nonlinearity.name = v; },
            [](const ExperimentConfig& c) { return c.nonlinearity.name; }},
      BIFINF_DOUBLE("nonlinearity.c", nonlinearity.c),
      BIFINF_DOUBLE("nonlinearity.offset", nonlinearity.offset),
      BIFINF_DOUBLE("nonlinearity.d", nonlinearity.d),
      BIFINF_DOUBLE("nonlinearity.g", nonlinearity.g),
      BIFINF_BOOL("nonlinearity.reflect", nonlinearity.reflect),
      BIFINF_AUTO("lambda.value", lambda),
      BIFINF_AUTO("lambda.theta", theta),
      BIFINF_INT("lambda.theta_bisections", theta_bisections),
      BIFINF_INT("lambda.grid_count", grid_count),
      Entry{"lambda.grid",
            [](ExperimentConfig& c, const std::string& v) { c.lambda_grid = parse_number_list(v); },
            [](const ExperimentConfig& c) {
              std::string s;
              for (double v : c.lambda_grid) s += (s.empty() ? "" : ",") + num(v);
              return s;
            }},
      BIFINF_DOUBLE("lp.window", lp.window),
      BIFINF_DOUBLE("lp.nodes_per_unit", lp.nodes_per_unit),
      BIFINF_DOUBLE("lp.grading", lp.grading),
      BIFINF_DOUBLE("lp.tolerance", lp.tolerance),
      BIFINF_INT("lp.max_iterations", lp.max_iterations),
      BIFINF_BOOL("lp.require_smallness", lp.require_smallness),
      Entry{"lp.M",
            [](ExperimentConfig& c, const std::string& v) {
              const double M = parse_double("lp.M", v, true);
              c.M_auto = std::isnan(M);
              if (!c.M_auto) c.lp.M = M;
            },
            [](const ExperimentConfig& c) { return c.M_auto ? std::string("auto") : num(c.lp.M); }},
      BIFINF_DOUBLE("graph.radius", graph_radius),
      BIFINF_DOUBLE("graph.spacing", graph_spacing),
      BIFINF_INT("graph.radial", graph_radial),
      BIFINF_INT("graph.angular", graph_angular),
      BIFINF_INT("invariance.points", invariance_points),
      BIFINF_DOUBLE("invariance.horizon", invariance_horizon),
      BIFINF_DOUBLE("invariance.step", integrator.h),
      BIFINF_INT("attractor.cells", attractor.cells),
      BIFINF_INT("attractor.samples_per_cell", attractor.samples_per_cell),
      BIFINF_DOUBLE("attractor.tau", attractor.tau),
      BIFINF_DOUBLE("attractor.rk4_step", attractor.rk4_step),
      BIFINF_DOUBLE("attractor.table_spacing", table_spacing),
      BIFINF_INT("attractor.table_angles", table_angles),
      BIFINF_DOUBLE("newton.tolerance", multiplicity.newton.tolerance),
      BIFINF_INT("newton.max_iterations", multiplicity.newton.max_iterations),
      BIFINF_DOUBLE("newton.deflation_eps", multiplicity.newton.deflation_eps),
      BIFINF_DOUBLE("newton.deflation_shift", multiplicity.newton.deflation_shift),
      BIFINF_DOUBLE("newton.distinct", multiplicity.newton.distinct),
      BIFINF_DOUBLE("bifurcation.drift_horizon", multiplicity.drift_horizon),
      BIFINF_DOUBLE("bifurcation.drift_tolerance", multiplicity.drift_tolerance),
      BIFINF_DOUBLE("bifurcation.energy_tolerance", multiplicity.energy_tolerance),
      BIFINF_DOUBLE("bifurcation.product_tolerance", multiplicity.product_tolerance),
      BIFINF_BOOL("bifurcation.other_side", multiplicity.check_other_side),
      BIFINF_BOOL("bifurcation.omega_limits", omega_limits),
      BIFINF_DOUBLE("bifurcation.consistency_tolerance", consistency_tolerance),
  };
  return entries;
}

#undef BIFINF_DOUBLE
#undef BIFINF_AUTO
#undef BIFINF_INT
#undef BIFINF_BOOL

const Entry& find_entry(const std::string& key) {
  for (const auto& e : registry())
    if (e.key == key) return e;
  throw PreconditionError("unknown config key '" + key + "'");
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

/// JSON cannot hold inf or nan; they are written as strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

const char* error_kind(const Error& e) {
  if (dynamic_cast<const NearBifurcationError*>(&e)) return "near_bifurcation";
  if (dynamic_cast<const PreconditionError*>(&e)) return "precondition";
  if (dynamic_cast<const ResourceError*>(&e)) return "resource";
  if (dynamic_cast<const InconsistencyError*>(&e)) return "inconsistency";
  if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence";
  if (dynamic_cast<const DivergenceError*>(&e)) return "divergence";
  if (dynamic_cast<const NonconformingError*>(&e)) return "nonconforming";
  if (dynamic_cast<const OutOfDomainError*>(&e)) return "out_of_domain";
  if (dynamic_cast<const CertificationError*>(&e)) return "certification";
  return "error";
}

/// Everything one pipeline run at a single lambda produces up to the annulus.
struct ManifoldRun {
  std::shared_ptr<const LyapunovPerron> lp;
  std::shared_ptr<const ManifoldGraph> graph;
};

ManifoldRun build_manifold(const ExperimentConfig& cfg, const BasisPtr& basis,
                           const NonlinearitySpec& spec, double lambda) {
  const SpectralSplit split = split_at(basis, cfg.k, lambda);
  ManifoldRun run;
  run.lp = std::make_shared<LyapunovPerron>(split, spec, cfg.lp);
  SampleBox box;
  box.radius = cfg.graph_radius > 0.0 ? cfg.graph_radius : 2.0 * annulus_radius_bound(spec, split);
  if (split.center_dim() == 1) {
    box.radial = static_cast<int>(std::ceil(box.radius / cfg.graph_spacing)) + 1;
  } else {
    box.radial = cfg.graph_radial;
    box.angular = cfg.graph_angular;
  }
  run.graph = std::make_shared<ManifoldGraph>(build_manifold_graph(run.lp, box));
  return run;
}

double default_lambda(const ExperimentConfig& cfg, const SpectralBasis& basis, double sigma) {
  if (!std::isnan(cfg.lambda)) return cfg.lambda;
  return basis.level(cfg.k).eigenvalue - sigma * spectral_gap(basis, cfg.k) / 60.0;
}

}  // namespace

const char* to_string(Stage s) {
  switch (s) {
    case Stage::check: return "check";
    case Stage::manifold: return "manifold";
    case Stage::annulus: return "annulus";
    case Stage::bifurcate: return "bifurcate";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : {Stage::check, Stage::manifold, Stage::annulus, Stage::bifurcate})
    if (name == to_string(s)) return s;
  throw PreconditionError("unknown stage '" + name + "' (check | manifold | annulus | bifurcate)");
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_double("list", item));
  }
  return out;
}

void ExperimentConfig::validate() const {
  domain.validate();
  if (k < 1) throw PreconditionError("config key 'experiment.k' must be >= 1");
  if (modes < 0) throw PreconditionError("config key 'experiment.modes' must be >= 0");
  if (!(truncation_factor > 1.0)) throw PreconditionError("config key 'experiment.truncation_factor' must exceed 1");
  if (!std::isnan(theta) && !(theta > 0.0)) throw PreconditionError("config key 'lambda.theta' must be positive");
  if (grid_count < 2) throw PreconditionError("config key 'lambda.grid_count' must be >= 2");
  if (theta_bisections < 0) throw PreconditionError("config key 'lambda.theta_bisections' must be >= 0");
  if (!(lp.nodes_per_unit > 0.0) || !(lp.grading >= 1.0) || !(lp.tolerance > 0.0) ||
      lp.max_iterations < 1 || lp.window < 0.0 || !(lp.M >= 1.0)) {
    throw PreconditionError("config section 'lp' has an invalid value");
  }
  if (graph_radius < 0.0 || !(graph_spacing > 0.0) || graph_radial < 2 || graph_angular < 4) {
    throw PreconditionError("config section 'graph' has an invalid value");
  }
  if (invariance_points < 0 || !(invariance_horizon > 0.0) || integrator.h < 0.0) {
    throw PreconditionError("config section 'invariance' has an invalid value");
  }
  if (table_spacing < 0.0 || table_angles < 8) {
    throw PreconditionError("config section 'attractor' has an invalid value");
  }
  if (!(multiplicity.newton.tolerance > 0.0) || multiplicity.newton.max_iterations < 1 ||
      !(multiplicity.newton.deflation_eps > 0.0) || multiplicity.newton.deflation_shift < 0.0 ||
      !(multiplicity.newton.distinct > 0.0)) {
    throw PreconditionError("config section 'newton' has an invalid value");
  }
  for (std::size_t i = 1; i < lambda_grid.size(); ++i) {
    if (lambda_grid[i] == lambda_grid[i - 1]) throw PreconditionError("config key 'lambda.grid' repeats a value");
  }
  (void)make_nonlinearity(nonlinearity);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw PreconditionError("cannot read config '" + path.string() + "': " + e.message() +
                            " (line " + std::to_string(e.line()) + ")");
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw PreconditionError("config key '" + section + "' lies outside any section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      find_entry(full).set(cfg, value.data());
    }
  }
  cfg.validate();
  return cfg;
}

void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw PreconditionError("override '" + o + "' is not section.key=value");
    find_entry(o.substr(0, eq)).set(config, o.substr(eq + 1));
  }
  config.validate();
}

std::map<std::string, std::string> config_entries(const ExperimentConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& e : registry()) out[e.key] = e.get(config);
  return out;
}

NonlinearitySpec make_nonlinearity(const NonlinearityConfig& c) {
  NonlinearitySpec spec;
  if (c.name == "tanh") spec = make_tanh(c.c, c.offset);
  else if (c.name == "arctan") spec = make_arctan(c.c, c.offset);
  else if (c.name == "modulated_tanh") spec = make_modulated_tanh(c.c, c.d, 3.14159265358979323846);
  else if (c.name == "constant") spec = make_constant(c.g);
  else if (c.name == "zero") spec = make_zero();
  else throw PreconditionError("config key 'nonlinearity.name': unknown nonlinearity '" + c.name + "' (tanh | arctan | modulated_tanh | constant | zero)");
  return c.reflect ? reflect(spec) : spec;
}

bool Report::pass() const {
  if (aborted) return false;
  if (!data.contains("claims")) return true;
  for (const auto& [name, v] : data["claims"].items())
    if (v != "PASS") return false;
  return true;
}

Report run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  json& d = rep.data;
  d["experiment"] = cfg.name;
  d["stage"] = to_string(cfg.stage);
  json conf = json::object();
  for (const auto& [k, v] : config_entries(cfg))
    if (k != "experiment.output") conf[k] = v;  // identical reports wherever they are written
  d["config"] = conf;
  json claims = json::object();
  json constants = json::object();
  std::ostringstream constants_csv;
  constants_csv << "name,value\n";
  auto constant = [&](const std::string& name, double v) {
    constants[name] = number(v);
    constants_csv << name << ',' << fmt_num(v) << '\n';
  };

  std::string stage = "check";
  auto flush = [&] {
    d["constants"] = constants;
    d["claims"] = claims;
    rep.csv.insert(rep.csv.begin(), {"constants.csv", constants_csv.str()});
  };
  try {
    // check: basis, spectral constants, smallness and the Landesman-Lazer limits
    const NonlinearitySpec spec = make_nonlinearity(cfg.nonlinearity);
    spec.validate(cfg.domain);
    const double sigma = spec.sign();
    BasisPtr basis = cfg.modes > 0 ? SpectralBasis::build(cfg.domain, cfg.modes)
                                   : default_truncation(cfg.domain, cfg.k, cfg.truncation_factor);
    if (cfg.k >= basis->level_count()) {
      throw PreconditionError("level k = " + std::to_string(cfg.k) +
                              " needs its upper neighbour inside the truncation");
    }
    const Level& lev = basis->level(cfg.k);
    const double beta = spectral_gap(*basis, cfg.k);
    const double lambda = default_lambda(cfg, *basis, sigma);
    const SpectralSplit split = split_at(basis, cfg.k, lambda);
    const SemigroupEstimate sg = estimate_semigroup_constant(split, default_semigroup_grid());
    LPConfig lpc = cfg.lp;
    if (cfg.M_auto) lpc.M = sg.M;
    const SmallnessMargin sm = smallness_margin(spec, *basis, cfg.k, lpc.M);
    const LipschitzEstimate le = lipschitz_estimate(spec, *basis, 64, cfg.seed);

    d["check"] = {{"nonlinearity", spec.name},
                  {"orientation", spec.orientation == Orientation::standard ? "standard" : "dual"},
                  {"modes", basis->size()},
                  {"levels", basis->level_count()},
                  {"multiplicity", lev.multiplicity},
                  {"lambda", lambda},
                  {"lipschitz_sampled_ratio", le.max_sampled_ratio},
                  {"lipschitz_pairs", le.pairs}};
    constant("mu_k", lev.eigenvalue);
    constant("beta_k", beta);
    constant("m", lev.multiplicity);
    constant("lambda", lambda);
    constant("M", lpc.M);
    constant("M_sampled", sg.M);
    constant("M_beta", sm.m_beta);
    constant("M_beta_quadrature", sm.m_beta_quadrature);
    constant("L_f", spec.lipschitz);
    constant("L_tilde", sm.l_tilde);
    constant("margin", sm.margin);
    constant("contraction_bound", sm.contraction_bound);
    constant("L0", sm.lipschitz_bound);
    constant("delta", std::min(spec.f_upper, spec.f_lower));
    constant("C_f", nemytskii_bound(spec, cfg.domain));
    if (!(sm.margin > 0.0)) {
      std::ostringstream os;
      os << "smallness condition M_beta L~ < 1 fails: M_beta = " << sm.m_beta
         << ", L~ = " << sm.l_tilde << ", margin 1 - M_beta L~ = " << sm.margin;
      if (cfg.lp.require_smallness) throw PreconditionError(os.str());
      d["check"]["smallness_warning"] = os.str();
    }
    const LandesmanLazerReport ll = verify_landesman_lazer(spec, cfg.domain, 40.0);
    d["check"]["landesman_lazer"] = {{"pass", ll.pass},
                                     {"upper_margin", ll.upper_margin},
                                     {"lower_margin", ll.lower_margin}};
    claims["smallness"] = verdict(sm.margin > 0.0);
    claims["landesman_lazer"] = verdict(ll.pass);
    if (cfg.stage == Stage::check) {
      flush();
      return rep;
    }

    // manifold: the graph at the working lambda and its invariance
    stage = "manifold";
    double t0 = now_seconds();
    ExperimentConfig run_cfg = cfg;
    run_cfg.lp = lpc;
    const ManifoldRun mr = build_manifold(run_cfg, basis, spec, lambda);
    const ManifoldGraph& graph = *mr.graph;
    const int m = graph.center_dim();
    d["manifold"] = {{"radius", graph.box().radius},
                     {"samples", graph.samples().size()},
                     {"window", mr.lp->window()},
                     {"grid_nodes", mr.lp->grid().size()},
                     {"lipschitz_ratio", graph.max_lipschitz_ratio()},
                     {"lipschitz_bound", number(graph.lipschitz_bound())},
                     {"sup_alpha_norm", graph.max_alpha_norm()},
                     {"uniform_bound", graph.uniform_bound()},
                     {"max_iterations", graph.max_iterations()},
                     {"max_contraction_ratio", graph.max_contraction_ratio()},
                     {"tail_bound", mr.lp->tail_bound()}};
    {
      std::ostringstream os;
      write_graph_csv(os, graph);
      rep.csv.emplace_back("manifold_graph.csv", os.str());
    }
    claims["contraction"] = verdict(graph.max_contraction_ratio() <= 1.1 * sm.contraction_bound &&
                                    graph.max_iterations() <= 40);
    claims["manifold_lipschitz"] = verdict(graph.max_lipschitz_ratio() <= graph.lipschitz_bound());

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    json inv = json::array();
    std::ostringstream inv_csv;
    inv_csv << "point";
    for (int i = 0; i < m; ++i) inv_csv << ",y_" << i + 1;
    inv_csv << ",residual,budget,fixed_point,tail,quadrature,interpolation,integrator,pass\n";
    bool inv_ok = true;
    for (int p = 0; p < cfg.invariance_points; ++p) {
      Eigen::VectorXd y(m);
      do {
        for (int i = 0; i < m; ++i) y[i] = unit(rng);
      } while (y.norm() > 1.0);
      y *= 0.25 * graph.box().radius;
      json item = {{"y", vec_json(y)}};
      try {
        const InvarianceReport ir = invariance_residual(graph, y, cfg.invariance_horizon, cfg.integrator);
        item["residual"] = ir.residual;
        item["budget"] = ir.budget();
        item["terms"] = {{"fixed_point", ir.fixed_point_term},
                         {"tail", ir.tail_term},
                         {"quadrature", ir.quadrature_term},
                         {"interpolation", ir.interpolation_term},
                         {"integrator", ir.integrator_term}};
        item["pass"] = ir.pass();
        inv_ok = inv_ok && ir.pass();
        inv_csv << p;
        for (int i = 0; i < m; ++i) inv_csv << ',' << fmt_num(y[i]);
        inv_csv << ',' << fmt_num(ir.residual) << ',' << fmt_num(ir.budget()) << ','
                << fmt_num(ir.fixed_point_term) << ',' << fmt_num(ir.tail_term) << ','
                << fmt_num(ir.quadrature_term) << ',' << fmt_num(ir.interpolation_term) << ','
                << fmt_num(ir.integrator_term) << ',' << (ir.pass() ? 1 : 0) << '\n';
      } catch (const OutOfDomainError& e) {
        item["pass"] = false;
        item["error"] = e.what();
        inv_ok = false;
      }
      inv.push_back(item);
    }
    d["manifold"]["invariance"] = inv;
    rep.csv.emplace_back("invariance.csv", inv_csv.str());
    if (cfg.invariance_points > 0) claims["invariance"] = verdict(inv_ok);
    std::fprintf(stderr, "[manifold] %zu samples in %.1f s\n", graph.samples().size(), now_seconds() - t0);
    if (cfg.stage == Stage::manifold) {
      flush();
      return rep;
    }

    // annulus: theta, saturation, the invariant annulus, attractor cover and shape
    stage = "annulus";
    t0 = now_seconds();
    double theta = cfg.theta;
    if (!cfg.lambda_grid.empty()) theta = std::abs(lev.eigenvalue - cfg.lambda_grid.front());
    json theta_json = json::object();
    if (std::isnan(theta)) {
      const ThetaSearch ts = search_theta(
          lev.eigenvalue, beta, sigma,
          [&](double lam) {
            const ManifoldRun trial = build_manifold(run_cfg, basis, spec, lam);
            const ReducedFlow rf(trial.graph);
            (void)invariant_annulus(rf);
            return true;
          },
          cfg.theta_bisections);
      if (!(ts.theta > 0.0)) throw CertificationError("no theta <= beta_k / 8 certifies the annulus");
      theta = ts.theta;
      json trials = json::array();
      std::ostringstream tcsv;
      tcsv << "theta,lambda,certified\n";
      for (const auto& [th, ok] : ts.trials) {
        trials.push_back({{"theta", th}, {"certified", ok}});
        tcsv << fmt_num(th) << ',' << fmt_num(lev.eigenvalue - sigma * th) << ',' << (ok ? 1 : 0) << '\n';
      }
      theta_json = {{"search", "bisection"}, {"trials", trials}};
      rep.csv.emplace_back("theta_search.csv", tcsv.str());
    } else {
      theta_json = {{"search", "configured"}};
    }
    d["theta"] = theta_json;
    constant("theta", theta);

    ReducedFlow flow(mr.graph);
    const SaturationResult sat = find_s0(flow);
    const AnnulusSpec an = invariant_annulus(flow, sat);
    constant("r", sat.r);
    constant("epsilon", sat.epsilon);
    constant("s0", sat.s0);
    constant("c0", an.c0);
    constant("R0", an.R0);
    constant("C_lambda", an.C_lambda);
    constant("rho", an.rho);
    constant("a", an.a);
    constant("b", an.b);
    constant("a_bound", an.a_bound);
    d["annulus"] = {{"lambda", an.lambda},
                    {"distance", an.distance},
                    {"a", an.a},
                    {"b", an.b},
                    {"c0", an.c0},
                    {"c0_check", an.c0 - sat.r * an.delta / 2.0},
                    {"inner_min_margin", an.inner_min_margin},
                    {"outer_max", an.outer_max},
                    {"inner_samples", an.inner_samples},
                    {"outer_samples", an.outer_samples},
                    {"r_refined", sat.r_refined},
                    {"saturation_directions", sat.directions},
                    {"saturation_corrections", sat.corrections}};
    claims["invariant_annulus"] = "PASS";

    flow.tabulate(cfg.table_spacing > 0.0 ? cfg.table_spacing : (m == 1 ? 0.05 : 0.5), cfg.table_angles);
    const AttractorCover cover = compute_attractor(flow, an, cfg.attractor);
    const ShapeReport shape = certify_sphere_shape(cover);
    json eqs = json::array();
    std::ostringstream eq_csv;
    for (int i = 0; i < m; ++i) eq_csv << "w_" << i + 1 << ',';
    eq_csv << "norm,residual,unstable_directions\n";
    for (const auto& e : cover.equilibria) {
      eqs.push_back({{"w", vec_json(e.w)}, {"norm", e.w.norm()}, {"residual", e.residual},
                     {"unstable_directions", e.unstable_directions}});
      for (int i = 0; i < m; ++i) eq_csv << fmt_num(e.w[i]) << ',';
      eq_csv << fmt_num(e.w.norm()) << ',' << fmt_num(e.residual) << ',' << e.unstable_directions << '\n';
    }
    d["attractor"] = {{"cells", cover.cells},
                      {"box", {cover.lo, cover.hi}},
                      {"cover_count", cover.cover_count()},
                      {"sweeps", cover.sweeps},
                      {"equilibria", eqs}};
    d["shape"] = {{"pass", shape.pass},
                  {"target", m == 1 ? "S0" : "S1"},
                  {"components", shape.components},
                  {"one_per_sign", shape.one_per_sign},
                  {"connected", shape.connected},
                  {"complement_components", shape.complement_components},
                  {"origin_enclosed", shape.origin_enclosed},
                  {"origin_excluded", shape.origin_excluded},
                  {"note", shape.note}};
    {
      std::ostringstream os;
      write_cover_csv(os, cover);
      rep.csv.emplace_back("attractor_cover.csv", os.str());
    }
    rep.csv.emplace_back("reduced_equilibria.csv", eq_csv.str());
    claims["sphere_shape"] = verdict(shape.pass);
    claims["reduced_equilibria"] = verdict(cover.equilibria.size() >= 2);
    std::fprintf(stderr, "[annulus] theta %.6g, a %.6g, b %.6g, cover %d cells in %.1f s\n", theta,
                 an.a, an.b, cover.cover_count(), now_seconds() - t0);
    if (cfg.stage == Stage::annulus) {
      flush();
      return rep;
    }

    // bifurcate: branches on the lambda grid, multiplicity claims and cross-checks
    stage = "bifurcate";
    t0 = now_seconds();
    MultiplicityConfig mc = cfg.multiplicity;
    mc.grid_count = cfg.grid_count;
    const MultiplicityReport mrep =
        cfg.lambda_grid.empty() ? multiplicity_report(basis, spec, cfg.k, theta, sat.r, mc)
                                : multiplicity_report(basis, spec, cfg.k, cfg.lambda_grid, sat.r, mc);
    {
      std::ostringstream os;
      write_branches_csv(os, mrep.branches);
      rep.csv.emplace_back("branches.csv", os.str());
    }
    json grid = json::array();
    std::ostringstream gcsv;
    gcsv << "lambda,roots,max_drift,drift_horizon\n";
    for (const auto& gp : mrep.points) {
      json norms = json::array();
      for (const auto& e : gp.roots) norms.push_back(e.norm_h);
      grid.push_back({{"lambda", gp.lambda}, {"roots", gp.roots.size()}, {"norms_h", norms},
                      {"max_drift", gp.max_drift}, {"drift_horizon", gp.drift_horizon}});
      gcsv << fmt_num(gp.lambda) << ',' << gp.roots.size() << ',' << fmt_num(gp.max_drift) << ','
           << fmt_num(gp.drift_horizon) << '\n';
    }
    rep.csv.emplace_back("grid_roots.csv", gcsv.str());
    json branches = json::array();
    for (const auto& br : mrep.branches) {
      branches.push_back({{"classification", to_string(br.classification)},
                          {"points", br.points.size()},
                          {"terminated", br.terminated},
                          {"termination", br.termination},
                          {"max_step", br.max_step},
                          {"first_norm_v", br.points.front().norm_v},
                          {"last_norm_v", br.points.back().norm_v}});
    }
    d["bifurcation"] = {{"theta", mrep.theta},
                        {"grid", mrep.grid},
                        {"points", grid},
                        {"branches", branches},
                        {"diverging", mrep.diverging},
                        {"bounded", mrep.bounded},
                        {"product", mrep.product},
                        {"product_ratio", mrep.product_ratio},
                        {"max_product_deviation", mrep.max_product_deviation},
                        {"product_law_uniform", mrep.product_law_uniform},
                        {"bounded_sup_norm_v", mrep.bounded_sup_norm_v},
                        {"max_drift", mrep.max_drift},
                        {"min_energy_gap", number(mrep.min_energy_gap)},
                        {"other_side_roots", mrep.other_side_roots},
                        {"other_side_blowups", mrep.other_side_blowups}};
    claims["three_solutions"] = verdict(mrep.three_solutions);
    claims["divergence"] = verdict(mrep.divergence);
    claims["bounded_branch"] = verdict(mrep.bounded_branch);
    claims["equilibrium_drift"] = verdict(mrep.drift_ok);
    claims["energy_separation"] = verdict(mrep.energy_separated);
    claims["bifurcation_side"] = verdict(mrep.side_ok);

    // reduced and full equilibria at the working lambda describe the same set
    const auto full = deflated_search(*basis, spec, lambda,
                                      default_seeds(*basis, spec, cfg.k, lambda, sat.r, cfg.seed),
                                      mc.newton);
    double worst_lift = 0.0, worst_zero = 0.0;
    for (const auto& e : cover.equilibria) {
      const Eigen::VectorXd lifted = flow.lift(e.w);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& u : full) {
        const Eigen::VectorXd diff = u.u - lifted;
        best = std::min(best, std::sqrt((basis->eigenvalues().array() * diff.array().square()).sum()));
      }
      worst_lift = std::max(worst_lift, best);
    }
    for (const auto& u : full) {
      const Eigen::VectorXd w = split.center_coords(u.u);
      if (!graph.contains(w)) {
        worst_zero = std::numeric_limits<double>::infinity();
        continue;
      }
      worst_zero = std::max(worst_zero, flow.field(w).norm());
    }
    d["consistency"] = {{"full_roots", full.size()},
                        {"reduced_roots", cover.equilibria.size()},
                        {"max_lift_distance_v", number(worst_lift)},
                        {"max_reduced_field_at_full_roots", number(worst_zero)}};
    claims["reduced_full_consistency"] =
        verdict(worst_lift < cfg.consistency_tolerance && worst_zero < cfg.consistency_tolerance);

    if (cfg.omega_limits) {
      const OmegaLimitCheck ol = cross_validate_omega_limits(split, spec, full, 0.05, 6, cfg.seed);
      json approach = json::array();
      for (double a : ol.approach) approach.push_back(number(a));
      d["omega_limits"] = {{"roots", ol.roots},
                           {"reachable", ol.reachable},
                           {"recovered", ol.recovered},
                           {"seeds", ol.seeds},
                           {"escaped", ol.escaped},
                           {"unmatched_limits", ol.unmatched_limits},
                           {"approach", approach}};
      claims["omega_limits"] = verdict(ol.pass());
    }
    std::fprintf(stderr, "[bifurcate] %zu branches in %.1f s\n", mrep.branches.size(), now_seconds() - t0);
  } catch (const Error& e) {
    rep.aborted = true;
    rep.failed_stage = stage;
    d["error"] = {{"stage", stage}, {"kind", error_kind(e)}, {"message", e.what()}};
  }
  flush();
  return rep;
}

std::vector<std::filesystem::path> emit_report(const Report& report,
                                               const std::filesystem::path& dir,
                                               ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ResourceError("cannot create output directory '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::string& name, const std::string& contents) {
    const auto path = dir / name;
    std::ofstream os(path, std::ios::binary);
    os << contents;
    os.close();
    if (!os) throw ResourceError("cannot write '" + path.string() + "'");
    written.push_back(path);
  };
  if (format != ReportFormat::csv) write("report.json", report.data.dump(2) + "\n");
  if (format != ReportFormat::json)
    for (const auto& [name, contents] : report.csv) write(name, contents);
  return written;
}

}  // namespace bifinf
