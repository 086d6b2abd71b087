#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "brwlab/brwlab.hpp"

using namespace brwlab;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitOverflow = 3;
constexpr int kExitSelftest = 1;

struct Flags {
  std::map<std::string, std::string> values;
  std::string config_path;
  bool exact = false;
};

const std::vector<std::pair<std::string, std::string>> kValueFlags{
    {"law", "offspring law (two-point, gaussian-binary, extinction-demo)"},
    {"x", "starting position"},
    {"n", "generation / walk length"},
    {"n-grid", "comma-separated ascending generations"},
    {"k0", "generation from which killing applies"},
    {"replicates", "number of independent replicates"},
    {"seed", "master seed"},
    {"threads", "worker threads (default BRWLAB_THREADS or 1)"},
    {"eps", "truncation levels"},
    {"lambda-grid", "Laplace transform arguments"},
    {"T-grid", "upper limits for partial integrals"},
    {"x-grid", "starting positions"},
    {"out", "CSV output path"},
    {"plot", "SVG output path"},
    {"budget", "selftest budget: small or full"},
    {"function", "Green test function: exp, lorentzian, zero, indicator:lo:hi"},
    {"rho", "Tauberian weight: y, 1, y^alpha, ylog"},
    {"bootstrap", "bootstrap resamples"},
    {"x-max", "renewal measure range"},
    {"max-steps", "step budget per ladder path"},
    {"cap", "population hard cap"}};

void add_flags(CLI::App* sub, Flags& f) {
  for (const auto& [name, help] : kValueFlags) {
    sub->add_option_function<std::string>(
        "--" + name, [&f, name = name](const std::string& v) { f.values[name] = v; }, help);
  }
  sub->add_flag("--exact", f.exact, "exact lattice computation where available");
  sub->add_option("--config", f.config_path, "config file, or an output file to rerun from its header");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Provenance provenance(const ExperimentConfig& c) { return {c.command, c.resolved_text(), c.seed, c.threads}; }

template <class Body>
void write_output(const ExperimentConfig& c, const std::string& path, Body&& body) {
  if (path.empty()) return;
  std::ofstream os(path);
  if (!os) throw ConfigError("out", "cannot write '" + path + "'");
  write_provenance(os, provenance(c));
  body(os);
}

void write_plot(const ExperimentConfig& c, const std::string& svg) {
  if (c.plot.empty()) return;
  std::ofstream os(c.plot);
  if (!os) throw ConfigError("plot", "cannot write '" + c.plot + "'");
  os << svg;
}

json estimate(const EstimateWithError& e) { return {{"mean", e.mean}, {"stderr", e.se}}; }

json header(const ExperimentConfig& c) {
  json j;
  j["command"] = c.command;
  j["version"] = kVersion;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["config"] = c.values;
  return j;
}

// ---------------------------------------------------------------------------

int cmd_calibrate(const ExperimentConfig& c) {
  const auto law = c.law();
  json j = header(c);
  j["law"] = law.name();
  j["params"] = law.params();
  if (law.kind() == LawKind::TwoPoint) {
    j["a"] = law.params()[0];
    j["q"] = law.params()[1];
  }
  j["sigma2"] = law.sigma2();
  j["lattice_span"] = law.lattice_span();
  if (const auto r = law.analytic_residuals()) j["residuals"] = {{"mass", r->mass}, {"drift", r->drift}};
  if (c.replicates >= 1000) {
    Stream rng({c.seed, experiments::kBoundary, 0, 0});
    const auto mc = verify_boundary(law, c.replicates, rng);
    j["monte_carlo"] = {{"mass", estimate(mc.mass)}, {"drift", estimate(mc.drift)}};
  }
  write_output(c, c.out, [&](std::ostream& os) { os << to_config(law); });
  std::cout << j.dump(2) << std::endl;
  return 0;
}

int cmd_simulate(const ExperimentConfig& c) {
  const auto law = c.law();
  if (c.k0 > c.n) throw ConfigError("k0", "k0 must not exceed n");
  const auto series =
      simulate_series(law, c.x, c.n, c.replicates, c.seed, c.threads, experiments::kTree, c.cap, c.k0);
  json j = header(c);
  j["law"] = law.name();
  json gens = json::array();
  std::vector<double> ns, ws, we;
  for (std::size_t g = 0; g <= c.n; ++g) {
    std::vector<double> w, d, w1, w2;
    for (const auto& s : series) {
      w.push_back(s.W[g]);
      d.push_back(s.D[g]);
      w1.push_back(s.Wprime[g]);
      w2.push_back(s.Wsecond[g]);
    }
    const auto W = mean_with_se(w);
    gens.push_back({{"n", g},
                    {"W", estimate(W)},
                    {"D", estimate(mean_with_se(d))},
                    {"Wprime", estimate(mean_with_se(w1))},
                    {"Wsecond", estimate(mean_with_se(w2))}});
    ns.push_back(static_cast<double>(g));
    ws.push_back(W.mean);
    we.push_back(W.se);
  }
  j["generations"] = gens;
  std::size_t extinct = 0;
  for (const auto& s : series) extinct += s.population.back() == 0;
  j["extinct_fraction"] = static_cast<double>(extinct) / static_cast<double>(series.size());
  const std::vector<std::size_t> ks{c.k0};
  j["never_bites"] = estimate(kill_from_k0(series, ks).front().probability);
  write_output(c, c.out, [&](std::ostream& os) {
    write_series_header(os);
    for (std::size_t r = 0; r < series.size(); ++r) write_series_rows(os, r, series[r]);
  });
  write_plot(c, svg_line_chart("Mean of W_n", "n", "E W_n", {{"W_n", ns, ws, we}}));
  std::cout << j.dump(2) << std::endl;
  return 0;
}

int cmd_spine(const ExperimentConfig& c) {
  const auto law = c.law();
  const SpineWalk walk(law);
  const auto R = renewal_function_for(walk, c.x_max, 2000, c.max_steps, c.seed, c.threads);
  const auto e = sample_p_plus(c.x, c.n, law, c.replicates, R, c.seed, c.threads, !c.out.empty());
  json j = header(c);
  j["law"] = law.name();
  j["renewal"] = exact_renewal(walk) ? "exact" : "ladder estimate";
  j["mean_weight"] = estimate(e.mean_weight);
  j["ess"] = e.ess;
  j["low_ess"] = e.low_ess;
  if (c.n > 0) j["bessel3_ks"] = e.bessel_ks(law.sigma2());
  write_output(c, c.out, [&](std::ostream& os) { write_spine_csv(os, e); });
  std::cout << j.dump(2) << std::endl;
  return 0;
}

int cmd_renewal(const ExperimentConfig& c) {
  const auto law = c.law();
  const SpineWalk walk(law);
  RenewalMeasure mu = [&] {
    if (c.exact) {
      if (!walk.is_simple_symmetric()) throw ConfigError("exact", "no exact renewal measure for " + law.name());
      return RenewalMeasure::exact_simple_walk(walk.lattice()->span, LadderKind::Descending, c.x_max);
    }
    return RenewalMeasure::from_ladder_paths(walk, LadderKind::Descending, c.x_max, c.replicates, c.max_steps, c.seed,
                                             c.threads);
  }();
  json j = header(c);
  j["law"] = law.name();
  j["source"] = mu.exact() ? "exact" : "ladder paths";
  std::vector<double> xs = c.x_grid;
  if (xs.empty()) xs = {0.0, c.x_max / 4, c.x_max / 2, c.x_max};
  json rows = json::array();
  for (double x : xs) {
    if (x > c.x_max) throw ConfigError("x-grid", "point beyond x-max");
    rows.push_back({{"x", x}, {"R", estimate(mu.cdf_estimate(x))}, {"truncation_bound", mu.truncation_bound(x)}});
  }
  j["R"] = rows;
  json ce = json::object();
  for (auto m : {CEqualsMethod::NegExcursion, CEqualsMethod::PosExcursion, CEqualsMethod::ExpSeries}) {
    const auto r = c_equals(walk, m);
    ce[to_string(m)] = {{"value", r.value}, {"lo", r.lo}, {"hi", r.hi}};
  }
  j["c_equals"] = ce;
  if (const auto cf = c_equals_closed_form(walk)) j["c_equals_closed_form"] = *cf;
  j["inverse_mean_height"] = mu.inverse_mean_height();
  write_output(c, c.out, [&](std::ostream& os) { write_renewal_csv(os, mu, mu.exact() ? 0.0 : 0.01); });
  std::cout << j.dump(2) << std::endl;
  return 0;
}

HalfLineFn parse_function(const std::string& s) {
  if (s == "exp") return green_functions::exponential();
  if (s == "lorentzian") return green_functions::lorentzian();
  if (s == "zero") return green_functions::zero();
  if (s.rfind("indicator:", 0) == 0) {
    const auto parts = config_detail::split_list([&] {
      std::string t = s.substr(10);
      for (auto& ch : t)
        if (ch == ':') ch = ',';
      return t;
    }());
    if (parts.size() != 2) throw ConfigError("function", "indicator needs indicator:lo:hi");
    const double lo = config_detail::to_double("function", parts[0]);
    const double hi = config_detail::to_double("function", parts[1]);
    return green_functions::indicator(lo, hi);
  }
  throw ConfigError("function", "unknown function '" + s + "'");
}

int cmd_green(const ExperimentConfig& c) {
  const auto law = c.law();
  const SpineWalk walk(law);
  const auto f = parse_function(c.function);
  GreenBudget budget;
  budget.paths = c.replicates;
  budget.ladder_paths = c.replicates;
  budget.ladder_steps = c.max_steps;
  budget.x_max = std::max(c.x_max, *std::max_element(c.x_grid.begin(), c.x_grid.end()));
  budget.z_max = 2.0 * budget.x_max;
  const auto setup = prepare_green(walk, budget, c.seed, c.threads);
  json j = header(c);
  j["law"] = law.name();
  json rows = json::array();
  std::vector<std::pair<GreenQuery, GreenQuery>> out;
  for (double x : c.x_grid) {
    if (x < 0.0) throw ConfigError("x-grid", "Green operator needs x >= 0");
    const auto a = green_operator(x, f, GreenMethod::RenewalFormula, walk, setup, budget, c.seed, c.threads);
    const auto b = green_operator(x, f, GreenMethod::PathMc, walk, setup, budget, c.seed, c.threads);
    out.emplace_back(a, b);
    rows.push_back({{"x", x},
                    {"renewal_formula", {{"value", a.value}, {"stderr", a.se}, {"truncation_bound", a.truncation_bound}}},
                    {"path_mc", {{"value", b.value}, {"stderr", b.se}, {"truncation_bound", b.truncation_bound}}},
                    {"agree", green_agree(a, b, 3.0)}});
  }
  j["values"] = rows;
  write_output(c, c.out, [&](std::ostream& os) {
    os << "x,method,value,stderr,truncation_bound\n";
    for (const auto& [a, b] : out)
      for (const auto* q : {&a, &b})
        os << format_real(q->x) << ',' << to_string(q->method) << ',' << format_real(q->value) << ','
           << format_real(q->se) << ',' << format_real(q->truncation_bound) << '\n';
  });
  std::cout << j.dump(2) << std::endl;
  return 0;
}

int cmd_kozlov(const ExperimentConfig& c) {
  const auto law = c.law();
  const SpineWalk walk(law);
  json j = header(c);
  j["law"] = law.name();
  std::vector<double> ns, scaled;
  std::vector<std::pair<std::size_t, EstimateWithError>> rows;
  if (c.exact) {
    if (!walk.lattice()) throw ConfigError("exact", "exact survival needs a lattice law");
    const auto curve = survival_curve_lattice(*walk.lattice(), c.x, c.n);
    for (std::size_t k = 0; k < curve.size(); ++k) rows.push_back({k, {curve[k], 0.0}});
    j["method"] = "exact";
  } else {
    rows.push_back({c.n, survival_probability(c.x, c.n, walk, SurvivalMethod::Mc, c.replicates, c.seed, c.threads)});
    j["method"] = "monte_carlo";
  }
  const auto& last = rows.back().second;
  j["m_n"] = last.mean;
  if (!c.exact) j["stderr"] = last.se;
  j["sqrt_n_m_n"] = std::sqrt(static_cast<double>(c.n)) * last.mean;
  if (const auto R = exact_renewal(walk); R && walk.is_simple_symmetric()) {
    j["R_x"] = (*R)(c.x);
    j["sqrt_n_m_n_limit"] = std::sqrt(2.0 / std::numbers::pi) * (*R)(c.x);
  }
  for (const auto& [k, e] : rows) {
    ns.push_back(static_cast<double>(k));
    scaled.push_back(std::sqrt(static_cast<double>(k)) * e.mean);
  }
  write_output(c, c.out, [&](std::ostream& os) {
    os << "n,m_n,stderr\n";
    for (const auto& [k, e] : rows) os << k << ',' << format_real(e.mean) << ',' << format_real(e.se) << '\n';
  });
  write_plot(c, svg_line_chart("sqrt(n) P_x(walk stays >= 0 up to n)", "n", "sqrt(n) m_n", {{"sqrt(n) m_n", ns, scaled, {}}}));
  std::cout << j.dump(2) << std::endl;
  return 0;
}

int cmd_seneta_heyde(const ExperimentConfig& c) {
  const auto law = c.law();
  SenetaHeydeOptions opt;
  if (!c.n_grid.empty()) opt.n_grid = c.n_grid;
  opt.replicates = c.replicates;
  opt.x = c.x;
  opt.lambdas = c.lambdas;
  opt.bootstrap = c.bootstrap;
  opt.cap = c.cap;
  const auto run = seneta_heyde_experiment(law, opt, c.seed, c.threads);
  json j = header(c);
  j["summary"] = seneta_heyde_summary(run);
  write_output(c, c.out, [&](std::ostream& os) { write_seneta_heyde_csv(os, run); });
  std::vector<double> ns, d, de, g, ge;
  for (const auto& p : run.points) {
    ns.push_back(static_cast<double>(p.n));
    d.push_back(p.discrepancy);
    de.push_back(p.discrepancy_se);
    g.push_back(p.laplace_gap);
    ge.push_back(p.laplace_gap_se);
  }
  write_plot(c, svg_line_chart("E[|sqrt(n) W_n - c D_n| ^ 1]", "n", "discrepancy",
                               {{"clamp discrepancy", ns, d, de}, {"Laplace sup gap", ns, g, ge}}));
  std::cout << j.dump(2) << std::endl;
  return 0;
}

HeavyLogLaw parse_heavy_law(const std::string& s) {
  const auto colon = s.find(':');
  const std::string fam = s.substr(0, colon);
  const double p = colon == std::string::npos ? 1.0 : config_detail::to_double("law", s.substr(colon + 1));
  try {
    if (fam == "pareto-log") return HeavyLogLaw::pareto_log(p);
    if (fam == "exp-log") return HeavyLogLaw::exp_log(p);
    if (fam == "bounded") return HeavyLogLaw::bounded(p);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("law", e.what());
  }
  throw ConfigError("law", "expected shipped, pareto-log:beta, exp-log:r or bounded:b, got '" + s + "'");
}

RhoFn parse_rho(const std::string& s) {
  try {
    if (s == "y") return RhoFn::power(1.0);
    if (s == "1") return RhoFn::constant();
    if (s == "ylog") return RhoFn::y_log_y();
    if (s.rfind("y^", 0) == 0) return RhoFn::power(config_detail::to_double("rho", s.substr(2)));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("rho", e.what());
  }
  throw ConfigError("rho", "expected y, 1, ylog or y^alpha, got '" + s + "'");
}

int cmd_tauberian(const ExperimentConfig& c) {
  std::vector<std::pair<HeavyLogLaw, RhoFn>> pairs;
  if (c.law_name == "shipped")
    pairs = shipped_tauberian_pairs();
  else
    pairs.emplace_back(parse_heavy_law(c.law_name), parse_rho(c.rho));
  json j = header(c);
  json rows = json::array();
  std::vector<TauberianResult> results;
  for (const auto& [law, rho] : pairs) {
    auto r = tauberian_check(law, rho, c.T_grid, c.replicates, c.seed);
    rows.push_back({{"law", r.law},
                    {"rho", r.rho},
                    {"integral_slope", r.integral_slope},
                    {"moment_slope", r.moment_slope},
                    {"integral", to_string(r.integral_side)},
                    {"moment", to_string(r.moment_side)},
                    {"classification", to_string(r.classification)},
                    {"predicted_finite", r.predicted_finite},
                    {"matches_prediction", r.matches_prediction()},
                    {"mc_moment", estimate(r.mc_moment)}});
    results.push_back(std::move(r));
  }
  j["pairs"] = rows;
  write_output(c, c.out, [&](std::ostream& os) {
    os << "law,rho,T,integral,moment\n";
    for (const auto& r : results)
      for (std::size_t i = 0; i < r.T_grid.size(); ++i)
        os << r.law << ',' << r.rho << ',' << format_real(r.T_grid[i]) << ',' << format_real(r.integrals[i]) << ','
           << format_real(r.moments[i]) << '\n';
  });
  std::cout << j.dump(2) << std::endl;
  return 0;
}

int cmd_selftest(const ExperimentConfig& c) {
  SelftestOptions opt;
  opt.budget = budget_from_string(c.budget);
  opt.seed = c.seed;
  opt.threads = c.threads;
  const auto results = Selftest(opt).run(&std::cerr);
  json j = header(c);
  json rows = json::array();
  std::vector<std::string> failed;
  for (const auto& r : results) {
    rows.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"warning", r.warning}, {"detail", r.detail},
                    {"seconds", r.seconds}});
    if (!r.pass) failed.push_back("[" + std::to_string(r.id) + "] " + r.name);
  }
  j["criteria"] = rows;
  j["passed"] = failed.empty();
  std::cout << j.dump(2) << std::endl;
  if (!failed.empty()) {
    std::cerr << "selftest failed:";
    for (const auto& f : failed) std::cerr << "\n  " << f;
    std::cerr << std::endl;
    return kExitSelftest;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching random walks in the boundary case: simulation and checks"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  std::map<std::string, Flags> flags;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> descriptions{
      {"calibrate", "boundary-case calibration of an offspring law"},
      {"simulate", "W_n, D_n, W'_n and W''_n series"},
      {"spine", "spine walk conditioned to stay nonnegative (importance weights)"},
      {"renewal", "renewal function of strict descending ladder heights and c="},
      {"green", "Green operator of the killed walk, two methods"},
      {"kozlov", "survival probability of the spine walk"},
      {"seneta-heyde", "sqrt(n) W_n against c D_n along an n grid"},
      {"tauberian", "finiteness of int phi rho against E[log+Y rho(log+Y)]"},
      {"selftest", "invariant suite at reduced or full budget"}};
  for (const auto& name : subcommands()) {
    subs[name] = app.add_subcommand(name, descriptions.at(name));
    add_flags(subs[name], flags[name]);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;
  const Flags& f = flags[command];

  try {
    RawConfig file;
    if (!f.config_path.empty()) {
      std::string text = read_file(f.config_path);
      if (text.rfind("# brwlab " + std::string(kVersion) + " ", 0) == 0) text = config_from_provenance(text);
      file = parse_config(text);
    }
    auto values = f.values;
    if (f.exact) values["exact"] = "true";
    const auto c = resolve_config(command, file, values);
    if (command == "calibrate") return cmd_calibrate(c);
    if (command == "simulate") return cmd_simulate(c);
    if (command == "spine") return cmd_spine(c);
    if (command == "renewal") return cmd_renewal(c);
    if (command == "green") return cmd_green(c);
    if (command == "kozlov") return cmd_kozlov(c);
    if (command == "seneta-heyde") return cmd_seneta_heyde(c);
    if (command == "tauberian") return cmd_tauberian(c);
    if (command == "selftest") return cmd_selftest(c);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << std::endl;
    return kExitConfig;
  } catch (const PopulationOverflow& e) {
    std::cerr << e.what() << std::endl;
    return kExitOverflow;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return EXIT_FAILURE;
  }
  return EXIT_FAILURE;
}
