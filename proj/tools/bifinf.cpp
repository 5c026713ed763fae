#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bifinf/errors.hpp"
#include "bifinf/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::string lambda_grid;
  std::string out;
  std::string stage;
  std::string format = "both";
  long long seed = -1;
  std::vector<std::string> set;
};

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config, "experiment config (sectioned key = value)")->required();
  app->add_option("--lambda-grid", o.lambda_grid, "comma-separated lambda values approaching mu_k");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--seed", o.seed, "random seed")->check(CLI::NonNegativeNumber);
  app->add_option("--stage", o.stage, "last stage to run")
      ->check(CLI::IsMember({"check", "manifold", "annulus", "bifurcate"}));
  app->add_option("--set", o.set, "override a config key: section.key=value (repeatable)");
  app->add_option("--format", o.format, "report files to write")
      ->check(CLI::IsMember({"csv", "json", "both"}));
}

int run(const Options& o, bifinf::Stage stage) {
  using namespace bifinf;
  ExperimentConfig cfg;
  try {
    cfg = load_config(o.config);
    std::vector<std::string> overrides = o.set;
    if (!o.lambda_grid.empty()) overrides.push_back("lambda.grid=" + o.lambda_grid);
    if (!o.out.empty()) overrides.push_back("experiment.output=" + o.out);
    if (o.seed >= 0) overrides.push_back("experiment.seed=" + std::to_string(o.seed));
    overrides.push_back(std::string("experiment.stage=") + (o.stage.empty() ? to_string(stage) : o.stage));
    apply_overrides(cfg, overrides);
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  }
  const Report rep = run_experiment(cfg);
  const ReportFormat fmt = o.format == "csv" ? ReportFormat::csv
                           : o.format == "json" ? ReportFormat::json
                                                : ReportFormat::both;
  try {
    for (const auto& p : emit_report(rep, cfg.output_dir, fmt)) std::cerr << "wrote " << p.string() << "\n";
  } catch (const Error& e) {
    std::cerr << "output error: " << e.what() << "\n";
    return 3;
  }
  const auto& d = rep.data;
  if (d.contains("constants")) {
    for (const auto& [k, v] : d["constants"].items()) std::cout << k << " = " << v.dump() << "\n";
  }
  if (d.contains("claims")) {
    for (const auto& [k, v] : d["claims"].items()) std::cout << v.get<std::string>() << "  " << k << "\n";
  }
  if (rep.aborted) {
    const auto& e = d["error"];
    std::cout << "ABORTED at stage " << e["stage"].get<std::string>() << " ("
              << e["kind"].get<std::string>() << "): " << e["message"].get<std::string>() << "\n";
    return 2;
  }
  return rep.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bifurcation from infinity: manifold reduction, invariant annuli and branch continuation"};
  app.require_subcommand(1);
  Options o;
  struct Sub {
    const char* name;
    const char* help;
    bifinf::Stage stage;
  };
  const Sub subs[] = {
      {"check", "constants, smallness and the Landesman-Lazer limits", bifinf::Stage::check},
      {"manifold", "check, then the sampled manifold graph and its invariance", bifinf::Stage::manifold},
      {"annulus", "manifold, then theta, the invariant annulus, attractor cover and shape", bifinf::Stage::annulus},
      {"bifurcate", "the full pipeline including branches and multiplicity", bifinf::Stage::bifurcate},
  };
  int code = 0;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, o);
    const bifinf::Stage stage = s.stage;
    sub->callback([&o, &code, stage] { code = run(o, stage); });
  }
  CLI11_PARSE(app, argc, argv);
  return code;
}
