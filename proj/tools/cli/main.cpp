#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

#include "commands.hpp"
#include "tfem/error.hpp"

namespace {

int exit_code(tfem::Errc c) {
  switch (c) {
    case tfem::Errc::config:
    case tfem::Errc::parameter:
    case tfem::Errc::feasibility:
      return 2;
    case tfem::Errc::io:
      return 4;
    default:
      return 3;
  }
}

int report_error(const std::string& kind, int code, const std::string& msg) {
  std::cerr << nlohmann::json{{"error", kind}, {"exit", code}, {"message", msg}}.dump() << "\n";
  return code;
}

void add_common(CLI::App* sub, tfem::cli::Common& c) {
  sub->add_option("--seed", c.seed, "base seed (required)")->required();
  sub->add_option("--out", c.out, "output root directory")->capture_default_str();
}

void add_gen(CLI::App* sub, tfem::cli::GenOptions& g) {
  sub->add_option("--k", g.k, "number of clusters")->capture_default_str();
  sub->add_option("--d", g.d, "dimension")->capture_default_str();
  sub->add_option("--per-cluster", g.per_cluster, "points in the smallest cluster")->capture_default_str();
  sub->add_option("--delta", g.delta, "minimum distance between means")->capture_default_str();
  sub->add_option("--sigma", g.sigma, "noise standard deviation")->capture_default_str();
  sub->add_option("--sigma2-range", g.sigma2_range, "lo,hi: draw sigma^2 uniformly per instance")
      ->delimiter(',')
      ->expected(2);
  sub->add_option("--alpha", g.alpha, "minimum cluster fraction (0: implied by counts)")->capture_default_str();
  sub->add_option("--imbalance", g.imbalance, "largest over smallest cluster size")->capture_default_str();
}

void add_arms(CLI::App* sub, tfem::cli::ArmOptions& a) {
  sub->add_option("--arms", a.arms, "arms among lloyd, tf, tf_plus")->delimiter(',')->capture_default_str();
  sub->add_option("--tau", a.tau, "Lloyd rounds")->capture_default_str();
  sub->add_option("--m-heads", a.m_heads, "random features per fitted component")->capture_default_str();
  sub->add_option("--beta", a.beta, "assignment temperature (0: 50 ln N)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace tfem::cli;
  CLI::App app{"Constructed transformers for Lloyd clustering and power-iteration PCA"};
  app.set_config("--config", "", "INI/TOML config with one section per subcommand");
  app.require_subcommand(1);

  Common common;
  GenOptions gen;
  RunOptions run;
  SweepOptions sweep;
  AuditOptions audit;
  PcaOptions pca;

  auto* g = app.add_subcommand("gen", "write seeded instance CSVs");
  add_common(g, common);
  add_gen(g, gen);
  g->add_option("--count", gen.count, "instances to write (seeds seed..seed+count-1)")->capture_default_str();

  auto* r = app.add_subcommand("run", "run one instance through every arm");
  add_common(r, common);
  add_gen(r, run.gen);
  add_arms(r, run.arms);
  r->add_option("--instance", run.instance, "instance CSV (default: generate from --seed)");

  auto* s = app.add_subcommand("sweep", "grid sweep with mean and std aggregation");
  add_common(s, common);
  add_gen(s, sweep.gen);
  add_arms(s, sweep.arms);
  s->add_option("--variable", sweep.variable, "delta, dim, n, classes, imbalance or tau")->capture_default_str();
  s->add_option("--grid", sweep.grid, "comma separated values")->delimiter(',')->required();
  s->add_option("--seeds", sweep.seeds, "seeds per grid point")->capture_default_str();

  auto* a = app.add_subcommand("audit_bounds", "hardmax, random-feature and construction audits");
  add_common(a, common);
  a->add_option("--draws", audit.draws, "hardmax draws")->capture_default_str();
  a->add_option("--panel", audit.panel, "instances per fidelity check")->capture_default_str();
  a->add_option("--m-heads", audit.m_heads, "features per fitted component")->capture_default_str();

  auto* p = app.add_subcommand("pca", "power-iteration transformer against Jacobi");
  add_common(p, common);
  p->add_option("--d", pca.d, "dimension")->capture_default_str();
  p->add_option("--k", pca.k, "eigenvectors")->capture_default_str();
  p->add_option("--tau", pca.tau, "total power steps")->capture_default_str();
  p->add_option("--m-heads", pca.m_heads, "heads per normalisation layer")->capture_default_str();
  p->add_option("--matrices", pca.matrices, "random SPD matrices")->capture_default_str();
  p->add_option("--lambda-lo", pca.lambda_lo, "smallest handled ||Av||")->capture_default_str();
  p->add_option("--lambda-hi", pca.lambda_hi, "largest handled eigenvalue")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("config", 2, e.what());
  }

  try {
    if (*g) return cmd_gen(common, gen);
    if (*r) return cmd_run(common, run);
    if (*s) return cmd_sweep(common, sweep);
    if (*a) return cmd_audit_bounds(common, audit);
    return cmd_pca(common, pca);
  } catch (const tfem::Error& e) {
    const int code = exit_code(e.code());
    const char* kind = code == 2 ? "config" : code == 4 ? "io" : "infeasible_construction";
    return report_error(kind, code, std::string(tfem::errc_name(e.code())) + ": " + e.what());
  } catch (const std::exception& e) {
    return report_error("internal", 3, e.what());
  }
}
