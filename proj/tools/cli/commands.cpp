#include "commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "report.hpp"
#include "tfem/approx.hpp"
#include "tfem/classical.hpp"
#include "tfem/construct.hpp"
#include "tfem/gmm.hpp"

namespace tfem::cli {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<std::size_t> cluster_counts(const GenOptions& g) {
  require(g.k >= 2, Errc::config, "k must be at least 2");
  require(g.per_cluster >= 1, Errc::config, "per_cluster must be positive");
  require(g.imbalance >= 1.0, Errc::config, "imbalance must be at least 1");
  std::vector<std::size_t> counts(g.k);
  for (int u = 0; u < g.k; ++u)
    counts[u] = static_cast<std::size_t>(std::lround(g.per_cluster * (1.0 + (g.imbalance - 1.0) * u / (g.k - 1))));
  return counts;
}

GmmInstance make_instance(const GenOptions& g, std::uint64_t seed) {
  const auto counts = cluster_counts(g);
  double alpha = g.alpha;
  if (alpha == 0.0) {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    alpha = static_cast<double>(*std::min_element(counts.begin(), counts.end())) / static_cast<double>(n);
  }
  double sigma = g.sigma;
  if (!g.sigma2_range.empty()) {
    require(g.sigma2_range.size() == 2 && g.sigma2_range[0] >= 0.0 && g.sigma2_range[1] >= g.sigma2_range[0],
            Errc::config, "sigma2 range needs two values 0 <= lo <= hi");
    std::mt19937_64 rng(seed ^ 0x5EED5167A2ULL);
    sigma = std::sqrt(std::uniform_real_distribution<double>(g.sigma2_range[0], g.sigma2_range[1])(rng));
  }
  return generate_instance(g.d, counts, g.delta, sigma, alpha, seed);
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void check_arms(const ArmOptions& a) {
  require(!a.arms.empty(), Errc::config, "at least one arm is required");
  for (const auto& arm : a.arms)
    require(arm == "lloyd" || arm == "tf" || arm == "tf_plus", Errc::config, "unknown arm: " + arm);
  require(a.tau >= 1, Errc::config, "tau must be at least 1");
  require(a.m_heads >= 8, Errc::config, "m_heads must be at least 8");
  require(a.beta >= 0.0, Errc::config, "beta must be non-negative");
}

struct ArmResult {
  std::string arm;
  double perm_loss = 0.0, ari = 0.0, nmi = 0.0, misclass = 0.0;
  double lloyd_disagreement = 0.0;
  Labels labels;
  json report;  // deterministic content only
  TransformerParams params;  // constructed arms only
  std::string digest;
  double wall_ms = 0.0;
};

// Runs one arm on an instance; every arm starts from the same spectral initialisation.
ArmResult run_arm(const GmmInstance& inst, const SpectralInit& init, const LloydTrace& trace, const std::string& arm,
                  const ArmOptions& o, std::uint64_t fit_seed) {
  const auto t0 = Clock::now();
  ArmResult r;
  r.arm = arm;
  const Mat truth = one_hot(inst.z, inst.k());
  if (arm == "lloyd") {
    r.labels = trace.assignments.back();
    r.perm_loss = perm_loss(one_hot(r.labels, inst.k()), truth);
    json obj = json::array();
    for (std::size_t t = 0; t < trace.assignments.size(); ++t)
      obj.push_back(kmeans_objective(inst.x, trace.centroids[t], trace.assignments[t]));
    r.report = {{"arm", arm}, {"iterations_run", trace.iterations_run}, {"converged", trace.converged},
                {"objective", obj}};
  } else {
    EmSpec s;
    s.k = inst.k();
    s.d = inst.d();
    s.n = inst.n();
    s.tau = o.tau;
    s.m_heads = o.m_heads;
    s.beta = o.beta;
    s.data_radius = data_radius(inst.x);
    s.seed = fit_seed;
    Construction c;
    try {
      c = arm == "tf" ? build_em_tf(s) : build_em_tf_plus(s);
    } catch (const Error& e) {
      if (e.code() == Errc::precondition || e.code() == Errc::fit_failure)
        throw Error(Errc::infeasible_construction, e.what());
      throw;
    }
    const Context ctx = build_context(inst, trace.assignments.front(), init.centroids);
    const Mat out = tf_forward(c.params, ctx.h);
    r.labels = extract_assignments(out);
    r.perm_loss = perm_loss(out, truth);
    r.lloyd_disagreement = misclass(trace.assignments.back(), r.labels);
    r.report = json::parse(c.report.to_json());
    r.params = std::move(c.params);
    r.report["arm"] = arm;
    r.report["lloyd_disagreement"] = r.lloyd_disagreement;
  }
  r.ari = ari(inst.z, r.labels);
  r.nmi = nmi(inst.z, r.labels);
  r.misclass = misclass(inst.z, r.labels);
  r.digest = fnv_digest(r.report.dump());
  r.wall_ms = ms_since(t0);
  return r;
}

struct InstanceRun {
  std::vector<ArmResult> arms;
};

InstanceRun run_instance(const GmmInstance& inst, const ArmOptions& o, std::uint64_t fit_seed) {
  const SpectralInit init = spectral_init(inst.x, inst.k(), inst.seed);
  const LloydTrace trace = lloyd(inst.x, init.centroids, o.tau);
  InstanceRun run;
  for (const auto& arm : o.arms) run.arms.push_back(run_arm(inst, init, trace, arm, o, fit_seed));
  return run;
}

const char* kMetricHeader = "arm,perm_loss,ari,nmi_arithmetic,misclass,report_digest";

std::string metric_cells(const ArmResult& r) {
  return r.arm + "," + num(r.perm_loss) + "," + num(r.ari) + "," + num(r.nmi) + "," + num(r.misclass) + "," +
         r.digest;
}

}  // namespace

int cmd_gen(const Common& c, const GenOptions& o) {
  require(o.count >= 1, Errc::config, "count must be positive");
  OutDirs out(c.out);
  std::ostringstream summary;
  summary << "file,k,d,N,sigma,delta,alpha,seed,min_mean_distance\n";
  for (int i = 0; i < o.count; ++i) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(i);
    const GmmInstance inst = make_instance(o, seed);
    const std::string name = "instance_s" + std::to_string(seed);
    std::ostringstream csv;
    write_instance_csv(csv, inst);
    write_text(out.instances(name + ".csv"), csv.str());
    std::vector<double> x1(inst.n()), x2(inst.n());
    for (std::size_t j = 0; j < inst.n(); ++j) {
      x1[j] = inst.x(0, j);
      x2[j] = inst.d() > 1 ? inst.x(1, j) : 0.0;
    }
    write_text(out.plots(name + ".svg"), scatter_svg(name, x1, x2, inst.z));
    summary << name << ".csv," << inst.k() << "," << inst.d() << "," << inst.n() << "," << num(inst.sigma) << ","
            << num(inst.delta) << "," << num(inst.alpha) << "," << seed << "," << num(min_pairwise_distance(inst.means))
            << "\n";
  }
  write_text(out.results("gen.csv"), summary.str());
  return 0;
}

int cmd_run(const Common& c, const RunOptions& o) {
  check_arms(o.arms);
  OutDirs out(c.out);
  GmmInstance inst;
  if (!o.instance.empty()) {
    std::ifstream is(o.instance);
    require(static_cast<bool>(is), Errc::io, "cannot open instance " + o.instance);
    inst = read_instance_csv(is);
  } else {
    inst = make_instance(o.gen, c.seed);
  }
  const InstanceRun run = run_instance(inst, o.arms, c.seed);

  const std::string tag = "run_s" + std::to_string(inst.seed);
  std::ostringstream csv;
  csv << "seed," << kMetricHeader << "\n";
  json rep = {{"seed", inst.seed}, {"k", inst.k()}, {"d", inst.d()}, {"n", inst.n()}, {"arms", json::array()}};
  for (const auto& r : run.arms) {
    csv << inst.seed << "," << metric_cells(r) << "\n";
    json a = r.report;
    a["wall_ms"] = r.wall_ms;
    a["digest"] = r.digest;
    rep["arms"].push_back(a);
  }
  write_text(out.results(tag + ".csv"), csv.str());
  write_text(out.reports(tag + ".json"), rep.dump(2) + "\n");
  for (const auto& r : run.arms) {
    if (r.params.layers.empty()) continue;
    std::ostringstream bin;
    write_params(bin, r.params);
    write_text(out.reports(tag + "_" + r.arm + ".tfem"), bin.str());
  }
  std::vector<double> x1(inst.n()), x2(inst.n());
  for (std::size_t j = 0; j < inst.n(); ++j) {
    x1[j] = inst.x(0, j);
    x2[j] = inst.d() > 1 ? inst.x(1, j) : 0.0;
  }
  write_text(out.plots(tag + ".svg"), scatter_svg(tag + " (" + run.arms.back().arm + " labels)", x1, x2,
                                                  run.arms.back().labels));
  return 0;
}

int cmd_sweep(const Common& c, const SweepOptions& o) {
  check_arms(o.arms);
  require(!o.grid.empty(), Errc::config, "sweep grid is empty");
  require(o.seeds >= 1, Errc::config, "seeds must be at least 1");
  static const std::vector<std::string> vars{"delta", "dim", "n", "classes", "imbalance", "tau"};
  require(std::find(vars.begin(), vars.end(), o.variable) != vars.end(), Errc::config,
          "unknown sweep variable: " + o.variable);

  struct Point {
    GenOptions gen;
    ArmOptions arms;
  };
  std::vector<Point> points;
  for (double v : o.grid) {
    Point pt{o.gen, o.arms};
    GenOptions& g = pt.gen;
    const bool integral = o.variable != "delta" && o.variable != "imbalance";
    require(!integral || (v == std::floor(v) && v >= 1), Errc::config,
            "grid values of " + o.variable + " must be positive integers");
    if (o.variable == "delta") g.delta = v;
    else if (o.variable == "dim") g.d = static_cast<int>(v);
    else if (o.variable == "n") g.per_cluster = static_cast<int>(v);
    else if (o.variable == "classes") g.k = static_cast<int>(v);
    else if (o.variable == "tau") pt.arms.tau = static_cast<int>(v);
    else g.imbalance = v;
    cluster_counts(g);
    points.push_back(pt);
  }
  OutDirs out(c.out);

  const std::size_t tasks = points.size() * static_cast<std::size_t>(o.seeds);
  std::vector<InstanceRun> runs(tasks);
  parallel_for(tasks, [&](std::size_t t) {
    const std::size_t p = t / o.seeds, s = t % o.seeds;
    const GmmInstance inst = make_instance(points[p].gen, c.seed + s);
    runs[t] = run_instance(inst, points[p].arms, c.seed);
  });

  std::ostringstream rows, summary;
  rows << "variable,value,seed," << kMetricHeader << "\n";
  summary << "variable,value,arm,runs,perm_loss_mean,perm_loss_std,ari_mean,ari_std,nmi_mean,nmi_std,misclass_mean,"
             "misclass_std\n";
  json rep = {{"variable", o.variable}, {"seed", c.seed}, {"seeds", o.seeds}, {"tau", o.arms.tau},
              {"m_heads", o.arms.m_heads}, {"tasks", json::array()}, {"reports", json::object()}};
  std::map<std::string, Series> ari_series, nmi_series;
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (std::size_t a = 0; a < o.arms.arms.size(); ++a) {
      std::vector<double> loss, ar, nm, mc;
      for (int s = 0; s < o.seeds; ++s) {
        const ArmResult& r = runs[p * o.seeds + s].arms[a];
        loss.push_back(r.perm_loss);
        ar.push_back(r.ari);
        nm.push_back(r.nmi);
        mc.push_back(r.misclass);
      }
      auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
      };
      const std::string& arm = o.arms.arms[a];
      const double ml = mean(loss), ma = mean(ar), mn = mean(nm), mm = mean(mc);
      summary << o.variable << "," << num(o.grid[p]) << "," << arm << "," << o.seeds << "," << num(ml) << ","
              << num(sample_std(loss, ml)) << "," << num(ma) << "," << num(sample_std(ar, ma)) << "," << num(mn)
              << "," << num(sample_std(nm, mn)) << "," << num(mm) << "," << num(sample_std(mc, mm)) << "\n";
      for (auto* m : {&ari_series, &nmi_series}) (*m)[arm].name = arm;
      ari_series[arm].x.push_back(o.grid[p]);
      ari_series[arm].mean.push_back(ma);
      ari_series[arm].sd.push_back(sample_std(ar, ma));
      nmi_series[arm].x.push_back(o.grid[p]);
      nmi_series[arm].mean.push_back(mn);
      nmi_series[arm].sd.push_back(sample_std(nm, mn));
    }
    for (int s = 0; s < o.seeds; ++s)
      for (const ArmResult& r : runs[p * o.seeds + s].arms) {
        rows << o.variable << "," << num(o.grid[p]) << "," << c.seed + s << "," << metric_cells(r) << "\n";
        rep["tasks"].push_back(
            {{"value", o.grid[p]}, {"seed", c.seed + s}, {"arm", r.arm}, {"wall_ms", r.wall_ms}, {"digest", r.digest}});
        rep["reports"][r.digest] = r.report;
      }
  }
  const std::string tag = "sweep_" + o.variable;
  write_text(out.results(tag + ".csv"), rows.str());
  write_text(out.results(tag + "_summary.csv"), summary.str());
  write_text(out.reports(tag + ".json"), rep.dump(2) + "\n");
  std::vector<Series> sa, sn;
  for (const auto& arm : o.arms.arms) {
    sa.push_back(ari_series[arm]);
    sn.push_back(nmi_series[arm]);
  }
  write_text(out.plots(tag + "_ari.svg"), line_plot_svg("ARI vs " + o.variable, o.variable, "ARI", sa));
  write_text(out.plots(tag + "_nmi.svg"), line_plot_svg("NMI vs " + o.variable, o.variable, "NMI", sn));
  return 0;
}

int cmd_audit_bounds(const Common& c, const AuditOptions& o) {
  require(o.draws >= 1, Errc::config, "draws must be positive");
  require(o.panel >= 1, Errc::config, "panel must be positive");
  require(o.m_heads >= 8, Errc::config, "m_heads must be at least 8");
  OutDirs out(c.out);
  std::ostringstream summary, violations;
  summary << "check,value,threshold,pass\n";
  violations << "draw,d,beta,gap,bound\n";
  json rep = {{"seed", c.seed}};
  bool all = true;
  auto record = [&](const std::string& name, double value, double threshold, bool pass) {
    summary << name << "," << num(value) << "," << num(threshold) << "," << (pass ? "true" : "false") << "\n";
    all = all && pass;
  };

  // Hardmax gap; a quarter of the draws use a coarse grid so the argmax set has ties.
  auto t0 = Clock::now();
  std::mt19937_64 rng(c.seed);
  std::uniform_int_distribution<int> dim(2, 10);
  std::uniform_real_distribution<double> u(-1.0, 1.0), beta_d(0.1, 100.0), coin(0.0, 1.0);
  int bad = 0;
  for (int i = 0; i < o.draws; ++i) {
    Vec v(dim(rng));
    const bool coarse = coin(rng) < 0.25;
    for (double& x : v) x = coarse ? std::round(u(rng) * 2.0) / 2.0 : u(rng);
    const double beta = beta_d(rng);
    const GapBound g = hardmax_gap_bound(v, beta);
    if (!g.holds) {
      ++bad;
      violations << i << "," << v.size() << "," << num(beta) << "," << num(g.gap) << "," << num(g.bound) << "\n";
    }
  }
  record("hardmax_violations", bad, 0, bad == 0);
  rep["hardmax_ms"] = ms_since(t0);

  // ReLU-feature decay of 1/x on [1, 10].
  t0 = Clock::now();
  std::ostringstream decay;
  decay << "m,sup_error\n";
  Series ds{"inv_scalar", {}, {}, {}};
  for (int m : {64, 256, 1024, 4096}) {
    const auto f = cached_relu_features(Target::inv_scalar, 1, 1.0, 10.0, m, c.seed);
    decay << m << "," << num(f->measured_sup_error) << "\n";
    ds.x.push_back(std::log2(m));
    ds.mean.push_back(f->measured_sup_error);
  }
  const double ratio = ds.mean.back() / ds.mean.front();
  record("relu_decay_ratio_4096_over_64", ratio, 0.25, ratio < 0.25);
  rep["relu_decay_ms"] = ms_since(t0);

  // Layer-count identities.
  int count_bad = 0;
  for (int tau : {1, 2, 3})
    for (int k : {2, 3, 4}) {
      count_bad += build_em_tf(k, k + 1, 40, tau, 16, 0.0, 1.0, c.seed).params.layers.size() !=
                   static_cast<std::size_t>(tau * (3 + 3 * k));
      count_bad += build_em_tf_plus(k, k + 1, 40, tau, 16, 0.0, 1.0, c.seed).params.layers.size() !=
                   static_cast<std::size_t>(tau * (7 + 3 * k));
      count_bad += build_pca_tf(k + 2, k, 3 * tau * k, 16, c.seed).params.layers.size() !=
                   static_cast<std::size_t>(2 * 3 * tau * k + 4 * k + 1);
    }
  record("layer_count_mismatches", count_bad, 0, count_bad == 0);

  // EM fidelity: both constructions against Lloyd's first round on separated instances.
  t0 = Clock::now();
  GenOptions g;
  g.k = 2;
  g.d = 5;
  g.per_cluster = 50;
  g.delta = 8.0;
  ArmOptions arms;
  arms.arms = {"lloyd", "tf", "tf_plus"};
  arms.tau = 1;
  arms.m_heads = o.m_heads;
  std::vector<InstanceRun> runs(o.panel);
  parallel_for(runs.size(), [&](std::size_t i) { runs[i] = run_instance(make_instance(g, c.seed + i), arms, c.seed); });
  int agree_tf = 0, agree_plus = 0;
  for (const auto& r : runs) {
    agree_tf += r.arms[1].labels == r.arms[0].labels;
    agree_plus += r.arms[2].labels == r.arms[0].labels;
  }
  record("em_tf_lloyd_agreement", agree_tf, o.panel, agree_tf == o.panel);
  record("em_tf_plus_lloyd_agreement", agree_plus, o.panel, agree_plus == o.panel);
  rep["em_ms"] = ms_since(t0);

  // PCA fidelity on gapped SPD matrices.
  t0 = Clock::now();
  const Construction pca = build_pca_tf(6, 2, 40, 256, c.seed);
  double worst = 1.0;
  for (int i = 0; i < o.panel; ++i) {
    const Mat x = gapped_spd_factor(6, 2, c.seed + i);
    const Context ctx = build_pca_context(x, 2, c.seed + i);
    const auto est = split_pca_output(tf_forward(pca.params, ctx.h), 2, 6);
    const Eigh e = jacobi_eigh(matmul(x, transpose(x)));
    worst = std::min(worst, std::abs(dot(est[0], e.vectors.col(0))) / l2(est[0]));
  }
  record("pca_min_cosine_v1", worst, 0.99, worst >= 0.99);
  rep["pca_ms"] = ms_since(t0);

  write_text(out.results("audit_summary.csv"), summary.str());
  write_text(out.results("audit_hardmax_violations.csv"), violations.str());
  write_text(out.results("audit_relu_decay.csv"), decay.str());
  write_text(out.reports("audit.json"), rep.dump(2) + "\n");
  write_text(out.plots("audit_relu_decay.svg"),
             line_plot_svg("1/x fit on [1,10]", "log2 m", "sup error", {ds}, true));
  return all ? 0 : 1;
}

int cmd_pca(const Common& c, const PcaOptions& o) {
  require(o.k >= 1 && o.k < o.d, Errc::config, "pca needs 1 <= k < d");
  require(o.tau >= o.k, Errc::config, "pca needs tau >= k");
  require(o.matrices >= 1, Errc::config, "matrices must be positive");
  require(o.m_heads >= 8, Errc::config, "m_heads must be at least 8");
  OutDirs out(c.out);
  PcaBuildOptions bo;
  bo.lambda_lo = o.lambda_lo;
  bo.lambda_hi = o.lambda_hi;
  Construction pca;
  try {
    pca = build_pca_tf(o.d, o.k, o.tau, o.m_heads, c.seed, bo);
  } catch (const Error& e) {
    if (e.code() == Errc::precondition || e.code() == Errc::fit_failure)
      throw Error(Errc::infeasible_construction, e.what());
    throw;
  }

  std::vector<std::vector<double>> cos_tf(o.matrices), cos_ref(o.matrices), lam(o.matrices);
  parallel_for(o.matrices, [&](std::size_t i) {
    const std::uint64_t seed = c.seed + i;
    const Mat x = gapped_spd_factor(o.d, o.k, seed);
    const Mat a = matmul(x, transpose(x));
    const Eigh e = jacobi_eigh(a);
    Context ctx;
    try {
      ctx = build_pca_context(x, o.k, seed, bo);
    } catch (const Error& err) {
      throw Error(Errc::infeasible_construction, err.what());
    }
    const auto est = split_pca_output(tf_forward(pca.params, ctx.h), o.k, o.d);
    const Deflation ref = topk_deflation(a, o.k, o.tau / o.k, seed);
    for (int v = 0; v < o.k; ++v) {
      const Vec u = e.vectors.col(v);
      cos_tf[i].push_back(std::abs(dot(est[v], u)) / l2(est[v]));
      cos_ref[i].push_back(std::abs(dot(ref.vectors[v], u)) / l2(ref.vectors[v]));
      lam[i].push_back(e.values[v]);
    }
  });

  std::ostringstream rows, summary;
  rows << "matrix,eigvec,eigval,cosine_tf,cosine_deflation\n";
  summary << "eigvec,cosine_mean,cosine_std,cosine_min\n";
  Series s{"constructed TF", {}, {}, {}}, r{"deflation", {}, {}, {}};
  for (int i = 0; i < o.matrices; ++i)
    for (int v = 0; v < o.k; ++v)
      rows << c.seed + i << "," << v + 1 << "," << num(lam[i][v]) << "," << num(cos_tf[i][v]) << ","
           << num(cos_ref[i][v]) << "\n";
  for (int v = 0; v < o.k; ++v) {
    std::vector<double> ct, cr;
    for (int i = 0; i < o.matrices; ++i) {
      ct.push_back(cos_tf[i][v]);
      cr.push_back(cos_ref[i][v]);
    }
    double mt = 0.0, mr = 0.0;
    for (int i = 0; i < o.matrices; ++i) {
      mt += ct[i] / o.matrices;
      mr += cr[i] / o.matrices;
    }
    summary << v + 1 << "," << num(mt) << "," << num(sample_std(ct, mt)) << ","
            << num(*std::min_element(ct.begin(), ct.end())) << "\n";
    s.x.push_back(v + 1);
    s.mean.push_back(mt);
    s.sd.push_back(sample_std(ct, mt));
    r.x.push_back(v + 1);
    r.mean.push_back(mr);
    r.sd.push_back(sample_std(cr, mr));
  }
  write_text(out.results("pca.csv"), rows.str());
  write_text(out.results("pca_summary.csv"), summary.str());
  write_text(out.reports("pca.json"), pca.report.to_json() + "\n");
  write_text(out.plots("pca_cosine.svg"), line_plot_svg("eigenvector cosine", "eigenvector", "|cos|", {s, r}));
  return 0;
}

}  // namespace tfem::cli
