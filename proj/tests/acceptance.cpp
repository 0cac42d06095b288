// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tfem/approx.hpp"
#include "tfem/classical.hpp"
#include "tfem/construct.hpp"

using namespace tfem;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = limit_s <= 0.0 || s < limit_s;
  const bool pass = o.pass && in_time;
  failures += !pass;
  std::printf("%s %d %s: %s (%.2f s%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), s,
              in_time ? "" : ", over time limit");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome layer_counts() {
  int checked = 0;
  for (int tau = 1; tau <= 3; ++tau)
    for (int k = 2; k <= 4; ++k) {
      const auto want_em = static_cast<std::size_t>(tau * (3 + 3 * k));
      const auto want_plus = static_cast<std::size_t>(tau * (7 + 3 * k));
      const auto want_pca = static_cast<std::size_t>(2 * tau * k + 4 * k + 1);
      if (build_em_tf(k, 5, 30, tau, 8, 0.0, 1.0).params.layers.size() != want_em) return {false, "em_tf mismatch"};
      if (build_em_tf_plus(k, 5, 30, tau, 8, 0.0, 1.0).params.layers.size() != want_plus)
        return {false, "em_tf_plus mismatch"};
      // PCA power steps τ·k so every eigenvector gets at least one step.
      if (build_pca_tf(5, k, tau * k, 8, 1).params.layers.size() != want_pca) return {false, "pca mismatch"};
      checked += 3;
    }
  return {true, std::to_string(checked) + " constructions exact"};
}

Outcome em_oracle() {
  int match = 0, total = 0;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const int k = 2 + i % 2;
    const std::size_t per = 150 / k;
    const std::uint64_t seed = 1000 + i;
    GmmInstance inst = generate_instance(k, 5, per, 8.0, 1.0, 1.0 / k, seed);
    SpectralInit init = spectral_init(inst.x, k, seed);
    LloydTrace tr = lloyd(inst.x, init.centroids, 1);
    Context ctx = build_context(inst, tr.assignments[0], init.centroids);
    EmSpec s;
    s.k = k;
    s.d = 5;
    s.n = inst.n();
    s.tau = 1;
    s.m_heads = 2048;
    s.data_radius = data_radius(inst.x);
    Mat out = tf_forward(build_em_tf(s).params, ctx.h);
    match += extract_assignments(out) == tr.assignments[1];
    worst = std::max(worst, perm_loss(out, one_hot(tr.assignments[1], k)));
    ++total;
  }
  return {match >= 49 && worst <= 0.05,
          fmt("%g/50 match Lloyd, max perm_loss %.3g", match, worst)};
}

Outcome hardmax_audit() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(2, 10);
  std::uniform_real_distribution<double> u(-1, 1), b(0.1, 100);
  int bad = 0;
  for (int i = 0; i < 10000; ++i) {
    Vec v(dim(rng));
    for (double& x : v) x = i % 4 == 0 ? std::round(2 * u(rng)) / 2 : u(rng);
    bad += !hardmax_gap_bound(v, b(rng)).holds;
  }
  return {bad == 0, fmt("%g violations in 10000 draws", bad)};
}

Outcome relu_decay() {
  const double e64 = fit_relu_features(Target::inv_scalar, 1, 1.0, 10.0, 64, 1).measured_sup_error;
  const double e4096 = fit_relu_features(Target::inv_scalar, 1, 1.0, 10.0, 4096, 1).measured_sup_error;
  return {e4096 < e64 / 4.0, fmt("err(64)=%.3g err(4096)=%.3g ratio %.3g", e64, e4096, e4096 / e64)};
}

Outcome pca() {
  PcaBuildOptions opt;
  opt.lambda_hi = 8.0;
  Construction tf = build_pca_tf(8, 3, 60, 256, 5, opt);
  double min1 = 1.0, min3 = 1.0;
  for (int m = 0; m < 20; ++m) {
    Mat x = gapped_spd_factor(8, 3, 500 + m);
    Context ctx = build_pca_context(x, 3, 500 + m, opt);
    std::vector<Vec> v = split_pca_output(tf_forward(tf.params, ctx.h), 3, 8);
    Eigh eig = jacobi_eigh(matmul(x, transpose(x)));
    auto c = [&](int e) {
      Vec u = eig.vectors.col(e);
      return std::abs(dot(u, v[e])) / l2(v[e]);
    };
    min1 = std::min(min1, c(0));
    min3 = std::min(min3, c(2));
  }
  return {min1 >= 0.99 && min3 >= 0.95, fmt("min |cos| v1 %.6f, v3 %.6f", min1, min3)};
}

Outcome minimax_shadow() {
  std::vector<double> xs, ys;
  for (double delta : {3.0, 4.0, 5.0, 6.0}) {
    double sum = 0.0;
    for (int s = 0; s < 200; ++s) {
      const std::uint64_t seed = 7000 + s;
      GmmInstance inst = generate_instance(2, 5, 100, delta, 1.0, 0.5, seed);
      SpectralInit init = spectral_init(inst.x, 2, seed);
      sum += misclass(inst.z, lloyd(inst.x, init.centroids, 10).assignments.back());
    }
    const double mean = sum / 200.0;
    if (mean <= 0.0) return {false, fmt("zero misclassification at delta %g", delta)};
    xs.push_back(delta * delta);
    ys.push_back(std::log(mean));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / xs.size(), my += ys[i] / ys.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) sxy += (xs[i] - mx) * (ys[i] - my), sxx += (xs[i] - mx) * (xs[i] - mx);
  const double slope = sxy / sxx;
  return {slope >= -0.25 && slope <= -0.06, fmt("slope %.4f", slope)};
}

Outcome perm_oracle() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  int bad = 0;
  for (int t = 0; t < 500; ++t) {
    const int k = 1 + static_cast<int>(rng() % 6);
    const std::size_t n = 1 + rng() % 20;
    Mat a(k, n);
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = u(rng);
    Labels z(n);
    for (auto& v : z) v = static_cast<int>(rng() % k);
    bad += perm_loss_hungarian(a, one_hot(z, k)) != perm_loss_brute(a, one_hot(z, k));
  }
  return {bad == 0, fmt("%g mismatches in 500 cases", bad)};
}

Outcome lloyd_monotone() {
  std::mt19937_64 rng(23);
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const int k = 2 + static_cast<int>(rng() % 4);
    const int d = 2 + static_cast<int>(rng() % 5);
    const std::size_t per = 5 + rng() % 30;
    GmmInstance inst = generate_instance(k, d, per, 0.5 + (rng() % 40) / 10.0, 1.0, 1.0 / (2 * k), rng());
    LloydTrace tr = lloyd(inst.x, kmeanspp(inst.x, k, i), 50);
    for (std::size_t t = 1; t < tr.assignments.size(); ++t)
      bad += kmeans_objective(inst.x, tr.centroids[t], tr.assignments[t]) >
             kmeans_objective(inst.x, tr.centroids[t - 1], tr.assignments[t - 1]) * (1 + 1e-12) + 1e-12;
  }
  return {bad == 0, fmt("%g increasing steps over 1000 instances", bad)};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("tfem_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::vector<std::string> cmds = {
      "gen --seed 7",
      "run --seed 7 --k 3 --d 5 --per-cluster 30 --arms lloyd,tf,tf_plus --m-heads 128",
      "sweep --seed 7 --variable delta --grid 2,4 --k 2 --d 4 --per-cluster 20 --seeds 3 --arms lloyd,tf --m-heads 64",
      "audit_bounds --seed 7 --draws 2000 --panel 2 --m-heads 128",
      "pca --seed 7 --d 6 --k 2 --tau 30 --m-heads 128 --matrices 4",
  };
  std::size_t files = 0;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    for (const char* run : {"a", "b"}) {
      const fs::path out = root / (std::to_string(i) + run);
      const std::string cmd = std::string(TFEM_CLI_PATH) + " " + cmds[i] + " --out " + out.string() + " > /dev/null";
      const int st = std::system(cmd.c_str());
      if (!WIFEXITED(st) || WEXITSTATUS(st) != 0) return {false, "non-zero exit: " + cmds[i]};
    }
    const fs::path a = root / (std::to_string(i) + "a"), b = root / (std::to_string(i) + "b");
    for (const auto& e : fs::recursive_directory_iterator(a)) {
      if (e.path().extension() != ".csv") continue;
      ++files;
      if (slurp(e.path()) != slurp(b / fs::relative(e.path(), a)))
        return {false, "differs: " + fs::relative(e.path(), root).string()};
    }
  }
  fs::remove_all(root);
  return {files > 0, std::to_string(files) + " CSV files byte-identical across 5 subcommands"};
}

}  // namespace

int main() {
  criterion(1, "layer-count identities", 1.0, layer_counts);
  criterion(2, "EM construction vs Lloyd oracle", 120.0, em_oracle);
  criterion(3, "hardmax bound audit", 5.0, hardmax_audit);
  criterion(4, "ReLU-feature decay", 30.0, relu_decay);
  criterion(5, "PCA construction cosines", 60.0, pca);
  criterion(6, "minimax-rate shadow slope", 180.0, minimax_shadow);
  criterion(7, "permutation-loss oracle", 5.0, perm_oracle);
  criterion(8, "Lloyd monotonicity", 60.0, lloyd_monotone);
  criterion(9, "CLI determinism", 0.0, cli_determinism);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
