#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tfem::cli {

struct Common {
  std::uint64_t seed = 0;
  std::string out = "out";
};

struct GenOptions {
  int k = 4;
  int d = 10;
  int per_cluster = 50;
  double delta = 4.0;
  double sigma = 1.0;
  std::vector<double> sigma2_range;  // {lo, hi}: per-instance sigma^2 ~ U[lo, hi], overrides sigma
  double alpha = 0.0;      // 0: smallest cluster fraction of the drawn counts
  double imbalance = 1.0;  // largest / smallest cluster size
  int count = 1;
};

struct ArmOptions {
  std::vector<std::string> arms{"lloyd", "tf"};
  int tau = 2;
  int m_heads = 512;
  double beta = 0.0;  // 0: 50 ln N
};

struct RunOptions {
  GenOptions gen;
  ArmOptions arms;
  std::string instance;  // optional instance CSV instead of generating
};

struct SweepOptions {
  GenOptions gen;
  ArmOptions arms;
  std::string variable = "delta";
  std::vector<double> grid;
  int seeds = 10;
};

struct AuditOptions {
  int draws = 10000;
  int panel = 5;
  int m_heads = 512;
};

struct PcaOptions {
  int d = 8;
  int k = 3;
  int tau = 60;
  int m_heads = 256;
  int matrices = 20;
  double lambda_lo = 0.5;
  double lambda_hi = 10.0;
};

int cmd_gen(const Common& c, const GenOptions& o);
int cmd_run(const Common& c, const RunOptions& o);
int cmd_sweep(const Common& c, const SweepOptions& o);
int cmd_audit_bounds(const Common& c, const AuditOptions& o);
int cmd_pca(const Common& c, const PcaOptions& o);

}  // namespace tfem::cli
