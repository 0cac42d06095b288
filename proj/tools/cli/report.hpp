#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace tfem::cli {

// Output tree: instances/, results/, plots/, reports/ under one root.
struct OutDirs {
  std::filesystem::path root;
  explicit OutDirs(const std::filesystem::path& r);
  std::filesystem::path instances(const std::string& f) const { return root / "instances" / f; }
  std::filesystem::path results(const std::string& f) const { return root / "results" / f; }
  std::filesystem::path plots(const std::string& f) const { return root / "plots" / f; }
  std::filesystem::path reports(const std::string& f) const { return root / "reports" / f; }
};

void write_text(const std::filesystem::path& p, const std::string& text);

// Shortest decimal form that round-trips a double at 10 significant digits.
std::string num(double v);
std::string fnv_digest(const std::string& s);

struct Series {
  std::string name;
  std::vector<double> x, mean, sd;  // sd may be empty
};
// Minimal line chart: one polyline per series with an optional mean ± sd band.
std::string line_plot_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<Series>& series, bool log_y = false);
std::string scatter_svg(const std::string& title, const std::vector<double>& x, const std::vector<double>& y,
                        const std::vector<int>& group);

// TFEM_WORKERS, else hardware concurrency.
unsigned worker_count();
// Runs task(i) for i in [0, n) on a pool; rethrows the lowest-index failure.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task);

}  // namespace tfem::cli
