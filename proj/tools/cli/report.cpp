#include "report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "tfem/error.hpp"

namespace tfem::cli {

namespace fs = std::filesystem;

OutDirs::OutDirs(const fs::path& r) : root(r) {
  std::error_code ec;
  for (const char* sub : {"instances", "results", "plots", "reports"}) {
    fs::create_directories(root / sub, ec);
    require(!ec, Errc::io, "cannot create " + (root / sub).string() + ": " + ec.message());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  require(static_cast<bool>(os), Errc::io, "cannot open " + p.string() + " for writing");
  os << text;
  os.flush();
  require(static_cast<bool>(os), Errc::io, "write failed: " + p.string());
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fnv_digest(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

constexpr double kW = 640, kH = 400, kL = 70, kR = 150, kT = 40, kB = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

struct Frame {
  double x0, x1, y0, y1;
  bool log_y;
  double fy(double y) const { return log_y ? std::log10(std::max(y, 1e-300)) : y; }
  double px(double x) const { return kL + (x - x0) / (x1 - x0) * (kW - kL - kR); }
  double py(double y) const { return kH - kB - (fy(y) - y0) / (y1 - y0) * (kH - kT - kB); }
};

std::string header(const std::string& title, const std::string& xlabel, const std::string& ylabel, const Frame& f) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n";
  s << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\"" << kH - kB
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double xv = f.x0 + (f.x1 - f.x0) * i / 4, yv = f.y0 + (f.y1 - f.y0) * i / 4;
    double yl = f.log_y ? std::pow(10.0, yv) : yv;
    s << "<text x=\"" << f.px(xv) << "\" y=\"" << kH - kB + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << num(xv) << "</text>\n";
    s << "<text x=\"" << kL - 6 << "\" y=\"" << kH - kB - (kH - kT - kB) * i / 4 + 4
      << "\" text-anchor=\"end\" font-size=\"11\">" << num(yl) << "</text>\n";
  }
  s << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << esc(xlabel) << "</text>\n";
  s << "<text x=\"16\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 16 " << kH / 2
    << ")\" text-anchor=\"middle\" font-size=\"12\">" << esc(ylabel) << "</text>\n";
  return s.str();
}

void pad(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
}

}  // namespace

std::string line_plot_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<Series>& series, bool log_y) {
  Frame f{1e300, -1e300, 1e300, -1e300, log_y};
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double sd = s.sd.empty() ? 0.0 : s.sd[i];
      f.x0 = std::min(f.x0, s.x[i]);
      f.x1 = std::max(f.x1, s.x[i]);
      f.y0 = std::min(f.y0, f.fy(log_y ? s.mean[i] : s.mean[i] - sd));
      f.y1 = std::max(f.y1, f.fy(s.mean[i] + sd));
    }
  if (f.x0 > f.x1) f = {0, 1, 0, 1, log_y};
  pad(f.x0, f.x1);
  pad(f.y0, f.y1);

  std::ostringstream o;
  o << header(title, xlabel, ylabel, f);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = kColors[k % 6];
    if (!s.sd.empty() && !log_y) {
      o << "<polygon fill=\"" << col << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) o << f.px(s.x[i]) << "," << f.py(s.mean[i] + s.sd[i]) << " ";
      for (std::size_t i = s.x.size(); i-- > 0;) o << f.px(s.x[i]) << "," << f.py(s.mean[i] - s.sd[i]) << " ";
      o << "\"/>\n";
    }
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << f.px(s.x[i]) << "," << f.py(s.mean[i]) << " ";
    o << "\"/>\n";
    o << "<text x=\"" << kW - kR + 10 << "\" y=\"" << kT + 18 * (k + 1) << "\" fill=\"" << col
      << "\" font-size=\"12\">" << esc(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string scatter_svg(const std::string& title, const std::vector<double>& x, const std::vector<double>& y,
                        const std::vector<int>& group) {
  Frame f{1e300, -1e300, 1e300, -1e300, false};
  for (std::size_t i = 0; i < x.size(); ++i) {
    f.x0 = std::min(f.x0, x[i]);
    f.x1 = std::max(f.x1, x[i]);
    f.y0 = std::min(f.y0, y[i]);
    f.y1 = std::max(f.y1, y[i]);
  }
  if (x.empty()) f = {0, 1, 0, 1, false};
  pad(f.x0, f.x1);
  pad(f.y0, f.y1);
  std::ostringstream o;
  o << header(title, "x1", "x2", f);
  for (std::size_t i = 0; i < x.size(); ++i)
    o << "<circle cx=\"" << f.px(x[i]) << "\" cy=\"" << f.py(y[i]) << "\" r=\"2.5\" fill=\""
      << kColors[static_cast<std::size_t>(group[i]) % 6] << "\"/>\n";
  o << "</svg>\n";
  return o.str();
}

unsigned worker_count() {
  if (const char* env = std::getenv("TFEM_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    require(end != env && *end == '\0' && v >= 1 && v <= 1024, Errc::config,
            "TFEM_WORKERS must be an integer in [1, 1024]");
    return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned w = std::min<std::size_t>(worker_count(), std::max<std::size_t>(n, 1));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < w; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace tfem::cli
