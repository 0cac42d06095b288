#include <json.hpp>

#include <algorithm>
#include <cmath>

#include "tfem/construct.hpp"

namespace tfem {

void ContextLayout::add(const std::string& name, std::size_t size) {
  require(!has(name), Errc::shape, "context layout: duplicate block " + name);
  blocks.push_back({name, dim, size});
  dim += size;
}

const Block& ContextLayout::at(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  fail(Errc::shape, "context layout: no block named " + name);
}

bool ContextLayout::has(const std::string& name) const {
  return std::any_of(blocks.begin(), blocks.end(), [&](const Block& b) { return b.name == name; });
}

ContextLayout em_layout(int k, int d) {
  require(k >= 1 && d >= 1, Errc::shape, "em_layout: k and d must be positive");
  const std::size_t uk = k, ud = d;
  ContextLayout l;
  l.add("data", ud);
  l.add("centroids", ud);
  l.add("p1", uk);
  l.add("p2", ud);
  l.add("ones", 1);
  l.add("diff", uk * ud);
  l.add("dist", uk);
  l.add("p1_new", uk);
  l.add("aux", uk);
  return l;
}

ContextLayout pca_layout(int k, int d) {
  require(k >= 1 && d >= 1, Errc::shape, "pca_layout: k and d must be positive");
  const std::size_t uk = k, ud = d;
  ContextLayout l;
  l.add("X", ud);
  l.add("cov", ud);
  l.add("p2", ud);
  l.add("init", uk * ud);
  l.add("vec", ud);
  l.add("tmp", ud);
  l.add("est", uk * ud);
  return l;
}

Context build_context(const Mat& x, int k, const Labels& init_labels, const Mat& init_centroids) {
  const std::size_t d = x.rows(), n = x.cols();
  require(k >= 1, Errc::precondition, "build_context: k must be positive");
  require(static_cast<std::size_t>(k) < n, Errc::precondition, "build_context: need k < N");
  require(d <= n, Errc::shape, "build_context: the identity block needs N >= d");
  require(init_labels.size() == n, Errc::shape, "build_context: one initial label per column");
  require(init_centroids.rows() == d && init_centroids.cols() == static_cast<std::size_t>(k), Errc::shape,
          "build_context: initial centroids must be d×k");

  Context c;
  c.layout = em_layout(k, static_cast<int>(d));
  c.h = Mat(c.layout.dim, n);
  const std::size_t o_data = c.layout.off("data"), o_cent = c.layout.off("centroids"), o_p1 = c.layout.off("p1"),
                    o_p2 = c.layout.off("p2"), o_one = c.layout.off("ones");
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t r = 0; r < d; ++r) c.h(o_data + r, j) = x(r, j);
    require(init_labels[j] >= 0 && init_labels[j] < k, Errc::shape, "build_context: label out of range");
    c.h(o_p1 + init_labels[j], j) = 1.0;
    c.h(o_one, j) = 1.0;
  }
  for (int l = 0; l < k; ++l)
    for (std::size_t r = 0; r < d; ++r) c.h(o_cent + r, l) = init_centroids(r, l);
  for (std::size_t r = 0; r < d; ++r) c.h(o_p2 + r, r) = 1.0;
  return c;
}

Context build_context(const GmmInstance& inst, const Labels& init_labels, const Mat& init_centroids) {
  return build_context(inst.x, inst.k(), init_labels, init_centroids);
}

double data_radius(const Mat& x) {
  double r = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) r = std::max(r, l2(x.col(j)));
  return r;
}

std::string ConstructionReport::to_json() const {
  nlohmann::json j;
  j["kind"] = kind;
  j["tau"] = tau;
  j["k"] = k;
  j["d"] = d;
  j["n"] = n;
  j["layers"] = layers;
  j["expected_layers"] = expected_layers;
  j["heads_per_layer"] = heads_per_layer;
  j["activations"] = activations;
  j["fit_errors"] = fit_errors;
  j["bounds"] = bounds;
  j["constants"] = constants;
  j["seed"] = seed;
  j["param_norm"] = param_norm;
  return j.dump(2);
}

Labels extract_assignments(const Mat& output) {
  require(output.rows() >= 2, Errc::precondition, "extract_assignments: need k >= 2 rows");
  return argmax_cols(output);
}

std::vector<Vec> split_pca_output(const Mat& out, int k, int d) {
  require(out.rows() == static_cast<std::size_t>(k) * d && out.cols() == 1, Errc::shape,
          "split_pca_output: expected a kd×1 output");
  std::vector<Vec> v(k, Vec(d));
  for (int e = 0; e < k; ++e)
    for (int r = 0; r < d; ++r) v[e][r] = out(static_cast<std::size_t>(e) * d + r, 0);
  return v;
}

}  // namespace tfem
