#pragma once

#include <utility>
#include <vector>

#include "tfem/transformer.hpp"

namespace tfem::detail {

using Terms = std::vector<std::pair<std::size_t, double>>;

// Sparse assembly of the ReLU FC sublayer: each unit is relu(sum in) fanned out to `out`.
class FcBuilder {
 public:
  explicit FcBuilder(std::size_t dim) : dim_(dim) {}

  void unit(Terms in, Terms out) { units_.push_back({std::move(in), std::move(out)}); }

  // dst += f * src, exactly, via x = relu(x) - relu(-x).
  void add_scaled(std::size_t src, std::size_t dst, double f) {
    unit({{src, 1.0}}, {{dst, f}});
    unit({{src, -1.0}}, {{dst, -f}});
  }
  void clear(std::size_t row) { add_scaled(row, row, -1.0); }
  void move(std::size_t src, std::size_t dst) {
    add_scaled(src, dst, 1.0);
    clear(dst);
    clear(src);
  }

  void finish(Layer& layer) const {
    layer.fc_w1 = Mat(units_.size(), dim_);
    layer.fc_w2 = Mat(dim_, units_.size());
    for (std::size_t u = 0; u < units_.size(); ++u) {
      for (auto [c, w] : units_[u].first) layer.fc_w1(u, c) += w;
      for (auto [r, w] : units_[u].second) layer.fc_w2(r, u) += w;
    }
  }

 private:
  std::size_t dim_;
  std::vector<std::pair<Terms, Terms>> units_;
};

inline AttnHead zero_head(std::size_t dim) { return {Mat(dim, dim), Mat(dim, dim), Mat(dim, dim)}; }

inline Layer empty_layer(std::size_t dim, Activation act) {
  Layer l = identity_layer(dim);
  l.activation = act;
  return l;
}

}  // namespace tfem::detail
