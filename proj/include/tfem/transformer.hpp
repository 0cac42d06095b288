#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "tfem/linalg.hpp"

namespace tfem {

enum class Activation { softmax, relu, none };

const char* activation_name(Activation a);

struct AttnHead {
  Mat v, q, k;  // D×D each
};

struct Layer {
  std::vector<AttnHead> heads;
  Activation activation = Activation::softmax;
  Mat fc_w1;  // D'×D (D' may be 0)
  Mat fc_w2;  // D×D'
};

// Layers are shared immutably; constructions reuse identical layers by pointer.
using LayerPtr = std::shared_ptr<const Layer>;

struct TransformerParams {
  std::vector<LayerPtr> layers;
  Mat readout_left;   // d1×D
  Mat readout_right;  // N×d2

  std::size_t dim() const;
  std::size_t max_heads() const;
};

Layer identity_layer(std::size_t dim);

// Output of one head, (V h)·act((Q h)ᵀ(K h)), added into `out`.
void add_head_output(const AttnHead& head, Activation act, const Mat& h, Mat& out);

Mat layer_forward(const Layer& layer, const Mat& h);
// Hidden state after all layers (no readout).
Mat run_layers(const TransformerParams& params, const Mat& h);
Mat tf_forward(const TransformerParams& params, const Mat& h);

double param_norm(const TransformerParams& params);

struct SpaceVerdict {
  bool member = false;
  std::string reason;  // "norm", "heads", "layers" or empty
  double norm = 0.0;
};
SpaceVerdict space_check(const TransformerParams& params, double b_theta, std::size_t b_m, std::size_t b_l);

// Binary container, see docs/formats.md.
void write_params(std::ostream& os, const TransformerParams& params);
TransformerParams read_params(std::istream& is);

}  // namespace tfem
