#include "tfem/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>

namespace tfem {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::softmax: return "softmax";
    case Activation::relu: return "relu";
    case Activation::none: return "none";
  }
  return "unknown";
}

std::size_t TransformerParams::dim() const {
  if (!layers.empty()) return layers.front()->fc_w2.rows();
  return readout_left.cols();
}

std::size_t TransformerParams::max_heads() const {
  std::size_t m = 0;
  for (const auto& l : layers) m = std::max(m, l->heads.size());
  return m;
}

Layer identity_layer(std::size_t dim) {
  Layer l;
  l.fc_w1 = Mat(0, dim);
  l.fc_w2 = Mat(dim, 0);
  return l;
}

namespace {

std::vector<std::size_t> nonzero_rows(const Mat& m) {
  std::vector<std::size_t> rs;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* r = m.row(i);
    if (std::any_of(r, r + m.cols(), [](double x) { return x != 0.0; })) rs.push_back(i);
  }
  return rs;
}

// Rows `rows` of m·h, packed.
Mat project_rows(const Mat& m, const std::vector<std::size_t>& rows, const Mat& h) {
  Mat out(rows.size(), h.cols());
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const double* mr = m.row(rows[a]);
    double* o = out.row(a);
    for (std::size_t c = 0; c < m.cols(); ++c) {
      double w = mr[c];
      if (w == 0.0) continue;
      const double* hc = h.row(c);
      for (std::size_t j = 0; j < h.cols(); ++j) o[j] += w * hc[j];
    }
  }
  return out;
}

}  // namespace

void add_head_output(const AttnHead& head, Activation act, const Mat& h, Mat& out) {
  const std::size_t dim = h.rows(), n = h.cols();
  require(head.v.rows() == dim && head.v.cols() == dim && head.q.rows() == dim && head.q.cols() == dim &&
              head.k.rows() == dim && head.k.cols() == dim,
          Errc::shape, "attention head is not D×D for D = " + std::to_string(dim));

  std::vector<std::size_t> vr = nonzero_rows(head.v);
  if (vr.empty()) return;
  std::vector<std::size_t> qr = nonzero_rows(head.q), kr = nonzero_rows(head.k);
  std::vector<std::size_t> shared;
  std::set_intersection(qr.begin(), qr.end(), kr.begin(), kr.end(), std::back_inserter(shared));

  // Scores S = (Qh)ᵀ(Kh), only rows present in both projections contribute.
  Mat s(n, n);
  if (!shared.empty()) s = matmul_tn(project_rows(head.q, shared, h), project_rows(head.k, shared, h));
  switch (act) {
    case Activation::softmax: s = softmax_cols(s); break;
    case Activation::relu: s = relu(s); break;
    case Activation::none: break;
  }
  Mat vh = project_rows(head.v, vr, h);
  Mat contrib = matmul(vh, s);
  for (std::size_t a = 0; a < vr.size(); ++a) {
    double* o = out.row(vr[a]);
    const double* c = contrib.row(a);
    for (std::size_t j = 0; j < n; ++j) o[j] += c[j];
  }
}

Mat layer_forward(const Layer& layer, const Mat& h) {
  const std::size_t dim = h.rows();
  Mat out = h;
  for (const auto& head : layer.heads) add_head_output(head, layer.activation, h, out);

  if (layer.fc_w1.rows() > 0) {
    require(layer.fc_w1.cols() == dim && layer.fc_w2.rows() == dim && layer.fc_w2.cols() == layer.fc_w1.rows(),
            Errc::shape, "FC weights do not match D = " + std::to_string(dim));
    Mat hidden = relu(matmul(layer.fc_w1, out));
    out += matmul(layer.fc_w2, hidden);
  }
  require(out.all_finite(), Errc::degenerate, "layer_forward: non-finite activations");
  return out;
}

Mat run_layers(const TransformerParams& params, const Mat& h) {
  Mat cur = h;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    try {
      cur = layer_forward(*params.layers[i], cur);
    } catch (const Error& e) {
      throw Error(e.code(), "layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return cur;
}

Mat tf_forward(const TransformerParams& params, const Mat& h) {
  Mat hl = run_layers(params, h);
  require(params.readout_left.cols() == hl.rows(), Errc::shape, "readout_left does not match D");
  require(params.readout_right.rows() == hl.cols(), Errc::shape, "readout_right does not match N");
  return matmul(matmul(params.readout_left, hl), params.readout_right);
}

double param_norm(const TransformerParams& params) {
  const double readout = op_norm(params.readout_left) + op_norm(params.readout_right);
  std::map<const Layer*, double> seen;
  double best = 0.0;
  for (const auto& lp : params.layers) {
    auto it = seen.find(lp.get());
    if (it == seen.end()) {
      double qk = 0.0, vsum = 0.0;
      for (const auto& hd : lp->heads) {
        qk = std::max({qk, op_norm(hd.q), op_norm(hd.k)});
        vsum += op_norm(hd.v);
      }
      double fc = op_norm(lp->fc_w1) + op_norm(lp->fc_w2);
      it = seen.emplace(lp.get(), qk + vsum + fc).first;
    }
    best = std::max(best, it->second + readout);
  }
  return best;
}

SpaceVerdict space_check(const TransformerParams& params, double b_theta, std::size_t b_m, std::size_t b_l) {
  SpaceVerdict v;
  v.norm = param_norm(params);
  if (v.norm > b_theta) v.reason = "norm";
  else if (params.max_heads() > b_m) v.reason = "heads";
  else if (params.layers.size() > b_l) v.reason = "layers";
  v.member = v.reason.empty();
  return v;
}

namespace {

constexpr char kMagic[4] = {'T', 'F', 'E', 'M'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  require(static_cast<bool>(is), Errc::io, "params container: truncated");
  return v;
}

void put_block(std::ostream& os, const Mat& m) {
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Mat get_block(std::istream& is, std::size_t r, std::size_t c) {
  require(r < (1u << 24) && c < (1u << 24), Errc::io, "params container: implausible block size");
  Mat m(r, c);
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  require(static_cast<bool>(is), Errc::io, "params container: truncated block");
  return m;
}

}  // namespace

void write_params(std::ostream& os, const TransformerParams& params) {
  const std::uint64_t dim = params.dim();
  std::vector<const Layer*> unique;
  std::map<const Layer*, std::uint64_t> index;
  std::vector<std::uint64_t> slots;
  for (const auto& lp : params.layers) {
    auto [it, fresh] = index.emplace(lp.get(), unique.size());
    if (fresh) unique.push_back(lp.get());
    slots.push_back(it->second);
  }

  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, dim);
  put<std::uint64_t>(os, slots.size());
  put<std::uint64_t>(os, unique.size());
  for (const Layer* l : unique) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(l->activation));
    put<std::uint64_t>(os, l->heads.size());
    for (const auto& hd : l->heads) {
      put_block(os, hd.v);
      put_block(os, hd.q);
      put_block(os, hd.k);
    }
    put<std::uint64_t>(os, l->fc_w1.rows());
    put_block(os, l->fc_w1);
    put_block(os, l->fc_w2);
  }
  for (std::uint64_t s : slots) put<std::uint64_t>(os, s);
  put<std::uint64_t>(os, params.readout_left.rows());
  put<std::uint64_t>(os, params.readout_left.cols());
  put_block(os, params.readout_left);
  put<std::uint64_t>(os, params.readout_right.rows());
  put<std::uint64_t>(os, params.readout_right.cols());
  put_block(os, params.readout_right);
  require(static_cast<bool>(os), Errc::io, "params container: write failed");
}

TransformerParams read_params(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  require(is && std::memcmp(magic, kMagic, 4) == 0, Errc::io, "params container: bad magic");
  require(get<std::uint32_t>(is) == kVersion, Errc::io, "params container: unsupported version");
  const auto dim = get<std::uint64_t>(is);
  const auto n_slots = get<std::uint64_t>(is);
  const auto n_unique = get<std::uint64_t>(is);
  require(n_unique <= n_slots && n_slots < (1u << 24), Errc::io, "params container: bad layer table");

  std::vector<LayerPtr> unique;
  for (std::uint64_t u = 0; u < n_unique; ++u) {
    auto l = std::make_shared<Layer>();
    auto act = get<std::uint32_t>(is);
    require(act <= 2, Errc::io, "params container: bad activation tag");
    l->activation = static_cast<Activation>(act);
    auto heads = get<std::uint64_t>(is);
    require(heads < (1u << 20), Errc::io, "params container: implausible head count");
    for (std::uint64_t m = 0; m < heads; ++m) {
      AttnHead hd;
      hd.v = get_block(is, dim, dim);
      hd.q = get_block(is, dim, dim);
      hd.k = get_block(is, dim, dim);
      l->heads.push_back(std::move(hd));
    }
    auto hidden = get<std::uint64_t>(is);
    l->fc_w1 = get_block(is, hidden, dim);
    l->fc_w2 = get_block(is, dim, hidden);
    unique.push_back(std::move(l));
  }
  TransformerParams p;
  for (std::uint64_t s = 0; s < n_slots; ++s) {
    auto idx = get<std::uint64_t>(is);
    require(idx < unique.size(), Errc::io, "params container: layer index out of range");
    p.layers.push_back(unique[idx]);
  }
  auto r = get<std::uint64_t>(is);
  auto c = get<std::uint64_t>(is);
  p.readout_left = get_block(is, r, c);
  r = get<std::uint64_t>(is);
  c = get<std::uint64_t>(is);
  p.readout_right = get_block(is, r, c);
  return p;
}

}  // namespace tfem
