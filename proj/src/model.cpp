#include "ordlab/model.hpp"

#include <cmath>
#include <stdexcept>

#include "ordlab/rng.hpp"

namespace ordlab {

std::string to_string(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::kF32;
  if (s == "f64") return Precision::kF64;
  throw std::invalid_argument("unknown precision: " + s);
}

void ModelConfig::validate() const {
  if (p < 2) throw std::invalid_argument("p must be >= 2");
  if (d_model <= 0 || n_heads <= 0 || d_ff <= 0 || n_layers <= 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("d_model must be divisible by n_heads");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("dropout_rate must be in [0, 1)");
}

RegistryPtr make_registry(const ModelConfig& cfg) {
  cfg.validate();
  auto reg = std::make_shared<SegmentRegistry>();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto ff = static_cast<std::size_t>(cfg.d_ff);
  reg->add("token_embedding", cfg.p, d);
  reg->add("pos_embedding", 2, d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    reg->add(pre + "norm1.weight", 1, d);
    reg->add(pre + "norm1.bias", 1, d);
    reg->add(pre + "attn.in_proj_weight", 3 * d, d);
    reg->add(pre + "attn.in_proj_bias", 1, 3 * d);
    reg->add(pre + "attn.out_proj.weight", d, d);
    reg->add(pre + "attn.out_proj.bias", 1, d);
    reg->add(pre + "norm2.weight", 1, d);
    reg->add(pre + "norm2.bias", 1, d);
    reg->add(pre + "linear1.weight", ff, d);
    reg->add(pre + "linear1.bias", 1, ff);
    reg->add(pre + "linear2.weight", d, ff);
    reg->add(pre + "linear2.bias", 1, d);
  }
  reg->add("decoder.weight", cfg.p, d);
  reg->add("decoder.bias", 1, cfg.p);
  return reg;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)), reg_(make_registry(cfg_)) {}

ParameterVector Model::init_params(std::uint64_t init_seed) const {
  ParameterVector params(reg_);
  RngStream rng(init_seed, "init");
  for (const auto& seg : reg_->segments()) {
    auto span = params.segment(seg.name);
    if (seg.name.find("norm") != std::string::npos) {
      const double fill = seg.name.ends_with(".weight") ? 1.0 : 0.0;
      std::fill(span.begin(), span.end(), fill);
      continue;
    }
    // fan-in: columns for weight matrices, d_model for embeddings, matching
    // matrix fan-in for the paired bias.
    std::size_t fan_in = seg.cols;
    if (seg.rows == 1) {  // bias row: fan-in of the owning matrix
      if (seg.name.ends_with("linear2.bias"))
        fan_in = cfg_.d_ff;
      else
        fan_in = cfg_.d_model;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : span) v = rng.next_uniform(-bound, bound);
  }
  return params;
}

namespace {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
MatX<S> seg_matrix(const ParameterVector& pv, std::string_view name) {
  return pv.matrix(name).template cast<S>();
}

template <typename S>
VecX<S> seg_vector(const ParameterVector& pv, std::string_view name) {
  auto m = pv.matrix(name);
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()).template cast<S>();
}

template <typename S>
struct LayerWeights {
  VecX<S> ln1_g, ln1_b, ln2_g, ln2_b;
  MatX<S> Wq, Wk, Wv;  // each d x d (split from in_proj)
  VecX<S> bq, bk, bv;
  MatX<S> Wo;
  VecX<S> bo;
  MatX<S> W1, W2;
  VecX<S> b1, b2;
};

template <typename S>
struct Weights {
  MatX<S> tok;   // p x d
  MatX<S> pos;   // 2 x d
  std::vector<LayerWeights<S>> layers;
  MatX<S> dec;   // p x d
  VecX<S> dec_b;
};

template <typename S>
Weights<S> load_weights(const ModelConfig& cfg, const ParameterVector& pv) {
  Weights<S> w;
  const int d = cfg.d_model;
  w.tok = seg_matrix<S>(pv, "token_embedding");
  w.pos = seg_matrix<S>(pv, "pos_embedding");
  w.layers.resize(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    auto& L = w.layers[l];
    L.ln1_g = seg_vector<S>(pv, pre + "norm1.weight");
    L.ln1_b = seg_vector<S>(pv, pre + "norm1.bias");
    L.ln2_g = seg_vector<S>(pv, pre + "norm2.weight");
    L.ln2_b = seg_vector<S>(pv, pre + "norm2.bias");
    MatX<S> in_proj = seg_matrix<S>(pv, pre + "attn.in_proj_weight");
    VecX<S> in_bias = seg_vector<S>(pv, pre + "attn.in_proj_bias");
    L.Wq = in_proj.topRows(d);
    L.Wk = in_proj.middleRows(d, d);
    L.Wv = in_proj.bottomRows(d);
    L.bq = in_bias.head(d);
    L.bk = in_bias.segment(d, d);
    L.bv = in_bias.tail(d);
    L.Wo = seg_matrix<S>(pv, pre + "attn.out_proj.weight");
    L.bo = seg_vector<S>(pv, pre + "attn.out_proj.bias");
    L.W1 = seg_matrix<S>(pv, pre + "linear1.weight");
    L.b1 = seg_vector<S>(pv, pre + "linear1.bias");
    L.W2 = seg_matrix<S>(pv, pre + "linear2.weight");
    L.b2 = seg_vector<S>(pv, pre + "linear2.bias");
  }
  w.dec = seg_matrix<S>(pv, "decoder.weight");
  w.dec_b = seg_vector<S>(pv, "decoder.bias");
  return w;
}

// Inverted dropout masks for one layer; draw order is fixed so forward-only
// and forward+backward paths sample identically.
template <typename S>
struct LayerMasks {
  MatX<S> attn[2];   // n x d
  MatX<S> hidden[2]; // n x d_ff
  MatX<S> out[2];    // n x d
};

template <typename S>
MatX<S> draw_mask(Eigen::Index rows, Eigen::Index cols, double rate, RngStream& rng) {
  MatX<S> m(rows, cols);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = (rng.next_unit() >= rate) ? keep_scale : S(0);
  return m;
}

template <typename S>
std::vector<LayerMasks<S>> make_masks(const ModelConfig& cfg, Eigen::Index n,
                                      const ForwardMode& mode) {
  std::vector<LayerMasks<S>> masks;
  if (!mode.train || cfg.dropout_rate == 0.0) return masks;
  RngStream rng(mode.master_seed, "dropout", mode.epoch, mode.step);
  masks.resize(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int t = 0; t < 2; ++t)
      masks[l].attn[t] = draw_mask<S>(n, cfg.d_model, cfg.dropout_rate, rng);
    for (int t = 0; t < 2; ++t)
      masks[l].hidden[t] = draw_mask<S>(n, cfg.d_ff, cfg.dropout_rate, rng);
    for (int t = 0; t < 2; ++t)
      masks[l].out[t] = draw_mask<S>(n, cfg.d_model, cfg.dropout_rate, rng);
  }
  return masks;
}

template <typename S>
struct LayerCache {
  MatX<S> x_in[2];
  MatX<S> xhat1[2];
  VecX<S> rstd1[2];
  MatX<S> q[2], k[2], v[2];
  MatX<S> attn_a[2][2];  // attn_a[t][u]: n x n_heads softmax weights
  MatX<S> attn_cat[2];
  MatX<S> x_mid[2];
  MatX<S> xhat2[2];
  VecX<S> rstd2[2];
  MatX<S> g[2];
  MatX<S> z1[2];  // pre-relu
  MatX<S> u[2];   // post relu + hidden dropout
};

template <typename S>
struct Cache {
  MatX<S> x0_in, x1_in;  // embedded inputs
  std::vector<LayerCache<S>> layers;
  MatX<S> pooled;
};

constexpr double kLnEps = 1e-5;

// y = xhat * gamma + beta rowwise; caches xhat and 1/std.
template <typename S>
MatX<S> layer_norm(const MatX<S>& x, const VecX<S>& gamma, const VecX<S>& beta,
                   MatX<S>* xhat_out, VecX<S>* rstd_out) {
  const Eigen::Index n = x.rows(), d = x.cols();
  MatX<S> xhat(n, d);
  VecX<S> rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    S mu = x.row(i).mean();
    S var = (x.row(i).array() - mu).square().mean();
    S r = S(1) / std::sqrt(var + static_cast<S>(kLnEps));
    rstd(i) = r;
    xhat.row(i) = (x.row(i).array() - mu) * r;
  }
  MatX<S> y = (xhat.array().rowwise() * gamma.transpose().array()).rowwise() +
              beta.transpose().array();
  if (xhat_out) *xhat_out = std::move(xhat);
  if (rstd_out) *rstd_out = std::move(rstd);
  return y;
}

template <typename S>
MatX<S> layer_norm_backward(const MatX<S>& dout, const MatX<S>& xhat, const VecX<S>& rstd,
                            const VecX<S>& gamma, VecX<S>& dgamma, VecX<S>& dbeta) {
  dgamma += (dout.array() * xhat.array()).colwise().sum().matrix().transpose();
  dbeta += dout.colwise().sum().transpose();
  MatX<S> dxhat = dout.array().rowwise() * gamma.transpose().array();
  const Eigen::Index n = dout.rows();
  MatX<S> dx(dout.rows(), dout.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    S m1 = dxhat.row(i).mean();
    S m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
    dx.row(i) = ((dxhat.row(i).array() - m1) - xhat.row(i).array() * m2) * rstd(i);
  }
  return dx;
}

template <typename S>
void check_finite(const MatX<S>& m, const char* where) {
  if (!m.allFinite()) throw NumericError(where);
}

// Forward pass over the 2-token sequence; returns logits (n x p).
template <typename S>
MatX<S> forward_impl(const ModelConfig& cfg, const Weights<S>& w,
                     std::span<const ExamplePair> batch,
                     const std::vector<LayerMasks<S>>& masks, Cache<S>* cache) {
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  const int d = cfg.d_model;
  const int nh = cfg.n_heads;
  const int dh = d / nh;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  MatX<S> x[2];
  x[0].resize(n, d);
  x[1].resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[0].row(i) = w.tok.row(batch[i].a) + w.pos.row(0);
    x[1].row(i) = w.tok.row(batch[i].b) + w.pos.row(1);
  }
  if (cache) {
    cache->x0_in = x[0];
    cache->x1_in = x[1];
    cache->layers.resize(cfg.n_layers);
  }

  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& L = w.layers[l];
    LayerCache<S>* lc = cache ? &cache->layers[l] : nullptr;
    const bool drop = !masks.empty();

    // pre-LN self-attention
    MatX<S> h[2], q[2], k[2], v[2];
    for (int t = 0; t < 2; ++t) {
      if (lc) lc->x_in[t] = x[t];
      h[t] = layer_norm(x[t], L.ln1_g, L.ln1_b, lc ? &lc->xhat1[t] : nullptr,
                        lc ? &lc->rstd1[t] : nullptr);
      q[t] = (h[t] * L.Wq.transpose()).rowwise() + L.bq.transpose();
      k[t] = (h[t] * L.Wk.transpose()).rowwise() + L.bk.transpose();
      v[t] = (h[t] * L.Wv.transpose()).rowwise() + L.bv.transpose();
    }

    MatX<S> attn_cat[2];
    for (int t = 0; t < 2; ++t) attn_cat[t].resize(n, d);
    MatX<S> a[2][2];
    for (int t = 0; t < 2; ++t)
      for (int u = 0; u < 2; ++u) a[t][u].resize(n, nh);

    for (int head = 0; head < nh; ++head) {
      const Eigen::Index off = static_cast<Eigen::Index>(head) * dh;
      for (int t = 0; t < 2; ++t) {
        auto qh = q[t].middleCols(off, dh);
        VecX<S> s0 =
            (qh.array() * k[0].middleCols(off, dh).array()).rowwise().sum() * scale;
        VecX<S> s1 =
            (qh.array() * k[1].middleCols(off, dh).array()).rowwise().sum() * scale;
        // 2-way softmax
        for (Eigen::Index i = 0; i < n; ++i) {
          S m = std::max(s0(i), s1(i));
          S e0 = std::exp(s0(i) - m), e1 = std::exp(s1(i) - m);
          S z = e0 + e1;
          a[t][0](i, head) = e0 / z;
          a[t][1](i, head) = e1 / z;
        }
        attn_cat[t].middleCols(off, dh) =
            (v[0].middleCols(off, dh).array().colwise() * a[t][0].col(head).array()) +
            (v[1].middleCols(off, dh).array().colwise() * a[t][1].col(head).array());
      }
    }

    for (int t = 0; t < 2; ++t) {
      if (lc) {
        lc->q[t] = q[t];
        lc->k[t] = k[t];
        lc->v[t] = v[t];
        lc->attn_a[t][0] = a[t][0];
        lc->attn_a[t][1] = a[t][1];
        lc->attn_cat[t] = attn_cat[t];
      }
      MatX<S> o = (attn_cat[t] * L.Wo.transpose()).rowwise() + L.bo.transpose();
      if (drop) o.array() *= masks[l].attn[t].array();
      x[t] += o;
      if (lc) lc->x_mid[t] = x[t];
    }

    // pre-LN feedforward
    for (int t = 0; t < 2; ++t) {
      MatX<S> g = layer_norm(x[t], L.ln2_g, L.ln2_b, lc ? &lc->xhat2[t] : nullptr,
                             lc ? &lc->rstd2[t] : nullptr);
      MatX<S> z1 = (g * L.W1.transpose()).rowwise() + L.b1.transpose();
      MatX<S> u = z1.cwiseMax(S(0));
      if (drop) u.array() *= masks[l].hidden[t].array();
      MatX<S> y = (u * L.W2.transpose()).rowwise() + L.b2.transpose();
      if (drop) y.array() *= masks[l].out[t].array();
      if (lc) {
        lc->g[t] = std::move(g);
        lc->z1[t] = std::move(z1);
        lc->u[t] = std::move(u);
      }
      x[t] += y;
    }
    check_finite(x[0], ("layers." + std::to_string(l)).c_str());
    check_finite(x[1], ("layers." + std::to_string(l)).c_str());
  }

  MatX<S> pooled = (x[0] + x[1]) * S(0.5);
  if (cache) cache->pooled = pooled;
  MatX<S> logits = (pooled * w.dec.transpose()).rowwise() + w.dec_b.transpose();
  check_finite(logits, "decoder");
  return logits;
}

// Mean cross-entropy (f64 accumulation) and dlogits.
template <typename S>
double cross_entropy(const MatX<S>& logits, std::span<const ExamplePair> batch,
                     MatX<S>* dlogits) {
  const Eigen::Index n = logits.rows();
  double loss = 0.0;
  if (dlogits) dlogits->resize(n, logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    S m = logits.row(i).maxCoeff();
    VecX<S> e = (logits.row(i).array() - m).exp();
    S z = e.sum();
    const auto target = static_cast<Eigen::Index>(batch[i].c);
    loss += -static_cast<double>(logits(i, target) - m) + std::log(static_cast<double>(z));
    if (dlogits) {
      dlogits->row(i) = (e / z).transpose() / static_cast<S>(n);
      (*dlogits)(i, target) -= S(1) / static_cast<S>(n);
    }
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericError("loss");
  return loss;
}

template <typename S>
void backward_impl(const ModelConfig& cfg, const Weights<S>& w, const Cache<S>& cache,
                   std::span<const ExamplePair> batch,
                   const std::vector<LayerMasks<S>>& masks, const MatX<S>& dlogits,
                   ParameterVector& grad) {
  const Eigen::Index n = dlogits.rows();
  const int d = cfg.d_model;
  const int nh = cfg.n_heads;
  const int dh = d / nh;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  const bool drop = !masks.empty();

  // decoder
  MatX<S> d_dec = dlogits.transpose() * cache.pooled;
  VecX<S> d_dec_b = dlogits.colwise().sum().transpose();
  MatX<S> dpool = dlogits * w.dec;

  MatX<S> dx[2];
  dx[0] = dpool * S(0.5);
  dx[1] = dpool * S(0.5);

  struct LayerGrads {
    VecX<S> ln1_g, ln1_b, ln2_g, ln2_b;
    MatX<S> Wq, Wk, Wv, Wo, W1, W2;
    VecX<S> bq, bk, bv, bo, b1, b2;
  };
  std::vector<LayerGrads> lg(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    auto& G = lg[l];
    G.ln1_g = VecX<S>::Zero(d);
    G.ln1_b = VecX<S>::Zero(d);
    G.ln2_g = VecX<S>::Zero(d);
    G.ln2_b = VecX<S>::Zero(d);
    G.Wq = MatX<S>::Zero(d, d);
    G.Wk = MatX<S>::Zero(d, d);
    G.Wv = MatX<S>::Zero(d, d);
    G.Wo = MatX<S>::Zero(d, d);
    G.W1 = MatX<S>::Zero(cfg.d_ff, d);
    G.W2 = MatX<S>::Zero(d, cfg.d_ff);
    G.bq = VecX<S>::Zero(d);
    G.bk = VecX<S>::Zero(d);
    G.bv = VecX<S>::Zero(d);
    G.bo = VecX<S>::Zero(d);
    G.b1 = VecX<S>::Zero(cfg.d_ff);
    G.b2 = VecX<S>::Zero(d);
  }

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& L = w.layers[l];
    const auto& lc = cache.layers[l];
    auto& G = lg[l];

    // feedforward backward (x_out = x_mid + drop(W2 relu(W1 g + b1) + b2))
    for (int t = 0; t < 2; ++t) {
      MatX<S> dy = dx[t];
      if (drop) dy.array() *= masks[l].out[t].array();
      G.W2 += dy.transpose() * lc.u[t];
      G.b2 += dy.colwise().sum().transpose();
      MatX<S> du = dy * L.W2;
      if (drop) du.array() *= masks[l].hidden[t].array();
      MatX<S> dz = (lc.z1[t].array() > S(0)).template cast<S>() * du.array();
      G.W1 += dz.transpose() * lc.g[t];
      G.b1 += dz.colwise().sum().transpose();
      MatX<S> dg = dz * L.W1;
      MatX<S> dmid =
          layer_norm_backward(dg, lc.xhat2[t], lc.rstd2[t], L.ln2_g, G.ln2_g, G.ln2_b);
      dx[t] += dmid;  // dx[t] now holds d x_mid[t]
    }

    // attention backward (x_mid = x_in + drop(Wo attn + bo))
    MatX<S> dq[2], dk[2], dv[2];
    for (int t = 0; t < 2; ++t) {
      dq[t] = MatX<S>::Zero(n, d);
      dk[t] = MatX<S>::Zero(n, d);
      dv[t] = MatX<S>::Zero(n, d);
    }
    MatX<S> dA[2];
    for (int t = 0; t < 2; ++t) {
      MatX<S> dO = dx[t];
      if (drop) dO.array() *= masks[l].attn[t].array();
      G.Wo += dO.transpose() * lc.attn_cat[t];
      G.bo += dO.colwise().sum().transpose();
      dA[t] = dO * L.Wo;
    }

    for (int head = 0; head < nh; ++head) {
      const Eigen::Index off = static_cast<Eigen::Index>(head) * dh;
      for (int t = 0; t < 2; ++t) {
        auto dAh = dA[t].middleCols(off, dh);
        VecX<S> da0 = (dAh.array() * lc.v[0].middleCols(off, dh).array()).rowwise().sum();
        VecX<S> da1 = (dAh.array() * lc.v[1].middleCols(off, dh).array()).rowwise().sum();
        auto a0 = lc.attn_a[t][0].col(head).array();
        auto a1 = lc.attn_a[t][1].col(head).array();
        dv[0].middleCols(off, dh).array() += dAh.array().colwise() * a0;
        dv[1].middleCols(off, dh).array() += dAh.array().colwise() * a1;
        // softmax backward over the 2 keys
        Eigen::Array<S, Eigen::Dynamic, 1> inner = a0 * da0.array() + a1 * da1.array();
        VecX<S> ds0 = (a0 * (da0.array() - inner)).matrix();
        VecX<S> ds1 = (a1 * (da1.array() - inner)).matrix();
        dq[t].middleCols(off, dh).array() +=
            (lc.k[0].middleCols(off, dh).array().colwise() * ds0.array() +
             lc.k[1].middleCols(off, dh).array().colwise() * ds1.array()) *
            scale;
        dk[0].middleCols(off, dh).array() +=
            lc.q[t].middleCols(off, dh).array().colwise() * ds0.array() * scale;
        dk[1].middleCols(off, dh).array() +=
            lc.q[t].middleCols(off, dh).array().colwise() * ds1.array() * scale;
      }
    }

    for (int t = 0; t < 2; ++t) {
      // reconstruct normalized input h[t] = xhat1*g + b
      MatX<S> h = (lc.xhat1[t].array().rowwise() * L.ln1_g.transpose().array()).rowwise() +
                  L.ln1_b.transpose().array();
      G.Wq += dq[t].transpose() * h;
      G.Wk += dk[t].transpose() * h;
      G.Wv += dv[t].transpose() * h;
      G.bq += dq[t].colwise().sum().transpose();
      G.bk += dk[t].colwise().sum().transpose();
      G.bv += dv[t].colwise().sum().transpose();
      MatX<S> dh = dq[t] * L.Wq + dk[t] * L.Wk + dv[t] * L.Wv;
      MatX<S> din =
          layer_norm_backward(dh, lc.xhat1[t], lc.rstd1[t], L.ln1_g, G.ln1_g, G.ln1_b);
      dx[t] += din;  // dx[t] now holds d x_in[t]
    }
  }

  // embeddings
  MatX<S> d_tok = MatX<S>::Zero(cfg.p, d);
  MatX<S> d_pos = MatX<S>::Zero(2, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    d_tok.row(batch[i].a) += dx[0].row(i);
    d_tok.row(batch[i].b) += dx[1].row(i);
  }
  d_pos.row(0) = dx[0].colwise().sum();
  d_pos.row(1) = dx[1].colwise().sum();

  // write into the flattened gradient in canonical order
  auto write_mat = [&grad](std::string_view name, const MatX<S>& m) {
    auto dst = grad.matrix(name);
    dst = m.template cast<double>();
  };
  auto write_vec = [&grad](std::string_view name, const VecX<S>& v) {
    auto span = grad.segment(name);
    for (Eigen::Index i = 0; i < v.size(); ++i) span[i] = static_cast<double>(v(i));
  };

  write_mat("token_embedding", d_tok);
  write_mat("pos_embedding", d_pos);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    auto& G = lg[l];
    write_vec(pre + "norm1.weight", G.ln1_g);
    write_vec(pre + "norm1.bias", G.ln1_b);
    MatX<S> in_proj(3 * d, d);
    in_proj.topRows(d) = G.Wq;
    in_proj.middleRows(d, d) = G.Wk;
    in_proj.bottomRows(d) = G.Wv;
    write_mat(pre + "attn.in_proj_weight", in_proj);
    VecX<S> in_bias(3 * d);
    in_bias << G.bq, G.bk, G.bv;
    write_vec(pre + "attn.in_proj_bias", in_bias);
    write_mat(pre + "attn.out_proj.weight", G.Wo);
    write_vec(pre + "attn.out_proj.bias", G.bo);
    write_vec(pre + "norm2.weight", G.ln2_g);
    write_vec(pre + "norm2.bias", G.ln2_b);
    write_mat(pre + "linear1.weight", G.W1);
    write_vec(pre + "linear1.bias", G.b1);
    write_mat(pre + "linear2.weight", G.W2);
    write_vec(pre + "linear2.bias", G.b2);
  }
  write_mat("decoder.weight", d_dec);
  write_vec("decoder.bias", d_dec_b);
}

template <typename S>
double loss_impl(const ModelConfig& cfg, const ParameterVector& params,
                 std::span<const ExamplePair> batch, const ForwardMode& mode) {
  auto w = load_weights<S>(cfg, params);
  auto masks = make_masks<S>(cfg, static_cast<Eigen::Index>(batch.size()), mode);
  MatX<S> logits = forward_impl<S>(cfg, w, batch, masks, nullptr);
  return cross_entropy<S>(logits, batch, nullptr);
}

template <typename S>
std::pair<double, ParameterVector> loss_and_grad_impl(const ModelConfig& cfg,
                                                      const RegistryPtr& reg,
                                                      const ParameterVector& params,
                                                      std::span<const ExamplePair> batch,
                                                      const ForwardMode& mode) {
  auto w = load_weights<S>(cfg, params);
  auto masks = make_masks<S>(cfg, static_cast<Eigen::Index>(batch.size()), mode);
  Cache<S> cache;
  MatX<S> logits = forward_impl<S>(cfg, w, batch, masks, &cache);
  MatX<S> dlogits;
  double loss = cross_entropy<S>(logits, batch, &dlogits);
  ParameterVector grad(reg);
  backward_impl<S>(cfg, w, cache, batch, masks, dlogits, grad);
  return {loss, std::move(grad)};
}

}  // namespace

Eigen::MatrixXd Model::logits(const ParameterVector& params,
                              std::span<const ExamplePair> batch) const {
  if (cfg_.precision == Precision::kF32) {
    auto w = load_weights<float>(cfg_, params);
    return forward_impl<float>(cfg_, w, batch, {}, nullptr).cast<double>();
  }
  auto w = load_weights<double>(cfg_, params);
  return forward_impl<double>(cfg_, w, batch, {}, nullptr);
}

double Model::loss(const ParameterVector& params, std::span<const ExamplePair> batch,
                   const ForwardMode& mode) const {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  return cfg_.precision == Precision::kF32 ? loss_impl<float>(cfg_, params, batch, mode)
                                           : loss_impl<double>(cfg_, params, batch, mode);
}

std::pair<double, ParameterVector> Model::loss_and_grad(const ParameterVector& params,
                                                        std::span<const ExamplePair> batch,
                                                        const ForwardMode& mode) const {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  return cfg_.precision == Precision::kF32
             ? loss_and_grad_impl<float>(cfg_, reg_, params, batch, mode)
             : loss_and_grad_impl<double>(cfg_, reg_, params, batch, mode);
}

double Model::accuracy(const ParameterVector& params,
                       std::span<const ExamplePair> examples) const {
  if (examples.empty()) throw std::invalid_argument("accuracy over empty example list");
  constexpr std::size_t kChunk = 512;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < examples.size(); begin += kChunk) {
    auto chunk = examples.subspan(begin, std::min(kChunk, examples.size() - begin));
    Eigen::MatrixXd lg = logits(params, chunk);
    for (Eigen::Index i = 0; i < lg.rows(); ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < lg.cols(); ++j)
        if (lg(i, j) > lg(i, best)) best = j;  // ties keep lowest index
      if (best == static_cast<Eigen::Index>(chunk[i].c)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace ordlab
