#include "s2s/set_transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace s2s {

void AttentionConfig::validate() const {
  if (d_model <= 0 || num_heads <= 0 || d_model % num_heads != 0) {
    throw std::invalid_argument("AttentionConfig: d_model " + std::to_string(d_model) +
                                " not divisible by num_heads " +
                                std::to_string(num_heads));
  }
}

Tensor init_projection(int rows, int cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::zeros(rows, cols, true);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor init_seed(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t = Tensor::zeros(rows, cols, true);
  for (auto& v : t.data()) v = dist(rng) * 0.02;
  return t;
}

RFFParams RFFParams::init(int d_in, int hidden, int d_out, std::mt19937_64& rng) {
  RFFParams p;
  p.w1 = init_projection(d_in, hidden, rng);
  p.b1 = Tensor::zeros(1, hidden, true);
  p.w2 = init_projection(hidden, d_out, rng);
  p.b2 = Tensor::zeros(1, d_out, true);
  return p;
}

void RFFParams::collect(std::vector<Tensor>& out) const {
  out.push_back(w1);
  out.push_back(b1);
  out.push_back(w2);
  out.push_back(b2);
}

namespace {

Tensor rff_forward(Tape& t, const RFFParams& p, const Tensor& x) {
  Tensor h = add_row_broadcast(t, matmul(t, x, p.w1), p.b1);
  h = relu(t, h);
  return add_row_broadcast(t, matmul(t, h, p.w2), p.b2);
}

}  // namespace

MABParams MABParams::init(const AttentionConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  MABParams p;
  p.cfg = cfg;
  for (int h = 0; h < cfg.num_heads; ++h) {
    p.wq.push_back(init_projection(cfg.d_model, cfg.d_head(), rng));
    p.wk.push_back(init_projection(cfg.d_model, cfg.d_head(), rng));
    p.wv.push_back(init_projection(cfg.d_model, cfg.d_head(), rng));
  }
  p.wo = init_projection(cfg.d_model, cfg.d_model, rng);
  p.ln1_gamma = Tensor::full(1, cfg.d_model, 1.0, true);
  p.ln1_beta = Tensor::zeros(1, cfg.d_model, true);
  p.ln2_gamma = Tensor::full(1, cfg.d_model, 1.0, true);
  p.ln2_beta = Tensor::zeros(1, cfg.d_model, true);
  p.rff = RFFParams::init(cfg.d_model, 2 * cfg.d_model, cfg.d_model, rng);
  return p;
}

void MABParams::collect(std::vector<Tensor>& out) const {
  for (const auto& w : wq) out.push_back(w);
  for (const auto& w : wk) out.push_back(w);
  for (const auto& w : wv) out.push_back(w);
  out.push_back(wo);
  out.push_back(ln1_gamma);
  out.push_back(ln1_beta);
  out.push_back(ln2_gamma);
  out.push_back(ln2_beta);
  rff.collect(out);
}

ISABParams ISABParams::init(const AttentionConfig& cfg, int m_ind,
                            std::mt19937_64& rng) {
  if (m_ind < 1) throw std::invalid_argument("ISABParams: m_ind must be >= 1");
  ISABParams p;
  p.inducing = init_seed(m_ind, cfg.d_model, rng);
  p.inner = MABParams::init(cfg, rng);
  p.outer = MABParams::init(cfg, rng);
  return p;
}

void ISABParams::collect(std::vector<Tensor>& out) const {
  out.push_back(inducing);
  inner.collect(out);
  outer.collect(out);
}

PMAParams PMAParams::init(const AttentionConfig& cfg, int m_seeds,
                          std::mt19937_64& rng) {
  if (m_seeds < 1) throw std::invalid_argument("PMAParams: m_seeds must be >= 1");
  PMAParams p;
  p.seeds = init_seed(m_seeds, cfg.d_model, rng);
  p.mab = MABParams::init(cfg, rng);
  p.pre_rff = RFFParams::init(cfg.d_model, 2 * cfg.d_model, cfg.d_model, rng);
  return p;
}

void PMAParams::collect(std::vector<Tensor>& out) const {
  out.push_back(seeds);
  mab.collect(out);
  pre_rff.collect(out);
}

Tensor attention(Tape& t, const Tensor& q, const Tensor& k, const Tensor& v,
                 const Mask& key_mask) {
  if (q.cols() != k.cols()) {
    throw std::invalid_argument("attention: query width " + std::to_string(q.cols()) +
                                " != key width " + std::to_string(k.cols()));
  }
  if (k.rows() != v.rows()) {
    throw std::invalid_argument("attention: " + std::to_string(k.rows()) +
                                " keys but " + std::to_string(v.rows()) + " values");
  }
  if (!key_mask.empty() && static_cast<int>(key_mask.size()) != k.rows()) {
    throw std::invalid_argument("attention: key_mask length mismatch");
  }
  const double phi = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  Tensor logits = scale(t, matmul_nt(t, q, k), phi);
  Mask full_mask;
  if (!key_mask.empty()) {
    full_mask.resize(static_cast<size_t>(q.rows()) * k.rows());
    for (int i = 0; i < q.rows(); ++i)
      for (int j = 0; j < k.rows(); ++j) full_mask[i * k.rows() + j] = key_mask[j];
  }
  Tensor weights = softmax_rows(t, logits, full_mask);
  return matmul(t, weights, v);
}

Tensor multi_head(Tape& t, const Tensor& x_q, const Tensor& x_kv, const MABParams& p,
                  const Mask& key_mask) {
  std::vector<Tensor> heads;
  heads.reserve(p.cfg.num_heads);
  for (int h = 0; h < p.cfg.num_heads; ++h) {
    Tensor qh = matmul(t, x_q, p.wq[h]);
    Tensor kh = matmul(t, x_kv, p.wk[h]);
    Tensor vh = matmul(t, x_kv, p.wv[h]);
    heads.push_back(attention(t, qh, kh, vh, key_mask));
  }
  Tensor cat = p.cfg.num_heads == 1 ? heads[0] : concat_cols(t, heads);
  return matmul(t, cat, p.wo);
}

Tensor mab(Tape& t, const Tensor& x, const Tensor& y, const MABParams& p,
           const Mask& key_mask) {
  Tensor h = add(t, x, multi_head(t, x, y, p, key_mask));
  h = layer_norm_rows(t, h, p.ln1_gamma, p.ln1_beta);
  Tensor out = add(t, h, rff_forward(t, p.rff, h));
  return layer_norm_rows(t, out, p.ln2_gamma, p.ln2_beta);
}

Tensor sab(Tape& t, const Tensor& x, const MABParams& p, const Mask& mask) {
  return mab(t, x, x, p, mask);
}

Tensor isab(Tape& t, const Tensor& x, const ISABParams& p, const Mask& mask) {
  Tensor induced = mab(t, p.inducing, x, p.inner, mask);
  return mab(t, x, induced, p.outer);
}

Tensor pma(Tape& t, const Tensor& z, const PMAParams& p, const Mask& mask) {
  if (!mask.empty()) {
    bool any = false;
    for (char m : mask) any = any || m;
    if (!any) throw std::invalid_argument("pma: empty set (all rows masked)");
  }
  Tensor transformed = rff_forward(t, p.pre_rff, z);
  return mab(t, p.seeds, transformed, p.mab, mask);
}

}  // namespace s2s
