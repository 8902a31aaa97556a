#include "s2s/model.hpp"

#include <cmath>
#include <stdexcept>

namespace s2s {

void ModelConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("ModelConfig: vocab_size must be >= 2");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("ModelConfig: alpha must be in [0,1]");
  if (max_set_size < 1) throw std::invalid_argument("ModelConfig: max_set_size must be >= 1");
  AttentionConfig{d_model, num_heads}.validate();
  if (num_encoder_layers < 1 || m_ind < 1)
    throw std::invalid_argument("ModelConfig: encoder layers and m_ind must be >= 1");
}

S2SParams S2SParams::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  S2SParams p;
  std::normal_distribution<double> dist(0.0, 1.0);
  p.embedding = Tensor::zeros(cfg.vocab_size, cfg.input_dim(), true);
  for (auto& v : p.embedding.data()) v = dist(rng) * 0.02;
  if (cfg.has_projection()) {
    p.input_proj = init_projection(cfg.input_dim(), cfg.d_model, rng);
  }
  const AttentionConfig acfg{cfg.d_model, cfg.num_heads};
  for (int l = 0; l < cfg.num_encoder_layers; ++l) {
    p.encoder.push_back(ISABParams::init(acfg, cfg.m_ind, rng));
  }
  p.query_pooler = PMAParams::init(acfg, 1, rng);
  p.completeness_pooler = PMAParams::init(acfg, 1, rng);
  p.comp_w = init_projection(cfg.d_model, 1, rng);
  p.comp_b = Tensor::zeros(1, 1, true);
  return p;
}

S2SRec2Model::S2SRec2Model(ModelConfig cfg, std::mt19937_64& rng)
    : cfg_(std::move(cfg)), params_(S2SParams::init(cfg_, rng)) {}

S2SRec2Model::S2SRec2Model(ModelConfig cfg, S2SParams params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
}

Tensor S2SRec2Model::embed_basket(Tape& t, const std::vector<int>& ids) const {
  if (ids.empty()) throw std::invalid_argument("embed_basket: empty basket");
  if (static_cast<int>(ids.size()) > cfg_.max_set_size) {
    throw std::invalid_argument("embed_basket: basket of " +
                                std::to_string(ids.size()) + " exceeds max set size " +
                                std::to_string(cfg_.max_set_size));
  }
  Tensor rows = embedding_lookup(t, params_.embedding, ids);
  if (params_.input_proj) rows = matmul(t, rows, *params_.input_proj);
  return rows;
}

Tensor S2SRec2Model::encode_set(Tape& t, const Tensor& x, const Mask& mask) const {
  Tensor h = x;
  for (const auto& layer : params_.encoder) h = isab(t, h, layer, mask);
  return h;
}

Tensor S2SRec2Model::projected_table(Tape& t) const {
  if (params_.input_proj) return matmul(t, params_.embedding, *params_.input_proj);
  return params_.embedding;
}

std::pair<Tensor, Tensor> S2SRec2Model::score_candidates(
    Tape& t, const Tensor& encoded, const Mask& mask,
    const std::set<int>& exclude) const {
  if (static_cast<int>(exclude.size()) >= cfg_.vocab_size) {
    throw std::invalid_argument("score_candidates: exclusion covers the whole vocabulary");
  }
  Tensor h = pma(t, encoded, params_.query_pooler, mask);
  Tensor logits = matmul_nt(t, h, projected_table(t));
  Mask m;
  if (!exclude.empty()) {
    m.assign(cfg_.vocab_size, 1);
    for (int id : exclude) {
      if (id >= 0 && id < cfg_.vocab_size) m[id] = 0;
    }
  }
  Tensor probs = softmax_rows(t, logits, m);
  return {logits, probs};
}

Tensor S2SRec2Model::predict_completeness(Tape& t, const Tensor& encoded,
                                          const Mask& mask) const {
  Tensor h = pma(t, encoded, params_.completeness_pooler, mask);
  Tensor z = add_row_broadcast(t, matmul(t, h, params_.comp_w), params_.comp_b);
  return sigmoid(t, z);
}

ForwardOutput S2SRec2Model::forward(Tape& t, const std::vector<int>& ids,
                                    const Mask& mask) {
  Tensor x = embed_basket(t, ids);
  Tensor encoded = encode_set(t, x, mask);
  Tensor h = pma(t, encoded, params_.query_pooler, mask);
  Tensor logits = matmul_nt(t, h, projected_table(t));
  Tensor p = predict_completeness(t, encoded, mask);
  return {logits, p};
}

std::vector<Tensor> S2SRec2Model::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, p] : named_parameters()) out.push_back(p);
  return out;
}

namespace {

void add_rff(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
             const RFFParams& p) {
  out.emplace_back(prefix + ".w1", p.w1);
  out.emplace_back(prefix + ".b1", p.b1);
  out.emplace_back(prefix + ".w2", p.w2);
  out.emplace_back(prefix + ".b2", p.b2);
}

void add_mab(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
             const MABParams& p) {
  for (size_t h = 0; h < p.wq.size(); ++h) {
    out.emplace_back(prefix + ".wq." + std::to_string(h), p.wq[h]);
    out.emplace_back(prefix + ".wk." + std::to_string(h), p.wk[h]);
    out.emplace_back(prefix + ".wv." + std::to_string(h), p.wv[h]);
  }
  out.emplace_back(prefix + ".wo", p.wo);
  out.emplace_back(prefix + ".ln1_gamma", p.ln1_gamma);
  out.emplace_back(prefix + ".ln1_beta", p.ln1_beta);
  out.emplace_back(prefix + ".ln2_gamma", p.ln2_gamma);
  out.emplace_back(prefix + ".ln2_beta", p.ln2_beta);
  add_rff(out, prefix + ".rff", p.rff);
}

void add_pma(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
             const PMAParams& p) {
  out.emplace_back(prefix + ".seeds", p.seeds);
  add_mab(out, prefix + ".mab", p.mab);
  add_rff(out, prefix + ".pre_rff", p.pre_rff);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> S2SRec2Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding", params_.embedding);
  if (params_.input_proj) out.emplace_back("input_proj", *params_.input_proj);
  for (size_t l = 0; l < params_.encoder.size(); ++l) {
    const std::string prefix = "encoder." + std::to_string(l);
    out.emplace_back(prefix + ".inducing", params_.encoder[l].inducing);
    add_mab(out, prefix + ".inner", params_.encoder[l].inner);
    add_mab(out, prefix + ".outer", params_.encoder[l].outer);
  }
  add_pma(out, "query_pooler", params_.query_pooler);
  add_pma(out, "completeness_pooler", params_.completeness_pooler);
  out.emplace_back("completeness_head.w", params_.comp_w);
  out.emplace_back("completeness_head.b", params_.comp_b);
  return out;
}

Tensor joint_loss(Tape& t, const Tensor& ce, const Tensor& bce, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("joint_loss: alpha must be in [0,1]");
  return add(t, scale(t, ce, alpha), scale(t, bce, 1.0 - alpha));
}

}  // namespace s2s
