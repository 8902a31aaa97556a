#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "s2s/set_transformer.hpp"
#include "s2s/tensor.hpp"

namespace s2s {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int num_heads = 4;
  int m_ind = 16;
  int num_encoder_layers = 2;
  // Input embedding width; 0 means d_model (no projection). Set to 768 when
  // loading pretrained vectors.
  int embedding_dim_in = 0;
  double alpha = 0.6;
  int max_set_size = 15;

  int input_dim() const { return embedding_dim_in > 0 ? embedding_dim_in : d_model; }
  bool has_projection() const { return embedding_dim_in > 0 && embedding_dim_in != d_model; }
  void validate() const;
};

struct ForwardOutput {
  Tensor candidate_logits;   // 1 x V
  Tensor completeness_prob;  // 1 x 1, in (0,1)
};

// Common surface for everything the trainer / inference loop / eval harness
// can drive: the full model and its ablation variants.
class BasketModel {
 public:
  virtual ~BasketModel() = default;

  // ids may contain padding (entries with mask 0); at least one unmasked id.
  virtual ForwardOutput forward(Tape& t, const std::vector<int>& ids,
                                const Mask& mask = {}) = 0;
  virtual std::vector<Tensor> parameters() const = 0;
  virtual std::vector<std::pair<std::string, Tensor>> named_parameters() const = 0;
  virtual const ModelConfig& config() const = 0;
};

struct S2SParams {
  Tensor embedding;                    // V x input_dim
  std::optional<Tensor> input_proj;    // input_dim x d_model when projecting
  std::vector<ISABParams> encoder;
  PMAParams query_pooler;              // its seed is the learnable query q
  PMAParams completeness_pooler;
  Tensor comp_w;                       // d_model x 1
  Tensor comp_b;                       // 1 x 1

  static S2SParams init(const ModelConfig& cfg, std::mt19937_64& rng);
};

class S2SRec2Model : public BasketModel {
 public:
  S2SRec2Model(ModelConfig cfg, std::mt19937_64& rng);
  S2SRec2Model(ModelConfig cfg, S2SParams params);

  ForwardOutput forward(Tape& t, const std::vector<int>& ids,
                        const Mask& mask = {}) override;
  std::vector<Tensor> parameters() const override;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
  const ModelConfig& config() const override { return cfg_; }

  S2SParams& params() { return params_; }
  const S2SParams& params() const { return params_; }

  Tensor embed_basket(Tape& t, const std::vector<int>& ids) const;
  Tensor encode_set(Tape& t, const Tensor& x, const Mask& mask = {}) const;
  // Pools with the query seed and scores every vocabulary entry against the
  // (projected) embedding table. `exclude` entries get probability exactly 0.
  std::pair<Tensor, Tensor> score_candidates(Tape& t, const Tensor& encoded,
                                             const Mask& mask = {},
                                             const std::set<int>& exclude = {}) const;
  Tensor predict_completeness(Tape& t, const Tensor& encoded,
                              const Mask& mask = {}) const;

 private:
  Tensor projected_table(Tape& t) const;

  ModelConfig cfg_;
  S2SParams params_;
};

// alpha * L_CE + (1 - alpha) * L_BCE
Tensor joint_loss(Tape& t, const Tensor& ce, const Tensor& bce, double alpha);

}  // namespace s2s
