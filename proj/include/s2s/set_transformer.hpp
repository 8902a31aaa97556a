#pragma once

#include <random>
#include <vector>

#include "s2s/tensor.hpp"

namespace s2s {

struct AttentionConfig {
  int d_model = 64;
  int num_heads = 4;
  int d_head() const { return d_model / num_heads; }
  void validate() const;
};

// Two affine maps with ReLU between, applied row-wise.
struct RFFParams {
  Tensor w1, b1;  // d_in x hidden, 1 x hidden
  Tensor w2, b2;  // hidden x d_out, 1 x d_out

  static RFFParams init(int d_in, int hidden, int d_out, std::mt19937_64& rng);
  void collect(std::vector<Tensor>& out) const;
};

struct MABParams {
  AttentionConfig cfg;
  std::vector<Tensor> wq, wk, wv;  // per head: d_model x d_head
  Tensor wo;                       // d_model x d_model
  Tensor ln1_gamma, ln1_beta;
  Tensor ln2_gamma, ln2_beta;
  RFFParams rff;

  static MABParams init(const AttentionConfig& cfg, std::mt19937_64& rng);
  void collect(std::vector<Tensor>& out) const;
};

struct ISABParams {
  Tensor inducing;  // m_ind x d_model, trainable
  MABParams inner;  // attends inducing -> set
  MABParams outer;  // attends set -> induced summary

  static ISABParams init(const AttentionConfig& cfg, int m_ind, std::mt19937_64& rng);
  void collect(std::vector<Tensor>& out) const;
};

struct PMAParams {
  Tensor seeds;  // m_seeds x d_model, trainable
  MABParams mab;
  RFFParams pre_rff;  // applied to the set before pooling

  static PMAParams init(const AttentionConfig& cfg, int m_seeds, std::mt19937_64& rng);
  void collect(std::vector<Tensor>& out) const;
};

// softmax(Q K^T / sqrt(d_k)) V with optional key mask (length = rows of K).
Tensor attention(Tape& t, const Tensor& q, const Tensor& k, const Tensor& v,
                 const Mask& key_mask = {});

Tensor multi_head(Tape& t, const Tensor& x_q, const Tensor& x_kv,
                  const MABParams& p, const Mask& key_mask = {});

// MAB(X, Y) = LayerNorm(H + RFF(H)), H = LayerNorm(X + MultiHead(X, Y, Y)).
Tensor mab(Tape& t, const Tensor& x, const Tensor& y, const MABParams& p,
           const Mask& key_mask = {});

Tensor sab(Tape& t, const Tensor& x, const MABParams& p, const Mask& mask = {});

// MAB(X, MAB(I, X)); permutation-equivariant in X, O(n * m_ind) attention cost.
Tensor isab(Tape& t, const Tensor& x, const ISABParams& p, const Mask& mask = {});

// MAB(S, RFF(Z)); permutation-invariant pooling to m_seeds rows.
Tensor pma(Tape& t, const Tensor& z, const PMAParams& p, const Mask& mask = {});

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
Tensor init_projection(int rows, int cols, std::mt19937_64& rng);
// normal * 0.02, for seeds and inducing points
Tensor init_seed(int rows, int cols, std::mt19937_64& rng);

}  // namespace s2s
