#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace s2s {

// Dense row-major 2-D tensor of doubles. Value-semantic handle over shared
// storage so the tape can hold references to the same buffers the caller sees.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor full(int rows, int cols, double value, bool requires_grad = false);
  static Tensor from(int rows, int cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor identity(int n);

  bool defined() const { return p_ != nullptr; }
  int rows() const { return p_->rows; }
  int cols() const { return p_->cols; }
  int size() const { return p_->rows * p_->cols; }

  double at(int i, int j) const { return p_->data[i * p_->cols + j]; }
  double& at(int i, int j) { return p_->data[i * p_->cols + j]; }

  std::vector<double>& data() { return p_->data; }
  const std::vector<double>& data() const { return p_->data; }
  std::vector<double>& grad() { return p_->grad; }
  const std::vector<double>& grad() const { return p_->grad; }

  bool requires_grad() const { return p_->requires_grad; }
  void zero_grad();

  // Identity of the underlying storage, used by the tape.
  const void* id() const { return p_.get(); }

 private:
  struct Impl {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
    std::vector<double> grad;  // same length as data when requires_grad
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> p_;
};

// Records forward ops so backward() can replay them in reverse. One tape per
// forward/backward pass; confined to a single thread.
class Tape {
 public:
  // `backward` reads out.grad() and accumulates into the inputs' grads.
  void record(const Tensor& out, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradients
  // accumulate additively across fan-out, so callers zero parameter grads
  // before each pass.
  void backward(const Tensor& loss);

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor out;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
};

using Mask = std::vector<char>;  // 1 = valid, 0 = masked out

// --- forward ops (all record onto the tape) ---

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(Tape& t, const Tensor& a, const Tensor& b);
Tensor add(Tape& t, const Tensor& a, const Tensor& b);
// x[m x n] + row[1 x n] broadcast over rows
Tensor add_row_broadcast(Tape& t, const Tensor& x, const Tensor& row);
Tensor mul(Tape& t, const Tensor& a, const Tensor& b);
Tensor scale(Tape& t, const Tensor& a, double s);
Tensor relu(Tape& t, const Tensor& x);
Tensor sigmoid(Tape& t, const Tensor& x);
Tensor sum(Tape& t, const Tensor& x);

// Row-wise softmax with optional boolean mask (same shape as x). Masked
// entries come out exactly 0; a fully masked row is an error.
Tensor softmax_rows(Tape& t, const Tensor& x, const Mask& mask = {});

// Per-row mean/variance normalization followed by affine gamma/beta [1 x n].
Tensor layer_norm_rows(Tape& t, const Tensor& x, const Tensor& gamma,
                       const Tensor& beta, double eps = 1e-5);

// Mean over unmasked rows of -log softmax(logits)[target]. Rows with
// target_mask[i] == 0 contribute nothing (complete-basket examples).
Tensor cross_entropy_from_logits(Tape& t, const Tensor& logits,
                                 const std::vector<int>& targets,
                                 const Mask& target_mask = {});

// p is [B x 1] of probabilities, y in {0,1}. p clamped to [1e-7, 1-1e-7].
Tensor binary_cross_entropy(Tape& t, const Tensor& p, const std::vector<int>& y);

// Gathers rows of table; backward scatter-adds into the table grad.
Tensor embedding_lookup(Tape& t, const Tensor& table, const std::vector<int>& ids);

Tensor concat_rows(Tape& t, const std::vector<Tensor>& parts);
Tensor concat_cols(Tape& t, const std::vector<Tensor>& parts);

// Mean over unmasked rows -> [1 x d]. Empty mask means all rows count.
Tensor mean_rows_masked(Tape& t, const Tensor& x, const Mask& row_mask = {});

// --- optimizer ---

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void init(const std::vector<Tensor>& params);
};

// Standard bias-corrected Adam update over params[i].grad().
void adam_step(std::vector<Tensor>& params, AdamState& state);

// Central differences per coordinate; test oracle only.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h = 1e-5);

}  // namespace s2s
