#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "s2s/data.hpp"
#include "s2s/train.hpp"

namespace s2s {

struct EvalConfig {
  std::vector<int> k_values = {3, 5};
  uint64_t seed = 0;
};

struct MetricRow {
  int k = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mse = 0.0;
};

struct EvalReport {
  std::string system;
  std::vector<MetricRow> rows;
  int num_tasks = 0;
};

// Precision/recall/F1 on the first k predictions. Empty truncated P gives
// precision 0; empty G is an error.
struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
PRF metrics_at_k(const std::vector<int>& predicted, const std::set<int>& truth, int k);

// Mean squared size error, both sides capped at k.
double mse_at_k(const std::vector<std::vector<int>>& predicted,
                const std::vector<std::set<int>>& truth, int k);

struct EvalTask {
  std::vector<int> input_ids;
  std::set<int> truth;
};

// Held-out tasks built with the training drop distribution: remove
// k ~ Uniform{1,2,3} ingredients, ask the system to restore them.
std::vector<EvalTask> make_eval_tasks(const std::vector<std::vector<int>>& recipes,
                                      std::mt19937_64& rng);

// Anything rankable: given an input basket, return up to k predictions.
class System {
 public:
  virtual ~System() = default;
  virtual std::string name() const = 0;
  virtual std::vector<int> predict_topk(const std::vector<int>& input_ids, int k) = 0;
};

EvalReport evaluate_system(System& system, const std::vector<EvalTask>& tasks,
                           const EvalConfig& cfg);

// --- systems ---

// Full model driven through the stop-gated completion loop.
std::unique_ptr<System> make_model_system(BasketModel& model, std::string name,
                                          const InferenceConfig& cfg = {});

// Ablation (a): ignore the stop head, always emit exactly k predictions.
std::unique_ptr<System> make_no_stop_system(BasketModel& model, std::string name);

// Ablation (b): one-shot multi-label ranking from the first-round candidate
// distribution; set size = count of probabilities above the threshold.
std::unique_ptr<System> make_multilabel_system(BasketModel& model, std::string name,
                                               double threshold);

// One-vs-rest logistic heads over mean-pooled fixed random embeddings. The
// size threshold is tuned on validation data for lowest squared size error.
struct LogisticBaselineConfig {
  int feature_dim = 32;
  double lr = 0.05;
  int epochs = 20;
  uint64_t seed = 0;
  std::vector<double> threshold_grid = {0.02, 0.05, 0.1, 0.15, 0.2,
                                        0.3,  0.4,  0.5, 0.7,  0.9};
};

class MultiLabelSample {
 public:
  std::vector<int> input_ids;
  std::set<int> positive_labels;
};

// Groups a TrainingExample stream into multi-label samples (examples emitted
// from the same drop pass share an input).
std::vector<MultiLabelSample> group_multilabel(const std::vector<TrainingExample>& examples);

std::unique_ptr<System> baseline_multilabel_logistic(
    const std::vector<MultiLabelSample>& train_samples,
    const std::vector<MultiLabelSample>& val_samples, int vocab_size,
    const LogisticBaselineConfig& cfg);

// Mean-pooling set encoder with the same two heads; ablation (c).
class MeanPoolStopModel : public BasketModel {
 public:
  MeanPoolStopModel(ModelConfig cfg, std::mt19937_64& rng);

  ForwardOutput forward(Tape& t, const std::vector<int>& ids,
                        const Mask& mask = {}) override;
  std::vector<Tensor> parameters() const override;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
  const ModelConfig& config() const override { return cfg_; }

 private:
  ModelConfig cfg_;
  Tensor embedding_;
  Tensor query_w_, query_b_;  // d -> d context map for candidate scoring
  Tensor comp_w_, comp_b_;
};

// Two affine layers with ReLU over the mean-pooled embedding; ablation (d).
class VanillaNNStopModel : public BasketModel {
 public:
  VanillaNNStopModel(ModelConfig cfg, std::mt19937_64& rng);

  ForwardOutput forward(Tape& t, const std::vector<int>& ids,
                        const Mask& mask = {}) override;
  std::vector<Tensor> parameters() const override;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
  const ModelConfig& config() const override { return cfg_; }

 private:
  ModelConfig cfg_;
  Tensor embedding_;
  Tensor w1_, b1_, w2_, b2_;
  Tensor comp_w_, comp_b_;
};

// Picks the probability threshold with the lowest squared set-size error on
// the given tasks (used by the multi-label ablation).
double tune_multilabel_threshold(BasketModel& model, const std::vector<EvalTask>& tasks,
                                 const std::vector<double>& grid);

std::string report_to_json(const std::vector<EvalReport>& reports, const EvalConfig& cfg);
std::string report_table(const std::vector<EvalReport>& reports);

}  // namespace s2s
