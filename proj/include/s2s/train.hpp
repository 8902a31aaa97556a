#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2s/data.hpp"
#include "s2s/model.hpp"

namespace s2s {

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 500;
  int epochs = 30;
  std::vector<double> alpha_grid = {0.2, 0.4, 0.6, 0.8};
  double alpha = 0.6;
  uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 = never
  // When false, the drop augmentation is sampled once up front instead of
  // being rebuilt each epoch.
  bool resample_augmentation = true;

  void validate() const;
};

struct InferenceConfig {
  double stop_threshold = 0.5;
  int max_rounds = 10;
  bool exclude_basket_items = true;

  void validate() const;
};

struct CompletionResult {
  std::vector<int> predicted_ids;          // insertion order
  std::vector<double> completeness_probs;  // p^(t) per round, incl. final stop check
  int rounds_used = 0;
  std::string terminated_by;  // "stop" or "max_rounds"
};

struct EpochLog {
  int epoch = 0;
  double ce = 0.0;
  double bce = 0.0;
  double joint = 0.0;
  double val_joint = 0.0;
  double val_top1_accuracy = 0.0;
  double val_completeness_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainStats {
  std::vector<EpochLog> epochs;
  // Training-stream accuracies of the final parameters, used by overfit checks.
  double train_top1_accuracy = 0.0;
  double train_completeness_accuracy = 0.0;
};

// Runs epochs x batches of forward -> joint loss -> backward -> Adam.
// Recipes are given as id sets; augmentation happens inside (per epoch when
// cfg.resample_augmentation). Throws on NaN loss.
TrainStats train(BasketModel& model, const std::vector<std::vector<int>>& train_recipes,
                 const std::vector<std::vector<int>>& val_recipes,
                 const TrainConfig& cfg);

// Loss and accuracies of the current parameters over an example stream.
struct EvalLosses {
  double joint = 0.0;
  double top1_accuracy = 0.0;
  double completeness_accuracy = 0.0;
};
EvalLosses evaluate_losses(BasketModel& model, const std::vector<TrainingExample>& examples,
                           double alpha);

// Iterative stop-gated completion: add the top candidate while p <= threshold,
// up to max_rounds or the model's max set size. Ties break to the lowest id.
CompletionResult complete_basket(BasketModel& model, const std::vector<int>& input_ids,
                                 const InferenceConfig& cfg = {});

// First min(k, |predicted|) completions; never padded.
std::vector<int> predict_topk(BasketModel& model, const std::vector<int>& input_ids,
                              int k, const InferenceConfig& cfg = {});

struct AlphaReportRow {
  double alpha = 0.0;
  double f1_at_3 = 0.0;
  double mse_at_3 = 0.0;
};

struct AlphaSweepResult {
  double best_alpha = 0.0;
  std::vector<AlphaReportRow> rows;
};

// Trains one model per grid value; selects by validation F1@3, ties broken by
// lower MSE@3. `make_model` builds a fresh model for a given alpha and seed.
AlphaSweepResult tune_alpha(const std::vector<std::vector<int>>& train_recipes,
                            const std::vector<std::vector<int>>& val_recipes,
                            const ModelConfig& model_cfg, const TrainConfig& train_cfg);

}  // namespace s2s
