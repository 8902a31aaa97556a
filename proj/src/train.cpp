#include "s2s/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "s2s/eval.hpp"

namespace s2s {

void TrainConfig::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("TrainConfig: alpha must be in [0,1]");
  for (double a : alpha_grid) {
    if (a < 0.0 || a > 1.0)
      throw std::invalid_argument("TrainConfig: alpha_grid value out of [0,1]");
  }
}

void InferenceConfig::validate() const {
  if (stop_threshold <= 0.0 || stop_threshold >= 1.0)
    throw std::invalid_argument("InferenceConfig: stop_threshold must be in (0,1)");
  if (max_rounds < 1)
    throw std::invalid_argument("InferenceConfig: max_rounds must be >= 1");
}

namespace {

struct BatchLoss {
  Tensor joint;
  double ce = 0.0;
  double bce = 0.0;
};

BatchLoss batch_loss(Tape& t, BasketModel& model, const Batch& batch, double alpha) {
  std::vector<Tensor> target_logits;
  std::vector<int> targets;
  std::vector<Tensor> probs;
  std::vector<int> labels;
  for (size_t i = 0; i < batch.ids.size(); ++i) {
    ForwardOutput out = model.forward(t, batch.ids[i], batch.mask[i]);
    if (batch.target_mask[i]) {
      target_logits.push_back(out.candidate_logits);
      targets.push_back(batch.targets[i]);
    }
    probs.push_back(out.completeness_prob);
    labels.push_back(batch.labels[i]);
  }

  Tensor ce = target_logits.empty()
                  ? Tensor::zeros(1, 1)
                  : cross_entropy_from_logits(t, concat_rows(t, target_logits), targets);
  Tensor bce = binary_cross_entropy(t, concat_rows(t, probs), labels);
  BatchLoss r;
  r.ce = ce.data()[0];
  r.bce = bce.data()[0];
  r.joint = joint_loss(t, ce, bce, alpha);
  return r;
}

std::vector<TrainingExample> build_examples(const std::vector<std::vector<int>>& recipes,
                                            std::mt19937_64& rng) {
  std::vector<TrainingExample> out;
  for (const auto& r : recipes) {
    auto ex = augment_recipe(r, rng);
    out.insert(out.end(), ex.begin(), ex.end());
  }
  return out;
}

}  // namespace

EvalLosses evaluate_losses(BasketModel& model, const std::vector<TrainingExample>& examples,
                           double alpha) {
  EvalLosses r;
  if (examples.empty()) return r;
  double joint_sum = 0.0;
  int n_batches = 0;
  int top1_hits = 0, top1_total = 0;
  int comp_hits = 0;
  std::mt19937_64 dummy(0);
  std::vector<TrainingExample> copy = examples;
  auto batches = make_batches(std::move(copy), 256, dummy);
  for (const auto& batch : batches) {
    Tape t;
    for (size_t i = 0; i < batch.ids.size(); ++i) {
      ForwardOutput out = model.forward(t, batch.ids[i], batch.mask[i]);
      if (batch.target_mask[i]) {
        ++top1_total;
        int best = -1;
        double best_v = -std::numeric_limits<double>::infinity();
        for (int j = 1; j < out.candidate_logits.cols(); ++j) {  // skip pad
          if (out.candidate_logits.data()[j] > best_v) {
            best_v = out.candidate_logits.data()[j];
            best = j;
          }
        }
        if (best == batch.targets[i]) ++top1_hits;
      }
      const double p = out.completeness_prob.data()[0];
      if ((p > 0.5 ? 1 : 0) == batch.labels[i]) ++comp_hits;
    }
    Tape t2;
    joint_sum += batch_loss(t2, model, batch, alpha).joint.data()[0];
    ++n_batches;
  }
  r.joint = joint_sum / n_batches;
  r.top1_accuracy = top1_total ? static_cast<double>(top1_hits) / top1_total : 0.0;
  r.completeness_accuracy = static_cast<double>(comp_hits) / examples.size();
  return r;
}

TrainStats train(BasketModel& model, const std::vector<std::vector<int>>& train_recipes,
                 const std::vector<std::vector<int>>& val_recipes,
                 const TrainConfig& cfg) {
  cfg.validate();
  if (train_recipes.empty()) throw std::invalid_argument("train: empty training split");

  std::mt19937_64 rng(cfg.seed);
  auto params = model.parameters();
  AdamState adam;
  adam.lr = cfg.lr;
  adam.init(params);

  std::vector<TrainingExample> fixed_examples;
  if (!cfg.resample_augmentation) fixed_examples = build_examples(train_recipes, rng);

  std::vector<TrainingExample> val_examples;
  {
    std::mt19937_64 vrng(cfg.seed ^ 0x5eedULL);
    val_examples = build_examples(val_recipes, vrng);
  }

  TrainStats stats;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<TrainingExample> examples =
        cfg.resample_augmentation ? build_examples(train_recipes, rng) : fixed_examples;
    auto batches = make_batches(std::move(examples), cfg.batch_size, rng);

    EpochLog log;
    log.epoch = epoch + 1;
    int n = 0;
    for (const auto& batch : batches) {
      for (auto& p : params) p.zero_grad();
      Tape t;
      BatchLoss loss = batch_loss(t, model, batch, cfg.alpha);
      if (!std::isfinite(loss.joint.data()[0])) {
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(n) +
                                 ": ce=" + std::to_string(loss.ce) +
                                 " bce=" + std::to_string(loss.bce));
      }
      t.backward(loss.joint);
      adam_step(params, adam);
      log.ce += loss.ce;
      log.bce += loss.bce;
      log.joint += loss.joint.data()[0];
      ++n;
    }
    log.ce /= n;
    log.bce /= n;
    log.joint /= n;
    if (!val_examples.empty()) {
      EvalLosses v = evaluate_losses(model, val_examples, cfg.alpha);
      log.val_joint = v.joint;
      log.val_top1_accuracy = v.top1_accuracy;
      log.val_completeness_accuracy = v.completeness_accuracy;
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stats.epochs.push_back(log);
  }

  {
    std::vector<TrainingExample> train_eval = cfg.resample_augmentation
                                                  ? build_examples(train_recipes, rng)
                                                  : fixed_examples;
    EvalLosses e = evaluate_losses(model, train_eval, cfg.alpha);
    stats.train_top1_accuracy = e.top1_accuracy;
    stats.train_completeness_accuracy = e.completeness_accuracy;
  }
  return stats;
}

CompletionResult complete_basket(BasketModel& model, const std::vector<int>& input_ids,
                                 const InferenceConfig& cfg) {
  cfg.validate();
  if (input_ids.empty()) throw std::invalid_argument("complete_basket: empty basket");

  CompletionResult result;
  std::vector<int> basket = input_ids;
  const int vocab = model.config().vocab_size;
  const int max_size = model.config().max_set_size;

  for (int round = 0; round <= cfg.max_rounds; ++round) {
    Tape t;
    ForwardOutput out = model.forward(t, basket);
    const double p = out.completeness_prob.data()[0];
    result.completeness_probs.push_back(p);
    if (p > cfg.stop_threshold) {
      result.terminated_by = "stop";
      return result;
    }
    if (round == cfg.max_rounds || static_cast<int>(basket.size()) >= max_size) {
      result.terminated_by = "max_rounds";
      return result;
    }

    std::set<int> excluded{Vocabulary::kPadId};
    if (cfg.exclude_basket_items) {
      excluded.insert(basket.begin(), basket.end());
      excluded.insert(result.predicted_ids.begin(), result.predicted_ids.end());
    }
    int best = -1;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < vocab; ++j) {
      if (excluded.count(j)) continue;
      if (out.candidate_logits.data()[j] > best_v) {  // ties keep the lowest id
        best_v = out.candidate_logits.data()[j];
        best = j;
      }
    }
    if (best < 0) {
      result.terminated_by = "max_rounds";
      return result;
    }
    result.predicted_ids.push_back(best);
    basket.push_back(best);
    ++result.rounds_used;
  }
  result.terminated_by = "max_rounds";
  return result;
}

std::vector<int> predict_topk(BasketModel& model, const std::vector<int>& input_ids,
                              int k, const InferenceConfig& cfg) {
  if (k < 1) throw std::invalid_argument("predict_topk: k must be >= 1");
  CompletionResult r = complete_basket(model, input_ids, cfg);
  if (static_cast<int>(r.predicted_ids.size()) > k) r.predicted_ids.resize(k);
  return r.predicted_ids;
}

AlphaSweepResult tune_alpha(const std::vector<std::vector<int>>& train_recipes,
                            const std::vector<std::vector<int>>& val_recipes,
                            const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
  if (train_cfg.alpha_grid.empty())
    throw std::invalid_argument("tune_alpha: empty alpha grid");

  std::mt19937_64 task_rng(train_cfg.seed ^ 0xa1fa5eedULL);
  auto tasks = make_eval_tasks(val_recipes, task_rng);

  AlphaSweepResult result;
  for (double alpha : train_cfg.alpha_grid) {
    ModelConfig mc = model_cfg;
    mc.alpha = alpha;
    std::mt19937_64 init_rng(train_cfg.seed);
    S2SRec2Model model(mc, init_rng);
    TrainConfig tc = train_cfg;
    tc.alpha = alpha;
    train(model, train_recipes, val_recipes, tc);

    AlphaReportRow row;
    row.alpha = alpha;
    std::vector<std::vector<int>> preds;
    std::vector<std::set<int>> truths;
    double f1_sum = 0.0;
    for (const auto& task : tasks) {
      auto p = predict_topk(model, task.input_ids, 3);
      f1_sum += metrics_at_k(p, task.truth, 3).f1;
      preds.push_back(std::move(p));
      truths.push_back(task.truth);
    }
    row.f1_at_3 = tasks.empty() ? 0.0 : f1_sum / tasks.size();
    row.mse_at_3 = tasks.empty() ? 0.0 : mse_at_k(preds, truths, 3);
    result.rows.push_back(row);
  }

  const AlphaReportRow* best = &result.rows[0];
  for (const auto& row : result.rows) {
    if (row.f1_at_3 > best->f1_at_3 ||
        (row.f1_at_3 == best->f1_at_3 && row.mse_at_3 < best->mse_at_3)) {
      best = &row;
    }
  }
  result.best_alpha = best->alpha;
  return result;
}

}  // namespace s2s
