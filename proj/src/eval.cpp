#include "s2s/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace s2s {

using nlohmann::ordered_json;

PRF metrics_at_k(const std::vector<int>& predicted, const std::set<int>& truth, int k) {
  if (truth.empty()) throw std::invalid_argument("metrics_at_k: empty ground truth");
  if (k < 1) throw std::invalid_argument("metrics_at_k: k must be >= 1");

  std::vector<int> p = predicted;
  if (static_cast<int>(p.size()) > k) p.resize(k);

  int hits = 0;
  for (int id : p)
    if (truth.count(id)) ++hits;

  PRF r;
  r.precision = p.empty() ? 0.0 : static_cast<double>(hits) / p.size();
  r.recall = static_cast<double>(hits) / truth.size();
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

double mse_at_k(const std::vector<std::vector<int>>& predicted,
                const std::vector<std::set<int>>& truth, int k) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("mse_at_k: " + std::to_string(predicted.size()) +
                                " predictions vs " + std::to_string(truth.size()) +
                                " truths");
  if (predicted.empty()) throw std::invalid_argument("mse_at_k: empty lists");
  double total = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const double ps = std::min<int>(static_cast<int>(predicted[i].size()), k);
    const double gs = std::min<int>(static_cast<int>(truth[i].size()), k);
    total += (ps - gs) * (ps - gs);
  }
  return total / predicted.size();
}

std::vector<EvalTask> make_eval_tasks(const std::vector<std::vector<int>>& recipes,
                                      std::mt19937_64& rng) {
  std::vector<EvalTask> tasks;
  std::uniform_int_distribution<int> kdist(1, 3);
  for (const auto& r : recipes) {
    const int n = static_cast<int>(r.size());
    if (n < 2) continue;
    const int k = std::min(kdist(rng), n - 1);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    EvalTask task;
    for (int i = 0; i < n; ++i) {
      if (i < k)
        task.truth.insert(r[idx[i]]);
      else
        task.input_ids.push_back(r[idx[i]]);
    }
    std::sort(task.input_ids.begin(), task.input_ids.end());
    tasks.push_back(std::move(task));
  }
  return tasks;
}

EvalReport evaluate_system(System& system, const std::vector<EvalTask>& tasks,
                           const EvalConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("evaluate_system: no tasks");
  EvalReport report;
  report.system = system.name();
  report.num_tasks = static_cast<int>(tasks.size());

  const int max_k = *std::max_element(cfg.k_values.begin(), cfg.k_values.end());
  std::vector<std::vector<int>> predictions;
  predictions.reserve(tasks.size());
  for (const auto& task : tasks)
    predictions.push_back(system.predict_topk(task.input_ids, max_k));

  for (int k : cfg.k_values) {
    MetricRow row;
    row.k = k;
    std::vector<std::set<int>> truths;
    for (size_t i = 0; i < tasks.size(); ++i) {
      PRF m = metrics_at_k(predictions[i], tasks[i].truth, k);
      row.precision += m.precision;
      row.recall += m.recall;
      row.f1 += m.f1;
      truths.push_back(tasks[i].truth);
    }
    row.precision /= tasks.size();
    row.recall /= tasks.size();
    row.f1 /= tasks.size();
    row.mse = mse_at_k(predictions, truths, k);
    report.rows.push_back(row);
  }
  return report;
}

namespace {

class ModelSystem : public System {
 public:
  ModelSystem(BasketModel& model, std::string name, InferenceConfig cfg)
      : model_(model), name_(std::move(name)), cfg_(cfg) {}
  std::string name() const override { return name_; }
  std::vector<int> predict_topk(const std::vector<int>& input_ids, int k) override {
    return s2s::predict_topk(model_, input_ids, k, cfg_);
  }

 private:
  BasketModel& model_;
  std::string name_;
  InferenceConfig cfg_;
};

class NoStopSystem : public System {
 public:
  NoStopSystem(BasketModel& model, std::string name)
      : model_(model), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  std::vector<int> predict_topk(const std::vector<int>& input_ids, int k) override {
    // Force exactly k rounds by making the stop gate unreachable.
    InferenceConfig cfg;
    cfg.stop_threshold = 1.0 - 1e-12;
    cfg.max_rounds = k;
    CompletionResult r = complete_basket(model_, input_ids, cfg);
    return r.predicted_ids;
  }

 private:
  BasketModel& model_;
  std::string name_;
};

class MultiLabelSystem : public System {
 public:
  MultiLabelSystem(BasketModel& model, std::string name, double threshold)
      : model_(model), name_(std::move(name)), threshold_(threshold) {}
  std::string name() const override { return name_; }
  std::vector<int> predict_topk(const std::vector<int>& input_ids, int k) override {
    Tape t;
    ForwardOutput out = model_.forward(t, input_ids);
    std::set<int> excluded(input_ids.begin(), input_ids.end());
    excluded.insert(Vocabulary::kPadId);

    const auto& logits = out.candidate_logits.data();
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < model_.config().vocab_size; ++j)
      if (!excluded.count(j)) mx = std::max(mx, logits[j]);
    double denom = 0.0;
    std::vector<double> probs(logits.size(), 0.0);
    for (int j = 0; j < model_.config().vocab_size; ++j) {
      if (excluded.count(j)) continue;
      probs[j] = std::exp(logits[j] - mx);
      denom += probs[j];
    }
    std::vector<std::pair<double, int>> ranked;
    for (int j = 0; j < model_.config().vocab_size; ++j) {
      if (excluded.count(j)) continue;
      probs[j] /= denom;
      if (probs[j] > threshold_) ranked.emplace_back(-probs[j], j);
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<int> out_ids;
    for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i)
      out_ids.push_back(ranked[i].second);
    return out_ids;
  }

 private:
  BasketModel& model_;
  std::string name_;
  double threshold_;
};

}  // namespace

std::unique_ptr<System> make_model_system(BasketModel& model, std::string name,
                                          const InferenceConfig& cfg) {
  return std::make_unique<ModelSystem>(model, std::move(name), cfg);
}

std::unique_ptr<System> make_no_stop_system(BasketModel& model, std::string name) {
  return std::make_unique<NoStopSystem>(model, std::move(name));
}

std::unique_ptr<System> make_multilabel_system(BasketModel& model, std::string name,
                                               double threshold) {
  return std::make_unique<MultiLabelSystem>(model, std::move(name), threshold);
}

std::vector<MultiLabelSample> group_multilabel(const std::vector<TrainingExample>& examples) {
  std::vector<MultiLabelSample> samples;
  for (const auto& ex : examples) {
    if (!samples.empty() && samples.back().input_ids == ex.input_ids &&
        ex.target_id.has_value()) {
      samples.back().positive_labels.insert(*ex.target_id);
      continue;
    }
    MultiLabelSample s;
    s.input_ids = ex.input_ids;
    if (ex.target_id) s.positive_labels.insert(*ex.target_id);
    samples.push_back(std::move(s));
  }
  return samples;
}

namespace {

// One-vs-rest logistic regression over mean-pooled fixed random embeddings.
// Trained with plain full-batch-free SGD on per-sample BCE; no autograd, the
// gradient is closed-form.
class LogisticBaseline : public System {
 public:
  LogisticBaseline(const std::vector<MultiLabelSample>& train,
                   const std::vector<MultiLabelSample>& val, int vocab_size,
                   const LogisticBaselineConfig& cfg)
      : vocab_(vocab_size), d_(cfg.feature_dim), threshold_(0.5) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    embed_.assign(static_cast<size_t>(vocab_) * d_, 0.0);
    for (auto& v : embed_) v = dist(rng) * 0.5;
    w_.assign(static_cast<size_t>(vocab_) * d_, 0.0);
    b_.assign(vocab_, 0.0);

    // Class priors back the never-positive heads; with w=0 the head predicts
    // sigmoid(b) = prior.
    std::vector<long> pos_count(vocab_, 0);
    for (const auto& s : train)
      for (int id : s.positive_labels) ++pos_count[id];
    for (int c = 0; c < vocab_; ++c) {
      const double prior =
          (pos_count[c] + 0.5) / (static_cast<double>(train.size()) + 1.0);
      b_[c] = std::log(prior / (1.0 - prior));
    }

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (size_t idx : order) {
        const auto& s = train[idx];
        std::vector<double> x = features(s.input_ids);
        for (int c = 1; c < vocab_; ++c) {
          double z = b_[c];
          for (int j = 0; j < d_; ++j) z += w_[c * d_ + j] * x[j];
          const double p = 1.0 / (1.0 + std::exp(-z));
          const double y = s.positive_labels.count(c) ? 1.0 : 0.0;
          const double g = (p - y) * cfg.lr;
          for (int j = 0; j < d_; ++j) w_[c * d_ + j] -= g * x[j];
          b_[c] -= g;
        }
      }
    }

    tune_threshold(val.empty() ? train : val, cfg.threshold_grid);
  }

  std::string name() const override { return "multilabel_logistic"; }

  std::vector<int> predict_topk(const std::vector<int>& input_ids, int k) override {
    std::vector<double> x = features(input_ids);
    std::set<int> excluded(input_ids.begin(), input_ids.end());
    std::vector<std::pair<double, int>> ranked;
    for (int c = 1; c < vocab_; ++c) {
      if (excluded.count(c)) continue;
      double z = b_[c];
      for (int j = 0; j < d_; ++j) z += w_[c * d_ + j] * x[j];
      const double p = 1.0 / (1.0 + std::exp(-z));
      if (p > threshold_) ranked.emplace_back(-p, c);
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<int> out;
    for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i)
      out.push_back(ranked[i].second);
    return out;
  }

  double threshold() const { return threshold_; }

 private:
  std::vector<double> features(const std::vector<int>& ids) const {
    std::vector<double> x(d_, 0.0);
    if (ids.empty()) return x;
    for (int id : ids)
      for (int j = 0; j < d_; ++j) x[j] += embed_[id * d_ + j];
    for (double& v : x) v /= ids.size();
    return x;
  }

  void tune_threshold(const std::vector<MultiLabelSample>& samples,
                      const std::vector<double>& grid) {
    double best_err = std::numeric_limits<double>::infinity();
    for (double th : grid) {
      threshold_ = th;
      double err = 0.0;
      int n = 0;
      for (const auto& s : samples) {
        if (s.positive_labels.empty()) continue;
        const auto pred = predict_topk(s.input_ids, vocab_);
        const double diff = static_cast<double>(pred.size()) -
                            static_cast<double>(s.positive_labels.size());
        err += diff * diff;
        ++n;
      }
      if (n == 0) continue;
      err /= n;
      if (err < best_err) {
        best_err = err;
        best_threshold_ = th;
      }
    }
    threshold_ = best_threshold_;
  }

  int vocab_;
  int d_;
  double threshold_;
  double best_threshold_ = 0.5;
  std::vector<double> embed_;
  std::vector<double> w_;
  std::vector<double> b_;
};

}  // namespace

std::unique_ptr<System> baseline_multilabel_logistic(
    const std::vector<MultiLabelSample>& train_samples,
    const std::vector<MultiLabelSample>& val_samples, int vocab_size,
    const LogisticBaselineConfig& cfg) {
  return std::make_unique<LogisticBaseline>(train_samples, val_samples, vocab_size, cfg);
}

MeanPoolStopModel::MeanPoolStopModel(ModelConfig cfg, std::mt19937_64& rng)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::normal_distribution<double> dist(0.0, 1.0);
  embedding_ = Tensor::zeros(cfg_.vocab_size, cfg_.d_model, true);
  for (auto& v : embedding_.data()) v = dist(rng) * 0.02;
  query_w_ = init_projection(cfg_.d_model, cfg_.d_model, rng);
  query_b_ = Tensor::zeros(1, cfg_.d_model, true);
  comp_w_ = init_projection(cfg_.d_model, 1, rng);
  comp_b_ = Tensor::zeros(1, 1, true);
}

ForwardOutput MeanPoolStopModel::forward(Tape& t, const std::vector<int>& ids,
                                         const Mask& mask) {
  Tensor rows = embedding_lookup(t, embedding_, ids);
  Tensor pooled = mean_rows_masked(t, rows, mask);
  Tensor h = add_row_broadcast(t, matmul(t, pooled, query_w_), query_b_);
  Tensor logits = matmul_nt(t, h, embedding_);
  Tensor z = add_row_broadcast(t, matmul(t, pooled, comp_w_), comp_b_);
  return {logits, sigmoid(t, z)};
}

std::vector<Tensor> MeanPoolStopModel::parameters() const {
  return {embedding_, query_w_, query_b_, comp_w_, comp_b_};
}

std::vector<std::pair<std::string, Tensor>> MeanPoolStopModel::named_parameters() const {
  return {{"embedding", embedding_},
          {"query.w", query_w_},
          {"query.b", query_b_},
          {"completeness_head.w", comp_w_},
          {"completeness_head.b", comp_b_}};
}

VanillaNNStopModel::VanillaNNStopModel(ModelConfig cfg, std::mt19937_64& rng)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::normal_distribution<double> dist(0.0, 1.0);
  embedding_ = Tensor::zeros(cfg_.vocab_size, cfg_.d_model, true);
  for (auto& v : embedding_.data()) v = dist(rng) * 0.02;
  const int hidden = 2 * cfg_.d_model;
  w1_ = init_projection(cfg_.d_model, hidden, rng);
  b1_ = Tensor::zeros(1, hidden, true);
  w2_ = init_projection(hidden, cfg_.d_model, rng);
  b2_ = Tensor::zeros(1, cfg_.d_model, true);
  comp_w_ = init_projection(cfg_.d_model, 1, rng);
  comp_b_ = Tensor::zeros(1, 1, true);
}

ForwardOutput VanillaNNStopModel::forward(Tape& t, const std::vector<int>& ids,
                                          const Mask& mask) {
  Tensor rows = embedding_lookup(t, embedding_, ids);
  Tensor pooled = mean_rows_masked(t, rows, mask);
  Tensor h = relu(t, add_row_broadcast(t, matmul(t, pooled, w1_), b1_));
  h = add_row_broadcast(t, matmul(t, h, w2_), b2_);
  Tensor logits = matmul_nt(t, h, embedding_);
  Tensor z = add_row_broadcast(t, matmul(t, h, comp_w_), comp_b_);
  return {logits, sigmoid(t, z)};
}

std::vector<Tensor> VanillaNNStopModel::parameters() const {
  return {embedding_, w1_, b1_, w2_, b2_, comp_w_, comp_b_};
}

std::vector<std::pair<std::string, Tensor>> VanillaNNStopModel::named_parameters() const {
  return {{"embedding", embedding_}, {"fc1.w", w1_},
          {"fc1.b", b1_},            {"fc2.w", w2_},
          {"fc2.b", b2_},            {"completeness_head.w", comp_w_},
          {"completeness_head.b", comp_b_}};
}

double tune_multilabel_threshold(BasketModel& model, const std::vector<EvalTask>& tasks,
                                 const std::vector<double>& grid) {
  if (grid.empty())
    throw std::invalid_argument("tune_multilabel_threshold: empty grid");
  double best_th = grid.front();
  double best_err = std::numeric_limits<double>::infinity();
  for (double th : grid) {
    auto system = make_multilabel_system(model, "probe", th);
    double err = 0.0;
    for (const auto& task : tasks) {
      const auto pred = system->predict_topk(task.input_ids, model.config().vocab_size);
      const double diff =
          static_cast<double>(pred.size()) - static_cast<double>(task.truth.size());
      err += diff * diff;
    }
    if (!tasks.empty()) err /= tasks.size();
    if (err < best_err) {
      best_err = err;
      best_th = th;
    }
  }
  return best_th;
}

std::string report_to_json(const std::vector<EvalReport>& reports, const EvalConfig& cfg) {
  ordered_json j;
  j["k_values"] = cfg.k_values;
  j["seed"] = cfg.seed;
  j["systems"] = ordered_json::array();
  for (const auto& r : reports) {
    ordered_json s;
    s["name"] = r.system;
    s["num_tasks"] = r.num_tasks;
    s["metrics"] = ordered_json::array();
    for (const auto& row : r.rows) {
      ordered_json m;
      m["k"] = row.k;
      m["precision"] = row.precision;
      m["recall"] = row.recall;
      m["f1"] = row.f1;
      m["mse"] = row.mse;
      s["metrics"].push_back(m);
    }
    j["systems"].push_back(s);
  }
  return j.dump(2);
}

std::string report_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "system";
  if (!reports.empty()) {
    for (const auto& row : reports[0].rows) {
      os << "\tP@" << row.k << "\tR@" << row.k << "\tF1@" << row.k << "\tMSE@" << row.k;
    }
  }
  os << "\n";
  os.setf(std::ios::fixed);
  os.precision(4);
  for (const auto& r : reports) {
    os << r.system;
    for (const auto& row : r.rows) {
      os << "\t" << row.precision << "\t" << row.recall << "\t" << row.f1 << "\t"
         << row.mse;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace s2s
