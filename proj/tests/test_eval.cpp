#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "s2s/eval.hpp"

using namespace s2s;

namespace {

// Brute-force reference for precision/recall/F1 at k, written independently
// of the library implementation.
PRF reference_prf(std::vector<int> predicted, const std::set<int>& truth, int k) {
  if (static_cast<int>(predicted.size()) > k) predicted.resize(k);
  int hits = 0;
  for (int p : predicted)
    if (truth.count(p)) ++hits;
  PRF out;
  out.precision = predicted.empty() ? 0.0 : double(hits) / predicted.size();
  out.recall = double(hits) / truth.size();
  out.f1 = (out.precision + out.recall) > 0
               ? 2 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

class FixedSystem : public System {
 public:
  explicit FixedSystem(std::vector<int> out) : out_(std::move(out)) {}
  std::string name() const override { return "fixed"; }
  std::vector<int> predict_topk(const std::vector<int>&, int k) override {
    std::vector<int> r = out_;
    if (static_cast<int>(r.size()) > k) r.resize(k);
    return r;
  }

 private:
  std::vector<int> out_;
};

class OracleLikeSystem : public System {
 public:
  explicit OracleLikeSystem(std::map<std::vector<int>, std::set<int>> answers)
      : answers_(std::move(answers)) {}
  std::string name() const override { return "oracle"; }
  std::vector<int> predict_topk(const std::vector<int>& in, int k) override {
    std::vector<int> key = in;
    std::sort(key.begin(), key.end());
    const auto& truth = answers_.at(key);
    std::vector<int> r(truth.begin(), truth.end());
    if (static_cast<int>(r.size()) > k) r.resize(k);
    return r;
  }

 private:
  std::map<std::vector<int>, std::set<int>> answers_;
};

}  // namespace

TEST_CASE("metrics_at_k worked example: P=[a,b,c], G={a,d}, k=3") {
  // a=1 b=2 c=3 d=4
  PRF m = metrics_at_k({1, 2, 3}, {1, 4}, 3);
  CHECK(m.precision == doctest::Approx(1.0 / 3.0));
  CHECK(m.recall == doctest::Approx(0.5));
  CHECK(m.f1 == doctest::Approx(0.4));
}

TEST_CASE("metrics_at_k truncation and edge cases") {
  // Only the first k predictions count.
  PRF m = metrics_at_k({9, 1, 2}, {1, 2}, 1);
  CHECK(m.precision == 0.0);
  CHECK(m.recall == 0.0);
  CHECK(m.f1 == 0.0);

  m = metrics_at_k({1, 2, 9}, {1, 2}, 2);
  CHECK(m.precision == doctest::Approx(1.0));
  CHECK(m.recall == doctest::Approx(1.0));
  CHECK(m.f1 == doctest::Approx(1.0));

  // Empty prediction list: precision defined as 0.
  m = metrics_at_k({}, {1}, 3);
  CHECK(m.precision == 0.0);
  CHECK(m.recall == 0.0);
  CHECK(m.f1 == 0.0);

  CHECK_THROWS_AS(metrics_at_k({1}, {}, 3), std::invalid_argument);
  CHECK_THROWS_AS(metrics_at_k({1}, {1}, 0), std::invalid_argument);
}

TEST_CASE("metrics_at_k agrees with a brute-force oracle on random triples") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> id(1, 12);
  std::uniform_int_distribution<int> len(0, 6);
  std::uniform_int_distribution<int> glen(1, 5);
  std::uniform_int_distribution<int> kk(1, 6);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<int> pred;
    std::set<int> used;
    int n = len(rng);
    while (static_cast<int>(pred.size()) < n) {
      int v = id(rng);
      if (used.insert(v).second) pred.push_back(v);
    }
    std::set<int> truth;
    int g = glen(rng);
    while (static_cast<int>(truth.size()) < g) truth.insert(id(rng));
    int k = kk(rng);

    PRF got = metrics_at_k(pred, truth, k);
    PRF want = reference_prf(pred, truth, k);
    CHECK(got.precision == doctest::Approx(want.precision).epsilon(1e-12));
    CHECK(got.recall == doctest::Approx(want.recall).epsilon(1e-12));
    CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-12));
  }
}

TEST_CASE("mse_at_k caps both sizes at k") {
  // |P|=5 capped to 3, |G|=1 -> (3-1)^2 = 4
  CHECK(mse_at_k({{1, 2, 3, 4, 5}}, {{9}}, 3) == doctest::Approx(4.0));
  // |P|=0 vs |G|=4 capped to 3 -> 9; averaged with (2-2)^2=0 -> 4.5
  CHECK(mse_at_k({{}, {1, 2}}, {{1, 2, 3, 4}, {7, 8}}, 3) == doctest::Approx(4.5));
  // Equal capped sizes -> 0
  CHECK(mse_at_k({{1, 2, 3, 4}}, {{5, 6, 7, 8, 9}}, 3) == doctest::Approx(0.0));
  // One-element lists: |P|=2, |G|=1, k=5 -> 1
  CHECK(mse_at_k({{1, 2}}, {{3}}, 5) == doctest::Approx(1.0));

  CHECK_THROWS_AS(mse_at_k({}, {}, 3), std::invalid_argument);
  CHECK_THROWS_AS(mse_at_k({{1}}, {{1}, {2}}, 3), std::invalid_argument);
}

TEST_CASE("make_eval_tasks drops 1-3 items and keeps input + truth a partition") {
  std::vector<std::vector<int>> recipes;
  for (int i = 0; i < 40; ++i) {
    std::vector<int> r;
    for (int j = 0; j < 6; ++j) r.push_back(1 + ((i * 7 + j * 3) % 50));
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    if (r.size() >= 5) recipes.push_back(r);
  }
  std::mt19937_64 rng(3);
  auto tasks = make_eval_tasks(recipes, rng);
  CHECK(tasks.size() == recipes.size());
  for (size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    CHECK(t.truth.size() >= 1);
    CHECK(t.truth.size() <= 3);
    CHECK(t.input_ids.size() + t.truth.size() == recipes[i].size());
    for (int id : t.input_ids) CHECK(t.truth.count(id) == 0);
    std::set<int> all_ids(t.input_ids.begin(), t.input_ids.end());
    for (int id : t.truth) all_ids.insert(id);
    CHECK(all_ids == std::set<int>(recipes[i].begin(), recipes[i].end()));
  }

  std::mt19937_64 rng2(3);
  auto tasks2 = make_eval_tasks(recipes, rng2);
  for (size_t i = 0; i < tasks.size(); ++i) {
    CHECK(tasks2[i].input_ids == tasks[i].input_ids);
    CHECK(tasks2[i].truth == tasks[i].truth);
  }
}

TEST_CASE("evaluate_system aggregates per-k rows over tasks") {
  std::vector<EvalTask> tasks;
  tasks.push_back({{10, 11}, {1, 4}});
  tasks.push_back({{12, 13}, {2}});
  FixedSystem sys({1, 2, 3});
  EvalConfig cfg;
  cfg.k_values = {1, 3};
  EvalReport rep = evaluate_system(sys, tasks, cfg);
  CHECK(rep.system == "fixed");
  CHECK(rep.num_tasks == 2);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].k == 1);
  // k=1: task1 picks [1] -> P=1,R=0.5; task2 picks [1] -> P=0,R=0.
  CHECK(rep.rows[0].precision == doctest::Approx(0.5));
  CHECK(rep.rows[0].recall == doctest::Approx(0.25));
  // k=3: task1 P=1/3, R=1/2, F1=0.4; task2 P=1/3, R=1, F1=0.5.
  CHECK(rep.rows[1].k == 3);
  CHECK(rep.rows[1].precision == doctest::Approx(1.0 / 3.0));
  CHECK(rep.rows[1].f1 == doctest::Approx(0.45));
  // MSE k=3: (3-2)^2 and (3-1)^2 -> 2.5
  CHECK(rep.rows[1].mse == doctest::Approx(2.5));
}

TEST_CASE("an oracle system scores perfect F1 and zero MSE") {
  std::vector<std::vector<int>> recipes;
  for (int i = 0; i < 25; ++i) {
    std::vector<int> r;
    for (int j = 0; j < 7; ++j) r.push_back(1 + ((i * 11 + j * 5) % 60));
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    if (r.size() >= 5) recipes.push_back(r);
  }
  std::mt19937_64 rng(8);
  auto tasks = make_eval_tasks(recipes, rng);
  std::map<std::vector<int>, std::set<int>> answers;
  for (const auto& t : tasks) {
    std::vector<int> key = t.input_ids;
    std::sort(key.begin(), key.end());
    answers[key] = t.truth;
  }
  OracleLikeSystem oracle(answers);
  EvalConfig cfg;
  cfg.k_values = {3};
  EvalReport rep = evaluate_system(oracle, tasks, cfg);
  CHECK(rep.rows[0].f1 == doctest::Approx(1.0));
  CHECK(rep.rows[0].mse == doctest::Approx(0.0));
}

TEST_CASE("group_multilabel merges examples that share a reduced input") {
  std::vector<TrainingExample> ex;
  TrainingExample pos;
  pos.input_ids = {1, 2, 3};
  pos.completeness_label = 1;
  ex.push_back(pos);
  TrainingExample n1;
  n1.input_ids = {1, 2};
  n1.target_id = 3;
  ex.push_back(n1);
  TrainingExample n2 = n1;
  n2.target_id = 4;
  ex.push_back(n2);
  TrainingExample n3;
  n3.input_ids = {2, 3};
  n3.target_id = 1;
  ex.push_back(n3);

  auto samples = group_multilabel(ex);
  // Complete baskets survive as all-negative samples.
  REQUIRE(samples.size() == 3);
  CHECK(samples[0].input_ids == std::vector<int>{1, 2, 3});
  CHECK(samples[0].positive_labels.empty());
  CHECK(samples[1].input_ids == std::vector<int>{1, 2});
  CHECK(samples[1].positive_labels == std::set<int>{3, 4});
  CHECK(samples[2].input_ids == std::vector<int>{2, 3});
  CHECK(samples[2].positive_labels == std::set<int>{1});
}

TEST_CASE("logistic baseline learns a separable toy problem") {
  // Pool A = {1..5}, pool B = {6..10}. Inputs from a pool predict the held-out
  // members of the same pool.
  std::vector<MultiLabelSample> train;
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    int base = (rep % 2 == 0) ? 1 : 6;
    std::vector<int> pool;
    for (int i = 0; i < 5; ++i) pool.push_back(base + i);
    std::shuffle(pool.begin(), pool.end(), rng);
    MultiLabelSample s;
    s.input_ids = {pool[0], pool[1], pool[2]};
    s.positive_labels = {pool[3], pool[4]};
    train.push_back(s);
  }
  std::vector<MultiLabelSample> val(train.begin(), train.begin() + 40);

  LogisticBaselineConfig cfg;
  cfg.seed = 1;
  auto sys = baseline_multilabel_logistic(train, val, 11, cfg);

  int correct = 0, total = 0;
  for (int i = 0; i < 20; ++i) {
    const auto& s = train[i];
    auto pred = sys->predict_topk(s.input_ids, 2);
    for (int p : pred) {
      ++total;
      if (s.positive_labels.count(p)) ++correct;
    }
  }
  REQUIRE(total > 0);
  CHECK(double(correct) / total > 0.8);
}

TEST_CASE("no-stop ablation returns exactly k predictions") {
  ModelConfig cfg;
  cfg.vocab_size = 25;
  cfg.d_model = 8;
  cfg.num_heads = 2;
  cfg.m_ind = 3;
  cfg.num_encoder_layers = 1;
  std::mt19937_64 rng(6);
  S2SRec2Model model(cfg, rng);
  auto sys = make_no_stop_system(model, "no_stop");
  for (int k : {1, 3, 5}) {
    auto pred = sys->predict_topk({2, 7, 11}, k);
    CHECK(static_cast<int>(pred.size()) == k);
    std::set<int> seen(pred.begin(), pred.end());
    CHECK(static_cast<int>(seen.size()) == k);
    CHECK(seen.count(0) == 0);
  }
}

TEST_CASE("model-backed systems are permutation-invariant in the input basket") {
  ModelConfig cfg;
  cfg.vocab_size = 25;
  cfg.d_model = 8;
  cfg.num_heads = 2;
  cfg.m_ind = 3;
  cfg.num_encoder_layers = 1;
  std::mt19937_64 rng(7);
  S2SRec2Model model(cfg, rng);

  auto full = make_model_system(model, "full");
  auto multilabel = make_multilabel_system(model, "ml", 0.05);

  std::vector<int> in = {3, 9, 14, 20};
  std::vector<int> shuffled = {14, 3, 20, 9};
  CHECK(full->predict_topk(in, 5) == full->predict_topk(shuffled, 5));
  CHECK(multilabel->predict_topk(in, 5) == multilabel->predict_topk(shuffled, 5));
}

TEST_CASE("mean-pool and vanilla ablation models expose the common contract") {
  ModelConfig cfg;
  cfg.vocab_size = 20;
  cfg.d_model = 8;
  cfg.num_heads = 2;
  cfg.m_ind = 3;
  cfg.num_encoder_layers = 1;
  std::mt19937_64 rng(9);
  MeanPoolStopModel mp(cfg, rng);
  VanillaNNStopModel nn(cfg, rng);

  for (BasketModel* m : {static_cast<BasketModel*>(&mp), static_cast<BasketModel*>(&nn)}) {
    Tape t;
    ForwardOutput out = m->forward(t, {2, 5, 8});
    CHECK(out.candidate_logits.rows() == 1);
    CHECK(out.candidate_logits.cols() == 20);
    CHECK(out.completeness_prob.data()[0] > 0.0);
    CHECK(out.completeness_prob.data()[0] < 1.0);
    CHECK(!m->parameters().empty());

    // Mean pooling is order-independent.
    Tape t2;
    ForwardOutput out2 = m->forward(t2, {8, 2, 5});
    for (int j = 0; j < 20; ++j)
      CHECK(out2.candidate_logits.at(0, j) ==
            doctest::Approx(out.candidate_logits.at(0, j)).epsilon(1e-12));
  }
}

TEST_CASE("report serialization covers every system and k") {
  std::vector<EvalTask> tasks = {{{1, 2}, {3}}};
  FixedSystem sys({3});
  EvalConfig cfg;
  cfg.k_values = {1, 3};
  std::vector<EvalReport> reports = {evaluate_system(sys, tasks, cfg)};
  std::string json = report_to_json(reports, cfg);
  CHECK(json.find("\"fixed\"") != std::string::npos);
  CHECK(json.find("precision") != std::string::npos);
  std::string table = report_table(reports);
  CHECK(table.find("fixed") != std::string::npos);
  CHECK(table.find("F1@3") != std::string::npos);
}
