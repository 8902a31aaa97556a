#include "s2s/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "s2s/checkpoint.hpp"
#include "s2s/data.hpp"
#include "s2s/eval.hpp"
#include "s2s/model.hpp"
#include "s2s/train.hpp"

namespace s2s::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

uint64_t default_seed() {
  if (const char* env = std::getenv("S2S_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 0;
}

struct FullConfig {
  ModelConfig model;
  TrainConfig train;
  InferenceConfig inference;
};

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

FullConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("config: '" + path + "' is not valid JSON");

  FullConfig cfg;
  reject_unknown(j, {"model", "train", "inference"}, "top level");
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m,
                   {"vocab_size", "d_model", "num_heads", "m_ind", "num_encoder_layers",
                    "embedding_dim_in", "alpha", "max_set_size"},
                   "model");
    if (m.contains("d_model")) cfg.model.d_model = m["d_model"].get<int>();
    if (m.contains("num_heads")) cfg.model.num_heads = m["num_heads"].get<int>();
    if (m.contains("m_ind")) cfg.model.m_ind = m["m_ind"].get<int>();
    if (m.contains("num_encoder_layers"))
      cfg.model.num_encoder_layers = m["num_encoder_layers"].get<int>();
    if (m.contains("embedding_dim_in"))
      cfg.model.embedding_dim_in = m["embedding_dim_in"].get<int>();
    if (m.contains("alpha")) cfg.model.alpha = m["alpha"].get<double>();
    if (m.contains("max_set_size")) cfg.model.max_set_size = m["max_set_size"].get<int>();
    if (m.contains("vocab_size")) cfg.model.vocab_size = m["vocab_size"].get<int>();
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t,
                   {"lr", "batch_size", "epochs", "alpha", "alpha_grid", "seed",
                    "checkpoint_every", "resample_augmentation"},
                   "train");
    if (t.contains("lr")) cfg.train.lr = t["lr"].get<double>();
    if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<int>();
    if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<int>();
    if (t.contains("alpha")) cfg.train.alpha = t["alpha"].get<double>();
    if (t.contains("alpha_grid"))
      cfg.train.alpha_grid = t["alpha_grid"].get<std::vector<double>>();
    if (t.contains("seed")) cfg.train.seed = t["seed"].get<uint64_t>();
    if (t.contains("checkpoint_every"))
      cfg.train.checkpoint_every = t["checkpoint_every"].get<int>();
    if (t.contains("resample_augmentation"))
      cfg.train.resample_augmentation = t["resample_augmentation"].get<bool>();
  }
  if (j.contains("inference")) {
    const auto& i = j["inference"];
    reject_unknown(i, {"stop_threshold", "max_rounds", "exclude_basket_items"},
                   "inference");
    if (i.contains("stop_threshold"))
      cfg.inference.stop_threshold = i["stop_threshold"].get<double>();
    if (i.contains("max_rounds")) cfg.inference.max_rounds = i["max_rounds"].get<int>();
    if (i.contains("exclude_basket_items"))
      cfg.inference.exclude_basket_items = i["exclude_basket_items"].get<bool>();
  }
  return cfg;
}

std::vector<std::vector<int>> recipes_as_ids(const std::vector<RecipeRecord>& records,
                                             const Vocabulary& vocab, int max_size) {
  std::vector<std::vector<int>> out;
  for (const auto& r : records) {
    auto ids = recipe_to_ids(r, vocab);
    if (!ids.empty() && static_cast<int>(ids.size()) <= max_size) out.push_back(ids);
  }
  return out;
}

int cmd_prepare(const std::string& input, const std::string& output, uint64_t seed) {
  LoadReport report;
  std::vector<RecipeRecord> records;
  try {
    records = load_corpus(input, &report);
  } catch (const std::runtime_error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  auto filtered = filter_corpus(std::move(records));
  if (filtered.size() < 10) {
    std::cerr << "prepare: only " << filtered.size()
              << " recipes survive filtering; need at least 10\n";
    return 2;
  }
  auto split = split_corpus(filtered, seed);

  fs::create_directories(output);
  write_corpus(output + "/filtered.jsonl", filtered);
  write_corpus(output + "/train.jsonl", split.train);
  write_corpus(output + "/val.jsonl", split.val);
  write_corpus(output + "/test.jsonl", split.test);

  Vocabulary vocab = Vocabulary::build(filtered);
  std::map<int, int> size_hist;
  for (const auto& r : filtered) ++size_hist[static_cast<int>(r.ingredients.size())];

  ordered_json stats;
  stats["seed"] = seed;
  stats["input_lines"] = report.total_lines;
  stats["malformed_lines"] = report.malformed.size();
  stats["recipes"] = filtered.size();
  stats["vocab_size"] = vocab.size();
  stats["split"] = {{"train", split.train.size()},
                    {"val", split.val.size()},
                    {"test", split.test.size()}};
  ordered_json hist;
  for (const auto& [size, count] : size_hist) hist[std::to_string(size)] = count;
  stats["recipe_size_histogram"] = hist;
  std::ofstream(output + "/stats.json") << stats.dump(2) << "\n";

  std::cout << "prepared " << filtered.size() << " recipes, vocab " << vocab.size()
            << ", splits " << split.train.size() << "/" << split.val.size() << "/"
            << split.test.size() << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_path, bool alpha_sweep, uint64_t seed_flag,
              bool seed_given, const std::string& log_path) {
  FullConfig cfg;
  if (!config_path.empty()) cfg = parse_config_file(config_path);
  if (seed_given) cfg.train.seed = seed_flag;

  auto filtered = load_corpus(data_dir + "/filtered.jsonl");
  auto train_recs = load_corpus(data_dir + "/train.jsonl");
  auto val_recs = load_corpus(data_dir + "/val.jsonl");
  Vocabulary vocab = Vocabulary::build(filtered);

  cfg.model.vocab_size = vocab.size();
  cfg.model.validate();
  cfg.train.validate();

  auto train_ids = recipes_as_ids(train_recs, vocab, cfg.model.max_set_size);
  auto val_ids = recipes_as_ids(val_recs, vocab, cfg.model.max_set_size);

  if (alpha_sweep) {
    auto sweep = tune_alpha(train_ids, val_ids, cfg.model, cfg.train);
    std::cout << "alpha\tF1@3\tMSE@3\n";
    for (const auto& row : sweep.rows) {
      std::cout << row.alpha << "\t" << row.f1_at_3 << "\t" << row.mse_at_3 << "\n";
    }
    std::cout << "best alpha: " << sweep.best_alpha << "\n";
    cfg.model.alpha = sweep.best_alpha;
    cfg.train.alpha = sweep.best_alpha;
  }

  std::mt19937_64 rng(cfg.train.seed);
  S2SRec2Model model(cfg.model, rng);
  TrainStats stats = train(model, train_ids, val_ids, cfg.train);

  std::ostream* log = &std::cout;
  std::ofstream log_file;
  if (!log_path.empty()) {
    log_file.open(log_path);
    log = &log_file;
  }
  for (const auto& e : stats.epochs) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["lr"] = cfg.train.lr;
    j["batch_size"] = cfg.train.batch_size;
    j["epochs"] = cfg.train.epochs;
    j["alpha"] = cfg.train.alpha;
    j["ce"] = e.ce;
    j["bce"] = e.bce;
    j["joint"] = e.joint;
    j["val_joint"] = e.val_joint;
    j["val_top1_accuracy"] = e.val_top1_accuracy;
    j["val_completeness_accuracy"] = e.val_completeness_accuracy;
    j["seconds"] = e.seconds;
    (*log) << j.dump() << "\n";
  }

  save_checkpoint(out_path, cfg.model, vocab, model);
  std::cout << "checkpoint written to " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& checkpoint_path,
             const std::vector<std::string>& systems, const std::vector<int>& k_values,
             uint64_t seed, const std::string& out_path) {
  static const std::vector<std::string> kValid = {
      "s2srec2",  "s2srec2_no_stop", "s2srec2_multilabel",
      "logistic", "meanpool_stop",   "vanilla_nn_stop",
      "oracle"};
  for (const auto& s : systems) {
    if (std::find(kValid.begin(), kValid.end(), s) == kValid.end()) {
      std::ostringstream os;
      os << "eval: unknown system '" << s << "'; valid names:";
      for (const auto& v : kValid) os << " " << v;
      throw std::invalid_argument(os.str());
    }
  }

  auto loaded = load_checkpoint(checkpoint_path);
  auto test_recs = load_corpus(data_dir + "/test.jsonl");
  auto test_ids =
      recipes_as_ids(test_recs, loaded.vocab, loaded.config.max_set_size);

  std::mt19937_64 task_rng(seed ^ 0x7a5c5ULL);
  auto tasks = make_eval_tasks(test_ids, task_rng);

  EvalConfig ecfg;
  ecfg.k_values = k_values;
  ecfg.seed = seed;

  // Trained-on-the-fly systems share the train/val splits.
  std::vector<std::vector<int>> train_ids, val_ids;
  auto needs_training = [&](const std::string& s) {
    return s == "logistic" || s == "meanpool_stop" || s == "vanilla_nn_stop";
  };
  if (std::any_of(systems.begin(), systems.end(), needs_training)) {
    auto train_recs = load_corpus(data_dir + "/train.jsonl");
    auto val_recs = load_corpus(data_dir + "/val.jsonl");
    train_ids = recipes_as_ids(train_recs, loaded.vocab, loaded.config.max_set_size);
    val_ids = recipes_as_ids(val_recs, loaded.vocab, loaded.config.max_set_size);
  }

  class OracleSystem : public System {
   public:
    explicit OracleSystem(const std::vector<EvalTask>& tasks) {
      for (const auto& t : tasks)
        truth_[t.input_ids] = std::vector<int>(t.truth.begin(), t.truth.end());
    }
    std::string name() const override { return "oracle"; }
    std::vector<int> predict_topk(const std::vector<int>& input_ids, int k) override {
      auto it = truth_.find(input_ids);
      if (it == truth_.end()) return {};
      auto out = it->second;
      if (static_cast<int>(out.size()) > k) out.resize(k);
      return out;
    }

   private:
    std::map<std::vector<int>, std::vector<int>> truth_;
  };

  std::vector<EvalReport> reports;
  std::vector<std::unique_ptr<BasketModel>> owned_models;
  for (const auto& name : systems) {
    std::unique_ptr<System> system;
    if (name == "s2srec2") {
      system = make_model_system(*loaded.model, name);
    } else if (name == "s2srec2_no_stop") {
      system = make_no_stop_system(*loaded.model, name);
    } else if (name == "s2srec2_multilabel") {
      std::mt19937_64 vrng(seed ^ 0x3331ULL);
      auto val_tasks = make_eval_tasks(test_ids, vrng);
      const double th = tune_multilabel_threshold(
          *loaded.model, val_tasks, {0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5});
      system = make_multilabel_system(*loaded.model, name, th);
    } else if (name == "oracle") {
      system = std::make_unique<OracleSystem>(tasks);
    } else if (name == "logistic") {
      std::mt19937_64 arng(seed);
      std::vector<TrainingExample> stream;
      for (const auto& r : train_ids) {
        auto ex = augment_recipe(r, arng);
        stream.insert(stream.end(), ex.begin(), ex.end());
      }
      std::vector<TrainingExample> val_stream;
      for (const auto& r : val_ids) {
        auto ex = augment_recipe(r, arng);
        val_stream.insert(val_stream.end(), ex.begin(), ex.end());
      }
      LogisticBaselineConfig lcfg;
      lcfg.seed = seed;
      system = baseline_multilabel_logistic(group_multilabel(stream),
                                            group_multilabel(val_stream),
                                            loaded.config.vocab_size, lcfg);
    } else {
      ModelConfig mcfg = loaded.config;
      mcfg.embedding_dim_in = 0;
      std::mt19937_64 mrng(seed);
      std::unique_ptr<BasketModel> m;
      if (name == "meanpool_stop")
        m = std::make_unique<MeanPoolStopModel>(mcfg, mrng);
      else
        m = std::make_unique<VanillaNNStopModel>(mcfg, mrng);
      TrainConfig tcfg;
      tcfg.seed = seed;
      tcfg.epochs = 10;
      tcfg.batch_size = 128;
      tcfg.lr = 1e-3;
      train(*m, train_ids, val_ids, tcfg);
      system = make_model_system(*m, name);
      owned_models.push_back(std::move(m));
    }
    reports.push_back(evaluate_system(*system, tasks, ecfg));
  }

  const std::string table = report_table(reports);
  std::cout << table;
  if (!out_path.empty()) {
    std::ofstream(out_path) << report_to_json(reports, ecfg) << "\n";
    std::cout << "report written to " << out_path << "\n";
  }
  return 0;
}

int cmd_complete(const std::string& checkpoint_path, const std::string& ingredients,
                 int max_rounds, bool trace) {
  auto loaded = load_checkpoint(checkpoint_path);

  std::vector<int> ids;
  std::vector<std::string> names;
  std::stringstream ss(ingredients);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string name = normalize_ingredient(item);
    if (name.empty()) continue;
    auto id = loaded.vocab.try_id(name);
    if (!id) {
      std::ostringstream os;
      os << "complete: unknown ingredient '" << name << "'; nearest matches:";
      for (const auto& n : loaded.vocab.nearest(name, 5)) os << " " << n;
      throw std::invalid_argument(os.str());
    }
    ids.push_back(*id);
    names.push_back(name);
  }
  if (ids.empty()) throw std::invalid_argument("complete: no ingredients given");

  InferenceConfig icfg;
  icfg.max_rounds = max_rounds;
  icfg.validate();

  ordered_json trace_rounds = ordered_json::array();
  if (trace) {
    std::vector<int> basket = ids;
    std::vector<int> predicted;
    for (int round = 0; round <= icfg.max_rounds; ++round) {
      Tape t;
      ForwardOutput out = loaded.model->forward(t, basket);
      const double p = out.completeness_prob.data()[0];
      std::set<int> excluded(basket.begin(), basket.end());
      excluded.insert(predicted.begin(), predicted.end());
      excluded.insert(Vocabulary::kPadId);
      std::vector<std::pair<double, int>> ranked;
      for (int j = 0; j < loaded.config.vocab_size; ++j) {
        if (!excluded.count(j)) ranked.emplace_back(-out.candidate_logits.data()[j], j);
      }
      std::sort(ranked.begin(), ranked.end());
      ordered_json r;
      r["round"] = round;
      r["completeness_prob"] = p;
      ordered_json top5 = ordered_json::array();
      for (int i = 0; i < 5 && i < static_cast<int>(ranked.size()); ++i)
        top5.push_back(loaded.vocab.name_of(ranked[i].second));
      r["top5"] = top5;
      trace_rounds.push_back(r);
      if (p > icfg.stop_threshold || ranked.empty() ||
          static_cast<int>(basket.size()) >= loaded.config.max_set_size ||
          round == icfg.max_rounds)
        break;
      predicted.push_back(ranked[0].second);
      basket.push_back(ranked[0].second);
    }
  }

  CompletionResult result = complete_basket(*loaded.model, ids, icfg);

  ordered_json j;
  j["input"] = names;
  ordered_json pred = ordered_json::array();
  for (int id : result.predicted_ids) pred.push_back(loaded.vocab.name_of(id));
  j["predicted"] = pred;
  j["completeness_probs"] = result.completeness_probs;
  j["rounds_used"] = result.rounds_used;
  j["terminated_by"] = result.terminated_by;
  if (trace) j["trace"] = trace_rounds;
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"S2SRec2: set-to-set basket completion"};
  app.require_subcommand(1);

  std::string input, output, data_dir, config_path, out_path, checkpoint_path;
  std::string ingredients, systems_arg = "s2srec2", k_arg = "3,5", log_path;
  uint64_t seed = default_seed();
  bool alpha_sweep = false, trace = false;
  int max_rounds = 10;

  auto* prepare = app.add_subcommand("prepare", "Filter a corpus and write splits");
  prepare->add_option("--input", input, "corpus JSONL")->required();
  prepare->add_option("--output", output, "output directory")->required();
  prepare->add_option("--seed", seed, "split seed");

  auto* train_cmd = app.add_subcommand("train", "Train the model");
  train_cmd->add_option("--data", data_dir, "prepared data directory")->required();
  train_cmd->add_option("--config", config_path, "JSON config file");
  train_cmd->add_option("--out", out_path, "checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "training log path (JSONL)");
  auto* seed_opt = train_cmd->add_option("--seed", seed, "training seed");
  train_cmd->add_flag("--alpha-sweep", alpha_sweep, "sweep the joint-loss weight");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate systems on the test split");
  eval_cmd->add_option("--data", data_dir, "prepared data directory")->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  eval_cmd->add_option("--systems", systems_arg, "comma-separated system names");
  eval_cmd->add_option("--k", k_arg, "comma-separated k values");
  eval_cmd->add_option("--seed", seed, "evaluation seed");
  eval_cmd->add_option("--out", out_path, "report JSON path");

  auto* complete_cmd = app.add_subcommand("complete", "Complete a basket");
  complete_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  complete_cmd->add_option("--ingredients", ingredients, "comma-separated names")->required();
  complete_cmd->add_option("--max-rounds", max_rounds, "round cap");
  complete_cmd->add_flag("--trace", trace, "include per-round top-5 candidates");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(input, output, seed);
    if (train_cmd->parsed()) {
      return cmd_train(data_dir, config_path, out_path, alpha_sweep, seed,
                       seed_opt->count() > 0 || std::getenv("S2S_SEED") != nullptr,
                       log_path);
    }
    if (eval_cmd->parsed()) {
      std::vector<std::string> systems;
      std::stringstream ss(systems_arg);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) systems.push_back(tok);
      }
      std::vector<int> ks;
      std::stringstream ks_ss(k_arg);
      while (std::getline(ks_ss, tok, ',')) {
        if (!tok.empty()) ks.push_back(std::stoi(tok));
      }
      return cmd_eval(data_dir, checkpoint_path, systems, ks, seed, out_path);
    }
    if (complete_cmd->parsed())
      return cmd_complete(checkpoint_path, ingredients, max_rounds, trace);
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace s2s::cli
