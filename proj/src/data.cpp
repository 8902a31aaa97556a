#include "s2s/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace s2s {

using nlohmann::json;

std::string normalize_ingredient(const std::string& raw) {
  size_t b = 0, e = raw.size();
  while (b < e && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(raw[e - 1]))) --e;
  std::string out = raw.substr(b, e - b);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

Vocabulary Vocabulary::build(const std::vector<RecipeRecord>& records) {
  std::map<std::string, long> counts;
  for (const auto& r : records)
    for (const auto& ing : r.ingredients) ++counts[ing];

  Vocabulary v;
  v.names_.push_back("<pad>");
  v.freq_.push_back(0);
  for (const auto& [name, count] : counts) {
    v.index_[name] = static_cast<int>(v.names_.size());
    v.names_.push_back(name);
    v.freq_.push_back(count);
  }
  return v;
}

Vocabulary Vocabulary::from_names(std::vector<std::string> names) {
  if (names.empty()) throw std::invalid_argument("Vocabulary: empty name list");
  Vocabulary v;
  v.names_ = std::move(names);
  v.freq_.assign(v.names_.size(), 0);
  for (size_t i = 1; i < v.names_.size(); ++i) v.index_[v.names_[i]] = static_cast<int>(i);
  return v;
}

int Vocabulary::id_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("Vocabulary: unknown ingredient '" + name + "'");
  return it->second;
}

std::optional<int> Vocabulary::try_id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::name_of(int id) const {
  if (id < 0 || id >= size())
    throw std::invalid_argument("Vocabulary: id " + std::to_string(id) + " out of range");
  return names_[id];
}

namespace {

// Edit distance for "did you mean" suggestions on unknown ingredient names.
int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::vector<std::string> Vocabulary::nearest(const std::string& name, int count) const {
  std::vector<std::pair<int, std::string>> scored;
  for (size_t i = 1; i < names_.size(); ++i)
    scored.emplace_back(edit_distance(name, names_[i]), names_[i]);
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (int i = 0; i < count && i < static_cast<int>(scored.size()); ++i)
    out.push_back(scored[i].second);
  return out;
}

std::vector<RecipeRecord> load_corpus(const std::string& path, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_corpus: cannot open '" + path + "'");

  std::vector<RecipeRecord> records;
  LoadReport local;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++local.total_lines;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      local.malformed.emplace_back(line_no, "not a JSON object");
      continue;
    }
    if (!j.contains("id") || !j["id"].is_string()) {
      local.malformed.emplace_back(line_no, "missing string field 'id'");
      continue;
    }
    if (!j.contains("ingredients") || !j["ingredients"].is_array()) {
      local.malformed.emplace_back(line_no, "missing array field 'ingredients'");
      continue;
    }
    RecipeRecord r;
    r.id = j["id"].get<std::string>();
    bool ok = true;
    for (const auto& ing : j["ingredients"]) {
      if (!ing.is_string()) {
        ok = false;
        break;
      }
      const std::string name = normalize_ingredient(ing.get<std::string>());
      if (!name.empty()) r.ingredients.insert(name);
    }
    if (!ok) {
      local.malformed.emplace_back(line_no, "non-string ingredient");
      continue;
    }
    if (r.ingredients.empty()) {
      local.malformed.emplace_back(line_no, "empty ingredient list");
      continue;
    }
    records.push_back(std::move(r));
  }
  if (report) *report = local;
  if (local.total_lines > 0 &&
      local.malformed.size() * 100 > static_cast<size_t>(local.total_lines)) {
    std::string msg = "load_corpus: " + std::to_string(local.malformed.size()) +
                      " malformed lines (>1%) in '" + path + "':";
    for (size_t i = 0; i < local.malformed.size() && i < 10; ++i) {
      msg += "\n  line " + std::to_string(local.malformed[i].first) + ": " +
             local.malformed[i].second;
    }
    throw std::runtime_error(msg);
  }
  return records;
}

void write_corpus(const std::string& path, const std::vector<RecipeRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_corpus: cannot open '" + path + "'");
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["ingredients"] = std::vector<std::string>(r.ingredients.begin(), r.ingredients.end());
    out << j.dump() << "\n";
  }
}

std::vector<RecipeRecord> filter_corpus(std::vector<RecipeRecord> records,
                                        long min_frequency, int min_size, int max_size) {
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string, long> freq;
    for (const auto& r : records)
      for (const auto& ing : r.ingredients) ++freq[ing];

    for (auto& r : records) {
      for (auto it = r.ingredients.begin(); it != r.ingredients.end();) {
        if (freq[*it] <= min_frequency) {
          it = r.ingredients.erase(it);
          changed = true;
        } else {
          ++it;
        }
      }
    }
    const size_t before = records.size();
    std::erase_if(records, [&](const RecipeRecord& r) {
      const int n = static_cast<int>(r.ingredients.size());
      return n < min_size || n > max_size;
    });
    if (records.size() != before) changed = true;
  }
  return records;
}

std::vector<TrainingExample> augment_recipe(const std::vector<int>& recipe_ids,
                                            std::mt19937_64& rng) {
  std::vector<TrainingExample> out;
  TrainingExample positive;
  positive.input_ids = recipe_ids;
  positive.completeness_label = 1;
  out.push_back(positive);

  const int n = static_cast<int>(recipe_ids.size());
  for (int pass = 0; pass < 2; ++pass) {
    std::uniform_int_distribution<int> kdist(1, 3);
    int k = std::min(kdist(rng), n - 1);  // keep at least one ingredient
    if (k < 1) continue;
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::set<int> dropped_pos(idx.begin(), idx.begin() + k);

    std::vector<int> reduced;
    std::vector<int> dropped;
    for (int i = 0; i < n; ++i) {
      if (dropped_pos.count(i))
        dropped.push_back(recipe_ids[i]);
      else
        reduced.push_back(recipe_ids[i]);
    }
    for (int target : dropped) {
      TrainingExample ex;
      ex.input_ids = reduced;
      ex.target_id = target;
      ex.completeness_label = 0;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

CorpusSplit split_corpus(const std::vector<RecipeRecord>& records, uint64_t seed) {
  if (records.size() < 10)
    throw std::invalid_argument("split_corpus: need at least 10 recipes, got " +
                                std::to_string(records.size()));
  std::vector<size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  const size_t n = records.size();
  const size_t n_train = (n * 8) / 10;
  const size_t n_val = n / 10;
  CorpusSplit s;
  for (size_t i = 0; i < n; ++i) {
    if (i < n_train)
      s.train.push_back(records[idx[i]]);
    else if (i < n_train + n_val)
      s.val.push_back(records[idx[i]]);
    else
      s.test.push_back(records[idx[i]]);
  }
  return s;
}

std::vector<Batch> make_batches(std::vector<TrainingExample> examples, int batch_size,
                                std::mt19937_64& rng) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::shuffle(examples.begin(), examples.end(), rng);

  std::vector<Batch> batches;
  for (size_t start = 0; start < examples.size(); start += batch_size) {
    const size_t end = std::min(examples.size(), start + batch_size);
    Batch b;
    int L = 0;
    for (size_t i = start; i < end; ++i)
      L = std::max(L, static_cast<int>(examples[i].input_ids.size()));
    b.max_len = L;
    for (size_t i = start; i < end; ++i) {
      const auto& ex = examples[i];
      std::vector<int> row(L, Vocabulary::kPadId);
      std::vector<char> m(L, 0);
      for (size_t j = 0; j < ex.input_ids.size(); ++j) {
        row[j] = ex.input_ids[j];
        m[j] = 1;
      }
      b.ids.push_back(std::move(row));
      b.mask.push_back(std::move(m));
      b.targets.push_back(ex.target_id.value_or(0));
      b.target_mask.push_back(ex.target_id.has_value() ? 1 : 0);
      b.labels.push_back(ex.completeness_label);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<RecipeRecord> generate_synthetic_corpus(int num_templates,
                                                    int recipes_per_template,
                                                    int vocab_size, uint64_t seed) {
  if (num_templates < 1 || recipes_per_template < 1)
    throw std::invalid_argument("generate_synthetic_corpus: counts must be >= 1");
  const int pool_size = vocab_size / num_templates;
  if (pool_size < 10)
    throw std::invalid_argument("generate_synthetic_corpus: vocab_size " +
                                std::to_string(vocab_size) + " too small for " +
                                std::to_string(num_templates) + " templates");

  std::mt19937_64 rng(seed);
  std::vector<RecipeRecord> records;
  for (int tpl = 0; tpl < num_templates; ++tpl) {
    // Within a pool, consecutive ids form complementary pairs and recipes
    // take whole pairs (3 to 5 of them). Which ingredients a basket is still
    // missing, and whether it is complete, is then readable from its
    // composition alone: an ingredient whose partner is present is missing.
    std::vector<int> pairs(pool_size / 2);
    std::iota(pairs.begin(), pairs.end(), 0);
    std::uniform_int_distribution<int> pair_count(3, std::min(5, pool_size / 2));
    for (int r = 0; r < recipes_per_template; ++r) {
      const int n = pair_count(rng);
      std::shuffle(pairs.begin(), pairs.end(), rng);
      RecipeRecord rec;
      rec.id = "t" + std::to_string(tpl) + "_r" + std::to_string(r);
      for (int i = 0; i < n; ++i) {
        rec.ingredients.insert("ing" + std::to_string(tpl * pool_size + 2 * pairs[i]));
        rec.ingredients.insert("ing" + std::to_string(tpl * pool_size + 2 * pairs[i] + 1));
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<int> recipe_to_ids(const RecipeRecord& r, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& ing : r.ingredients) {
    if (auto id = vocab.try_id(ing)) ids.push_back(*id);
  }
  return ids;
}

}  // namespace s2s
