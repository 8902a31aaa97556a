#pragma once

#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace s2s {

struct RecipeRecord {
  std::string id;
  std::set<std::string> ingredients;  // deduplicated, lowercase-trimmed
};

class Vocabulary {
 public:
  // Builds a dense id space with pad id 0 reserved; ingredients ordered by
  // name for determinism. Frequencies are corpus occurrence counts.
  static Vocabulary build(const std::vector<RecipeRecord>& records);

  int size() const { return static_cast<int>(names_.size()); }
  static constexpr int kPadId = 0;

  int id_of(const std::string& name) const;           // throws on unknown
  std::optional<int> try_id(const std::string& name) const;
  const std::string& name_of(int id) const;
  long frequency(int id) const { return freq_[id]; }

  const std::vector<std::string>& names() const { return names_; }

  // Reconstruction from a checkpoint: names[0] must be the pad slot.
  static Vocabulary from_names(std::vector<std::string> names);

  std::vector<std::string> nearest(const std::string& name, int count) const;

 private:
  std::vector<std::string> names_;  // names_[0] is the pad placeholder
  std::vector<long> freq_;
  std::map<std::string, int> index_;
};

struct TrainingExample {
  std::vector<int> input_ids;
  std::optional<int> target_id;  // absent for complete baskets
  int completeness_label = 0;    // 1 iff target_id absent
};

struct Batch {
  std::vector<std::vector<int>> ids;    // B x L, padded with pad id 0
  std::vector<std::vector<char>> mask;  // B x L, 0 on padding
  std::vector<int> targets;             // B (0 where target_mask is 0)
  std::vector<char> target_mask;        // B
  std::vector<int> labels;              // B, completeness
  int max_len = 0;
};

struct LoadReport {
  std::vector<std::pair<int, std::string>> malformed;  // line number + reason
  int total_lines = 0;
};

// One JSON object per line: {"id": <string>, "ingredients": [<string>...]}.
// Throws on unreadable files and when malformed lines exceed 1% of the input.
std::vector<RecipeRecord> load_corpus(const std::string& path,
                                      LoadReport* report = nullptr);

// Iterates to fixpoint: drop ingredients with frequency <= 20, then recipes
// with fewer than `min_size` or more than `max_size` remaining ingredients.
std::vector<RecipeRecord> filter_corpus(std::vector<RecipeRecord> records,
                                        long min_frequency = 20, int min_size = 5,
                                        int max_size = 15);

// One positive example (full set) plus two independent drop passes; each pass
// removes k ~ Uniform{1,2,3} ingredients and emits one negative example per
// dropped ingredient, all sharing the reduced input.
std::vector<TrainingExample> augment_recipe(const std::vector<int>& recipe_ids,
                                            std::mt19937_64& rng);

struct CorpusSplit {
  std::vector<RecipeRecord> train, val, test;
};

// 80/10/10 by recipe, deterministic under seed.
CorpusSplit split_corpus(const std::vector<RecipeRecord>& records, uint64_t seed);

std::vector<Batch> make_batches(std::vector<TrainingExample> examples, int batch_size,
                                std::mt19937_64& rng);

// Disjoint "cuisine template" ingredient pools; each recipe samples 5-10 ids
// from one pool (as complementary pairs of consecutive ids), so cross-pool
// co-occurrence never happens and completions are composition-determined.
std::vector<RecipeRecord> generate_synthetic_corpus(int num_templates,
                                                    int recipes_per_template,
                                                    int vocab_size, uint64_t seed);

std::string normalize_ingredient(const std::string& raw);

// Maps a recipe's ingredient names to vocabulary ids (ingredients missing
// from the vocabulary are skipped).
std::vector<int> recipe_to_ids(const RecipeRecord& r, const Vocabulary& vocab);

void write_corpus(const std::string& path, const std::vector<RecipeRecord>& records);

}  // namespace s2s
