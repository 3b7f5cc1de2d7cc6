#ifndef SPATIALREL_DATASET_H_
#define SPATIALREL_DATASET_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spatialrel/relation_vocab.h"

namespace spatialrel {

// Image-normalized box: center (cx, cy) plus half extents, all in [0, 1].
struct BoundingBox {
  double cx = 0.0;
  double cy = 0.0;
  double hw = 0.0;
  double hh = 0.0;
};

struct Entity {
  std::string text;
  BoundingBox box;
  std::string vis_key;  // visual-embedding lookup key; head token of `text` unless given
};

enum class Category { kExplicit, kImplicit };

struct Triple {
  std::string image_id;
  Entity subject;
  std::string relation;  // lowercase, single-spaced
  Entity object;
  std::optional<Category> category;
};

// Ordered triples plus their relation vocabulary in first-appearance order.
class Dataset {
 public:
  Dataset();
  explicit Dataset(std::vector<Triple> triples);

  const std::vector<Triple>& triples() const { return triples_; }
  const Triple& operator[](std::size_t i) const { return triples_[i]; }
  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }

  const RelationVocab& relation_vocab() const { return *vocab_; }
  std::shared_ptr<const RelationVocab> shared_vocab() const { return vocab_; }

  // Triples at `indices`, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<Triple> triples_;
  std::shared_ptr<const RelationVocab> vocab_;
};

// Last token of the normalized text; the default visual key.
std::string head_token(std::string_view text);

// JSONL triple file; throws ParseError naming the line on malformed JSON or
// out-of-range boxes (values within 1e-6 of [0, 1] are clamped).
Dataset load_triples(const std::filesystem::path& path);
Triple parse_triple(const nlohmann::json& j, std::size_t line_no);
nlohmann::json triple_to_json(const Triple& t);
void save_triples(const Dataset& data, const std::filesystem::path& path);

std::set<std::string> load_lexicon(const std::filesystem::path& path);
const std::set<std::string>& default_explicit_lexicon();

struct CategoryPartition {
  Dataset explicit_part;
  Dataset implicit_part;
};

// A triple is explicit iff its relation is in `lexicon`. Order preserved;
// each triple's category field is set accordingly.
CategoryPartition classify_relations(const Dataset& data, const std::set<std::string>& lexicon);

enum class SplitMode { kStandard, kUnseenSubjectRelation, kUnseenObjectRelation, kUnseenRelation };

std::string_view to_string(SplitMode mode);
SplitMode split_mode_from_string(std::string_view name);

struct SplitSpec {
  SplitMode mode = SplitMode::kStandard;
  std::uint64_t seed = 0;
  // Standard: (train, dev, test). Zero-shot: (test key fraction, dev fraction, 0).
  std::array<double, 3> ratios{0.70, 0.15, 0.15};
};

struct SplitBundle {
  Dataset train;
  Dataset dev;
  Dataset test;
  SplitSpec spec;
  // Source indices, ascending.
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> dev_indices;
  std::vector<std::size_t> test_indices;
};

inline constexpr std::array<double, 3> kDefaultRatios{0.70, 0.15, 0.15};

// Seeded permutation sliced into dev/test of round(ratio * n) each (at least
// one), remainder to train. Throws ValidationError for fewer than 3 triples
// or ratios not summing to 1.
SplitBundle standard_split(const Dataset& data, std::array<double, 3> ratios, std::uint64_t seed);

// round(fraction * n) triples (at least 1) sampled without replacement, in
// source order. fraction == 1 returns the input unchanged.
Dataset subsample_fraction(const Dataset& train, double fraction, std::uint64_t seed);

// The key a zero-shot mode holds out: "subject|relation", "object|relation"
// or the relation. Not defined for kStandard.
std::string split_key(const Triple& t, SplitMode mode);

// Holds out round(test_key_fraction * #keys) keys (clamped to [1, #keys-1]);
// every triple with a held-out key goes to test, the rest are split into
// train/dev by `dev_fraction`. Throws ValidationError with fewer than 2 keys.
SplitBundle zero_shot_split(const Dataset& data, SplitMode mode, double test_key_fraction,
                            double dev_fraction, std::uint64_t seed);

// {"mode", "seed", "ratios", "train", "dev", "test"}.
nlohmann::json split_manifest(const SplitBundle& bundle);
SplitBundle apply_manifest(const Dataset& data, const nlohmann::json& manifest);

struct MajorityBaseline {
  std::string relation;
  std::size_t count = 0;
  double accuracy = 0.0;
};

// Most frequent relation, ties to the lexicographically smallest.
MajorityBaseline majority_baseline(const Dataset& data);

}  // namespace spatialrel

#endif  // SPATIALREL_DATASET_H_
