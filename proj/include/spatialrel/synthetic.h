#ifndef SPATIALREL_SYNTHETIC_H_
#define SPATIALREL_SYNTHETIC_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spatialrel/dataset.h"
#include "spatialrel/embeddings.h"

namespace spatialrel {

// How generated triples get their relation.
//   geometric: above / below / left of / right of from the box centers.
//   visual:    the latent cluster of the object's visual vector.
//   mixed:     geometric when the object's cluster is 0, else the visual
//              relation of that cluster.
enum class RelationScheme { kGeometric, kVisual, kMixed };

std::string_view to_string(RelationScheme scheme);
RelationScheme relation_scheme_from_string(std::string_view name);

struct SyntheticConfig {
  std::size_t n = 5000;
  RelationScheme scheme = RelationScheme::kGeometric;
  std::size_t subject_vocab = 24;
  std::size_t object_vocab = 24;
  std::size_t word_dim = 16;
  std::size_t visual_dim = 8;
  std::size_t visual_vocab = 48;
  std::size_t visual_clusters = 4;
  double cluster_spread = 0.35;
  // Fraction of labels reassigned to a different relation, chosen uniformly.
  double noise_rate = 0.0;
  // Probability that an entity's text is drawn from the pool tied to its
  // (pre-noise) relation instead of uniformly. 0 keeps texts independent.
  double text_affinity = 0.0;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  Dataset data;
  EmbeddingTable word;
  EmbeddingTable visual;
};

// Deterministic per seed. Throws ValidationError on an invalid config.
SyntheticData generate_synthetic(const SyntheticConfig& config);

// Geometric labeling rule: the dominant axis of (subject - object) center
// offset and its sign; |dx| == |dy| resolves to the vertical axis, dy == 0
// to "above".
std::string geometric_relation(const BoundingBox& subject, const BoundingBox& object);

const std::vector<std::string>& geometric_relations();
const std::vector<std::string>& visual_relations();

}  // namespace spatialrel

#endif  // SPATIALREL_SYNTHETIC_H_
