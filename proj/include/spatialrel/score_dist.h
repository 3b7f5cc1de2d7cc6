#ifndef SPATIALREL_SCORE_DIST_H_
#define SPATIALREL_SCORE_DIST_H_

#include <cstddef>
#include <memory>
#include <vector>

#include "spatialrel/relation_vocab.h"

namespace spatialrel {

// Scores over an ordered relation vocabulary. The vocabulary is shared, so
// copies are cheap and "same vocabulary" checks can short-circuit on the
// pointer.
struct ScoreDist {
  std::shared_ptr<const RelationVocab> vocab;
  std::vector<double> scores;
  bool normalized = false;

  std::size_t size() const { return scores.size(); }

  // Index of the highest score; ties go to the lowest index.
  std::size_t argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
      if (scores[i] > scores[best]) best = i;
    }
    return best;
  }
};

inline bool same_vocab(const ScoreDist& a, const ScoreDist& b) {
  return a.vocab == b.vocab || (a.vocab && b.vocab && *a.vocab == *b.vocab);
}

// Re-expresses `dist` over `target`, giving zero to relations `dist` lacks.
// Relations of `dist` missing from `target` are dropped.
ScoreDist embed_into(const ScoreDist& dist, std::shared_ptr<const RelationVocab> target);

}  // namespace spatialrel

#endif  // SPATIALREL_SCORE_DIST_H_
