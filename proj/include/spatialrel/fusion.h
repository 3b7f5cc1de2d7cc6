#ifndef SPATIALREL_FUSION_H_
#define SPATIALREL_FUSION_H_

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "spatialrel/embeddings.h"
#include "spatialrel/relation_prior.h"
#include "spatialrel/score_dist.h"
#include "spatialrel/spatial_model.h"

namespace spatialrel {

// Maps prior predictions onto a fixed relation vocabulary. In-vocabulary
// predictions keep their score; an out-of-vocabulary relation u spreads its
// score over every vocabulary relation r in proportion to
// max(0, cos(phrase(r), phrase(u))) and is then dropped. The result is
// normalized, or uniform if nothing landed in the vocabulary.
//
// Vocabulary phrase vectors are computed once, so one projector can serve a
// whole evaluation set.
class PriorProjector {
 public:
  PriorProjector(std::shared_ptr<const RelationVocab> vocab, const EmbeddingTable& word);

  ScoreDist project(const PriorRecord& record) const;
  const std::shared_ptr<const RelationVocab>& vocab() const { return vocab_; }

 private:
  std::shared_ptr<const RelationVocab> vocab_;
  const EmbeddingTable* word_;
  std::vector<std::vector<double>> vocab_phrases_;
};

ScoreDist project_prior(const PriorRecord& record, std::shared_ptr<const RelationVocab> vocab,
                        const EmbeddingTable& word);

// (p_ff + lambda * p_prior) / (1 + lambda). Both inputs must share the
// vocabulary order and be normalized; throws ValidationError otherwise or
// for a negative lambda.
ScoreDist fuse(const ScoreDist& p_ff, const ScoreDist& p_prior, double lambda);

// The unnormalized sum p_ff + lambda * p_prior.
std::vector<double> fuse_raw(const ScoreDist& p_ff, const ScoreDist& p_prior, double lambda);

const std::vector<double>& default_lambda_grid();

struct FusionConfig {
  double lambda = 0.1;
  std::vector<double> lambda_grid = default_lambda_grid();

  // Grid must be non-empty, non-negative, strictly ascending.
  void validate() const;
};

struct SweepResult {
  std::vector<double> grid;
  std::vector<double> dev_accuracy;
  double best_lambda = 0.0;
  double best_accuracy = 0.0;
};

nlohmann::json sweep_to_json(const SweepResult& sweep);

// Accuracy of the fused predictor at each grid value over precomputed
// distributions; the best lambda is the smallest one reaching the maximum.
SweepResult sweep_lambda(std::span<const ScoreDist> p_ff, std::span<const ScoreDist> p_prior,
                         std::span<const std::string> golds, const std::vector<double>& grid);

// Spatial-model and projected prior distributions for every triple of
// `data`, both expressed over `label_space`.
struct FusionInputs {
  std::vector<ScoreDist> spatial;
  std::vector<ScoreDist> prior;
  std::vector<std::string> golds;
};

FusionInputs prepare_fusion(const SpatialModel& model, const PriorProvider& provider, const Dataset& data,
                            const FeatureTables& tables, std::shared_ptr<const RelationVocab> label_space);

// Sweeps lambda on `dev`. Prior projections are computed once per example.
// `label_space` defaults to the model's vocabulary.
SweepResult sweep_lambda(const SpatialModel& model, const PriorProvider& provider, const Dataset& dev,
                         const std::vector<double>& grid, const FeatureTables& tables,
                         std::shared_ptr<const RelationVocab> label_space = nullptr);

}  // namespace spatialrel

#endif  // SPATIALREL_FUSION_H_
