#include "spatialrel/fusion.h"

#include <algorithm>
#include <cmath>

#include "spatialrel/errors.h"
#include "spatialrel/evaluation.h"

namespace spatialrel {

using nlohmann::json;

ScoreDist embed_into(const ScoreDist& dist, std::shared_ptr<const RelationVocab> target) {
  ScoreDist out{target, std::vector<double>(target->size(), 0.0), dist.normalized};
  if (dist.vocab == target) {
    out.scores = dist.scores;
    return out;
  }
  double kept = 0.0, total = 0.0;
  for (std::size_t i = 0; i < dist.scores.size(); ++i) {
    total += dist.scores[i];
    if (auto j = target->find((*dist.vocab)[i])) {
      out.scores[*j] += dist.scores[i];
      kept += dist.scores[i];
    }
  }
  // Mass dropped with missing relations leaves the result unnormalized.
  out.normalized = dist.normalized && kept == total;
  return out;
}

PriorProjector::PriorProjector(std::shared_ptr<const RelationVocab> vocab, const EmbeddingTable& word)
    : vocab_(std::move(vocab)), word_(&word) {
  if (!vocab_ || vocab_->empty()) throw ValidationError("projection vocabulary is empty");
  vocab_phrases_.reserve(vocab_->size());
  for (const auto& rel : vocab_->names()) vocab_phrases_.push_back(phrase_vector(word, rel).vector);
}

ScoreDist PriorProjector::project(const PriorRecord& record) const {
  const std::size_t v = vocab_->size();
  std::vector<double> scores(v, 0.0);
  for (const auto& pred : record.predictions) {
    if (auto idx = vocab_->find(pred.relation)) {
      scores[*idx] += pred.score;
      continue;
    }
    if (pred.score == 0.0) continue;
    const PhraseVector unseen = phrase_vector(*word_, pred.relation);
    if (unseen.oov) continue;
    for (std::size_t r = 0; r < v; ++r) {
      const double sim = cosine_similarity(vocab_phrases_[r], unseen.vector);
      if (sim > 0.0) scores[r] += sim * pred.score;
    }
  }
  double total = 0.0;
  for (double s : scores) total += s;
  if (total > 0.0) {
    for (double& s : scores) s /= total;
  } else {
    std::fill(scores.begin(), scores.end(), 1.0 / static_cast<double>(v));
  }
  return ScoreDist{vocab_, std::move(scores), true};
}

ScoreDist project_prior(const PriorRecord& record, std::shared_ptr<const RelationVocab> vocab,
                        const EmbeddingTable& word) {
  return PriorProjector(std::move(vocab), word).project(record);
}

std::vector<double> fuse_raw(const ScoreDist& p_ff, const ScoreDist& p_prior, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be a finite value >= 0");
  if (!same_vocab(p_ff, p_prior) || p_ff.size() != p_prior.size()) {
    throw ValidationError("fuse: distributions are over different vocabularies");
  }
  std::vector<double> raw(p_ff.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = p_ff.scores[i] + lambda * p_prior.scores[i];
  return raw;
}

ScoreDist fuse(const ScoreDist& p_ff, const ScoreDist& p_prior, double lambda) {
  if (!p_ff.normalized || !p_prior.normalized) throw ValidationError("fuse: inputs must be normalized");
  std::vector<double> raw = fuse_raw(p_ff, p_prior, lambda);
  const double z = 1.0 + lambda;
  for (double& x : raw) x /= z;
  return ScoreDist{p_ff.vocab, std::move(raw), true};
}

const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> kGrid = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  return kGrid;
}

void FusionConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (lambda_grid.empty()) throw ValidationError("lambda grid is empty");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (!(lambda_grid[i] >= 0.0) || !std::isfinite(lambda_grid[i])) {
      throw ValidationError("lambda grid values must be >= 0");
    }
    if (i > 0 && !(lambda_grid[i] > lambda_grid[i - 1])) {
      throw ValidationError("lambda grid must be strictly ascending");
    }
  }
}

json sweep_to_json(const SweepResult& sweep) {
  return json{{"grid", sweep.grid}, {"dev_accuracy", sweep.dev_accuracy}, {"best_lambda", sweep.best_lambda}};
}

SweepResult sweep_lambda(std::span<const ScoreDist> p_ff, std::span<const ScoreDist> p_prior,
                         std::span<const std::string> golds, const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("lambda grid is empty");
  if (p_ff.size() != p_prior.size() || p_ff.size() != golds.size()) {
    throw ValidationError("sweep_lambda: input lengths differ");
  }
  SweepResult out;
  out.grid = grid;
  std::vector<ScoreDist> fused(p_ff.size());
  for (double lambda : grid) {
    for (std::size_t i = 0; i < p_ff.size(); ++i) fused[i] = fuse(p_ff[i], p_prior[i], lambda);
    out.dev_accuracy.push_back(fused.empty() ? 0.0 : accuracy(fused, golds));
  }
  // Smallest lambda among those reaching the maximum.
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (out.dev_accuracy[i] > out.dev_accuracy[best] ||
        (out.dev_accuracy[i] == out.dev_accuracy[best] && grid[i] < grid[best])) {
      best = i;
    }
  }
  out.best_lambda = grid[best];
  out.best_accuracy = out.dev_accuracy[best];
  return out;
}

FusionInputs prepare_fusion(const SpatialModel& model, const PriorProvider& provider, const Dataset& data,
                            const FeatureTables& tables, std::shared_ptr<const RelationVocab> label_space) {
  if (!label_space) label_space = model.vocab;
  if (tables.word == nullptr) throw ValidationError("fusion needs a word table");
  PriorProjector projector(label_space, *tables.word);
  FusionInputs in;
  in.spatial = model.predict_all(data, tables);
  for (auto& d : in.spatial) d = embed_into(d, label_space);
  in.prior.reserve(data.size());
  in.golds.reserve(data.size());
  for (const auto& t : data.triples()) {
    in.prior.push_back(projector.project(provider.query(t.subject.text, t.object.text)));
    in.golds.push_back(t.relation);
  }
  return in;
}

SweepResult sweep_lambda(const SpatialModel& model, const PriorProvider& provider, const Dataset& dev,
                         const std::vector<double>& grid, const FeatureTables& tables,
                         std::shared_ptr<const RelationVocab> label_space) {
  FusionInputs in = prepare_fusion(model, provider, dev, tables, std::move(label_space));
  return sweep_lambda(in.spatial, in.prior, in.golds, grid);
}

}  // namespace spatialrel
