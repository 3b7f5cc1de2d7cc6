#ifndef SPATIALREL_SPATIAL_MODEL_H_
#define SPATIALREL_SPATIAL_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "spatialrel/dataset.h"
#include "spatialrel/embeddings.h"
#include "spatialrel/relation_vocab.h"
#include "spatialrel/score_dist.h"

namespace spatialrel {

// The embedding tables a model reads. `visual` is null for the text+position
// model and set for the variant with visual embeddings.
struct FeatureTables {
  const EmbeddingTable* word = nullptr;
  const EmbeddingTable* visual = nullptr;
};

// Layout of one branch input: [word; position; visual?].
struct FeatureSpec {
  std::size_t word_dim = 0;
  std::size_t visual_dim = 0;
  bool with_image = false;
  // false zeroes the four position values (ablation); dimensions unchanged.
  bool use_position = true;

  std::size_t part_dim() const { return word_dim + 4 + (with_image ? visual_dim : 0); }
};

struct FeatureVector {
  std::vector<double> subject_part;
  std::vector<double> object_part;
  bool with_image = false;
};

struct FeatureStats {
  std::size_t word_oov = 0;    // entity texts with no known token
  std::size_t visual_oov = 0;  // vis_keys missing from the visual table
};

// Concatenates phrase vector, (cx, cy, hw, hh) and, when `tables.visual` is
// set, the visual vector of the entity's vis_key (zeros if absent).
FeatureVector build_features(const Triple& triple, const FeatureTables& tables,
                             bool use_position = true, FeatureStats* stats = nullptr);

// Two rectifier branches (subject, object) feeding a softmax head.
struct ModelParams {
  Eigen::MatrixXd subject_weight;  // hidden x in_dim
  Eigen::VectorXd subject_bias;    // hidden
  Eigen::MatrixXd object_weight;   // hidden x in_dim
  Eigen::VectorXd object_bias;     // hidden
  Eigen::MatrixXd head_weight;     // vocab x 2*hidden
  Eigen::VectorXd head_bias;       // vocab

  std::size_t in_dim() const { return static_cast<std::size_t>(subject_weight.cols()); }
  std::size_t hidden() const { return static_cast<std::size_t>(subject_weight.rows()); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(head_weight.rows()); }
  bool all_finite() const;
  // Throws ValidationError unless all six tensors have consistent shapes.
  void check_shapes() const;
};

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)) per matrix, biases zero.
ModelParams init_params(std::size_t in_dim, std::size_t hidden, std::size_t vocab, std::uint64_t seed);

// Softmax probabilities over the head's outputs.
std::vector<double> forward(const ModelParams& params, const FeatureVector& features);

struct LabeledFeatures {
  FeatureVector features;
  std::size_t gold = 0;
};

struct LossAndGrads {
  double loss = 0.0;
  ModelParams grads;
};

// Mean cross-entropy over `batch` and its exact gradient for every tensor.
LossAndGrads loss_and_grads(const ModelParams& params, std::span<const LabeledFeatures> batch);

// Row-stacked features for batched evaluation. `gold` holds kNoGold for
// relations outside the model vocabulary.
struct FeatureMatrix {
  static constexpr std::size_t kNoGold = static_cast<std::size_t>(-1);
  Eigen::MatrixXd subject;
  Eigen::MatrixXd object;
  std::vector<std::size_t> gold;
};

LossAndGrads loss_and_grads(const ModelParams& params, const FeatureMatrix& batch);

// Probabilities, one row per example.
Eigen::MatrixXd forward_batch(const ModelParams& params, const FeatureMatrix& batch);

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  std::size_t hidden = 128;
  bool with_image = false;
  bool use_position = true;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// A trained classifier: parameters plus the vocabulary and feature layout
// they were trained against.
struct SpatialModel {
  ModelParams params;
  std::shared_ptr<const RelationVocab> vocab;
  FeatureSpec spec;
  TrainConfig config;

  ScoreDist predict(const Triple& triple, const FeatureTables& tables) const;
  std::vector<ScoreDist> predict_all(const Dataset& data, const FeatureTables& tables) const;
};

FeatureMatrix build_feature_matrix(const Dataset& data, const FeatureTables& tables,
                                   const FeatureSpec& spec, const RelationVocab& vocab,
                                   FeatureStats* stats = nullptr);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct TrainResult {
  SpatialModel model;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
};

// Mini-batch gradient descent on mean cross-entropy. Keeps the parameters of
// the epoch with the best dev accuracy and stops after `patience` epochs
// without improvement. The output vocabulary is the training relations.
// Throws DivergenceError naming the epoch on a non-finite loss.
TrainResult train(const Dataset& train_data, const Dataset& dev_data, const FeatureTables& tables,
                  const TrainConfig& config);

nlohmann::json history_to_json(const std::vector<EpochStats>& history);

// Checkpoint: dims, config echo, vocabulary and all six tensors as row-major
// nested arrays. Round-trips bit-exactly.
nlohmann::json model_to_json(const SpatialModel& model);
SpatialModel model_from_json(const nlohmann::json& j);
void save_model(const SpatialModel& model, const std::filesystem::path& path);
SpatialModel load_model(const std::filesystem::path& path);

}  // namespace spatialrel

#endif  // SPATIALREL_SPATIAL_MODEL_H_
