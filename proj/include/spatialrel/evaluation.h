#ifndef SPATIALREL_EVALUATION_H_
#define SPATIALREL_EVALUATION_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spatialrel/dataset.h"
#include "spatialrel/fusion.h"
#include "spatialrel/relation_prior.h"
#include "spatialrel/score_dist.h"
#include "spatialrel/spatial_model.h"

namespace spatialrel {

// Fraction of examples whose argmax relation (ties to the lowest index)
// equals the gold. A gold outside the prediction vocabulary is a miss.
double accuracy(std::span<const ScoreDist> predictions, std::span<const std::string> golds);

// Indices of the k highest scores, ties broken by lowest index.
std::vector<std::size_t> top_k_indices(const ScoreDist& dist, std::size_t k);

// Fraction of examples whose gold is among the top k relations.
double topk_accuracy(std::span<const ScoreDist> predictions, std::span<const std::string> golds,
                     std::size_t k);

std::vector<std::string> golds_of(const Dataset& data);

// Models that can fill a report cell.
//   prior:      the configured external provider (file or remote), alone
//   cooc:       co-occurrence prior fit on the cell's training data, alone
//   ff / ffi:   spatial model without / with visual embeddings
//   fused:      ffi fused with the external provider
//   fused-cooc: ffi fused with the co-occurrence prior
// Without a visual table the fused models use ff instead of ffi.
enum class ModelKind { kPrior, kCooc, kFF, kFFI, kFused, kFusedCooc };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);
std::vector<ModelKind> parse_model_list(std::string_view csv);

struct ReportCell {
  std::string setting;
  std::string model;
  double fraction = 1.0;
  std::optional<double> lambda;
  std::size_t n_test = 0;
  double accuracy = 0.0;
  double topk = 0.0;
  std::size_t k = 5;
  std::optional<std::string> error;

  friend bool operator==(const ReportCell&, const ReportCell&) = default;
};

struct ExperimentReport {
  std::vector<ReportCell> cells;
  nlohmann::json metadata = nlohmann::json::object();

  friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

nlohmann::json report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);
// Columns: setting,model,fraction,lambda,n_test,accuracy,topk,k
std::string report_to_csv(const ExperimentReport& report);

// 64-bit FNV-1a, used for data fingerprints and config hashes.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::string dataset_fingerprint(const Dataset& data);

struct MatrixConfig {
  std::string setting = "all";
  std::vector<double> fractions{0.01, 0.1, 0.5, 0.75, 1.0};
  std::vector<ModelKind> models{ModelKind::kFF, ModelKind::kFFI, ModelKind::kFused};
  std::array<double, 3> ratios = kDefaultRatios;
  std::uint64_t split_seed = 7;
  std::uint64_t subsample_seed = 11;
  TrainConfig train;  // with_image is set per model
  FusionConfig fusion;
  double cooc_alpha = 0.1;
  std::size_t prior_top_k = kDefaultPriorTopK;
  std::size_t k = 5;
  std::size_t jobs = 1;

  nlohmann::json to_json() const;
};

// One standard split; for each fraction, subsample train, fit the requested
// models, pick lambda on dev for fused models and score the fixed test
// split. Errors abort only the affected cells. `prior` may be null when no
// requested model needs it.
ExperimentReport run_matrix(const Dataset& data, const FeatureTables& tables, const PriorProvider* prior,
                            const MatrixConfig& config);

struct GeneralizationConfig {
  std::string setting = "all";
  std::vector<SplitMode> modes{SplitMode::kUnseenSubjectRelation, SplitMode::kUnseenObjectRelation,
                               SplitMode::kUnseenRelation};
  std::vector<ModelKind> models{ModelKind::kPrior, ModelKind::kFFI, ModelKind::kFused};
  double test_key_fraction = 0.15;
  double dev_fraction = 0.15;
  std::uint64_t seed = 7;
  TrainConfig train;
  FusionConfig fusion;
  double cooc_alpha = 0.1;
  std::size_t prior_top_k = kDefaultPriorTopK;
  std::size_t k = 5;
  std::size_t jobs = 1;

  nlohmann::json to_json() const;
};

// One zero-shot split per mode. The label space is every relation of
// `data`; spatial models output only their training relations, so a
// held-out relation can only surface through the projected prior.
ExperimentReport run_generalization(const Dataset& data, const FeatureTables& tables,
                                    const PriorProvider* prior, const GeneralizationConfig& config);

}  // namespace spatialrel

#endif  // SPATIALREL_EVALUATION_H_
