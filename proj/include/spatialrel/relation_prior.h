#ifndef SPATIALREL_RELATION_PRIOR_H_
#define SPATIALREL_RELATION_PRIOR_H_

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spatialrel/dataset.h"
#include "spatialrel/relation_vocab.h"

namespace spatialrel {

inline constexpr std::size_t kDefaultPriorTopK = 20;

struct RelationScore {
  std::string relation;
  double score = 0.0;

  friend bool operator==(const RelationScore&, const RelationScore&) = default;
};

// A language-model prior's ranked relations for one (subject, object) query.
// Scores are non-negative and non-increasing; relations are distinct. They
// may include relations the spatial model never saw.
struct PriorRecord {
  std::string subject;
  std::string object;
  std::vector<RelationScore> predictions;

  friend bool operator==(const PriorRecord&, const PriorRecord&) = default;
};

// Throws ValidationError describing the first violated invariant
// ("non-increasing violated", negative or non-finite score, duplicate
// relation, more than `max_len` predictions).
void validate_prior_record(const PriorRecord& record, std::size_t max_len = static_cast<std::size_t>(-1));

nlohmann::json prior_record_to_json(const PriorRecord& record);

enum class PriorKind { kFile, kCooccurrence, kRemote };

class PriorProvider {
 public:
  virtual ~PriorProvider() = default;
  virtual PriorKind kind() const = 0;
  std::size_t top_k() const { return top_k_; }
  // Subject and object are matched case-insensitively.
  virtual PriorRecord query(const std::string& subject, const std::string& object) const = 0;

 protected:
  explicit PriorProvider(std::size_t top_k) : top_k_(top_k) {}

 private:
  std::size_t top_k_;
};

// Precomputed predictions (e.g. exported from a masked LM). A missing key
// yields an empty record.
class FilePrior final : public PriorProvider {
 public:
  explicit FilePrior(std::vector<PriorRecord> records, std::size_t top_k = kDefaultPriorTopK);

  PriorKind kind() const override { return PriorKind::kFile; }
  PriorRecord query(const std::string& subject, const std::string& object) const override;
  std::size_t size() const { return index_.size(); }

 private:
  std::unordered_map<std::string, PriorRecord> index_;
};

// JSONL prior file. Throws ParseError naming the line on malformed JSON,
// record invariant violations, or a duplicate (subject, object) key.
std::unique_ptr<FilePrior> load_prior_file(const std::filesystem::path& path,
                                           std::size_t top_k = kDefaultPriorTopK);
void save_prior_file(const std::vector<PriorRecord>& records, const std::filesystem::path& path);

// Smoothed co-occurrence model fit on training triples:
//   score(r | s, o) = (c(s,r,o) + a * backoff(r | s, o)) / (c(s,.,o) + a)
// where backoff is the equal-weight mean of a-smoothed P(r|s), P(r|o) and
// P(r) over the training relations.
class CooccurrencePrior final : public PriorProvider {
 public:
  PriorKind kind() const override { return PriorKind::kCooccurrence; }
  PriorRecord query(const std::string& subject, const std::string& object) const override;

  // Unsorted score of every training relation, aligned with relations().
  std::vector<double> scores(const std::string& subject, const std::string& object) const;
  const RelationVocab& relations() const { return vocab_; }
  double alpha() const { return alpha_; }
  // Distinct normalized (subject, object) pairs seen in training, in
  // first-appearance order.
  const std::vector<std::pair<std::string, std::string>>& pairs() const { return pairs_; }

 private:
  friend CooccurrencePrior fit_cooccurrence(const Dataset&, double, std::size_t);
  CooccurrencePrior(std::size_t top_k, double alpha) : PriorProvider(top_k), alpha_(alpha) {}

  double alpha_;
  RelationVocab vocab_;
  double total_ = 0.0;
  std::vector<double> relation_counts_;
  std::unordered_map<std::string, std::vector<double>> subject_counts_;
  std::unordered_map<std::string, std::vector<double>> object_counts_;
  std::unordered_map<std::string, std::vector<double>> pair_counts_;
  std::vector<std::pair<std::string, std::string>> pairs_;
};

CooccurrencePrior fit_cooccurrence(const Dataset& train, double alpha = 0.1,
                                   std::size_t top_k = kDefaultPriorTopK);

// Records for every training (subject, object) pair, for export as a prior file.
std::vector<PriorRecord> export_records(const CooccurrencePrior& prior);

struct RemoteOptions {
  std::size_t max_retries = 3;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::seconds timeout{10};
  std::size_t max_in_flight = 8;
};

// Parses and validates a scoring-service response body. Throws ProviderError
// on any schema violation.
PriorRecord parse_prior_response(const nlohmann::json& body, const std::string& subject,
                                 const std::string& object, std::size_t top_k);

// POST {endpoint}/v1/predictions with {"subject","object","top_k"}.
// Connection failures and 429/5xx responses are retried with exponential
// backoff; throws ProviderError when retries run out or the response breaks
// the record schema.
PriorRecord query_remote(const std::string& endpoint, const std::string& subject,
                         const std::string& object, std::size_t top_k,
                         const RemoteOptions& options = {});

class RemotePrior final : public PriorProvider {
 public:
  RemotePrior(std::string endpoint, std::size_t top_k = kDefaultPriorTopK, RemoteOptions options = {});

  PriorKind kind() const override { return PriorKind::kRemote; }
  PriorRecord query(const std::string& subject, const std::string& object) const override;

 private:
  std::string endpoint_;
  RemoteOptions options_;
  mutable std::counting_semaphore<1024> in_flight_;
};

}  // namespace spatialrel

#endif  // SPATIALREL_RELATION_PRIOR_H_
