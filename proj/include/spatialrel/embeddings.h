#ifndef SPATIALREL_EMBEDDINGS_H_
#define SPATIALREL_EMBEDDINGS_H_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace spatialrel {

enum class EmbeddingKind { kWord, kVisual };

struct EmbeddingLoadReport {
  std::size_t lines = 0;       // non-blank lines read
  std::size_t duplicates = 0;  // later occurrences dropped (first wins)
};

// Token -> fixed-width vector. Immutable once loaded; safe for concurrent
// reads.
class EmbeddingTable {
 public:
  EmbeddingTable(std::size_t dim, EmbeddingKind kind);

  std::size_t dim() const { return dim_; }
  EmbeddingKind kind() const { return kind_; }
  std::size_t size() const { return entries_.size(); }
  const EmbeddingLoadReport& load_report() const { return report_; }

  // Returns false (and keeps the existing vector) when the token is already
  // present. Throws ValidationError on a malformed token or vector.
  bool insert(const std::string& token, std::vector<double> vector);

  // nullptr when absent.
  const std::vector<double>* find(const std::string& token) const;

  // Tokens in insertion order.
  const std::vector<std::string>& tokens() const { return order_; }

 private:
  friend EmbeddingTable load_embeddings(const std::filesystem::path&, std::optional<std::size_t>,
                                        EmbeddingKind);

  std::size_t dim_;
  EmbeddingKind kind_;
  std::unordered_map<std::string, std::vector<double>> entries_;
  std::vector<std::string> order_;
  EmbeddingLoadReport report_;
};

// Reads a GloVe-style text file: `token v1 ... vD` per line. The width is
// taken from the first line unless `expected_dim` is given. Throws
// ParseError naming the line on a width mismatch or a bad number, and on an
// empty file.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dim = std::nullopt,
                               EmbeddingKind kind = EmbeddingKind::kWord);

// Writes the table in the same format, shortest round-trip decimal form.
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

struct PhraseVector {
  std::vector<double> vector;
  bool oov = false;  // no token of the phrase was in the table
};

// Mean of the vectors of the in-table tokens of `text` (lowercased,
// whitespace-split). Unknown tokens are skipped; if none is known the
// result is the zero vector with `oov` set.
PhraseVector phrase_vector(const EmbeddingTable& table, std::string_view text);

// dot(u, v) / (|u| |v|), or 0 when either norm is zero. Throws
// ValidationError on a length mismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

}  // namespace spatialrel

#endif  // SPATIALREL_EMBEDDINGS_H_
