#include "spatialrel/embeddings.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "spatialrel/errors.h"
#include "spatialrel/text.h"

namespace spatialrel {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t dim, EmbeddingKind kind) : dim_(dim), kind_(kind) {
  if (dim == 0) throw ValidationError("embedding dim must be positive");
}

bool EmbeddingTable::insert(const std::string& token, std::vector<double> vector) {
  if (token.empty()) throw ValidationError("empty embedding token");
  for (char c : token) {
    if (is_space(c)) throw ValidationError("embedding token contains whitespace: '" + token + "'");
  }
  if (vector.size() != dim_) {
    throw ValidationError("embedding for '" + token + "' has " + std::to_string(vector.size()) +
                          " components, expected " + std::to_string(dim_));
  }
  for (double x : vector) {
    if (!std::isfinite(x)) throw ValidationError("non-finite component in embedding '" + token + "'");
  }
  auto [it, inserted] = entries_.try_emplace(token, std::move(vector));
  if (inserted) order_.push_back(token);
  return inserted;
}

const std::vector<double>* EmbeddingTable::find(const std::string& token) const {
  auto it = entries_.find(token);
  return it == entries_.end() ? nullptr : &it->second;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dim, EmbeddingKind kind) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file " + path.string());

  std::optional<EmbeddingTable> table;
  EmbeddingLoadReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    ++report.lines;
    const std::size_t width = fields.size() - 1;
    if (!table) {
      const std::size_t dim = expected_dim.value_or(width);
      if (dim == 0) throw ParseError("no vector components at line " + std::to_string(line_no));
      table.emplace(dim, kind);
    }
    if (width != table->dim()) {
      throw ParseError("dim mismatch at line " + std::to_string(line_no) + ": got " +
                       std::to_string(width) + ", expected " + std::to_string(table->dim()));
    }
    std::vector<double> vec(width);
    for (std::size_t k = 0; k < width; ++k) {
      std::string_view f = fields[k + 1];
      auto res = std::from_chars(f.data(), f.data() + f.size(), vec[k]);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(vec[k])) {
        throw ParseError("non-numeric component '" + std::string(f) + "' at line " +
                         std::to_string(line_no));
      }
    }
    if (!table->insert(std::string(fields[0]), std::move(vec))) ++report.duplicates;
  }
  if (!table) throw ParseError("empty embedding file " + path.string());
  table->report_ = report;
  return std::move(*table);
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& token : table.tokens()) {
    out << token;
    for (double x : *table.find(token)) out << ' ' << format_double(x);
    out << '\n';
  }
}

PhraseVector phrase_vector(const EmbeddingTable& table, std::string_view text) {
  PhraseVector result{std::vector<double>(table.dim(), 0.0), true};
  // Summed in sorted token order so the mean is exactly order-invariant.
  auto tokens = tokenize(text);
  std::sort(tokens.begin(), tokens.end());
  std::size_t found = 0;
  for (const auto& tok : tokens) {
    const auto* v = table.find(tok);
    if (v == nullptr) continue;
    for (std::size_t k = 0; k < v->size(); ++k) result.vector[k] += (*v)[k];
    ++found;
  }
  if (found > 0) {
    result.oov = false;
    if (found > 1) {
      for (double& x : result.vector) x /= static_cast<double>(found);
    }
  }
  return result;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ValidationError("cosine_similarity: length mismatch " + std::to_string(u.size()) + " vs " +
                          std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  const double c = dot / (std::sqrt(uu) * std::sqrt(vv));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace spatialrel
