#ifndef SPATIALREL_RELATION_VOCAB_H_
#define SPATIALREL_RELATION_VOCAB_H_

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace spatialrel {

// Ordered list of unique relation names with a reverse index.
class RelationVocab {
 public:
  RelationVocab() = default;
  explicit RelationVocab(const std::vector<std::string>& names) {
    for (const auto& n : names) add(n);
  }

  // Index of `name`, appending it if new.
  std::size_t add(const std::string& name) {
    auto [it, inserted] = index_.try_emplace(name, names_.size());
    if (inserted) names_.push_back(name);
    return it->second;
  }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  const std::string& operator[](std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }

  friend bool operator==(const RelationVocab& a, const RelationVocab& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace spatialrel

#endif  // SPATIALREL_RELATION_VOCAB_H_
