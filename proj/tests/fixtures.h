#ifndef SPATIALREL_TESTS_FIXTURES_H_
#define SPATIALREL_TESTS_FIXTURES_H_

#include <string>
#include <vector>

#include "spatialrel/dataset.h"
#include "spatialrel/embeddings.h"
#include "spatialrel/relation_prior.h"
#include "spatialrel/rng.h"

namespace spatialrel::testing {

// Unseen-relation fixture. Every relation has its own subject and object
// nouns, so a (subject, object) pair determines the relation. The prior
// never names a dataset relation: it predicts a synonym whose word vector is
// a small perturbation of the relation's, so its mass can only reach the
// label space through similarity re-scoring.
struct UnseenRelationFixture {
  Dataset data;
  EmbeddingTable word{8, EmbeddingKind::kWord};
  EmbeddingTable visual{4, EmbeddingKind::kVisual};
  std::vector<PriorRecord> prior_records;
};

inline UnseenRelationFixture make_unseen_relation_fixture(std::uint64_t seed = 5) {
  const std::vector<std::pair<std::string, std::string>> relations{
      {"on", "atop"},        {"under", "beneath"}, {"above", "over"},     {"near", "by"},
      {"behind", "after"},   {"inside", "within"}, {"holding", "gripping"}, {"riding", "mounting"}};
  UnseenRelationFixture f;
  Rng rng(seed);
  auto random_vec = [&](std::size_t dim) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    return v;
  };
  std::vector<Triple> triples;
  for (std::size_t r = 0; r < relations.size(); ++r) {
    const auto& [rel, synonym] = relations[r];
    auto rel_vec = random_vec(f.word.dim());
    f.word.insert(rel, rel_vec);
    auto syn_vec = rel_vec;
    for (double& x : syn_vec) x += 0.05 * rng.normal();
    f.word.insert(synonym, syn_vec);
    for (int k = 0; k < 3; ++k) {
      const std::string s = "subj" + std::to_string(r) + "x" + std::to_string(k);
      const std::string o = "obj" + std::to_string(r) + "x" + std::to_string(k);
      f.word.insert(s, random_vec(f.word.dim()));
      f.word.insert(o, random_vec(f.word.dim()));
      f.visual.insert(s, random_vec(f.visual.dim()));
      f.visual.insert(o, random_vec(f.visual.dim()));
      f.prior_records.push_back(PriorRecord{s, o, {{synonym, 0.9}, {"unrelated", 0.1}}});
      for (int i = 0; i < 25; ++i) {
        Triple t;
        t.image_id = std::to_string(triples.size());
        t.subject.text = s;
        t.subject.vis_key = s;
        t.subject.box = {rng.uniform(), rng.uniform(), 0.1, 0.1};
        t.object.text = o;
        t.object.vis_key = o;
        t.object.box = {rng.uniform(), rng.uniform(), 0.1, 0.1};
        t.relation = rel;
        triples.push_back(std::move(t));
      }
    }
  }
  f.word.insert("unrelated", random_vec(f.word.dim()));
  // Interleave relations so file order carries no signal.
  rng.shuffle(triples);
  f.data = Dataset(std::move(triples));
  return f;
}

}  // namespace spatialrel::testing

#endif  // SPATIALREL_TESTS_FIXTURES_H_
