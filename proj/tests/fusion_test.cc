#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <doctest.h>

#include "spatialrel/errors.h"
#include "spatialrel/evaluation.h"
#include "spatialrel/fusion.h"
#include "spatialrel/rng.h"
#include "spatialrel/synthetic.h"
#include "projection_oracle.h"

using namespace spatialrel;

namespace {

std::shared_ptr<const RelationVocab> vocab_of(std::vector<std::string> names) {
  return std::make_shared<RelationVocab>(std::move(names));
}

ScoreDist dist(std::shared_ptr<const RelationVocab> v, std::vector<double> s) {
  return ScoreDist{std::move(v), std::move(s), true};
}

std::vector<double> random_simplex(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double total = 0.0;
  for (double& x : v) total += (x = rng.uniform() + 1e-3);
  for (double& x : v) x /= total;
  return v;
}

}  // namespace

TEST_CASE("projection worked example") {
  EmbeddingTable word(2, EmbeddingKind::kWord);
  word.insert("on", {1.0, 0.0});
  word.insert("atop", {0.8, 0.6});
  word.insert("under", {-0.6, 0.8});
  auto v = vocab_of({"on", "under"});
  PriorRecord rec{"cup", "table", {{"on", 0.6}, {"atop", 0.4}}};
  auto p = project_prior(rec, v, word);
  CHECK(p.normalized);
  CHECK(std::abs(p.scores[0] - 1.0) < 1e-12);
  CHECK(std::abs(p.scores[1] - 0.0) < 1e-12);
}

TEST_CASE("projection pass-through, empty and all-unseen records") {
  EmbeddingTable word(2, EmbeddingKind::kWord);
  word.insert("on", {1.0, 0.0});
  word.insert("under", {0.0, 1.0});
  word.insert("below", {-1.0, 0.0});
  auto v = vocab_of({"on", "under", "near"});
  auto pass = project_prior({"a", "b", {{"under", 0.3}, {"on", 0.1}}}, v, word);
  CHECK(pass.scores[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(pass.scores[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(pass.scores[2] == 0.0);

  auto empty = project_prior({"a", "b", {}}, v, word);
  for (double x : empty.scores) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // "below" is anti-aligned with "on" and orthogonal to "under": nothing lands.
  auto unseen = project_prior({"a", "b", {{"below", 0.9}, {"zzz", 0.1}}}, v, word);
  for (double x : unseen.scores) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("projection preserves in-vocabulary score ratios") {
  Rng rng(2);
  EmbeddingTable word(3, EmbeddingKind::kWord);
  std::vector<std::string> names;
  for (int i = 0; i < 10; ++i) {
    names.push_back("rel" + std::to_string(i));
    word.insert(names.back(), {rng.normal(), rng.normal(), rng.normal()});
  }
  auto v = vocab_of(names);
  for (int trial = 0; trial < 100; ++trial) {
    PriorRecord rec{"a", "b", {}};
    double score = 1.0;
    std::vector<std::size_t> perm(names.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const std::size_t len = 2 + rng.below(8);
    for (std::size_t i = 0; i < len; ++i) {
      score *= rng.uniform(0.3, 1.0);
      rec.predictions.push_back({names[perm[i]], score});
    }
    auto p = project_prior(rec, v, word);
    const auto& first = rec.predictions[0];
    for (const auto& pr : rec.predictions) {
      CHECK(p.scores[*v->find(pr.relation)] / p.scores[*v->find(first.relation)] ==
            doctest::Approx(pr.score / first.score).epsilon(1e-12));
    }
  }
}

TEST_CASE("projection matches a brute-force oracle on fuzzed records") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t dim = 1 + rng.below(6);
    EmbeddingTable word(dim, EmbeddingKind::kWord);
    std::vector<std::string> tokens;
    for (int i = 0; i < 30; ++i) {
      tokens.push_back("t" + std::to_string(i));
      std::vector<double> vec(dim);
      for (double& x : vec) x = rng.normal();
      if (rng.below(10) == 0) std::fill(vec.begin(), vec.end(), 0.0);
      word.insert(tokens.back(), vec);
    }
    auto phrase_name = [&] {
      std::string s = rng.below(8) == 0 ? "oov" + std::to_string(rng.below(5)) : tokens[rng.below(tokens.size())];
      if (rng.below(3) == 0) s += " " + tokens[rng.below(tokens.size())];
      return s;
    };
    std::vector<std::string> names;
    const std::size_t vs = 1 + rng.below(50);
    while (names.size() < vs) {
      auto n = phrase_name();
      if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    }
    auto v = vocab_of(names);
    PriorRecord rec{"a", "b", {}};
    const std::size_t np = rng.below(21);
    double score = rng.uniform(0.0, 2.0);
    std::vector<std::string> used;
    while (rec.predictions.size() < np) {
      auto n = rng.below(2) == 0 ? names[rng.below(names.size())] : phrase_name();
      if (std::find(used.begin(), used.end(), n) != used.end()) continue;
      used.push_back(n);
      if (rng.below(3) != 0) score *= rng.uniform();
      rec.predictions.push_back({n, score});
    }
    auto got = project_prior(rec, v, word);
    auto want = spatialrel::testing::brute_projection(rec, names, word);
    double total = 0.0;
    for (std::size_t r = 0; r < names.size(); ++r) {
      CHECK(std::abs(got.scores[r] - want[r]) < 1e-9);
      CHECK(got.scores[r] >= 0.0);
      total += got.scores[r];
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("fuse examples") {
  auto v = vocab_of({"a", "b"});
  auto ff = dist(v, {0.5, 0.5});
  auto prior = dist(v, {1.0, 0.0});
  auto f = fuse(ff, prior, 1.0);
  CHECK(f.scores[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(f.scores[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(fuse(ff, prior, 0.0).scores == ff.scores);
  CHECK(fuse_raw(ff, prior, 1.0) == std::vector<double>{1.5, 0.5});

  CHECK_THROWS_AS(fuse(ff, dist(vocab_of({"b", "a"}), {1.0, 0.0}), 1.0), ValidationError);
  CHECK_THROWS_AS(fuse(ff, prior, -0.5), ValidationError);
  CHECK_THROWS_AS(fuse(ff, ScoreDist{v, {2.0, 1.0}, false}, 0.5), ValidationError);
  // Equal vocabularies behind different pointers are accepted.
  CHECK_NOTHROW(fuse(ff, dist(vocab_of({"a", "b"}), {0.0, 1.0}), 0.5));
}

TEST_CASE("fuse properties on random instances") {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.below(10);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("r" + std::to_string(i));
    auto v = vocab_of(names);
    auto ff = dist(v, random_simplex(rng, n));
    auto prior = dist(v, random_simplex(rng, n));
    const double lambda = rng.uniform(0.0, 3.0);
    auto fused = fuse(ff, prior, lambda);
    auto raw = fuse_raw(ff, prior, lambda);
    CHECK(std::abs(std::accumulate(fused.scores.begin(), fused.scores.end(), 0.0) - 1.0) < 1e-9);
    CHECK(fused.argmax() == ScoreDist{v, raw, false}.argmax());
    CHECK(fuse(ff, prior, 0.0).argmax() == ff.argmax());
    const std::size_t i = rng.below(n), j = rng.below(n);
    auto diff = [&](double l) {
      auto r = fuse_raw(ff, prior, l);
      return r[i] - r[j];
    };
    CHECK(std::abs(diff(0.5) - 0.5 * (diff(0.0) + diff(1.0))) < 1e-12);
  }
}

TEST_CASE("prior takes over above the threshold lambda") {
  Rng rng(21);
  const std::vector<double> grid{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0, 1000.0};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(8);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("r" + std::to_string(i));
    auto v = vocab_of(names);
    auto ff = dist(v, random_simplex(rng, n));
    auto prior = dist(v, random_simplex(rng, n));
    const std::size_t star = prior.argmax();
    double threshold = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == star) continue;
      threshold = std::max(threshold, (ff.scores[r] - ff.scores[star]) /
                                          std::max(1e-12, prior.scores[star] - prior.scores[r]));
    }
    for (double lambda : grid) {
      if (lambda > threshold) CHECK(fuse(ff, prior, lambda).argmax() == star);
    }
  }
}

TEST_CASE("lambda grid validation") {
  FusionConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.lambda_grid == std::vector<double>{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0});
  c.lambda_grid = {0.1, 0.1};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.lambda_grid = {0.5, 0.1};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.lambda_grid = {-0.1};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.lambda_grid = {};
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("sweep over precomputed distributions") {
  Rng rng(5);
  const std::size_t n = 4;
  auto v = vocab_of({"r0", "r1", "r2", "r3"});
  std::vector<ScoreDist> ff, prior;
  std::vector<std::string> golds;
  for (int i = 0; i < 200; ++i) {
    ff.push_back(dist(v, random_simplex(rng, n)));
    const std::size_t g = rng.below(n);
    std::vector<double> onehot(n, 0.0);
    onehot[g] = 1.0;
    prior.push_back(dist(v, onehot));
    golds.push_back((*v)[g]);
  }
  auto grid = default_lambda_grid();
  auto sweep = sweep_lambda(ff, prior, golds, grid);
  REQUIRE(sweep.dev_accuracy.size() == grid.size());
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(sweep.dev_accuracy[i] >= sweep.dev_accuracy[i - 1]);
  CHECK(sweep.best_accuracy == *std::max_element(sweep.dev_accuracy.begin(), sweep.dev_accuracy.end()));
  const auto first_best =
      std::find(sweep.dev_accuracy.begin(), sweep.dev_accuracy.end(), sweep.best_accuracy) - sweep.dev_accuracy.begin();
  CHECK(sweep.best_lambda == grid[static_cast<std::size_t>(first_best)]);

  auto zero = sweep_lambda(ff, prior, golds, {0.0});
  CHECK(zero.best_lambda == 0.0);
  CHECK(zero.best_accuracy == accuracy(ff, golds));

  auto again = sweep_lambda(ff, prior, golds, grid);
  CHECK(again.dev_accuracy == sweep.dev_accuracy);

  auto j = sweep_to_json(sweep);
  CHECK(j["grid"].size() == grid.size());
  CHECK(j["best_lambda"] == sweep.best_lambda);
  CHECK_THROWS_AS(sweep_lambda(ff, prior, golds, {}), ValidationError);
}

TEST_CASE("embed_into re-expresses a distribution over a larger vocabulary") {
  auto small = vocab_of({"b", "a"});
  auto big = vocab_of({"a", "b", "c"});
  auto e = embed_into(dist(small, {0.3, 0.7}), big);
  CHECK(e.scores == std::vector<double>{0.7, 0.3, 0.0});
  CHECK(e.normalized);
  auto dropped = embed_into(dist(big, {0.2, 0.3, 0.5}), small);
  CHECK(dropped.scores == std::vector<double>{0.3, 0.2});
  CHECK_FALSE(dropped.normalized);
}

TEST_CASE("model-level sweep") {
  SyntheticConfig c;
  c.n = 600;
  c.word_dim = 8;
  c.text_affinity = 0.8;
  auto s = generate_synthetic(c);
  auto split = standard_split(s.data, kDefaultRatios, 3);
  TrainConfig tc;
  tc.hidden = 8;
  tc.max_epochs = 3;
  FeatureTables tables{&s.word, nullptr};
  auto model = train(split.train, split.dev, tables, tc).model;
  auto prior = fit_cooccurrence(split.train);

  auto zero = sweep_lambda(model, prior, split.dev, {0.0}, tables);
  CHECK(zero.best_accuracy == accuracy(model.predict_all(split.dev, tables), golds_of(split.dev)));

  auto a = sweep_lambda(model, prior, split.dev, default_lambda_grid(), tables);
  auto b = sweep_lambda(model, prior, split.dev, default_lambda_grid(), tables);
  CHECK(a.dev_accuracy == b.dev_accuracy);

  auto wide = s.data.shared_vocab();
  auto in = prepare_fusion(model, prior, split.dev, tables, wide);
  REQUIRE(in.spatial.size() == split.dev.size());
  for (std::size_t i = 0; i < in.spatial.size(); ++i) {
    CHECK(in.spatial[i].vocab == wide);
    CHECK(in.prior[i].vocab == wide);
    CHECK(std::abs(std::accumulate(in.prior[i].scores.begin(), in.prior[i].scores.end(), 0.0) - 1.0) < 1e-9);
  }
}
