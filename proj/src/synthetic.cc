#include "spatialrel/synthetic.h"

#include <cmath>
#include <cstdio>

#include "spatialrel/errors.h"
#include "spatialrel/rng.h"
#include "spatialrel/text.h"

namespace spatialrel {

namespace {

const std::vector<std::string> kSubjectNouns = {
    "man",   "woman", "kid",   "dog",    "cat",   "boy",    "girl",   "lady",
    "bird",  "horse", "child", "player", "skier", "person", "cow",    "sheep",
    "zebra", "bear",  "giraffe", "surfer", "rider", "chef", "guy",  "baby"};

const std::vector<std::string> kObjectNouns = {
    "table", "chair",  "bed",      "kite",  "bike",   "car",     "tree",  "elephant",
    "surfboard", "bench", "fence", "wall",  "shelf",  "plate",   "boat",  "truck",
    "pole",  "sign",   "window",   "door",  "lamp",   "rock",    "field", "street"};

std::vector<std::string> make_words(const std::vector<std::string>& pool, std::size_t count,
                                    const char* fallback_prefix) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < count; ++i) {
    if (i < pool.size()) {
      words.push_back(pool[i]);
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s%03zu", fallback_prefix, i);
      words.emplace_back(buf);
    }
  }
  return words;
}

std::vector<double> gaussian(Rng& rng, std::size_t dim, double scale) {
  std::vector<double> v(dim);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

BoundingBox random_box(Rng& rng) {
  BoundingBox b;
  b.cx = rng.uniform();
  b.cy = rng.uniform();
  b.hw = rng.uniform(0.02, 0.25);
  b.hh = rng.uniform(0.02, 0.25);
  return b;
}

// Draws from the slice of `words` tied to relation `rel` with probability
// `affinity`, uniformly otherwise.
const std::string& pick_text(Rng& rng, const std::vector<std::string>& words, std::size_t rel,
                             std::size_t n_rel, double affinity) {
  if (affinity > 0.0 && rng.uniform() < affinity) {
    std::vector<std::size_t> slice;
    for (std::size_t i = rel % n_rel; i < words.size(); i += n_rel) slice.push_back(i);
    if (!slice.empty()) return words[slice[rng.below(slice.size())]];
  }
  return words[rng.below(words.size())];
}

void validate(const SyntheticConfig& c) {
  auto fail = [](const std::string& m) { throw ValidationError("synthetic config: " + m); };
  if (c.n < 10) fail("n must be at least 10");
  if (c.subject_vocab == 0 || c.object_vocab == 0) fail("vocab sizes must be positive");
  if (c.word_dim == 0 || c.visual_dim == 0) fail("embedding dims must be positive");
  if (c.visual_clusters < 2 || c.visual_clusters > visual_relations().size()) {
    fail("visual_clusters must be in [2, " + std::to_string(visual_relations().size()) + "]");
  }
  if (c.visual_vocab < c.visual_clusters) fail("visual_vocab must be at least visual_clusters");
  if (!(c.noise_rate >= 0.0 && c.noise_rate < 1.0)) fail("noise_rate must be in [0,1)");
  if (!(c.text_affinity >= 0.0 && c.text_affinity <= 1.0)) fail("text_affinity must be in [0,1]");
  if (!(c.cluster_spread >= 0.0) || !std::isfinite(c.cluster_spread)) fail("cluster_spread must be >= 0");
}

}  // namespace

std::string_view to_string(RelationScheme scheme) {
  switch (scheme) {
    case RelationScheme::kGeometric:
      return "geometric";
    case RelationScheme::kVisual:
      return "visual";
    case RelationScheme::kMixed:
      return "mixed";
  }
  return "geometric";
}

RelationScheme relation_scheme_from_string(std::string_view name) {
  for (auto s : {RelationScheme::kGeometric, RelationScheme::kVisual, RelationScheme::kMixed}) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown relation scheme '" + std::string(name) + "'");
}

const std::vector<std::string>& geometric_relations() {
  static const std::vector<std::string> kRelations = {"above", "below", "left of", "right of"};
  return kRelations;
}

const std::vector<std::string>& visual_relations() {
  static const std::vector<std::string> kRelations = {"riding",   "holding", "carrying", "wearing",
                                                      "eating",   "watching", "pulling", "sitting on"};
  return kRelations;
}

std::string geometric_relation(const BoundingBox& subject, const BoundingBox& object) {
  const double dx = subject.cx - object.cx;
  const double dy = subject.cy - object.cy;
  // Image y grows downward: a smaller subject cy means the subject is above.
  if (std::abs(dy) >= std::abs(dx)) return dy <= 0.0 ? "above" : "below";
  return dx < 0.0 ? "left of" : "right of";
}

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  validate(config);
  Rng rng(config.seed);

  const auto subjects = make_words(kSubjectNouns, config.subject_vocab, "subject");
  const auto objects = make_words(kObjectNouns, config.object_vocab, "object");

  std::vector<std::string> relations;
  const auto& geo = geometric_relations();
  const auto& vis = visual_relations();
  switch (config.scheme) {
    case RelationScheme::kGeometric:
      relations = geo;
      break;
    case RelationScheme::kVisual:
      relations.assign(vis.begin(), vis.begin() + config.visual_clusters);
      break;
    case RelationScheme::kMixed:
      relations = geo;
      relations.insert(relations.end(), vis.begin(), vis.begin() + (config.visual_clusters - 1));
      break;
  }

  // Word table: entity nouns, then relation tokens.
  EmbeddingTable word(config.word_dim, EmbeddingKind::kWord);
  const double word_scale = 1.0 / std::sqrt(static_cast<double>(config.word_dim));
  for (const auto* list : {&subjects, &objects}) {
    for (const auto& w : *list) {
      if (!word.find(w)) word.insert(w, gaussian(rng, config.word_dim, word_scale));
    }
  }
  for (const auto& rel : relations) {
    for (const auto& tok : tokenize(rel)) {
      if (!word.find(tok)) word.insert(tok, gaussian(rng, config.word_dim, word_scale));
    }
  }

  // Visual table: token i belongs to cluster i % clusters.
  EmbeddingTable visual(config.visual_dim, EmbeddingKind::kVisual);
  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < config.visual_clusters; ++c) {
    centers.push_back(gaussian(rng, config.visual_dim, 1.0));
  }
  std::vector<std::string> vis_tokens;
  for (std::size_t i = 0; i < config.visual_vocab; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "vis%03zu", i);
    auto v = gaussian(rng, config.visual_dim, config.cluster_spread);
    const auto& center = centers[i % config.visual_clusters];
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += center[k];
    visual.insert(buf, std::move(v));
    vis_tokens.emplace_back(buf);
  }

  std::vector<Triple> triples;
  triples.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    Triple t;
    char id[32];
    std::snprintf(id, sizeof(id), "syn%06zu", i);
    t.image_id = id;
    t.subject.box = random_box(rng);
    t.object.box = random_box(rng);
    t.subject.vis_key = vis_tokens[rng.below(vis_tokens.size())];
    const std::size_t obj_vis = rng.below(vis_tokens.size());
    t.object.vis_key = vis_tokens[obj_vis];
    const std::size_t cluster = obj_vis % config.visual_clusters;

    std::string rel;
    switch (config.scheme) {
      case RelationScheme::kGeometric:
        rel = geometric_relation(t.subject.box, t.object.box);
        break;
      case RelationScheme::kVisual:
        rel = vis[cluster];
        break;
      case RelationScheme::kMixed:
        rel = cluster == 0 ? geometric_relation(t.subject.box, t.object.box) : vis[cluster - 1];
        break;
    }
    std::size_t rel_index = 0;
    while (relations[rel_index] != rel) ++rel_index;
    t.subject.text = pick_text(rng, subjects, rel_index, relations.size(), config.text_affinity);
    t.object.text = pick_text(rng, objects, rel_index, relations.size(), config.text_affinity);
    t.relation = rel;
    triples.push_back(std::move(t));
  }

  const std::size_t n_noisy =
      static_cast<std::size_t>(round_half_up(config.noise_rate * static_cast<double>(config.n)));
  if (n_noisy > 0) {
    std::vector<std::size_t> idx(config.n);
    for (std::size_t i = 0; i < config.n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < n_noisy; ++i) std::swap(idx[i], idx[i + rng.below(config.n - i)]);
    for (std::size_t i = 0; i < n_noisy; ++i) {
      Triple& t = triples[idx[i]];
      std::size_t current = 0;
      while (relations[current] != t.relation) ++current;
      std::size_t r = rng.below(relations.size() - 1);
      if (r >= current) ++r;
      t.relation = relations[r];
    }
  }

  const auto& lexicon = default_explicit_lexicon();
  for (auto& t : triples) {
    t.category = lexicon.count(t.relation) ? Category::kExplicit : Category::kImplicit;
  }
  return SyntheticData{Dataset(std::move(triples)), std::move(word), std::move(visual)};
}

}  // namespace spatialrel
