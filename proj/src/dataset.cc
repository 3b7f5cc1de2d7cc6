#include "spatialrel/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "spatialrel/errors.h"
#include "spatialrel/rng.h"
#include "spatialrel/text.h"

namespace spatialrel {

using nlohmann::json;

namespace {

std::shared_ptr<const RelationVocab> build_vocab(const std::vector<Triple>& triples) {
  auto vocab = std::make_shared<RelationVocab>();
  for (const auto& t : triples) vocab->add(t.relation);
  return vocab;
}

std::string at_line(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

double box_value(const json& arr, std::size_t k, const std::string& field, std::size_t line_no) {
  static constexpr const char* kNames[] = {"cx", "cy", "hw", "hh"};
  const json& v = arr[k];
  if (!v.is_number()) {
    throw ParseError(at_line(line_no) + field + "." + kNames[k] + " is not a number");
  }
  double x = v.get<double>();
  if (!std::isfinite(x)) throw ParseError(at_line(line_no) + field + "." + kNames[k] + " not finite");
  constexpr double kTol = 1e-6;
  if (x < -kTol || x > 1.0 + kTol) {
    throw ParseError(at_line(line_no) + field + "." + kNames[k] + " = " + v.dump() +
                     " out of [0,1]");
  }
  return std::clamp(x, 0.0, 1.0);
}

Entity parse_entity(const json& j, const std::string& field, std::size_t line_no) {
  if (!j.is_object()) throw ParseError(at_line(line_no) + field + " must be an object");
  Entity e;
  auto text = j.find("text");
  if (text == j.end() || !text->is_string()) {
    throw ParseError(at_line(line_no) + field + ".text missing or not a string");
  }
  e.text = text->get<std::string>();
  if (normalize_text(e.text).empty()) throw ParseError(at_line(line_no) + field + ".text is empty");
  auto box = j.find("box");
  if (box == j.end() || !box->is_array() || box->size() != 4) {
    throw ParseError(at_line(line_no) + field + ".box must be [cx,cy,hw,hh]");
  }
  e.box = {box_value(*box, 0, field + ".box", line_no), box_value(*box, 1, field + ".box", line_no),
           box_value(*box, 2, field + ".box", line_no), box_value(*box, 3, field + ".box", line_no)};
  auto vis = j.find("vis_key");
  if (vis != j.end() && !vis->is_null()) {
    if (!vis->is_string() || vis->get<std::string>().empty()) {
      throw ParseError(at_line(line_no) + field + ".vis_key must be a non-empty string");
    }
    e.vis_key = vis->get<std::string>();
  } else {
    e.vis_key = head_token(e.text);
  }
  return e;
}

json entity_to_json(const Entity& e) {
  json j{{"text", e.text}, {"box", {e.box.cx, e.box.cy, e.box.hw, e.box.hh}}};
  if (!e.vis_key.empty()) j["vis_key"] = e.vis_key;
  return j;
}

void check_ratios(const std::array<double, 3>& r) {
  for (double x : r) {
    if (!(x > 0.0) || x >= 1.0) throw ValidationError("split ratios must be in (0,1)");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

SplitBundle assemble(const Dataset& data, SplitSpec spec, std::vector<std::size_t> train,
                     std::vector<std::size_t> dev, std::vector<std::size_t> test) {
  std::sort(train.begin(), train.end());
  std::sort(dev.begin(), dev.end());
  std::sort(test.begin(), test.end());
  SplitBundle b;
  b.train = data.subset(train);
  b.dev = data.subset(dev);
  b.test = data.subset(test);
  b.spec = spec;
  b.train_indices = std::move(train);
  b.dev_indices = std::move(dev);
  b.test_indices = std::move(test);
  return b;
}

}  // namespace

Dataset::Dataset() : vocab_(std::make_shared<RelationVocab>()) {}

Dataset::Dataset(std::vector<Triple> triples)
    : triples_(std::move(triples)), vocab_(build_vocab(triples_)) {}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<Triple> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(triples_.at(i));
  return Dataset(std::move(out));
}

std::string head_token(std::string_view text) {
  auto tokens = tokenize(text);
  return tokens.empty() ? std::string() : tokens.back();
}

Triple parse_triple(const json& j, std::size_t line_no) {
  if (!j.is_object()) throw ParseError(at_line(line_no) + "expected a JSON object");
  Triple t;
  if (auto id = j.find("image_id"); id != j.end()) {
    if (id->is_string()) {
      t.image_id = id->get<std::string>();
    } else if (id->is_number_integer()) {
      t.image_id = std::to_string(id->get<long long>());
    } else {
      throw ParseError(at_line(line_no) + "image_id must be a string");
    }
  }
  if (!j.contains("subject")) throw ParseError(at_line(line_no) + "missing subject");
  if (!j.contains("object")) throw ParseError(at_line(line_no) + "missing object");
  t.subject = parse_entity(j.at("subject"), "subject", line_no);
  t.object = parse_entity(j.at("object"), "object", line_no);
  auto rel = j.find("relation");
  if (rel == j.end() || !rel->is_string()) {
    throw ParseError(at_line(line_no) + "relation missing or not a string");
  }
  t.relation = normalize_text(rel->get<std::string>());
  if (t.relation.empty()) throw ParseError(at_line(line_no) + "relation is empty");
  if (auto cat = j.find("category"); cat != j.end() && !cat->is_null()) {
    const std::string c = cat->is_string() ? cat->get<std::string>() : std::string();
    if (c == "explicit") {
      t.category = Category::kExplicit;
    } else if (c == "implicit") {
      t.category = Category::kImplicit;
    } else {
      throw ParseError(at_line(line_no) + "category must be \"explicit\" or \"implicit\"");
    }
  }
  return t;
}

json triple_to_json(const Triple& t) {
  json j{{"image_id", t.image_id},
         {"subject", entity_to_json(t.subject)},
         {"relation", t.relation},
         {"object", entity_to_json(t.object)}};
  if (t.category) j["category"] = *t.category == Category::kExplicit ? "explicit" : "implicit";
  return j;
}

Dataset load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open triple file " + path.string());
  std::vector<Triple> triples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(at_line(line_no) + "malformed JSON (" + e.what() + ")");
    }
    triples.push_back(parse_triple(j, line_no));
  }
  return Dataset(std::move(triples));
}

void save_triples(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& t : data.triples()) out << triple_to_json(t).dump() << '\n';
}

std::set<std::string> load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open lexicon " + path.string());
  std::set<std::string> lexicon;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string rel = normalize_text(line);
    if (!rel.empty()) lexicon.insert(rel);
  }
  if (lexicon.empty()) throw ValidationError("lexicon " + path.string() + " is empty");
  return lexicon;
}

const std::set<std::string>& default_explicit_lexicon() {
  static const std::set<std::string> kLexicon = {
      "on",      "in",      "under", "above",   "below",   "behind",      "near",
      "beside",  "over",    "inside", "outside", "at",     "against",     "between",
      "left of", "right of", "next to", "in front of", "on top of"};
  return kLexicon;
}

CategoryPartition classify_relations(const Dataset& data, const std::set<std::string>& lexicon) {
  if (lexicon.empty()) throw ValidationError("explicit lexicon is empty");
  std::vector<Triple> exp, imp;
  for (Triple t : data.triples()) {
    if (lexicon.count(t.relation) != 0) {
      t.category = Category::kExplicit;
      exp.push_back(std::move(t));
    } else {
      t.category = Category::kImplicit;
      imp.push_back(std::move(t));
    }
  }
  return {Dataset(std::move(exp)), Dataset(std::move(imp))};
}

std::string_view to_string(SplitMode mode) {
  switch (mode) {
    case SplitMode::kStandard:
      return "standard";
    case SplitMode::kUnseenSubjectRelation:
      return "unseen_subject_relation";
    case SplitMode::kUnseenObjectRelation:
      return "unseen_object_relation";
    case SplitMode::kUnseenRelation:
      return "unseen_relation";
  }
  return "standard";
}

SplitMode split_mode_from_string(std::string_view name) {
  for (auto m : {SplitMode::kStandard, SplitMode::kUnseenSubjectRelation,
                 SplitMode::kUnseenObjectRelation, SplitMode::kUnseenRelation}) {
    if (to_string(m) == name) return m;
  }
  throw ValidationError("unknown split mode '" + std::string(name) + "'");
}

SplitBundle standard_split(const Dataset& data, std::array<double, 3> ratios, std::uint64_t seed) {
  check_ratios(ratios);
  const std::size_t n = data.size();
  if (n < 3) throw ValidationError("standard_split needs at least 3 triples, got " + std::to_string(n));
  auto perm = iota_indices(n);
  Rng rng(seed);
  rng.shuffle(perm);

  auto part = [n](double r) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(round_half_up(r * static_cast<double>(n))));
  };
  const std::size_t n_dev = part(ratios[1]);
  const std::size_t n_test = part(ratios[2]);
  if (n_dev + n_test >= n) throw ValidationError("split leaves no training triples");
  const std::size_t n_train = n - n_dev - n_test;

  std::vector<std::size_t> train(perm.begin(), perm.begin() + n_train);
  std::vector<std::size_t> dev(perm.begin() + n_train, perm.begin() + n_train + n_dev);
  std::vector<std::size_t> test(perm.begin() + n_train + n_dev, perm.end());
  return assemble(data, SplitSpec{SplitMode::kStandard, seed, ratios}, std::move(train),
                  std::move(dev), std::move(test));
}

Dataset subsample_fraction(const Dataset& train, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) throw ValidationError("fraction must be in (0,1]");
  if (fraction == 1.0 || train.empty()) return train;
  const std::size_t n = train.size();
  const std::size_t k = std::clamp<std::size_t>(
      static_cast<std::size_t>(round_half_up(fraction * static_cast<double>(n))), 1, n);
  auto idx = iota_indices(n);
  Rng rng(seed);
  // Partial Fisher-Yates: the first k slots become the sample.
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return train.subset(idx);
}

std::string split_key(const Triple& t, SplitMode mode) {
  switch (mode) {
    case SplitMode::kUnseenSubjectRelation:
      return normalize_text(t.subject.text) + "|" + t.relation;
    case SplitMode::kUnseenObjectRelation:
      return normalize_text(t.object.text) + "|" + t.relation;
    case SplitMode::kUnseenRelation:
      return t.relation;
    case SplitMode::kStandard:
      break;
  }
  throw ValidationError("split_key is undefined for the standard split");
}

SplitBundle zero_shot_split(const Dataset& data, SplitMode mode, double test_key_fraction,
                            double dev_fraction, std::uint64_t seed) {
  if (mode == SplitMode::kStandard) throw ValidationError("zero_shot_split needs a zero-shot mode");
  if (!(test_key_fraction > 0.0 && test_key_fraction < 1.0) ||
      !(dev_fraction > 0.0 && dev_fraction < 1.0)) {
    throw ValidationError("zero-shot fractions must be in (0,1)");
  }
  std::vector<std::string> keys;
  std::vector<std::string> triple_keys;
  triple_keys.reserve(data.size());
  std::unordered_set<std::string> seen;
  for (const auto& t : data.triples()) {
    triple_keys.push_back(split_key(t, mode));
    if (seen.insert(triple_keys.back()).second) keys.push_back(triple_keys.back());
  }
  if (keys.size() < 2) {
    throw ValidationError("zero_shot_split needs at least 2 distinct keys, got " +
                          std::to_string(keys.size()));
  }

  Rng rng(seed);
  rng.shuffle(keys);
  const std::size_t n_test_keys = std::clamp<std::size_t>(
      static_cast<std::size_t>(round_half_up(test_key_fraction * static_cast<double>(keys.size()))), 1,
      keys.size() - 1);
  std::unordered_set<std::string> test_keys(keys.begin(), keys.begin() + n_test_keys);

  std::vector<std::size_t> test, rest;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (test_keys.count(triple_keys[i]) ? test : rest).push_back(i);
  }
  rng.shuffle(rest);
  std::size_t n_dev = static_cast<std::size_t>(round_half_up(dev_fraction * static_cast<double>(rest.size())));
  if (rest.size() >= 2) n_dev = std::clamp<std::size_t>(n_dev, 1, rest.size() - 1);
  else n_dev = 0;
  std::vector<std::size_t> dev(rest.begin(), rest.begin() + n_dev);
  std::vector<std::size_t> train(rest.begin() + n_dev, rest.end());
  return assemble(data, SplitSpec{mode, seed, {test_key_fraction, dev_fraction, 0.0}},
                  std::move(train), std::move(dev), std::move(test));
}

json split_manifest(const SplitBundle& b) {
  return json{{"mode", std::string(to_string(b.spec.mode))},
              {"seed", b.spec.seed},
              {"ratios", b.spec.ratios},
              {"train", b.train_indices},
              {"dev", b.dev_indices},
              {"test", b.test_indices}};
}

SplitBundle apply_manifest(const Dataset& data, const json& manifest) {
  try {
    SplitSpec spec;
    spec.mode = split_mode_from_string(manifest.at("mode").get<std::string>());
    spec.seed = manifest.at("seed").get<std::uint64_t>();
    if (manifest.contains("ratios")) spec.ratios = manifest.at("ratios").get<std::array<double, 3>>();
    auto train = manifest.at("train").get<std::vector<std::size_t>>();
    auto dev = manifest.at("dev").get<std::vector<std::size_t>>();
    auto test = manifest.at("test").get<std::vector<std::size_t>>();
    std::vector<char> used(data.size(), 0);
    for (const auto* part : {&train, &dev, &test}) {
      for (std::size_t i : *part) {
        if (i >= data.size() || used[i]) {
          throw ValidationError("manifest index " + std::to_string(i) +
                                " is out of range or repeated");
        }
        used[i] = 1;
      }
    }
    return assemble(data, spec, std::move(train), std::move(dev), std::move(test));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed split manifest: ") + e.what());
  }
}

MajorityBaseline majority_baseline(const Dataset& data) {
  if (data.empty()) throw ValidationError("majority_baseline of an empty dataset");
  std::map<std::string, std::size_t> counts;
  for (const auto& t : data.triples()) ++counts[t.relation];
  // std::map iterates lexicographically, so strict > keeps the smallest on ties.
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return {best->first, best->second,
          static_cast<double>(best->second) / static_cast<double>(data.size())};
}

}  // namespace spatialrel
