#include "spatialrel/relation_prior.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "spatialrel/errors.h"
#include "spatialrel/text.h"

namespace spatialrel {

using nlohmann::json;

namespace {

std::string pair_key(const std::string& subject, const std::string& object) {
  return normalize_text(subject) + '\t' + normalize_text(object);
}

std::vector<double>& counts_for(std::unordered_map<std::string, std::vector<double>>& map,
                                const std::string& key, std::size_t width) {
  auto [it, inserted] = map.try_emplace(key);
  if (inserted) it->second.assign(width, 0.0);
  return it->second;
}

PriorRecord parse_record_line(const json& j, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no) + ": ";
  if (!j.is_object()) throw ParseError(where + "expected a JSON object");
  PriorRecord r;
  try {
    r.subject = normalize_text(j.at("subject").get<std::string>());
    r.object = normalize_text(j.at("object").get<std::string>());
    for (const auto& p : j.at("predictions")) {
      r.predictions.push_back(
          {normalize_text(p.at("relation").get<std::string>()), p.at("score").get<double>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(where + "malformed prior record (" + e.what() + ")");
  }
  if (r.subject.empty() || r.object.empty()) throw ParseError(where + "empty subject or object");
  try {
    validate_prior_record(r);
  } catch (const ValidationError& e) {
    throw ParseError(where + e.what());
  }
  return r;
}

}  // namespace

void validate_prior_record(const PriorRecord& record, std::size_t max_len) {
  const auto& preds = record.predictions;
  if (preds.size() > max_len) {
    throw ValidationError("record has " + std::to_string(preds.size()) + " predictions, more than " +
                          std::to_string(max_len));
  }
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    if (p.relation.empty()) throw ValidationError("empty relation in prediction " + std::to_string(i));
    if (!std::isfinite(p.score)) throw ValidationError("non-finite score for '" + p.relation + "'");
    if (p.score < 0.0) throw ValidationError("negative score for '" + p.relation + "'");
    if (i > 0 && p.score > preds[i - 1].score) {
      throw ValidationError("non-increasing violated at prediction " + std::to_string(i) + " ('" +
                            p.relation + "')");
    }
    if (!seen.insert(p.relation).second) throw ValidationError("duplicate relation '" + p.relation + "'");
  }
}

json prior_record_to_json(const PriorRecord& record) {
  json preds = json::array();
  for (const auto& p : record.predictions) preds.push_back({{"relation", p.relation}, {"score", p.score}});
  return json{{"subject", record.subject}, {"object", record.object}, {"predictions", std::move(preds)}};
}

FilePrior::FilePrior(std::vector<PriorRecord> records, std::size_t top_k) : PriorProvider(top_k) {
  for (auto& r : records) {
    validate_prior_record(r);
    const std::string key = pair_key(r.subject, r.object);
    if (!index_.try_emplace(key, std::move(r)).second) {
      throw ValidationError("duplicate prior key (" + key + ")");
    }
  }
}

PriorRecord FilePrior::query(const std::string& subject, const std::string& object) const {
  auto it = index_.find(pair_key(subject, object));
  if (it == index_.end()) return PriorRecord{normalize_text(subject), normalize_text(object), {}};
  PriorRecord r = it->second;
  if (r.predictions.size() > top_k()) r.predictions.resize(top_k());
  return r;
}

std::unique_ptr<FilePrior> load_prior_file(const std::filesystem::path& path, std::size_t top_k) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open prior file " + path.string());
  std::vector<PriorRecord> records;
  std::unordered_set<std::string> keys;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    PriorRecord r = parse_record_line(j, line_no);
    if (!keys.insert(pair_key(r.subject, r.object)).second) {
      throw ParseError("line " + std::to_string(line_no) + ": duplicate (subject, object) key (" +
                       r.subject + ", " + r.object + ")");
    }
    records.push_back(std::move(r));
  }
  return std::make_unique<FilePrior>(std::move(records), top_k);
}

void save_prior_file(const std::vector<PriorRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << prior_record_to_json(r).dump() << '\n';
}

CooccurrencePrior fit_cooccurrence(const Dataset& train, double alpha, std::size_t top_k) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("smoothing alpha must be > 0");
  if (train.empty()) throw ValidationError("co-occurrence prior needs training triples");
  if (top_k == 0) throw ValidationError("top_k must be positive");
  CooccurrencePrior prior(top_k, alpha);
  prior.vocab_ = train.relation_vocab();
  const std::size_t v = prior.vocab_.size();
  prior.relation_counts_.assign(v, 0.0);
  for (const auto& t : train.triples()) {
    const std::size_t r = *prior.vocab_.find(t.relation);
    const std::string s = normalize_text(t.subject.text);
    const std::string o = normalize_text(t.object.text);
    const std::string key = s + '\t' + o;
    if (!prior.pair_counts_.count(key)) prior.pairs_.emplace_back(s, o);
    counts_for(prior.pair_counts_, key, v)[r] += 1.0;
    counts_for(prior.subject_counts_, s, v)[r] += 1.0;
    counts_for(prior.object_counts_, o, v)[r] += 1.0;
    prior.relation_counts_[r] += 1.0;
    prior.total_ += 1.0;
  }
  return prior;
}

std::vector<double> CooccurrencePrior::scores(const std::string& subject, const std::string& object) const {
  const std::string s = normalize_text(subject);
  const std::string o = normalize_text(object);
  const std::size_t v = vocab_.size();
  const double a = alpha_;
  const double av = a * static_cast<double>(v);

  auto lookup = [](const auto& map, const std::string& key) -> const std::vector<double>* {
    auto it = map.find(key);
    return it == map.end() ? nullptr : &it->second;
  };
  auto total = [](const std::vector<double>* c) {
    double t = 0.0;
    if (c) for (double x : *c) t += x;
    return t;
  };
  const auto* cs = lookup(subject_counts_, s);
  const auto* co = lookup(object_counts_, o);
  const auto* cp = lookup(pair_counts_, s + '\t' + o);
  const double ns = total(cs), no = total(co), np = total(cp);

  std::vector<double> out(v);
  for (std::size_t r = 0; r < v; ++r) {
    const double p_s = ((cs ? (*cs)[r] : 0.0) + a) / (ns + av);
    const double p_o = ((co ? (*co)[r] : 0.0) + a) / (no + av);
    const double p_r = (relation_counts_[r] + a) / (total_ + av);
    const double backoff = (p_s + p_o + p_r) / 3.0;
    out[r] = ((cp ? (*cp)[r] : 0.0) + a * backoff) / (np + a);
  }
  return out;
}

PriorRecord CooccurrencePrior::query(const std::string& subject, const std::string& object) const {
  const std::vector<double> sc = scores(subject, object);
  std::vector<std::size_t> order(sc.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sc[a] != sc[b]) return sc[a] > sc[b];
    return vocab_[a] < vocab_[b];
  });
  if (order.size() > top_k()) order.resize(top_k());
  PriorRecord rec{normalize_text(subject), normalize_text(object), {}};
  for (std::size_t i : order) rec.predictions.push_back({vocab_[i], sc[i]});
  return rec;
}

std::vector<PriorRecord> export_records(const CooccurrencePrior& prior) {
  std::vector<PriorRecord> out;
  out.reserve(prior.pairs().size());
  for (const auto& [s, o] : prior.pairs()) out.push_back(prior.query(s, o));
  return out;
}

}  // namespace spatialrel
