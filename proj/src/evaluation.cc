#include "spatialrel/evaluation.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <functional>
#include <sstream>
#include <thread>

#include "spatialrel/errors.h"
#include "spatialrel/text.h"

namespace spatialrel {

using nlohmann::json;

namespace {

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

// Trains / fits lazily and remembers failures so dependent cells report
// the same error.
template <typename T>
class Lazy {
 public:
  explicit Lazy(std::function<T()> make) : make_(std::move(make)) {}

  const T& get() {
    if (error_) throw Error(*error_);
    if (!value_) {
      try {
        value_.emplace(make_());
      } catch (const std::exception& e) {
        error_ = e.what();
        throw;
      }
    }
    return *value_;
  }

 private:
  std::function<T()> make_;
  std::optional<T> value_;
  std::optional<std::string> error_;
};

struct CellContext {
  const Dataset& train;
  const Dataset& dev;
  const Dataset& test;
  std::shared_ptr<const RelationVocab> label_space;
  const FeatureTables& tables;
  const PriorProvider* prior;
  TrainConfig train_config;
  const FusionConfig& fusion;
  double cooc_alpha;
  std::size_t prior_top_k;
  std::size_t k;
  std::string setting;
  double fraction;
};

std::vector<ReportCell> evaluate_models(const CellContext& ctx, const std::vector<ModelKind>& models) {
  const std::vector<std::string> golds = golds_of(ctx.test);

  auto train_spatial = [&ctx](bool with_image) {
    TrainConfig cfg = ctx.train_config;
    cfg.with_image = with_image;
    return train(ctx.train, ctx.dev, ctx.tables, cfg).model;
  };
  Lazy<SpatialModel> ff([&] { return train_spatial(false); });
  Lazy<SpatialModel> ffi([&] {
    if (ctx.tables.visual == nullptr) throw ValidationError("ffi needs a visual embedding table");
    return train_spatial(true);
  });
  Lazy<CooccurrencePrior> cooc([&] { return fit_cooccurrence(ctx.train, ctx.cooc_alpha, ctx.prior_top_k); });
  auto external = [&ctx]() -> const PriorProvider& {
    if (ctx.prior == nullptr) throw ValidationError("no external prior provider configured");
    return *ctx.prior;
  };

  auto prior_only = [&](const PriorProvider& provider) {
    PriorProjector projector(ctx.label_space, *ctx.tables.word);
    std::vector<ScoreDist> preds;
    preds.reserve(ctx.test.size());
    for (const auto& t : ctx.test.triples()) {
      preds.push_back(projector.project(provider.query(t.subject.text, t.object.text)));
    }
    return preds;
  };

  std::vector<ReportCell> cells;
  for (ModelKind kind : models) {
    ReportCell cell;
    cell.setting = ctx.setting;
    cell.model = std::string(to_string(kind));
    cell.fraction = ctx.fraction;
    cell.n_test = ctx.test.size();
    cell.k = ctx.k;
    try {
      if (ctx.test.empty()) throw ValidationError("test split is empty");
      std::vector<ScoreDist> preds;
      switch (kind) {
        case ModelKind::kPrior:
          preds = prior_only(external());
          break;
        case ModelKind::kCooc:
          preds = prior_only(cooc.get());
          break;
        case ModelKind::kFF:
          preds = ff.get().predict_all(ctx.test, ctx.tables);
          break;
        case ModelKind::kFFI:
          preds = ffi.get().predict_all(ctx.test, ctx.tables);
          break;
        case ModelKind::kFused:
        case ModelKind::kFusedCooc: {
          const PriorProvider& provider = kind == ModelKind::kFused ? external() : cooc.get();
          const SpatialModel& model = ctx.tables.visual ? ffi.get() : ff.get();
          SweepResult sweep = sweep_lambda(model, provider, ctx.dev, ctx.fusion.lambda_grid, ctx.tables,
                                           ctx.label_space);
          FusionInputs in = prepare_fusion(model, provider, ctx.test, ctx.tables, ctx.label_space);
          for (std::size_t i = 0; i < in.spatial.size(); ++i) {
            preds.push_back(fuse(in.spatial[i], in.prior[i], sweep.best_lambda));
          }
          cell.lambda = sweep.best_lambda;
          break;
        }
      }
      cell.accuracy = accuracy(preds, golds);
      cell.topk = topk_accuracy(preds, golds, ctx.k);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

json cell_to_json(const ReportCell& c) {
  json j{{"setting", c.setting}, {"model", c.model}, {"fraction", c.fraction},
         {"lambda", c.lambda ? json(*c.lambda) : json(nullptr)},
         {"n_test", c.n_test},   {"accuracy", c.accuracy}, {"topk", c.topk}, {"k", c.k}};
  if (c.error) j["error"] = *c.error;
  return j;
}

ReportCell cell_from_json(const json& j) {
  ReportCell c;
  c.setting = j.at("setting").get<std::string>();
  c.model = j.at("model").get<std::string>();
  c.fraction = j.at("fraction").get<double>();
  if (!j.at("lambda").is_null()) c.lambda = j.at("lambda").get<double>();
  c.n_test = j.at("n_test").get<std::size_t>();
  c.accuracy = j.at("accuracy").get<double>();
  c.topk = j.at("topk").get<double>();
  c.k = j.at("k").get<std::size_t>();
  if (j.contains("error")) c.error = j.at("error").get<std::string>();
  return c;
}

json common_metadata(const Dataset& data, const json& config) {
  return json{{"config", config},
              {"config_hash", hex64(fnv1a64(config.dump()))},
              {"data_fingerprint", dataset_fingerprint(data)},
              {"n_triples", data.size()}};
}

}  // namespace

double accuracy(std::span<const ScoreDist> predictions, std::span<const std::string> golds) {
  if (predictions.size() != golds.size()) throw ValidationError("accuracy: length mismatch");
  if (predictions.empty()) throw ValidationError("accuracy of an empty prediction list");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const ScoreDist& p = predictions[i];
    if (p.scores.empty()) continue;
    if ((*p.vocab)[p.argmax()] == golds[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

std::vector<std::size_t> top_k_indices(const ScoreDist& dist, std::size_t k) {
  std::vector<std::size_t> idx(dist.scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (dist.scores[a] != dist.scores[b]) return dist.scores[a] > dist.scores[b];
                      return a < b;
                    });
  idx.resize(k);
  return idx;
}

double topk_accuracy(std::span<const ScoreDist> predictions, std::span<const std::string> golds,
                     std::size_t k) {
  if (k == 0) throw ValidationError("top-k accuracy needs k >= 1");
  if (predictions.size() != golds.size()) throw ValidationError("topk_accuracy: length mismatch");
  if (predictions.empty()) throw ValidationError("top-k accuracy of an empty prediction list");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const ScoreDist& p = predictions[i];
    auto gold = p.vocab ? p.vocab->find(golds[i]) : std::nullopt;
    if (!gold) continue;
    auto top = top_k_indices(p, k);
    if (std::find(top.begin(), top.end(), *gold) != top.end()) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

std::vector<std::string> golds_of(const Dataset& data) {
  std::vector<std::string> g;
  g.reserve(data.size());
  for (const auto& t : data.triples()) g.push_back(t.relation);
  return g;
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kPrior:
      return "prior";
    case ModelKind::kCooc:
      return "cooc";
    case ModelKind::kFF:
      return "ff";
    case ModelKind::kFFI:
      return "ffi";
    case ModelKind::kFused:
      return "fused";
    case ModelKind::kFusedCooc:
      return "fused-cooc";
  }
  return "ff";
}

ModelKind model_kind_from_string(std::string_view name) {
  for (auto k : {ModelKind::kPrior, ModelKind::kCooc, ModelKind::kFF, ModelKind::kFFI, ModelKind::kFused,
                 ModelKind::kFusedCooc}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown model '" + std::string(name) +
                        "' (expected prior, cooc, ff, ffi, fused, fused-cooc)");
}

std::vector<ModelKind> parse_model_list(std::string_view csv) {
  std::vector<ModelKind> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t comma = csv.find(',', start);
    if (comma == std::string_view::npos) comma = csv.size();
    std::string name = normalize_text(csv.substr(start, comma - start));
    if (!name.empty()) out.push_back(model_kind_from_string(name));
    start = comma + 1;
  }
  if (out.empty()) throw ValidationError("empty model list");
  return out;
}

json report_to_json(const ExperimentReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) cells.push_back(cell_to_json(c));
  return json{{"metadata", report.metadata}, {"cells", std::move(cells)}};
}

ExperimentReport report_from_json(const json& j) {
  try {
    ExperimentReport r;
    r.metadata = j.at("metadata");
    for (const auto& c : j.at("cells")) r.cells.push_back(cell_from_json(c));
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
}

std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "setting,model,fraction,lambda,n_test,accuracy,topk,k\n";
  for (const auto& c : report.cells) {
    out << c.setting << ',' << c.model << ',' << shortest(c.fraction) << ','
        << (c.lambda ? shortest(*c.lambda) : std::string()) << ',' << c.n_test << ',';
    if (c.error) {
      out << ",," << c.k << '\n';
    } else {
      out << shortest(c.accuracy) << ',' << shortest(c.topk) << ',' << c.k << '\n';
    }
  }
  return out.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::string dataset_fingerprint(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : data.triples()) {
    for (unsigned char c : triple_to_json(t).dump()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  return hex64(h);
}

json MatrixConfig::to_json() const {
  json models_j = json::array();
  for (auto m : models) models_j.push_back(std::string(to_string(m)));
  return json{{"setting", setting},
              {"fractions", fractions},
              {"models", models_j},
              {"ratios", ratios},
              {"split_seed", split_seed},
              {"subsample_seed", subsample_seed},
              {"train", spatialrel::to_json(train)},
              {"lambda_grid", fusion.lambda_grid},
              {"cooc_alpha", cooc_alpha},
              {"prior_top_k", prior_top_k},
              {"k", k}};
}

json GeneralizationConfig::to_json() const {
  json models_j = json::array();
  for (auto m : models) models_j.push_back(std::string(to_string(m)));
  json modes_j = json::array();
  for (auto m : modes) modes_j.push_back(std::string(spatialrel::to_string(m)));
  return json{{"setting", setting},
              {"modes", modes_j},
              {"models", models_j},
              {"test_key_fraction", test_key_fraction},
              {"dev_fraction", dev_fraction},
              {"seed", seed},
              {"train", spatialrel::to_json(train)},
              {"lambda_grid", fusion.lambda_grid},
              {"cooc_alpha", cooc_alpha},
              {"prior_top_k", prior_top_k},
              {"k", k}};
}

ExperimentReport run_matrix(const Dataset& data, const FeatureTables& tables, const PriorProvider* prior,
                            const MatrixConfig& config) {
  if (config.fractions.empty()) throw ValidationError("no training fractions given");
  if (config.models.empty()) throw ValidationError("no models given");
  if (tables.word == nullptr) throw ValidationError("run_matrix needs a word table");
  config.train.validate();
  config.fusion.validate();
  for (double f : config.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("fractions must be in (0,1]");
  }

  const SplitBundle split = standard_split(data, config.ratios, config.split_seed);
  const auto label_space = data.shared_vocab();
  std::vector<std::vector<ReportCell>> rows(config.fractions.size());
  parallel_for(config.fractions.size(), config.jobs, [&](std::size_t i) {
    const double fraction = config.fractions[i];
    const Dataset sub = subsample_fraction(split.train, fraction, config.subsample_seed);
    CellContext ctx{sub,   split.dev,   split.test,        label_space,       tables,
                    prior, config.train, config.fusion,   config.cooc_alpha, config.prior_top_k,
                    config.k, config.setting, fraction};
    rows[i] = evaluate_models(ctx, config.models);
  });

  ExperimentReport report;
  for (auto& r : rows) {
    for (auto& c : r) report.cells.push_back(std::move(c));
  }
  report.metadata = common_metadata(data, config.to_json());
  report.metadata["kind"] = "matrix";
  report.metadata["seeds"] = {{"split", config.split_seed},
                              {"subsample", config.subsample_seed},
                              {"train", config.train.seed}};
  report.metadata["split_sizes"] = {split.train.size(), split.dev.size(), split.test.size()};
  return report;
}

ExperimentReport run_generalization(const Dataset& data, const FeatureTables& tables,
                                    const PriorProvider* prior, const GeneralizationConfig& config) {
  if (config.modes.empty()) throw ValidationError("no generalization modes given");
  if (config.models.empty()) throw ValidationError("no models given");
  if (tables.word == nullptr) throw ValidationError("run_generalization needs a word table");
  config.train.validate();
  config.fusion.validate();

  const auto label_space = data.shared_vocab();
  std::vector<std::vector<ReportCell>> rows(config.modes.size());
  std::vector<json> sizes(config.modes.size());
  parallel_for(config.modes.size(), config.jobs, [&](std::size_t i) {
    const SplitMode mode = config.modes[i];
    const std::string setting = config.setting + "/" + std::string(to_string(mode));
    SplitBundle split;
    try {
      split = zero_shot_split(data, mode, config.test_key_fraction, config.dev_fraction, config.seed);
    } catch (const std::exception& e) {
      for (ModelKind m : config.models) {
        ReportCell cell;
        cell.setting = setting;
        cell.model = std::string(to_string(m));
        cell.k = config.k;
        cell.error = e.what();
        rows[i].push_back(std::move(cell));
      }
      return;
    }
    sizes[i] = {split.train.size(), split.dev.size(), split.test.size()};
    CellContext ctx{split.train, split.dev,    split.test,         label_space,       tables,
                    prior,       config.train, config.fusion,      config.cooc_alpha, config.prior_top_k,
                    config.k,    setting,      1.0};
    rows[i] = evaluate_models(ctx, config.models);
  });

  ExperimentReport report;
  for (auto& r : rows) {
    for (auto& c : r) report.cells.push_back(std::move(c));
  }
  report.metadata = common_metadata(data, config.to_json());
  report.metadata["kind"] = "generalization";
  report.metadata["seeds"] = {{"split", config.seed}, {"train", config.train.seed}};
  report.metadata["split_sizes"] = sizes;
  return report;
}

}  // namespace spatialrel
