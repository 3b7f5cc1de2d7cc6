#include "spatialrel/cli.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "spatialrel/dataset.h"
#include "spatialrel/embeddings.h"
#include "spatialrel/errors.h"
#include "spatialrel/evaluation.h"
#include "spatialrel/fusion.h"
#include "spatialrel/relation_prior.h"
#include "spatialrel/spatial_model.h"
#include "spatialrel/synthetic.h"

namespace spatialrel {

using nlohmann::json;

namespace {

// Option values shared by several subcommands. Each subcommand binds the
// subset it needs.
struct Options {
  std::string data;
  std::string word_emb;
  std::string visual_emb;
  std::string out;
  std::string json_out;
  std::string out_dir;
  std::string model;
  std::string split_manifest;
  std::string category = "all";
  std::string lexicon;

  // split
  std::string mode = "standard";
  std::vector<double> ratios{kDefaultRatios.begin(), kDefaultRatios.end()};
  double test_fraction = 0.15;
  double dev_fraction = 0.15;
  std::uint64_t seed = 7;

  // synth
  std::string scheme = "geometric";
  SyntheticConfig synth;

  // train
  TrainConfig train;
  bool with_image = false;
  bool no_position = false;

  // priors
  std::string prior_file;
  std::string prior_url;
  bool cooc = false;
  double alpha = 0.1;
  std::size_t top_k = kDefaultPriorTopK;

  // predict
  std::string subject;
  std::string object;
  std::vector<double> subject_box;
  std::vector<double> object_box;
  std::string subject_vis;
  std::string object_vis;
  double lambda = 0.0;
  std::size_t top = 5;

  // sweep / matrix / generalize
  std::vector<double> grid = default_lambda_grid();
  std::vector<double> fractions{0.01, 0.1, 0.5, 0.75, 1.0};
  std::string models = "ff,ffi,fused";
  std::string gen_models = "prior,ffi,fused";
  std::string modes = "unseen_subject_relation,unseen_object_relation,unseen_relation";
  std::uint64_t subsample_seed = 11;
  std::size_t k = 5;
  std::size_t jobs = 1;
};

void emit(const std::string& payload, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << payload;
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << payload;
}

std::array<double, 3> to_ratios(const std::vector<double>& v) {
  if (v.size() != 3) throw ValidationError("--ratios needs exactly three values");
  return {v[0], v[1], v[2]};
}

Dataset load_filtered(const Options& o) {
  Dataset data = load_triples(o.data);
  if (o.category == "all") return data;
  const auto lexicon = o.lexicon.empty() ? default_explicit_lexicon() : load_lexicon(o.lexicon);
  auto parts = classify_relations(data, lexicon);
  if (o.category == "explicit") return std::move(parts.explicit_part);
  if (o.category == "implicit") return std::move(parts.implicit_part);
  throw ValidationError("--category must be all, explicit or implicit");
}

struct Tables {
  std::optional<EmbeddingTable> word;
  std::optional<EmbeddingTable> visual;

  FeatureTables view() const {
    return FeatureTables{word ? &*word : nullptr, visual ? &*visual : nullptr};
  }
};

Tables load_tables(const Options& o) {
  Tables t;
  if (o.word_emb.empty()) throw ValidationError("--word-emb is required");
  t.word.emplace(load_embeddings(o.word_emb, std::nullopt, EmbeddingKind::kWord));
  if (!o.visual_emb.empty()) t.visual.emplace(load_embeddings(o.visual_emb, std::nullopt, EmbeddingKind::kVisual));
  return t;
}

std::unique_ptr<PriorProvider> external_prior(const Options& o) {
  if (!o.prior_file.empty() && !o.prior_url.empty()) {
    throw ValidationError("give at most one of --prior-file and --prior-url");
  }
  if (!o.prior_file.empty()) return load_prior_file(o.prior_file, o.top_k);
  if (!o.prior_url.empty()) return std::make_unique<RemotePrior>(o.prior_url, o.top_k);
  return nullptr;
}

SplitBundle resolve_split(const Dataset& data, const Options& o) {
  if (!o.split_manifest.empty()) {
    std::ifstream in(o.split_manifest);
    if (!in) throw ParseError("cannot open split manifest " + o.split_manifest);
    json j;
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed split manifest: ") + e.what());
    }
    return apply_manifest(data, j);
  }
  return standard_split(data, to_ratios(o.ratios), o.seed);
}

TrainConfig effective_train_config(const Options& o) {
  TrainConfig c = o.train;
  c.with_image = o.with_image;
  c.use_position = !o.no_position;
  return c;
}

Entity make_entity(const std::string& text, const std::vector<double>& box, const std::string& vis,
                   const char* which) {
  if (box.size() != 4) throw ValidationError(std::string("--") + which + "-box needs cx,cy,hw,hh");
  for (double v : box) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string("--") + which + "-box values must be in [0,1]");
  }
  Entity e;
  e.text = text;
  e.box = {box[0], box[1], box[2], box[3]};
  e.vis_key = vis.empty() ? head_token(text) : vis;
  return e;
}

void add_train_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--lr", o.train.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--batch", o.train.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--epochs", o.train.max_epochs, "Maximum epochs")->capture_default_str();
  cmd->add_option("--patience", o.train.patience, "Early-stop patience (epochs)")->capture_default_str();
  cmd->add_option("--hidden", o.train.hidden, "Hidden units per branch")->capture_default_str();
  cmd->add_option("--train-seed", o.train.seed, "Initialization / shuffling seed")->capture_default_str();
}

void add_prior_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--prior-file", o.prior_file, "Precomputed prior file (JSONL)");
  cmd->add_option("--prior-url", o.prior_url, "Scoring service base URL");
  cmd->add_option("--top-k", o.top_k, "Prior predictions per query")->capture_default_str();
}

void add_data_filter(CLI::App* cmd, Options& o) {
  cmd->add_option("--category", o.category, "all, explicit or implicit")
      ->check(CLI::IsMember({"all", "explicit", "implicit"}))
      ->capture_default_str();
  cmd->add_option("--lexicon", o.lexicon, "Explicit-relation lexicon file");
}

json options_to_json(const Options& o) {
  json synth = {{"n", o.synth.n},
                {"subject_vocab", o.synth.subject_vocab},
                {"object_vocab", o.synth.object_vocab},
                {"word_dim", o.synth.word_dim},
                {"visual_dim", o.synth.visual_dim},
                {"visual_vocab", o.synth.visual_vocab},
                {"visual_clusters", o.synth.visual_clusters},
                {"cluster_spread", o.synth.cluster_spread},
                {"noise_rate", o.synth.noise_rate},
                {"text_affinity", o.synth.text_affinity},
                {"seed", o.synth.seed}};
  return json{{"data", o.data},
              {"word_emb", o.word_emb},
              {"visual_emb", o.visual_emb},
              {"out", o.out},
              {"json_out", o.json_out},
              {"out_dir", o.out_dir},
              {"model", o.model},
              {"split", o.split_manifest},
              {"category", o.category},
              {"lexicon", o.lexicon},
              {"mode", o.mode},
              {"ratios", o.ratios},
              {"test_fraction", o.test_fraction},
              {"dev_fraction", o.dev_fraction},
              {"seed", o.seed},
              {"scheme", o.scheme},
              {"synth", synth},
              {"train", to_json(o.train)},
              {"with_image", o.with_image},
              {"no_position", o.no_position},
              {"prior_file", o.prior_file},
              {"prior_url", o.prior_url},
              {"cooc", o.cooc},
              {"alpha", o.alpha},
              {"top_k", o.top_k},
              {"subject", o.subject},
              {"object", o.object},
              {"subject_box", o.subject_box},
              {"object_box", o.object_box},
              {"subject_vis", o.subject_vis},
              {"object_vis", o.object_vis},
              {"lambda", o.lambda},
              {"top", o.top},
              {"grid", o.grid},
              {"fractions", o.fractions},
              {"models", o.models},
              {"gen_models", o.gen_models},
              {"modes", o.modes},
              {"subsample_seed", o.subsample_seed},
              {"k", o.k},
              {"jobs", o.jobs}};
}

// Hash of the subcommand name and the typed option values, so equal
// configurations hash equally however they were spelled.
std::string hash_of(const CLI::App* cmd, const Options& o) {
  return hex64(fnv1a64(cmd->get_name() + "\n" + options_to_json(o).dump()));
}

std::string dump(const json& j) { return j.dump() + "\n"; }

// --- subcommands -----------------------------------------------------------

void cmd_split(const Options& o, const CLI::App* cmd, std::ostream& out) {
  Dataset data = load_filtered(o);
  const SplitMode mode = split_mode_from_string(o.mode);
  SplitBundle b = mode == SplitMode::kStandard
                      ? standard_split(data, to_ratios(o.ratios), o.seed)
                      : zero_shot_split(data, mode, o.test_fraction, o.dev_fraction, o.seed);
  json j = split_manifest(b);
  j["config_hash"] = hash_of(cmd, o);
  emit(dump(j), o.out, out);
}

void cmd_synth(Options o, const CLI::App* cmd, std::ostream& out) {
  if (o.out_dir.empty()) throw ValidationError("--out-dir is required");
  o.synth.scheme = relation_scheme_from_string(o.scheme);
  SyntheticData s = generate_synthetic(o.synth);
  std::filesystem::create_directories(o.out_dir);
  const auto dir = std::filesystem::path(o.out_dir);
  save_triples(s.data, dir / "triples.jsonl");
  save_embeddings(s.word, dir / "word.txt");
  save_embeddings(s.visual, dir / "visual.txt");
  json j{{"triples", (dir / "triples.jsonl").string()},
         {"word_embeddings", (dir / "word.txt").string()},
         {"visual_embeddings", (dir / "visual.txt").string()},
         {"n", s.data.size()},
         {"relations", s.data.relation_vocab().names()},
         {"seed", o.synth.seed},
         {"config_hash", hash_of(cmd, o)}};
  emit(dump(j), o.out, out);
}

void cmd_train(const Options& o, const CLI::App* cmd, std::ostream& out, std::ostream& err) {
  if (o.model.empty()) throw ValidationError("--model (checkpoint output path) is required");
  Dataset data = load_filtered(o);
  Tables tables = load_tables(o);
  SplitBundle split = resolve_split(data, o);
  TrainConfig cfg = effective_train_config(o);
  err << "training on " << split.train.size() << " triples (dev " << split.dev.size() << ", test "
      << split.test.size() << ")\n";
  TrainResult r = train(split.train, split.dev, tables.view(), cfg);
  save_model(r.model, o.model);
  const auto preds = r.model.predict_all(split.test, tables.view());
  json j{{"model", o.model},
         {"best_epoch", r.best_epoch},
         {"history", history_to_json(r.history)},
         {"test_accuracy", accuracy(preds, golds_of(split.test))},
         {"n_test", split.test.size()},
         {"seed", cfg.seed},
         {"split_seed", split.spec.seed},
         {"config", to_json(cfg)},
         {"config_hash", hash_of(cmd, o)}};
  emit(dump(j), o.out, out);
}

void cmd_predict(const Options& o, const CLI::App* cmd, std::ostream& out) {
  SpatialModel model = load_model(o.model);
  Tables tables = load_tables(o);
  Triple t;
  t.subject = make_entity(o.subject, o.subject_box, o.subject_vis, "subject");
  t.object = make_entity(o.object, o.object_box, o.object_vis, "object");
  ScoreDist dist = model.predict(t, tables.view());
  auto prior = external_prior(o);
  std::optional<double> lambda;
  if (prior) {
    PriorProjector projector(model.vocab, *tables.word);
    dist = fuse(dist, projector.project(prior->query(o.subject, o.object)), o.lambda);
    lambda = o.lambda;
  }
  json preds = json::array();
  for (std::size_t i : top_k_indices(dist, o.top)) {
    preds.push_back({{"relation", (*dist.vocab)[i]}, {"score", dist.scores[i]}});
  }
  json j{{"subject", o.subject},
         {"object", o.object},
         {"lambda", lambda ? json(*lambda) : json(nullptr)},
         {"predictions", preds},
         {"config_hash", hash_of(cmd, o)}};
  emit(dump(j), o.out, out);
}

void cmd_baseline(const Options& o, std::ostream& out) {
  Dataset data = load_filtered(o);
  MajorityBaseline b = majority_baseline(data);
  nlohmann::ordered_json j{{"relation", b.relation},
                           {"count", b.count},
                           {"accuracy", std::round(b.accuracy * 1e4) / 1e4}};
  emit(j.dump() + "\n", o.out, out);
}

void cmd_sweep(const Options& o, const CLI::App* cmd, std::ostream& out) {
  SpatialModel model = load_model(o.model);
  Dataset data = load_filtered(o);
  Tables tables = load_tables(o);
  SplitBundle split = resolve_split(data, o);
  std::unique_ptr<PriorProvider> prior = external_prior(o);
  std::optional<CooccurrencePrior> cooc;
  if (!prior) {
    if (!o.cooc) throw ValidationError("sweep needs --prior-file, --prior-url or --cooc");
    cooc.emplace(fit_cooccurrence(split.train, o.alpha, o.top_k));
  }
  FusionConfig fc;
  fc.lambda_grid = o.grid;
  fc.validate();
  const PriorProvider& provider = prior ? *prior : static_cast<const PriorProvider&>(*cooc);
  SweepResult s = sweep_lambda(model, provider, split.dev, fc.lambda_grid, tables.view());
  json j = sweep_to_json(s);
  j["seed"] = split.spec.seed;
  j["n_dev"] = split.dev.size();
  j["config_hash"] = hash_of(cmd, o);
  emit(dump(j), o.out, out);
}

void cmd_matrix(const Options& o, const CLI::App* cmd, std::ostream& out) {
  Dataset data = load_filtered(o);
  Tables tables = load_tables(o);
  auto prior = external_prior(o);
  MatrixConfig mc;
  mc.setting = o.category;
  mc.fractions = o.fractions;
  mc.models = parse_model_list(o.models);
  mc.ratios = to_ratios(o.ratios);
  mc.split_seed = o.seed;
  mc.subsample_seed = o.subsample_seed;
  mc.train = effective_train_config(o);
  mc.fusion.lambda_grid = o.grid;
  mc.cooc_alpha = o.alpha;
  mc.prior_top_k = o.top_k;
  mc.k = o.k;
  mc.jobs = o.jobs;
  ExperimentReport r = run_matrix(data, tables.view(), prior.get(), mc);
  r.metadata["cli_config_hash"] = hash_of(cmd, o);
  emit(report_to_csv(r), o.out, out);
  if (!o.json_out.empty()) emit(report_to_json(r).dump(2) + "\n", o.json_out, out);
}

void cmd_generalize(const Options& o, const CLI::App* cmd, std::ostream& out) {
  Dataset data = load_filtered(o);
  Tables tables = load_tables(o);
  auto prior = external_prior(o);
  GeneralizationConfig gc;
  gc.setting = o.category;
  gc.modes.clear();
  std::stringstream ss(o.modes);
  for (std::string m; std::getline(ss, m, ',');) {
    if (!m.empty()) gc.modes.push_back(split_mode_from_string(m));
  }
  gc.models = parse_model_list(o.gen_models);
  gc.test_key_fraction = o.test_fraction;
  gc.dev_fraction = o.dev_fraction;
  gc.seed = o.seed;
  gc.train = effective_train_config(o);
  gc.train.with_image = true;
  gc.fusion.lambda_grid = o.grid;
  gc.cooc_alpha = o.alpha;
  gc.prior_top_k = o.top_k;
  gc.k = o.k;
  gc.jobs = o.jobs;
  ExperimentReport r = run_generalization(data, tables.view(), prior.get(), gc);
  r.metadata["cli_config_hash"] = hash_of(cmd, o);
  emit(report_to_csv(r), o.out, out);
  if (!o.json_out.empty()) emit(report_to_json(r).dump(2) + "\n", o.json_out, out);
}

void cmd_priors_export(const Options& o, std::ostream& out) {
  Dataset data = load_filtered(o);
  CooccurrencePrior prior = fit_cooccurrence(data, o.alpha, o.top_k);
  std::string payload;
  for (const auto& r : export_records(prior)) payload += prior_record_to_json(r).dump() + "\n";
  emit(payload, o.out, out);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Spatial relation prediction with language-model priors", "spatialrel"};
  app.set_config("--config", "", "Flat key=value config file; flags override it");
  bool dump_config = false;
  app.add_flag("--dump-config", dump_config, "Print the effective configuration and exit");
  app.require_subcommand(1);
  app.fallthrough();

  auto* split = app.add_subcommand("split", "Write a standard or zero-shot split manifest");
  split->add_option("--data", o.data, "Triple file (JSONL)")->required();
  split->add_option("--mode", o.mode, "standard, unseen_subject_relation, unseen_object_relation, unseen_relation")
      ->capture_default_str();
  split->add_option("--ratios", o.ratios, "train,dev,test")->delimiter(',')->expected(3)->capture_default_str();
  split->add_option("--test-fraction", o.test_fraction, "Held-out key fraction (zero-shot)")->capture_default_str();
  split->add_option("--dev-fraction", o.dev_fraction, "Dev fraction of the remainder (zero-shot)")
      ->capture_default_str();
  split->add_option("--seed", o.seed, "Split seed")->capture_default_str();
  split->add_option("--out", o.out, "Output path (default stdout)");
  add_data_filter(split, o);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with embedding tables");
  synth->add_option("--scheme", o.scheme, "geometric, visual or mixed")->capture_default_str();
  synth->add_option("--n", o.synth.n, "Number of triples")->capture_default_str();
  synth->add_option("--noise", o.synth.noise_rate, "Label noise rate")->capture_default_str();
  synth->add_option("--affinity", o.synth.text_affinity, "Text/relation affinity")->capture_default_str();
  synth->add_option("--subject-vocab", o.synth.subject_vocab)->capture_default_str();
  synth->add_option("--object-vocab", o.synth.object_vocab)->capture_default_str();
  synth->add_option("--word-dim", o.synth.word_dim)->capture_default_str();
  synth->add_option("--visual-dim", o.synth.visual_dim)->capture_default_str();
  synth->add_option("--visual-vocab", o.synth.visual_vocab)->capture_default_str();
  synth->add_option("--clusters", o.synth.visual_clusters)->capture_default_str();
  synth->add_option("--seed", o.synth.seed)->capture_default_str();
  synth->add_option("--out-dir", o.out_dir, "Directory for triples.jsonl, word.txt, visual.txt")->required();
  synth->add_option("--out", o.out, "Summary output path (default stdout)");

  auto* trn = app.add_subcommand("train", "Train the spatial classifier");
  trn->add_option("--data", o.data)->required();
  trn->add_option("--word-emb", o.word_emb)->required();
  trn->add_option("--visual-emb", o.visual_emb);
  trn->add_flag("--with-image", o.with_image, "Use visual embeddings (FF+I)");
  trn->add_flag("--no-position", o.no_position, "Zero the box features (ablation)");
  trn->add_option("--split", o.split_manifest, "Split manifest to reuse");
  trn->add_option("--ratios", o.ratios)->delimiter(',')->expected(3)->capture_default_str();
  trn->add_option("--seed", o.seed, "Split seed")->capture_default_str();
  trn->add_option("--model", o.model, "Checkpoint output path")->required();
  trn->add_option("--out", o.out, "Training report path (default stdout)");
  add_train_options(trn, o);
  add_data_filter(trn, o);

  auto* pred = app.add_subcommand("predict", "Rank relations for one subject/object pair");
  pred->add_option("--model", o.model)->required();
  pred->add_option("--word-emb", o.word_emb)->required();
  pred->add_option("--visual-emb", o.visual_emb);
  pred->add_option("--subject", o.subject)->required();
  pred->add_option("--subject-box", o.subject_box, "cx,cy,hw,hh")->delimiter(',')->expected(4)->required();
  pred->add_option("--subject-vis", o.subject_vis);
  pred->add_option("--object", o.object)->required();
  pred->add_option("--object-box", o.object_box, "cx,cy,hw,hh")->delimiter(',')->expected(4)->required();
  pred->add_option("--object-vis", o.object_vis);
  pred->add_option("--lambda", o.lambda, "Prior weight")->capture_default_str();
  pred->add_option("--top", o.top, "Relations to print")->capture_default_str();
  pred->add_option("--out", o.out);
  add_prior_options(pred, o);

  auto* base = app.add_subcommand("baseline", "Majority-relation baseline");
  base->add_option("--data", o.data)->required();
  base->add_option("--out", o.out);
  add_data_filter(base, o);

  auto* sweep = app.add_subcommand("sweep", "Select the fusion weight on the dev split");
  sweep->add_option("--model", o.model)->required();
  sweep->add_option("--data", o.data)->required();
  sweep->add_option("--word-emb", o.word_emb)->required();
  sweep->add_option("--visual-emb", o.visual_emb);
  sweep->add_option("--split", o.split_manifest);
  sweep->add_option("--ratios", o.ratios)->delimiter(',')->expected(3)->capture_default_str();
  sweep->add_option("--seed", o.seed)->capture_default_str();
  sweep->add_option("--grid", o.grid)->delimiter(',')->capture_default_str();
  sweep->add_flag("--cooc", o.cooc, "Use a co-occurrence prior fit on the train split");
  sweep->add_option("--alpha", o.alpha)->capture_default_str();
  sweep->add_option("--out", o.out);
  add_prior_options(sweep, o);
  add_data_filter(sweep, o);

  auto* matrix = app.add_subcommand("matrix", "Training-fraction x model accuracy matrix");
  matrix->add_option("--data", o.data)->required();
  matrix->add_option("--word-emb", o.word_emb)->required();
  matrix->add_option("--visual-emb", o.visual_emb);
  matrix->add_option("--fractions", o.fractions)->delimiter(',')->capture_default_str();
  matrix->add_option("--models", o.models, "prior,cooc,ff,ffi,fused,fused-cooc")->capture_default_str();
  matrix->add_option("--ratios", o.ratios)->delimiter(',')->expected(3)->capture_default_str();
  matrix->add_option("--seed", o.seed, "Split seed")->capture_default_str();
  matrix->add_option("--subsample-seed", o.subsample_seed)->capture_default_str();
  matrix->add_option("--grid", o.grid)->delimiter(',')->capture_default_str();
  matrix->add_option("--alpha", o.alpha)->capture_default_str();
  matrix->add_option("--k", o.k, "k for top-k accuracy")->capture_default_str();
  matrix->add_option("--jobs", o.jobs, "Concurrent cells")->capture_default_str();
  matrix->add_flag("--no-position", o.no_position);
  matrix->add_option("--out", o.out, "CSV output (default stdout)");
  matrix->add_option("--json-out", o.json_out, "JSON report output");
  add_train_options(matrix, o);
  add_prior_options(matrix, o);
  add_data_filter(matrix, o);

  auto* gen = app.add_subcommand("generalize", "Unseen subject / object / relation experiments");
  gen->add_option("--data", o.data)->required();
  gen->add_option("--word-emb", o.word_emb)->required();
  gen->add_option("--visual-emb", o.visual_emb);
  gen->add_option("--modes", o.modes)->capture_default_str();
  gen->add_option("--models", o.gen_models)->capture_default_str();
  gen->add_option("--test-fraction", o.test_fraction)->capture_default_str();
  gen->add_option("--dev-fraction", o.dev_fraction)->capture_default_str();
  gen->add_option("--seed", o.seed)->capture_default_str();
  gen->add_option("--grid", o.grid)->delimiter(',')->capture_default_str();
  gen->add_option("--alpha", o.alpha)->capture_default_str();
  gen->add_option("--k", o.k)->capture_default_str();
  gen->add_option("--jobs", o.jobs)->capture_default_str();
  gen->add_option("--out", o.out);
  gen->add_option("--json-out", o.json_out);
  add_train_options(gen, o);
  add_prior_options(gen, o);
  add_data_filter(gen, o);

  auto* priors = app.add_subcommand("priors", "Relation-prior utilities");
  priors->require_subcommand(1);
  auto* exp = priors->add_subcommand("export", "Write the co-occurrence prior as a prior file");
  exp->add_option("--data", o.data)->required();
  exp->add_option("--alpha", o.alpha)->capture_default_str();
  exp->add_option("--top-k", o.top_k)->capture_default_str();
  exp->add_option("--out", o.out);
  add_data_filter(exp, o);

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.push_back("spatialrel");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (dump_config) {
    // Only the selected subcommand's keys; the output is a valid --config file.
    std::string prefix;
    for (const CLI::App* sub = &app; !sub->get_subcommands().empty();) {
      sub = sub->get_subcommands().front();
      prefix += sub->get_name() + ".";
    }
    std::istringstream all(app.config_to_str(true, false));
    for (std::string line; std::getline(all, line);) {
      if (line.rfind(prefix, 0) == 0) out << line << '\n';
    }
    return kExitOk;
  }

  try {
    if (split->parsed()) cmd_split(o, split, out);
    else if (synth->parsed()) cmd_synth(o, synth, out);
    else if (trn->parsed()) cmd_train(o, trn, out, err);
    else if (pred->parsed()) cmd_predict(o, pred, out);
    else if (base->parsed()) cmd_baseline(o, out);
    else if (sweep->parsed()) cmd_sweep(o, sweep, out);
    else if (matrix->parsed()) cmd_matrix(o, matrix, out);
    else if (gen->parsed()) cmd_generalize(o, gen, out);
    else if (exp->parsed()) cmd_priors_export(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace spatialrel
