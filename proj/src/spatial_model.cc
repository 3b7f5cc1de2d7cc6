#include "spatialrel/spatial_model.h"

#include <cmath>
#include <fstream>
#include <string>

#include "spatialrel/errors.h"
#include "spatialrel/rng.h"

namespace spatialrel {

using nlohmann::json;

namespace {

void append_entity(std::vector<double>& part, const Entity& e, const FeatureTables& tables,
                   bool use_position, FeatureStats* stats) {
  PhraseVector w = phrase_vector(*tables.word, e.text);
  if (w.oov && stats) ++stats->word_oov;
  part.insert(part.end(), w.vector.begin(), w.vector.end());
  if (use_position) {
    part.insert(part.end(), {e.box.cx, e.box.cy, e.box.hw, e.box.hh});
  } else {
    part.insert(part.end(), 4, 0.0);
  }
  if (tables.visual) {
    const auto* v = tables.visual->find(e.vis_key);
    if (v) {
      part.insert(part.end(), v->begin(), v->end());
    } else {
      if (stats) ++stats->visual_oov;
      part.insert(part.end(), tables.visual->dim(), 0.0);
    }
  }
}

void fill_uniform(Eigen::MatrixXd& m, double bound, Rng& rng) {
  // Row-major fill order so the draw sequence is independent of storage.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
  }
}

struct ForwardCache {
  Eigen::MatrixXd subject_pre;  // B x hidden
  Eigen::MatrixXd object_pre;
  Eigen::MatrixXd hidden;       // B x 2*hidden, rectified
  Eigen::MatrixXd logits;       // B x vocab
  Eigen::MatrixXd probs;
};

ForwardCache run_forward(const ModelParams& p, const Eigen::MatrixXd& xs, const Eigen::MatrixXd& xo) {
  if (static_cast<std::size_t>(xs.cols()) != p.in_dim() ||
      static_cast<std::size_t>(xo.cols()) != p.in_dim()) {
    throw ValidationError("feature width " + std::to_string(xs.cols()) + "/" +
                          std::to_string(xo.cols()) + " does not match model input " +
                          std::to_string(p.in_dim()));
  }
  const Eigen::Index h = static_cast<Eigen::Index>(p.hidden());
  ForwardCache c;
  c.subject_pre = (xs * p.subject_weight.transpose()).rowwise() + p.subject_bias.transpose();
  c.object_pre = (xo * p.object_weight.transpose()).rowwise() + p.object_bias.transpose();
  c.hidden.resize(xs.rows(), 2 * h);
  c.hidden.leftCols(h) = c.subject_pre.cwiseMax(0.0);
  c.hidden.rightCols(h) = c.object_pre.cwiseMax(0.0);
  c.logits = (c.hidden * p.head_weight.transpose()).rowwise() + p.head_bias.transpose();
  c.probs.resize(c.logits.rows(), c.logits.cols());
  for (Eigen::Index i = 0; i < c.logits.rows(); ++i) {
    const double m = c.logits.row(i).maxCoeff();
    auto e = (c.logits.row(i).array() - m).exp();
    c.probs.row(i) = e / e.sum();
  }
  return c;
}

Eigen::MatrixXd rows_to_matrix(std::span<const LabeledFeatures> batch, bool subject) {
  const std::size_t width =
      subject ? batch.front().features.subject_part.size() : batch.front().features.object_part.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& part = subject ? batch[i].features.subject_part : batch[i].features.object_part;
    if (part.size() != width) throw ValidationError("ragged feature batch");
    for (std::size_t k = 0; k < width; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = part[k];
  }
  return m;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j, std::size_t rows, std::size_t cols, const char* name) {
  if (!j.is_array() || j.size() != rows) {
    throw ParseError(std::string("checkpoint tensor ") + name + " has wrong row count");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw ParseError(std::string("checkpoint tensor ") + name + " has wrong column count");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j, std::size_t n, const char* name) {
  if (!j.is_array() || j.size() != n) {
    throw ParseError(std::string("checkpoint tensor ") + name + " has wrong length");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

double argmax_accuracy(const Eigen::MatrixXd& probs, const std::vector<std::size_t>& gold) {
  if (gold.empty()) return 0.0;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < probs.cols(); ++k) {
      if (probs(i, k) > probs(i, best)) best = k;
    }
    if (static_cast<std::size_t>(best) == gold[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

FeatureMatrix gather_rows(const FeatureMatrix& m, std::span<const std::size_t> rows) {
  FeatureMatrix out;
  out.subject.resize(static_cast<Eigen::Index>(rows.size()), m.subject.cols());
  out.object.resize(static_cast<Eigen::Index>(rows.size()), m.object.cols());
  out.gold.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.subject.row(static_cast<Eigen::Index>(i)) = m.subject.row(r);
    out.object.row(static_cast<Eigen::Index>(i)) = m.object.row(r);
    out.gold.push_back(m.gold[rows[i]]);
  }
  return out;
}

}  // namespace

FeatureVector build_features(const Triple& triple, const FeatureTables& tables, bool use_position,
                             FeatureStats* stats) {
  if (tables.word == nullptr) throw ValidationError("build_features needs a word table");
  FeatureVector f;
  f.with_image = tables.visual != nullptr;
  append_entity(f.subject_part, triple.subject, tables, use_position, stats);
  append_entity(f.object_part, triple.object, tables, use_position, stats);
  return f;
}

bool ModelParams::all_finite() const {
  return subject_weight.allFinite() && subject_bias.allFinite() && object_weight.allFinite() &&
         object_bias.allFinite() && head_weight.allFinite() && head_bias.allFinite();
}

void ModelParams::check_shapes() const {
  const auto h = subject_weight.rows();
  const auto in = subject_weight.cols();
  const bool ok = h > 0 && in > 0 && subject_bias.size() == h && object_weight.rows() == h &&
                  object_weight.cols() == in && object_bias.size() == h &&
                  head_weight.cols() == 2 * h && head_weight.rows() > 0 &&
                  head_bias.size() == head_weight.rows();
  if (!ok) throw ValidationError("inconsistent model parameter shapes");
}

ModelParams init_params(std::size_t in_dim, std::size_t hidden, std::size_t vocab, std::uint64_t seed) {
  if (in_dim == 0 || hidden == 0 || vocab == 0) throw ValidationError("model dims must be positive");
  const auto in = static_cast<Eigen::Index>(in_dim);
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto v = static_cast<Eigen::Index>(vocab);
  ModelParams p;
  Rng rng(seed);
  p.subject_weight.resize(h, in);
  p.object_weight.resize(h, in);
  p.head_weight.resize(v, 2 * h);
  const double branch_bound = std::sqrt(6.0 / static_cast<double>(in_dim + hidden));
  const double head_bound = std::sqrt(6.0 / static_cast<double>(2 * hidden + vocab));
  fill_uniform(p.subject_weight, branch_bound, rng);
  fill_uniform(p.object_weight, branch_bound, rng);
  fill_uniform(p.head_weight, head_bound, rng);
  p.subject_bias = Eigen::VectorXd::Zero(h);
  p.object_bias = Eigen::VectorXd::Zero(h);
  p.head_bias = Eigen::VectorXd::Zero(v);
  return p;
}

Eigen::MatrixXd forward_batch(const ModelParams& params, const FeatureMatrix& batch) {
  return run_forward(params, batch.subject, batch.object).probs;
}

std::vector<double> forward(const ModelParams& params, const FeatureVector& features) {
  params.check_shapes();
  if (features.subject_part.size() != params.in_dim() || features.object_part.size() != params.in_dim()) {
    throw ValidationError("feature length does not match model input " + std::to_string(params.in_dim()));
  }
  const auto in = static_cast<Eigen::Index>(params.in_dim());
  Eigen::MatrixXd xs = Eigen::Map<const Eigen::RowVectorXd>(features.subject_part.data(), in);
  Eigen::MatrixXd xo = Eigen::Map<const Eigen::RowVectorXd>(features.object_part.data(), in);
  Eigen::MatrixXd probs = run_forward(params, xs, xo).probs;
  return std::vector<double>(probs.data(), probs.data() + probs.size());
}

LossAndGrads loss_and_grads(const ModelParams& params, const FeatureMatrix& batch) {
  const auto n = batch.subject.rows();
  if (n == 0) throw ValidationError("loss_and_grads needs a non-empty batch");
  params.check_shapes();
  for (std::size_t g : batch.gold) {
    if (g >= params.vocab_size()) {
      throw ValidationError("gold index " + (g == FeatureMatrix::kNoGold ? std::string("<none>") : std::to_string(g)) +
                            " outside vocabulary of " + std::to_string(params.vocab_size()));
    }
  }
  ForwardCache c = run_forward(params, batch.subject, batch.object);
  const double inv_n = 1.0 / static_cast<double>(n);

  LossAndGrads out;
  double loss = 0.0;
  Eigen::MatrixXd d_logits = c.probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto g = static_cast<Eigen::Index>(batch.gold[static_cast<std::size_t>(i)]);
    const double m = c.logits.row(i).maxCoeff();
    const double lse = m + std::log((c.logits.row(i).array() - m).exp().sum());
    loss += lse - c.logits(i, g);
    d_logits(i, g) -= 1.0;
  }
  out.loss = loss * inv_n;
  d_logits *= inv_n;

  const Eigen::Index h = static_cast<Eigen::Index>(params.hidden());
  ModelParams& g = out.grads;
  g.head_weight = d_logits.transpose() * c.hidden;
  g.head_bias = d_logits.colwise().sum().transpose();
  const Eigen::MatrixXd d_hidden = d_logits * params.head_weight;
  const Eigen::MatrixXd d_subject =
      d_hidden.leftCols(h).cwiseProduct((c.subject_pre.array() > 0.0).cast<double>().matrix());
  const Eigen::MatrixXd d_object =
      d_hidden.rightCols(h).cwiseProduct((c.object_pre.array() > 0.0).cast<double>().matrix());
  g.subject_weight = d_subject.transpose() * batch.subject;
  g.subject_bias = d_subject.colwise().sum().transpose();
  g.object_weight = d_object.transpose() * batch.object;
  g.object_bias = d_object.colwise().sum().transpose();
  return out;
}

LossAndGrads loss_and_grads(const ModelParams& params, std::span<const LabeledFeatures> batch) {
  if (batch.empty()) throw ValidationError("loss_and_grads needs a non-empty batch");
  FeatureMatrix m;
  m.subject = rows_to_matrix(batch, true);
  m.object = rows_to_matrix(batch, false);
  for (const auto& ex : batch) m.gold.push_back(ex.gold);
  return loss_and_grads(params, m);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning rate must be positive");
  }
  if (batch_size == 0 || max_epochs == 0 || patience == 0 || hidden == 0) {
    throw ValidationError("batch size, epochs, patience and hidden size must be positive");
  }
}

json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},       {"patience", c.patience},
              {"seed", c.seed},                   {"hidden", c.hidden},
              {"with_image", c.with_image},       {"use_position", c.use_position}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.hidden = j.value("hidden", c.hidden);
  c.with_image = j.value("with_image", c.with_image);
  c.use_position = j.value("use_position", c.use_position);
  return c;
}

FeatureMatrix build_feature_matrix(const Dataset& data, const FeatureTables& tables,
                                   const FeatureSpec& spec, const RelationVocab& vocab,
                                   FeatureStats* stats) {
  if (tables.word == nullptr || tables.word->dim() != spec.word_dim) {
    throw ValidationError("word table missing or of the wrong dimension");
  }
  if (spec.with_image && (tables.visual == nullptr || tables.visual->dim() != spec.visual_dim)) {
    throw ValidationError("visual table missing or of the wrong dimension");
  }
  FeatureTables effective{tables.word, spec.with_image ? tables.visual : nullptr};
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto w = static_cast<Eigen::Index>(spec.part_dim());
  FeatureMatrix m;
  m.subject.resize(n, w);
  m.object.resize(n, w);
  m.gold.reserve(data.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Triple& t = data[static_cast<std::size_t>(i)];
    FeatureVector f = build_features(t, effective, spec.use_position, stats);
    m.subject.row(i) = Eigen::Map<const Eigen::RowVectorXd>(f.subject_part.data(), w);
    m.object.row(i) = Eigen::Map<const Eigen::RowVectorXd>(f.object_part.data(), w);
    m.gold.push_back(vocab.find(t.relation).value_or(FeatureMatrix::kNoGold));
  }
  return m;
}

ScoreDist SpatialModel::predict(const Triple& triple, const FeatureTables& tables) const {
  FeatureTables effective{tables.word, spec.with_image ? tables.visual : nullptr};
  if (spec.with_image && effective.visual == nullptr) {
    throw ValidationError("model expects a visual embedding table");
  }
  return ScoreDist{vocab, forward(params, build_features(triple, effective, spec.use_position)), true};
}

std::vector<ScoreDist> SpatialModel::predict_all(const Dataset& data, const FeatureTables& tables) const {
  std::vector<ScoreDist> out;
  if (data.empty()) return out;
  FeatureMatrix m = build_feature_matrix(data, tables, spec, *vocab);
  Eigen::MatrixXd probs = forward_batch(params, m);
  out.reserve(data.size());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(probs.cols()));
    for (Eigen::Index k = 0; k < probs.cols(); ++k) row[static_cast<std::size_t>(k)] = probs(i, k);
    out.push_back(ScoreDist{vocab, std::move(row), true});
  }
  return out;
}

TrainResult train(const Dataset& train_data, const Dataset& dev_data, const FeatureTables& tables,
                  const TrainConfig& config) {
  config.validate();
  if (train_data.empty()) throw ValidationError("training set is empty");
  if (dev_data.empty()) throw ValidationError("dev set is empty");
  if (tables.word == nullptr) throw ValidationError("training needs a word table");
  if (config.with_image && tables.visual == nullptr) {
    throw ValidationError("with_image training needs a visual table");
  }

  FeatureSpec spec;
  spec.word_dim = tables.word->dim();
  spec.with_image = config.with_image;
  spec.visual_dim = config.with_image ? tables.visual->dim() : 0;
  spec.use_position = config.use_position;

  auto vocab = train_data.shared_vocab();
  const FeatureMatrix train_m = build_feature_matrix(train_data, tables, spec, *vocab);
  const FeatureMatrix dev_m = build_feature_matrix(dev_data, tables, spec, *vocab);

  TrainResult result;
  ModelParams params = init_params(spec.part_dim(), config.hidden, vocab->size(), config.seed);
  ModelParams best = params;
  double best_acc = -1.0;
  std::size_t since_best = 0;

  Rng order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      LossAndGrads lg = loss_and_grads(params, gather_rows(train_m, rows));
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      loss_sum += lg.loss * static_cast<double>(rows.size());
      const double lr = config.learning_rate;
      params.subject_weight -= lr * lg.grads.subject_weight;
      params.subject_bias -= lr * lg.grads.subject_bias;
      params.object_weight -= lr * lg.grads.object_weight;
      params.object_bias -= lr * lg.grads.object_bias;
      params.head_weight -= lr * lg.grads.head_weight;
      params.head_bias -= lr * lg.grads.head_bias;
    }
    if (!params.all_finite()) {
      throw DivergenceError("non-finite parameters at epoch " + std::to_string(epoch));
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.dev_accuracy = argmax_accuracy(forward_batch(params, dev_m), dev_m.gold);
    result.history.push_back(stats);

    if (stats.dev_accuracy > best_acc) {
      best_acc = stats.dev_accuracy;
      best = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  result.model = SpatialModel{std::move(best), vocab, spec, config};
  return result;
}

json history_to_json(const std::vector<EpochStats>& history) {
  json out = json::array();
  for (const auto& e : history) {
    out.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_accuracy", e.dev_accuracy}});
  }
  return out;
}

json model_to_json(const SpatialModel& model) {
  const auto& p = model.params;
  return json{
      {"format", "spatialrel-model/1"},
      {"dims",
       {{"in_dim", p.in_dim()},
        {"hidden", p.hidden()},
        {"vocab", p.vocab_size()},
        {"word_dim", model.spec.word_dim},
        {"visual_dim", model.spec.visual_dim},
        {"with_image", model.spec.with_image},
        {"use_position", model.spec.use_position}}},
      {"config", to_json(model.config)},
      {"relations", model.vocab->names()},
      {"tensors",
       {{"subject_weight", matrix_to_json(p.subject_weight)},
        {"subject_bias", vector_to_json(p.subject_bias)},
        {"object_weight", matrix_to_json(p.object_weight)},
        {"object_bias", vector_to_json(p.object_bias)},
        {"head_weight", matrix_to_json(p.head_weight)},
        {"head_bias", vector_to_json(p.head_bias)}}}};
}

SpatialModel model_from_json(const json& j) {
  try {
    if (j.at("format") != "spatialrel-model/1") throw ParseError("unknown checkpoint format");
    const json& d = j.at("dims");
    const auto in = d.at("in_dim").get<std::size_t>();
    const auto h = d.at("hidden").get<std::size_t>();
    const auto v = d.at("vocab").get<std::size_t>();
    SpatialModel m;
    m.spec.word_dim = d.at("word_dim").get<std::size_t>();
    m.spec.visual_dim = d.at("visual_dim").get<std::size_t>();
    m.spec.with_image = d.at("with_image").get<bool>();
    m.spec.use_position = d.at("use_position").get<bool>();
    if (m.spec.part_dim() != in) throw ParseError("checkpoint in_dim disagrees with feature layout");
    m.config = train_config_from_json(j.at("config"));
    auto names = j.at("relations").get<std::vector<std::string>>();
    auto vocab = std::make_shared<RelationVocab>(names);
    if (vocab->size() != v || names.size() != v) throw ParseError("checkpoint vocabulary size mismatch");
    m.vocab = std::move(vocab);
    const json& t = j.at("tensors");
    m.params.subject_weight = matrix_from_json(t.at("subject_weight"), h, in, "subject_weight");
    m.params.subject_bias = vector_from_json(t.at("subject_bias"), h, "subject_bias");
    m.params.object_weight = matrix_from_json(t.at("object_weight"), h, in, "object_weight");
    m.params.object_bias = vector_from_json(t.at("object_bias"), h, "object_bias");
    m.params.head_weight = matrix_from_json(t.at("head_weight"), v, 2 * h, "head_weight");
    m.params.head_bias = vector_from_json(t.at("head_bias"), v, "head_bias");
    m.params.check_shapes();
    if (!m.params.all_finite()) throw ParseError("checkpoint contains non-finite values");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_model(const SpatialModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << model_to_json(model).dump() << '\n';
}

SpatialModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
  return model_from_json(j);
}

}  // namespace spatialrel
