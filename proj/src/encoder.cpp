#include "chromalog/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "chromalog/random.hpp"
#include "chromalog/textio.hpp"

namespace chromalog {

QueryTrunk::QueryTrunk(std::shared_ptr<const EmbeddingProvider> provider, int hidden)
    : provider_(std::move(provider)), lstm_(provider_->dimension(), hidden) {}

Vec QueryTrunk::forward(std::span<const std::string> tokens, Trace* trace) const {
  const auto seq = embed_tokens(tokens, *provider_);
  return lstm_.encode(seq, trace ? &trace->lstm : nullptr);
}

DenseStack make_colour_head(int input_dim, const EncoderConfig& cfg) {
  std::vector<LayerSpec> layers;
  for (int u : cfg.head_layers) layers.push_back({u, Activation::Relu});
  layers.push_back({cfg.bins, Activation::Identity});
  return DenseStack(input_dim, std::move(layers), "head");
}

Mat softmax_columns(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) out.col(j) = softmax(logits.col(j));
  return out;
}

ColourEncoderModel::ColourEncoderModel(std::shared_ptr<const EmbeddingProvider> provider, const EncoderConfig& cfg,
                                       std::uint64_t seed)
    : cfg_(cfg), trunk_(std::move(provider), cfg.hidden), head_(make_colour_head(trunk_.output_dim(), cfg)) {
  if (cfg.hidden <= 0 || cfg.bins <= 0) throw ValidationError("encoder dimensions must be positive");
  init_uniform(params(), seed);
}

ParamList ColourEncoderModel::params() {
  ParamList out = trunk_.params();
  for (Parameter* p : head_.params()) out.push_back(p);
  return out;
}

Vec ColourEncoderModel::predict_tokens(std::span<const std::string> tokens) const {
  const Vec h = trunk_.forward(tokens);
  const Mat logits = head_.forward(h);
  return softmax(logits.col(0));
}

ColourHistogram ColourEncoderModel::predict(std::string_view raw_query) const {
  const auto tokens = preprocess_query(raw_query);
  const Vec q = predict_tokens(tokens);
  std::vector<double> w(q.data(), q.data() + q.size());
  // Renormalise away rounding so the histogram invariant holds.
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= s;
  return ColourHistogram(std::move(w));
}

double ColourEncoderModel::batch_loss(std::span<const std::vector<std::string>> tokens,
                                      std::span<const ColourHistogram> targets, const ColourDistance& objective,
                                      bool accumulate) {
  const std::size_t n = tokens.size();
  if (n == 0) return 0.0;
  if (targets.size() != n) throw ValidationError("tokens and targets differ in length");

  std::vector<QueryTrunk::Trace> traces(accumulate ? n : 0);
  Mat feats(trunk_.output_dim(), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    feats.col(static_cast<Eigen::Index>(k)) = trunk_.forward(tokens[k], accumulate ? &traces[k] : nullptr);
  }
  DenseStack::Cache cache;
  const Mat q = softmax_columns(head_.forward(feats, accumulate ? &cache : nullptr));
  const auto b = static_cast<std::size_t>(q.rows());

  double loss = 0.0;
  Mat dlogits(q.rows(), q.cols());
  for (std::size_t k = 0; k < n; ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    std::span<const double> qk(q.col(col).data(), b);
    if (targets[k].size() != b) throw ValidationError("target histogram has the wrong number of bins");
    if (!accumulate) {
      loss += objective(targets[k], qk);
      continue;
    }
    const auto g = objective.gradients(targets[k], qk);
    loss += g.value;
    const Vec dq = Eigen::Map<const Vec>(g.dq.data(), static_cast<Eigen::Index>(b)) / static_cast<double>(n);
    dlogits.col(col) = softmax_backward(q.col(col), dq);
  }
  if (accumulate) {
    const Mat dfeats = head_.backward(cache, dlogits);
    for (std::size_t k = 0; k < n; ++k) trunk_.backward(traces[k], dfeats.col(static_cast<Eigen::Index>(k)));
    trunk_.flush_grads();
  }
  return loss / static_cast<double>(n);
}

Checkpoint ColourEncoderModel::to_checkpoint() const {
  Checkpoint ck;
  ck.meta["kind"] = "encoder";
  ck.meta["hidden"] = std::to_string(cfg_.hidden);
  ck.meta["bins"] = std::to_string(cfg_.bins);
  ck.meta["embedding_dim"] = std::to_string(trunk_.provider().dimension());
  std::string layers;
  for (int u : cfg_.head_layers) layers += (layers.empty() ? "" : ",") + std::to_string(u);
  ck.meta["head_layers"] = layers;
  store_params(ck, const_cast<ColourEncoderModel*>(this)->params());
  return ck;
}

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = s.find(',', i);
    if (j == std::string::npos) j = s.size();
    out.push_back(textio::parse_int<int>(std::string_view(s).substr(i, j - i)));
    i = j + 1;
  }
  return out;
}

}  // namespace

ColourEncoderModel ColourEncoderModel::from_checkpoint(const Checkpoint& ck,
                                                       std::shared_ptr<const EmbeddingProvider> provider) {
  if (ck.get("kind") != "encoder") throw FormatError("checkpoint is not a colour encoder");
  EncoderConfig cfg;
  cfg.hidden = textio::parse_int<int>(ck.get("hidden"));
  cfg.bins = textio::parse_int<int>(ck.get("bins"));
  cfg.head_layers = parse_int_list(ck.get("head_layers"));
  const int dim = textio::parse_int<int>(ck.get("embedding_dim"));
  if (dim != provider->dimension()) {
    throw ValidationError("checkpoint expects " + std::to_string(dim) + "-d embeddings, provider gives " +
                          std::to_string(provider->dimension()));
  }
  ColourEncoderModel m(std::move(provider), cfg, 0);
  restore_params(ck, m.params());
  return m;
}

namespace {

struct Examples {
  std::vector<std::vector<std::string>> tokens;
  std::vector<ColourHistogram> targets;
};

Examples gather(std::span<const QueryColourLabel> labels, std::span<const std::string> queries, bool drop_empty) {
  std::unordered_map<std::string, const QueryColourLabel*> by_query;
  for (const auto& l : labels) by_query.emplace(l.query, &l);
  Examples ex;
  for (const auto& q : queries) {
    auto it = by_query.find(q);
    if (it == by_query.end()) throw ValidationError("no label for query '" + q + "'");
    auto tokens = preprocess_query(q);
    if (drop_empty && tokens.empty()) continue;
    ex.tokens.push_back(std::move(tokens));
    ex.targets.push_back(it->second->label);
  }
  return ex;
}

constexpr std::size_t kEvalChunk = 256;

double mean_loss(ColourEncoderModel& model, const Examples& ex, const ColourDistance& metric) {
  const std::size_t n = ex.tokens.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (std::size_t s = 0; s < n; s += kEvalChunk) {
    const std::size_t len = std::min(kEvalChunk, n - s);
    acc += model.batch_loss(std::span(ex.tokens).subspan(s, len), std::span(ex.targets).subspan(s, len), metric,
                            false) *
           static_cast<double>(len);
  }
  return acc / static_cast<double>(n);
}

}  // namespace

EncoderTrainResult train_encoder(std::span<const QueryColourLabel> labels, const DatasetSplit& split,
                                 DistanceKind objective, const TrainConfig& cfg,
                                 std::shared_ptr<const EmbeddingProvider> provider, const EncoderConfig& arch,
                                 const Palette& palette) {
  cfg.validate();
  if (static_cast<std::size_t>(arch.bins) != palette.size()) {
    throw ValidationError("encoder has " + std::to_string(arch.bins) + " bins but the palette has " +
                          std::to_string(palette.size()));
  }
  const Examples train = gather(labels, split.train, true);
  const Examples val = gather(labels, split.validation, false);
  if (train.tokens.empty()) throw ValidationError("no training queries");

  ColourEncoderModel model(std::move(provider), arch, derive_seed(cfg.seed, 0x1417));
  const ColourDistance dist(objective, &palette);
  const ParamList params = model.params();

  TrainCurves curves;
  std::vector<Mat> best;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train.tokens.size());
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, 0xe90c, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);

    for (std::size_t s = 0; s < order.size(); s += batch) {
      const std::size_t len = std::min(batch, order.size() - s);
      std::vector<std::vector<std::string>> bt;
      std::vector<ColourHistogram> by;
      for (std::size_t k = s; k < s + len; ++k) {
        bt.push_back(train.tokens[order[k]]);
        by.push_back(train.targets[order[k]]);
      }
      zero_grads(params);
      model.batch_loss(bt, by, dist, true);
      sgd_step(params, cfg.learning_rate);
    }

    const double tl = mean_loss(model, train, dist);
    const double vl = val.tokens.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_loss(model, val, dist);
    curves.train.push_back(tl);
    curves.validation.push_back(vl);
    const double score = val.tokens.empty() ? tl : vl;
    if (score < best_loss) {
      best_loss = score;
      best = snapshot(params);
      curves.best_epoch = static_cast<std::size_t>(epoch);
    }
  }
  if (!best.empty()) restore(params, best);
  zero_grads(params);
  return {std::move(model), std::move(curves)};
}

double mean_encoder_loss(const ColourEncoderModel& model, std::span<const QueryColourLabel> labels,
                         const ColourDistance& metric) {
  if (labels.empty()) throw ValidationError("no labels to evaluate");
  std::vector<std::string> queries;
  for (const auto& l : labels) queries.push_back(l.query);
  const Examples ex = gather(labels, queries, false);
  return mean_loss(const_cast<ColourEncoderModel&>(model), ex, metric);
}

std::vector<XkcdEntry> read_xkcd(std::istream& is) {
  std::vector<XkcdEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw FormatError("expected name<TAB>#rrggbb", lineno);
    XkcdEntry e;
    e.name = line.substr(0, tab);
    try {
      e.rgb = parse_hex(line.substr(tab + 1));
    } catch (const std::exception& ex) {
      throw FormatError(ex.what(), lineno);
    }
    if (e.name.empty()) throw FormatError("empty colour name", lineno);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<XkcdEntry> load_xkcd(const std::string& path) {
  auto in = textio::open_in(path);
  return read_xkcd(in);
}

double xkcd_evaluate(const ColourEncoderModel& model, std::span<const XkcdEntry> entries, const Palette& palette) {
  return xkcd_mean(entries, palette, [&](const std::string& name) {
    const auto tokens = preprocess_query(name);
    const Vec q = model.predict_tokens(tokens);
    return std::vector<double>(q.data(), q.data() + q.size());
  });
}

bool EvalMatrix::diagonal_dominant() const {
  for (int col = 0; col < 3; ++col) {
    for (int row = 0; row < 3; ++row) {
      if (row != col && test[row][col] < test[col][col]) return false;
    }
  }
  return true;
}

PredictionTable predict_all(const ColourEncoderModel& model, std::span<const QueryColourLabel> labels) {
  PredictionTable out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    const Vec q = model.predict_tokens(preprocess_query(l.query));
    out.emplace_back(l.query, std::vector<double>(q.data(), q.data() + q.size()));
  }
  return out;
}

void write_predictions(std::ostream& os, const PredictionTable& preds) {
  for (const auto& [query, w] : preds) {
    os << query << '\t';
    for (std::size_t i = 0; i < w.size(); ++i) os << (i ? " " : "") << textio::format_double(w[i]);
    os << '\n';
  }
}

PredictionTable read_predictions(std::istream& is) {
  PredictionTable out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("expected query<TAB>weights", lineno);
    std::vector<double> w;
    for (auto tok : textio::split_ws(std::string_view(line).substr(tab + 1))) w.push_back(textio::parse_double(tok, lineno));
    if (!out.empty() && w.size() != out.front().second.size()) throw FormatError("inconsistent bin count", lineno);
    try {
      ColourHistogram check(w);
    } catch (const std::exception& e) {
      throw FormatError(e.what(), lineno);
    }
    out.emplace_back(line.substr(0, tab), std::move(w));
  }
  return out;
}

std::array<double, 3> metric_row(const PredictionTable& preds, std::span<const QueryColourLabel> labels,
                                 const Palette& palette) {
  if (labels.empty()) throw ValidationError("no labels to evaluate");
  std::unordered_map<std::string, const std::vector<double>*> by_query;
  for (const auto& [q, w] : preds) by_query.emplace(q, &w);
  std::array<double, 3> row{};
  for (int m = 0; m < 3; ++m) {
    const ColourDistance metric(kAllDistanceKinds[m], &palette);
    double acc = 0.0;
    for (const auto& l : labels) {
      auto it = by_query.find(l.query);
      if (it == by_query.end()) throw ValidationError("no prediction for query '" + l.query + "'");
      if (it->second->size() != l.label.size()) throw ValidationError("prediction has the wrong number of bins");
      acc += metric(l.label, *it->second);
    }
    row[m] = acc / static_cast<double>(labels.size());
  }
  return row;
}

EvalMatrix evaluate_encoder(std::span<const ColourEncoderModel* const> models, std::span<const QueryColourLabel> test,
                            const Palette& palette, std::span<const XkcdEntry> xkcd,
                            std::span<const TrainCurves> curves) {
  if (models.size() != 3) throw ValidationError("expected one model per objective (kl, hi, luv)");
  if (!curves.empty() && curves.size() != 3) throw ValidationError("expected one set of curves per objective");
  EvalMatrix m;
  for (int r = 0; r < 3; ++r) {
    m.test[r] = metric_row(predict_all(*models[r], test), test, palette);
    if (!xkcd.empty()) m.xkcd[r] = xkcd_evaluate(*models[r], xkcd, palette);
    if (!curves.empty()) {
      const auto& c = curves[r];
      m.train_loss[r] = c.train.empty() ? 0.0 : c.train[c.best_epoch];
      m.validation_loss[r] = c.validation.empty() ? 0.0 : c.validation[c.best_epoch];
    }
  }
  return m;
}

std::string format_eval_matrix(const EvalMatrix& m) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(10) << "trained" << std::right;
  for (auto k : kAllDistanceKinds) os << std::setw(12) << ("test_" + to_string(k));
  os << std::setw(12) << "xkcd" << std::setw(12) << "train" << std::setw(12) << "valid" << '\n';
  for (int r = 0; r < 3; ++r) {
    os << std::left << std::setw(10) << to_string(kAllDistanceKinds[r]) << std::right;
    for (int c = 0; c < 3; ++c) os << std::setw(12) << m.test[r][c];
    if (m.xkcd[r]) {
      os << std::setw(12) << *m.xkcd[r];
    } else {
      os << std::setw(12) << "-";
    }
    os << std::setw(12) << m.train_loss[r] << std::setw(12) << m.validation_loss[r] << '\n';
  }
  return os.str();
}

}  // namespace chromalog
