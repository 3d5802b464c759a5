#include "chromalog/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <omp.h>

#include "chromalog/error.hpp"
#include "chromalog/random.hpp"
#include "chromalog/textio.hpp"

namespace chromalog {

int FeatureVariant::extra_width(int bins) const {
  switch (kind) {
    case Kind::Baseline:
      return 0;
    case Kind::ColourRepr:
      return 2 * bins;
    case Kind::ColourDistance:
      return 1;
  }
  return 0;
}

std::string to_string(const FeatureVariant& v) {
  switch (v.kind) {
    case FeatureVariant::Kind::Baseline:
      return "baseline";
    case FeatureVariant::Kind::ColourRepr:
      return "repr";
    case FeatureVariant::Kind::ColourDistance:
      return "dist:" + to_string(v.distance);
  }
  return "baseline";
}

FeatureVariant parse_feature_variant(std::string_view s) {
  if (s == "baseline") return FeatureVariant::baseline();
  if (s == "repr") return FeatureVariant::repr();
  if (s.substr(0, 5) == "dist:") return FeatureVariant::dist(parse_distance_kind(s.substr(5)));
  throw ValidationError("unknown variant '" + std::string(s) + "' (expected baseline, repr or dist:<kind>)");
}

// ---------------------------------------------------------------- image side

HistogramProjectionContent::HistogramProjectionContent(int bins, int proj_dim, int side, std::uint64_t seed)
    : bins_(bins), proj_dim_(proj_dim), side_(side) {
  if (bins <= 0 || proj_dim < 0 || side <= 0) throw ValidationError("content provider dimensions must be positive");
  const int in = 3 * side * side;
  projection_.resize(proj_dim, in);
  Rng rng(derive_seed(seed, 0xc0de));
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index c = 0; c < projection_.cols(); ++c) {
    for (Eigen::Index r = 0; r < projection_.rows(); ++r) projection_(r, c) = rng.normal() * scale;
  }
}

Vec HistogramProjectionContent::embed(const std::string&, const PixelImage* pixels, const ColourHistogram& hist) const {
  if (hist.size() != static_cast<std::size_t>(bins_)) throw ValidationError("histogram has the wrong number of bins");
  Vec out = Vec::Zero(dimension());
  for (int i = 0; i < bins_; ++i) out[i] = hist[static_cast<std::size_t>(i)];
  if (!pixels || proj_dim_ == 0) return out;

  Vec small = Vec::Zero(3 * side_ * side_);
  for (int by = 0; by < side_; ++by) {
    const int y0 = by * pixels->height / side_;
    const int y1 = std::max(y0 + 1, (by + 1) * pixels->height / side_);
    for (int bx = 0; bx < side_; ++bx) {
      const int x0 = bx * pixels->width / side_;
      const int x1 = std::max(x0 + 1, (bx + 1) * pixels->width / side_);
      double acc[3] = {0, 0, 0};
      int n = 0;
      for (int y = y0; y < std::min(y1, pixels->height); ++y) {
        for (int x = x0; x < std::min(x1, pixels->width); ++x) {
          const auto& p = pixels->pixels[static_cast<std::size_t>(y) * pixels->width + x];
          acc[0] += p.r;
          acc[1] += p.g;
          acc[2] += p.b;
          ++n;
        }
      }
      const int base = 3 * (by * side_ + bx);
      for (int k = 0; k < 3; ++k) small[base + k] = n ? acc[k] / (255.0 * n) : 0.0;
    }
  }
  out.tail(proj_dim_) = projection_ * small;
  return out;
}

PrecomputedContent::PrecomputedContent(std::unordered_map<std::string, Vec> vectors, int dim)
    : vectors_(std::move(vectors)), dim_(dim) {
  for (const auto& [id, v] : vectors_) {
    if (v.size() != dim) throw ValidationError("content vector for '" + id + "' has the wrong dimension");
  }
}

Vec PrecomputedContent::embed(const std::string& image_id, const PixelImage*, const ColourHistogram&) const {
  auto it = vectors_.find(image_id);
  if (it == vectors_.end()) throw ValidationError("no content vector for image '" + image_id + "'");
  return it->second;
}

int FeatureStore::feature_dim() const {
  if (features.empty()) return 0;
  const auto& f = features.front();
  return static_cast<int>(f.content.size() + f.caption.size() + f.tags.size());
}

std::optional<std::size_t> FeatureStore::find(const std::string& id) const {
  auto it = index.find(id);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

FeatureStore build_feature_store(std::span<const ImageMeta> catalog, const HistogramTable& hists,
                                 const ContentProvider& content, const EmbeddingProvider& words,
                                 const std::unordered_map<std::string, PixelImage>* pixels) {
  FeatureStore store;
  for (const auto& meta : catalog) {
    auto h = hists.find(meta.image_id);
    if (h == hists.end()) continue;
    const PixelImage* px = nullptr;
    if (pixels) {
      auto it = pixels->find(meta.image_id);
      if (it != pixels->end()) px = &it->second;
    }
    std::vector<std::string> tag_tokens;
    for (const auto& t : meta.tags) {
      for (auto& tok : preprocess_query(t)) tag_tokens.push_back(std::move(tok));
    }
    ImageFeatures f;
    f.content = content.embed(meta.image_id, px, h->second);
    f.caption = mean_embedding(preprocess_query(meta.caption), words);
    f.tags = mean_embedding(tag_tokens, words);
    f.histogram = h->second;
    if (!store.index.emplace(meta.image_id, store.ids.size()).second) {
      throw ValidationError("duplicate image id '" + meta.image_id + "'");
    }
    store.ids.push_back(meta.image_id);
    store.features.push_back(std::move(f));
  }
  return store;
}

// ---------------------------------------------------------------- data

std::size_t RankingQuery::clicked_count() const {
  return static_cast<std::size_t>(std::count(clicked.begin(), clicked.end(), char{1}));
}

bool RankingQuery::usable() const {
  const std::size_t c = clicked_count();
  return c > 0 && c < clicked.size();
}

RankingData build_ranking_data(std::span<const ImpressionRecord> records, const DatasetSplit& split,
                               const FeatureStore& store) {
  std::unordered_map<std::string, int> part;
  for (const auto& q : split.train) part.emplace(q, 0);
  for (const auto& q : split.validation) part.emplace(q, 1);
  for (const auto& q : split.test) part.emplace(q, 2);

  RankingData data;
  for (const auto& rec : records) {
    const std::string key = normalise_query(rec.query);
    auto it = part.find(key);
    if (it == part.end()) continue;
    RankingQuery q;
    q.query = key;
    q.tokens = preprocess_query(key);
    for (const auto& r : rec.results) {
      auto idx = store.find(r.image_id);
      if (!idx) {
        ++data.dropped_images;
        continue;
      }
      q.images.push_back(*idx);
      q.clicked.push_back(r.clicked ? 1 : 0);
    }
    auto& dst = it->second == 0 ? data.train : it->second == 1 ? data.validation : data.test;
    dst.push_back(std::move(q));
  }
  return data;
}

// ---------------------------------------------------------------- loss

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_ranking_input(std::span<const double> scores, std::span<const char> clicked) {
  if (scores.size() != clicked.size()) throw ValidationError("scores and click flags differ in length");
  const auto c = std::count_if(clicked.begin(), clicked.end(), [](char x) { return x != 0; });
  if (c == 0 || static_cast<std::size_t>(c) == clicked.size()) {
    throw ValidationError("ranking needs at least one clicked and one unclicked image");
  }
}

}  // namespace

double ranknet_loss(std::span<const double> scores, std::span<const char> clicked) {
  std::vector<double> g;
  return ranknet_loss(scores, clicked, g);
}

double ranknet_loss(std::span<const double> scores, std::span<const char> clicked, std::vector<double>& grad) {
  check_ranking_input(scores, clicked);
  const std::size_t m = scores.size();
  const double norm = 1.0 / static_cast<double>(m * m);
  grad.assign(m, 0.0);
  double loss = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    if (!clicked[j]) continue;
    for (std::size_t k = 0; k < m; ++k) {
      if (clicked[k]) continue;
      const double diff = scores[j] - scores[k];
      loss += softplus(-diff);
      const double w = sigmoid(-diff) * norm;
      grad[j] -= w;
      grad[k] += w;
    }
  }
  return loss * norm;
}

// ---------------------------------------------------------------- model

void JointConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be positive");
  train.validate();
}

namespace {

std::vector<LayerSpec> relu_then(const std::vector<int>& hidden, int out) {
  std::vector<LayerSpec> layers;
  for (int u : hidden) layers.push_back({u, Activation::Relu});
  layers.push_back({out, Activation::Identity});
  return layers;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (int u : v) s += (s.empty() ? "" : ",") + std::to_string(u);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
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

CrossModalRanker::CrossModalRanker(std::shared_ptr<const EmbeddingProvider> words, const RankerConfig& cfg,
                                   int image_feature_dim, const Palette* palette, std::uint64_t seed,
                                   const JointConfig* joint)
    : cfg_(cfg), image_dim_(image_feature_dim), palette_(palette), trunk_(std::move(words), cfg.hidden) {
  if (cfg.hidden <= 0 || cfg.bins <= 0) throw ValidationError("ranker dimensions must be positive");
  if (image_feature_dim <= 0) throw ValidationError("image feature width must be positive");
  if (cfg.variant.needs_colour() && palette && palette->size() != static_cast<std::size_t>(cfg.bins)) {
    throw ValidationError("palette size does not match the ranker's bin count");
  }
  if (cfg.variant.kind == FeatureVariant::Kind::ColourDistance && cfg.variant.distance == DistanceKind::Luv &&
      !palette) {
    throw ValidationError("the luv distance feature needs a palette");
  }
  const int base = trunk_.output_dim() + image_feature_dim;
  fusion_ = DenseStack(base + cfg.variant.extra_width(cfg.bins), relu_then(cfg.fusion_layers, 1), "fusion");
  // Base columns are drawn identically for every variant.
  fusion_.weight(0).fan_in = base;
  fusion_.bias(0).fan_in = base;
  if (joint) {
    joint->validate();
    joint_ = *joint;
    head_ = DenseStack(trunk_.output_dim(), relu_then(joint->head_layers, cfg.bins), "colour");
  }
  init_uniform(params(), seed);
  if (cfg.zero_colour_weights) {
    const auto [first, count] = colour_input_columns();
    fusion_.weight(0).value.middleCols(first, count).setZero();
  }
}

ParamList CrossModalRanker::params() {
  ParamList p = trunk_.params();
  for (Parameter* q : fusion_.params()) p.push_back(q);
  if (joint_) {
    for (Parameter* q : head_.params()) p.push_back(q);
  }
  return p;
}

ParamList CrossModalRanker::colour_head_params() { return joint_ ? head_.params() : ParamList{}; }

std::pair<int, int> CrossModalRanker::colour_input_columns() const {
  const int w = cfg_.variant.extra_width(cfg_.bins);
  return {fusion_.input_dim() - w, w};
}

void CrossModalRanker::mask_colour_grads() {
  const auto [first, count] = colour_input_columns();
  if (count > 0) fusion_.weight(0).grad.middleCols(first, count).setZero();
}

std::optional<Vec> CrossModalRanker::query_colour(std::span<const std::string> tokens,
                                                  const ColourHistogram* label) const {
  if (joint_) {
    const Vec h = trunk_.forward(tokens);
    return softmax(head_.forward(h).col(0));
  }
  if (!cfg_.variant.needs_colour() || !label) return std::nullopt;
  return Eigen::Map<const Vec>(label->weights().data(), static_cast<Eigen::Index>(label->size()));
}

Mat CrossModalRanker::build_inputs(const Vec& qfeat, std::span<const ImageFeatures* const> images,
                                   const Vec* colour) const {
  const auto m = static_cast<Eigen::Index>(images.size());
  Mat x(fusion_.input_dim(), m);
  const auto qd = qfeat.size();
  const auto& variant = cfg_.variant;
  const auto bins = static_cast<Eigen::Index>(cfg_.bins);
  if (variant.needs_colour()) {
    if (!colour) throw ValidationError("this ranker variant needs a query colour");
    if (colour->size() != bins) throw ValidationError("query colour has the wrong number of bins");
  }
  const ColourDistance dist(variant.distance, palette_);
  for (Eigen::Index i = 0; i < m; ++i) {
    const ImageFeatures& f = *images[static_cast<std::size_t>(i)];
    const auto cd = f.content.size(), pd = f.caption.size(), td = f.tags.size();
    if (cd + pd + td != image_dim_) throw ValidationError("image features have the wrong width");
    auto col = x.col(i);
    col.head(qd) = qfeat;
    col.segment(qd, cd) = f.content;
    col.segment(qd + cd, pd) = f.caption;
    col.segment(qd + cd + pd, td) = f.tags;
    const Eigen::Index e = qd + image_dim_;
    if (variant.kind == FeatureVariant::Kind::ColourRepr) {
      col.segment(e, bins) = *colour;
      for (Eigen::Index b = 0; b < bins; ++b) col[e + bins + b] = f.histogram[static_cast<std::size_t>(b)];
    } else if (variant.kind == FeatureVariant::Kind::ColourDistance) {
      if (f.histogram.size() != static_cast<std::size_t>(bins)) {
        throw ValidationError("image histogram has the wrong number of bins");
      }
      col[e] = dist(std::span<const double>(colour->data(), static_cast<std::size_t>(bins)), f.histogram);
    }
  }
  return x;
}

std::vector<double> CrossModalRanker::score_images(std::span<const std::string> tokens,
                                                   std::span<const ImageFeatures* const> images,
                                                   const ColourHistogram* colour) const {
  if (images.empty()) return {};
  const Vec qfeat = trunk_.forward(tokens);
  std::optional<Vec> c;
  if (joint_) {
    c = softmax(head_.forward(qfeat).col(0));
  } else {
    c = query_colour(tokens, colour);
  }
  const Mat s = fusion_.forward(build_inputs(qfeat, images, c ? &*c : nullptr));
  return std::vector<double>(s.data(), s.data() + s.size());
}

double CrossModalRanker::score(std::string_view raw_query, const ImageFeatures& image,
                               const ColourHistogram* colour) const {
  const auto tokens = preprocess_query(raw_query);
  const ImageFeatures* ptr = &image;
  return score_images(tokens, std::span(&ptr, 1), colour)[0];
}

CrossModalRanker::QueryLoss CrossModalRanker::query_loss(const RankingQuery& q, const FeatureStore& store,
                                                         const ColourHistogram* label, bool accumulate) {
  std::vector<const ImageFeatures*> images;
  images.reserve(q.images.size());
  for (std::size_t idx : q.images) images.push_back(&store.features.at(idx));
  if (joint_ && !label) throw ValidationError("joint training needs a colour label for '" + q.query + "'");

  QueryTrunk::Trace trace;
  const Vec qfeat = trunk_.forward(q.tokens, accumulate ? &trace : nullptr);
  DenseStack::Cache head_cache;
  std::optional<Vec> colour;
  if (joint_) {
    colour = softmax(head_.forward(qfeat, accumulate ? &head_cache : nullptr).col(0));
  } else {
    colour = query_colour(q.tokens, label);
  }
  const Mat x = build_inputs(qfeat, images, colour ? &*colour : nullptr);
  DenseStack::Cache cache;
  const Mat s = fusion_.forward(x, accumulate ? &cache : nullptr);

  QueryLoss out;
  std::vector<double> ds;
  out.ranking = ranknet_loss(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), q.clicked, ds);
  out.total = out.ranking;

  const auto bins = static_cast<std::size_t>(cfg_.bins);
  DistanceGradients colour_grads;
  double weight = 0.0;
  if (joint_) {
    const ColourDistance objective(joint_->colour_objective, palette_);
    const std::span<const double> pred(colour->data(), bins);
    weight = 1.0 / (1.0 + joint_->alpha);
    if (accumulate) {
      colour_grads = objective.gradients(label->weights(), pred);
      out.colour = colour_grads.value;
    } else {
      out.colour = objective(label->weights(), pred);
    }
    out.total += weight * out.colour;
  }
  if (!accumulate) return out;

  const Mat dx = fusion_.backward(cache, Eigen::Map<const Mat>(ds.data(), 1, static_cast<Eigen::Index>(ds.size())));
  const auto qd = qfeat.size();
  Vec dq = dx.topRows(qd).rowwise().sum();
  if (joint_) {
    Vec dp = weight * Eigen::Map<const Vec>(colour_grads.dq.data(), static_cast<Eigen::Index>(bins));
    const Eigen::Index e = qd + image_dim_;
    if (cfg_.variant.kind == FeatureVariant::Kind::ColourDistance) {
      const ColourDistance dist(cfg_.variant.distance, palette_);
      const std::span<const double> pred(colour->data(), bins);
      for (std::size_t i = 0; i < images.size(); ++i) {
        const double up = dx(e, static_cast<Eigen::Index>(i));
        if (up == 0.0) continue;
        const auto g = dist.gradients(pred, images[i]->histogram);
        dp += up * Eigen::Map<const Vec>(g.dp.data(), static_cast<Eigen::Index>(bins));
      }
    } else if (cfg_.variant.kind == FeatureVariant::Kind::ColourRepr) {
      dp += dx.middleRows(e, static_cast<Eigen::Index>(bins)).rowwise().sum();
    }
    const Vec dlogits = softmax_backward(*colour, dp);
    dq += head_.backward(head_cache, dlogits).col(0);
  }
  trunk_.backward(trace, dq);
  trunk_.flush_grads();
  if (cfg_.zero_colour_weights) mask_colour_grads();
  return out;
}

Checkpoint CrossModalRanker::to_checkpoint() const {
  Checkpoint ck;
  ck.meta["kind"] = "ranker";
  ck.meta["variant"] = to_string(cfg_.variant);
  ck.meta["hidden"] = std::to_string(cfg_.hidden);
  ck.meta["bins"] = std::to_string(cfg_.bins);
  ck.meta["fusion_layers"] = join_ints(cfg_.fusion_layers);
  ck.meta["zero_colour_weights"] = cfg_.zero_colour_weights ? "1" : "0";
  ck.meta["image_dim"] = std::to_string(image_dim_);
  ck.meta["embedding_dim"] = std::to_string(trunk_.provider().dimension());
  ck.meta["joint"] = joint_ ? "1" : "0";
  if (joint_) {
    ck.meta["alpha"] = textio::format_double(joint_->alpha);
    ck.meta["colour_objective"] = to_string(joint_->colour_objective);
    ck.meta["head_layers"] = join_ints(joint_->head_layers);
  }
  store_params(ck, const_cast<CrossModalRanker*>(this)->params());
  return ck;
}

CrossModalRanker CrossModalRanker::from_checkpoint(const Checkpoint& ck, std::shared_ptr<const EmbeddingProvider> words,
                                                   const Palette* palette) {
  if (ck.get("kind") != "ranker") throw FormatError("checkpoint is not a ranker");
  RankerConfig cfg;
  cfg.variant = parse_feature_variant(ck.get("variant"));
  cfg.hidden = textio::parse_int<int>(ck.get("hidden"));
  cfg.bins = textio::parse_int<int>(ck.get("bins"));
  cfg.fusion_layers = split_ints(ck.get("fusion_layers"));
  cfg.zero_colour_weights = ck.get("zero_colour_weights") == "1";
  const int image_dim = textio::parse_int<int>(ck.get("image_dim"));
  const int dim = textio::parse_int<int>(ck.get("embedding_dim"));
  if (dim != words->dimension()) {
    throw ValidationError("checkpoint expects " + std::to_string(dim) + "-d embeddings, provider gives " +
                          std::to_string(words->dimension()));
  }
  std::optional<JointConfig> jc;
  if (ck.get("joint") == "1") {
    jc.emplace();
    jc->alpha = textio::parse_double(ck.get("alpha"));
    jc->colour_objective = parse_distance_kind(ck.get("colour_objective"));
    jc->head_layers = split_ints(ck.get("head_layers"));
  }
  CrossModalRanker r(std::move(words), cfg, image_dim, palette, 0, jc ? &*jc : nullptr);
  restore_params(ck, r.params());
  return r;
}

RankingQuery sample_training_negatives(const RankingQuery& q, std::size_t catalog_size, std::uint64_t seed) {
  if (catalog_size == 0) throw ValidationError("catalog is empty");
  RankingQuery out = q;
  Rng rng(seed);
  for (std::size_t i = 0; i < out.images.size(); ++i) {
    if (out.clicked[i]) continue;
    if (!rng.bernoulli(0.9)) out.images[i] = rng.index(catalog_size);
  }
  return out;
}

// ---------------------------------------------------------------- metrics

double query_auc(std::span<const double> scores, std::span<const char> clicked) {
  check_ranking_input(scores, clicked);
  double good = 0.0;
  std::size_t pairs = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (!clicked[j]) continue;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      if (clicked[k]) continue;
      ++pairs;
      if (scores[j] > scores[k]) {
        good += 1.0;
      } else if (scores[j] == scores[k]) {
        good += 0.5;
      }
    }
  }
  return good / static_cast<double>(pairs);
}

namespace {

std::vector<std::size_t> rank_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const char> clicked) {
  check_ranking_input(scores, clicked);
  const auto order = rank_order(scores);
  double acc = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!clicked[order[r]]) continue;
    ++hits;
    acc += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return acc / static_cast<double>(hits);
}

double reciprocal_rank(std::span<const double> scores, std::span<const char> clicked) {
  check_ranking_input(scores, clicked);
  const auto order = rank_order(scores);
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (clicked[order[r]]) return 1.0 / static_cast<double>(r + 1);
  }
  return 0.0;
}

namespace {

struct QueryResult {
  bool ok = false;
  double auc = 0, ap = 0, rr = 0;
};

QueryResult evaluate_one(const RankingQuery& q, const ScoreFn& score) {
  QueryResult r;
  if (!q.usable()) return r;
  const auto s = score(q);
  if (s.size() != q.clicked.size()) return r;
  r.ok = true;
  r.auc = query_auc(s, q.clicked);
  r.ap = average_precision(s, q.clicked);
  r.rr = reciprocal_rank(s, q.clicked);
  return r;
}

RankingReport collect(std::span<const RankingQuery> queries, const std::vector<QueryResult>& results) {
  RankingReport rep;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].ok) {
      ++rep.excluded;
      continue;
    }
    rep.queries.push_back(queries[i].query);
    rep.auc.push_back(results[i].auc);
    rep.ap.push_back(results[i].ap);
    rep.rr.push_back(results[i].rr);
  }
  if (!rep.auc.empty()) {
    const double n = static_cast<double>(rep.auc.size());
    rep.mean.auc = std::accumulate(rep.auc.begin(), rep.auc.end(), 0.0) / n;
    rep.mean.map = std::accumulate(rep.ap.begin(), rep.ap.end(), 0.0) / n;
    rep.mean.mrr = std::accumulate(rep.rr.begin(), rep.rr.end(), 0.0) / n;
  }
  return rep;
}

}  // namespace

RankingReport evaluate_scores(std::span<const RankingQuery> queries, const ScoreFn& score, int workers) {
  std::vector<QueryResult> results(queries.size());
  const int threads = workers > 0 ? workers : omp_get_max_threads();
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    results[static_cast<std::size_t>(i)] = evaluate_one(queries[static_cast<std::size_t>(i)], score);
  }
  return collect(queries, results);
}

RankingReport evaluate_scores_serial(std::span<const RankingQuery> queries, const ScoreFn& score) {
  std::vector<QueryResult> results;
  results.reserve(queries.size());
  for (const auto& q : queries) results.push_back(evaluate_one(q, score));
  return collect(queries, results);
}

RankingReport evaluate_ranking(const CrossModalRanker& ranker, std::span<const RankingQuery> queries,
                               const FeatureStore& store, const HistogramTable* colours, int workers) {
  const bool needs_label = ranker.variant().needs_colour() && !ranker.joint();
  return evaluate_scores(
      queries,
      [&](const RankingQuery& q) -> std::vector<double> {
        const ColourHistogram* label = nullptr;
        if (needs_label) {
          if (!colours) return {};
          auto it = colours->find(q.query);
          if (it == colours->end()) return {};
          label = &it->second;
        }
        std::vector<const ImageFeatures*> images;
        images.reserve(q.images.size());
        for (std::size_t idx : q.images) images.push_back(&store.features.at(idx));
        return ranker.score_images(q.tokens, images, label);
      },
      workers);
}

// ---------------------------------------------------------------- training

namespace {

RankerTrainResult train_impl(const RankingData& data, const FeatureStore& store, const RankerConfig& cfg,
                             const HistogramTable* colours, const TrainConfig& train,
                             std::shared_ptr<const EmbeddingProvider> words, const Palette& palette,
                             const JointConfig* joint) {
  train.validate();
  if (store.size() == 0) throw ValidationError("no image features");
  if (data.train.empty()) throw ValidationError("no training queries");
  const bool wants_label = joint || cfg.variant.needs_colour();

  std::vector<const ColourHistogram*> labels(data.train.size(), nullptr);
  if (wants_label && colours) {
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      auto it = colours->find(data.train[i].query);
      if (it != colours->end()) labels[i] = &it->second;
    }
  }
  if (joint) {
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      if (!labels[i]) throw ValidationError("no colour label for training query '" + data.train[i].query + "'");
    }
  }

  CrossModalRanker ranker(std::move(words), cfg, store.feature_dim(), &palette, derive_seed(train.seed, 0x7a4c),
                          joint);
  const ParamList params = ranker.params();
  RankerCurves curves;
  std::vector<Mat> best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(data.train.size());

  for (int epoch = 0; epoch < train.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(train.seed, 0x0fde, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);

    double loss_acc = 0.0, colour_acc = 0.0;
    std::size_t used = 0, skipped = 0;
    for (std::size_t idx : order) {
      if (wants_label && !labels[idx]) {
        ++skipped;
        continue;
      }
      const RankingQuery q = sample_training_negatives(
          data.train[idx], store.size(), derive_seed(train.seed, 0x5a3b, static_cast<std::uint64_t>(epoch), idx));
      if (!q.usable()) {
        ++skipped;
        continue;
      }
      zero_grads(params);
      const auto l = ranker.query_loss(q, store, labels[idx], true);
      sgd_step(params, train.learning_rate);
      loss_acc += l.total;
      colour_acc += l.colour;
      ++used;
    }
    if (epoch == 0) curves.skipped = skipped;
    const double denom = used ? static_cast<double>(used) : 1.0;
    curves.train_loss.push_back(loss_acc / denom);
    if (joint) curves.colour_loss.push_back(colour_acc / denom);

    double score;
    if (!data.validation.empty()) {
      score = evaluate_ranking(ranker, data.validation, store, colours).mean.map;
    } else {
      score = -curves.train_loss.back();
    }
    curves.validation_map.push_back(data.validation.empty() ? std::numeric_limits<double>::quiet_NaN() : score);
    if (score > best_score) {
      best_score = score;
      best = snapshot(params);
      curves.best_epoch = static_cast<std::size_t>(epoch);
    }
  }
  if (!best.empty()) restore(params, best);
  zero_grads(params);
  return {std::move(ranker), std::move(curves)};
}

}  // namespace

RankerTrainResult train_ranker(const RankingData& data, const FeatureStore& store, const RankerConfig& cfg,
                               const HistogramTable* colours, const TrainConfig& train,
                               std::shared_ptr<const EmbeddingProvider> words, const Palette& palette) {
  return train_impl(data, store, cfg, colours, train, std::move(words), palette, nullptr);
}

RankerTrainResult train_joint(const RankingData& data, const FeatureStore& store, const RankerConfig& cfg,
                              const HistogramTable& labels, const JointConfig& jc,
                              std::shared_ptr<const EmbeddingProvider> words, const Palette& palette) {
  jc.validate();
  return train_impl(data, store, cfg, &labels, jc.train, std::move(words), palette, &jc);
}

Vec predict_joint_colour(const CrossModalRanker& ranker, std::string_view raw_query) {
  if (!ranker.joint()) throw ValidationError("ranker has no colour head");
  const auto tokens = preprocess_query(raw_query);
  return *ranker.query_colour(tokens, nullptr);
}

double joint_colour_loss(const CrossModalRanker& ranker, std::span<const QueryColourLabel> labels,
                         const ColourDistance& metric) {
  if (labels.empty()) throw ValidationError("no labels to evaluate");
  double acc = 0.0;
  for (const auto& l : labels) {
    const Vec p = predict_joint_colour(ranker, l.query);
    acc += metric(l.label, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  }
  return acc / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------- reports

std::string format_ranking_table(std::span<const NamedReport> rows) {
  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.name.size() + 2);
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "model" << std::right << std::setw(9) << "AUC"
     << std::setw(9) << "MAP" << std::setw(9) << "MRR" << std::setw(9) << "queries" << std::setw(10) << "excluded"
     << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << r.name << std::right << std::setw(9) << r.report.mean.auc
       << std::setw(9) << r.report.mean.map << std::setw(9) << r.report.mean.mrr << std::setw(9)
       << r.report.auc.size() << std::setw(10) << r.report.excluded << '\n';
  }
  return os.str();
}

std::string format_ranking_keyvalues(std::span<const NamedReport> rows) {
  std::ostringstream os;
  for (const auto& r : rows) {
    os << r.name << ".auc=" << textio::format_double(r.report.mean.auc) << '\n';
    os << r.name << ".map=" << textio::format_double(r.report.mean.map) << '\n';
    os << r.name << ".mrr=" << textio::format_double(r.report.mean.mrr) << '\n';
    os << r.name << ".queries=" << r.report.auc.size() << '\n';
    os << r.name << ".excluded=" << r.report.excluded << '\n';
  }
  return os.str();
}

void write_per_query(std::ostream& os, const RankingReport& r) {
  for (std::size_t i = 0; i < r.queries.size(); ++i) {
    os << r.queries[i] << '\t' << textio::format_double(r.auc[i]) << '\t' << textio::format_double(r.ap[i]) << '\t'
       << textio::format_double(r.rr[i]) << '\n';
  }
}

}  // namespace chromalog
